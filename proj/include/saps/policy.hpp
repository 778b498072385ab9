#pragma once

#include "saps/env.hpp"
#include "saps/error.hpp"
#include "saps/json_util.hpp"
#include "saps/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace saps {

enum class Activation { relu, tanh, linear };

inline std::string_view to_string(Activation a) {
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::linear: return "linear";
    }
    return "?";
}

inline Activation parse_activation(std::string_view s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "linear") return Activation::linear;
    throw FormatError("unknown activation '" + std::string(s) + "'");
}

struct LayerSpec {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Activation activation = Activation::linear;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Dense layer. Weights are stored input-major (in×out) so the forward pass
/// is a sequence of contiguous axpy updates; `weights()` gives the usual
/// out×in view.
class Layer {
public:
    explicit Layer(LayerSpec s) : spec_(s), weights_t_(s.in_dim, s.out_dim), bias_(s.out_dim, 0.0) {}

    /// `weights` is out×in.
    Layer(LayerSpec s, const Matrix& weights, Vector bias) : spec_(s), weights_t_(weights.transpose()), bias_(std::move(bias)) {
        if (weights.rows() != s.out_dim || weights.cols() != s.in_dim || bias_.size() != s.out_dim) {
            throw FormatError("Layer: weight or bias shape disagrees with spec " + std::to_string(s.in_dim) + "->" + std::to_string(s.out_dim));
        }
    }

    [[nodiscard]] const LayerSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] Matrix weights() const { return weights_t_.transpose(); }
    [[nodiscard]] double weight(std::size_t out, std::size_t in) const noexcept { return weights_t_(in, out); }
    [[nodiscard]] const Vector& bias() const noexcept { return bias_; }
    [[nodiscard]] std::size_t parameter_count() const noexcept { return weights_t_.data().size() + bias_.size(); }

    /// out = act(W·in + b)
    void apply(std::span<const double> in, std::span<double> out) const {
        std::copy(bias_.begin(), bias_.end(), out.begin());
        for (std::size_t j = 0; j < spec_.in_dim; ++j) {
            const double xj = in[j];
            if (xj == 0.0) {
                continue;
            }
            const double* w = weights_t_.row(j).data();
            double* o = out.data();
            for (std::size_t i = 0; i < spec_.out_dim; ++i) {
                o[i] += xj * w[i];
            }
        }
        switch (spec_.activation) {
        case Activation::relu:
            for (double& v : out) {
                v = v > 0.0 ? v : 0.0;
            }
            break;
        case Activation::tanh:
            for (double& v : out) {
                v = std::tanh(v);
            }
            break;
        case Activation::linear: break;
        }
    }

    /// Parameters in storage order: weights input-major, then bias.
    void read_parameters(std::span<const double> p) {
        const auto nw = weights_t_.data().size();
        std::copy_n(p.begin(), nw, weights_t_.data().begin());
        std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(nw), bias_.size(), bias_.begin());
    }

    void write_parameters(Vector& out) const {
        out.insert(out.end(), weights_t_.data().begin(), weights_t_.data().end());
        out.insert(out.end(), bias_.begin(), bias_.end());
    }

    friend bool operator==(const Layer&, const Layer&) = default;

private:
    LayerSpec spec_;
    Matrix weights_t_;
    Vector bias_;
};

/// Feed-forward policy π = controller ∘ encoder. Layers [0, split) form the
/// encoder, layers [split, end) the controller.
class PolicyNet {
public:
    PolicyNet() = default;
    PolicyNet(std::vector<Layer> layers, std::size_t split_index) : layers_(std::move(layers)), split_(split_index) { validate(); }

    void validate() const {
        if (layers_.size() < 2) {
            throw FormatError("PolicyNet: need at least two layers, got " + std::to_string(layers_.size()));
        }
        if (split_ < 1 || split_ >= layers_.size()) {
            throw FormatError("PolicyNet: split_index " + std::to_string(split_) + " outside [1, " + std::to_string(layers_.size() - 1) + "]");
        }
        for (std::size_t k = 0; k < layers_.size(); ++k) {
            const LayerSpec& s = layers_[k].spec();
            const std::string ctx = "PolicyNet: layer " + std::to_string(k);
            if (s.in_dim < 1 || s.out_dim < 1) {
                throw FormatError(ctx + " has a zero dimension");
            }
            if (k + 1 < layers_.size() && s.out_dim != layers_[k + 1].spec().in_dim) {
                throw FormatError(ctx + " output " + std::to_string(s.out_dim) + " does not chain into layer " + std::to_string(k + 1) + " input " +
                                  std::to_string(layers_[k + 1].spec().in_dim));
            }
        }
    }

    [[nodiscard]] const std::vector<Layer>& layers() const noexcept { return layers_; }
    [[nodiscard]] std::size_t split_index() const noexcept { return split_; }
    [[nodiscard]] std::size_t input_dim() const noexcept { return layers_.front().spec().in_dim; }
    [[nodiscard]] std::size_t output_dim() const noexcept { return layers_.back().spec().out_dim; }
    [[nodiscard]] std::size_t latent_dim() const noexcept { return layers_[split_ - 1].spec().out_dim; }

    /// Runs layers [first, last) on `x`.
    [[nodiscard]] Vector run(std::size_t first, std::size_t last, std::span<const double> x) const {
        detail::require(first < last && last <= layers_.size(), "PolicyNet::run: bad layer range");
        detail::require(x.size() == layers_[first].spec().in_dim,
                        "PolicyNet: input has length " + std::to_string(x.size()) + ", layer " + std::to_string(first) + " expects " +
                            std::to_string(layers_[first].spec().in_dim));
        Vector cur(x.begin(), x.end());
        Vector next;
        for (std::size_t k = first; k < last; ++k) {
            next.assign(layers_[k].spec().out_dim, 0.0);
            layers_[k].apply(cur, next);
            cur.swap(next);
        }
        return cur;
    }

    [[nodiscard]] Vector forward(std::span<const double> obs) const { return run(0, layers_.size(), obs); }
    [[nodiscard]] Vector encode(std::span<const double> obs) const { return run(0, split_, obs); }
    [[nodiscard]] Vector control(std::span<const double> latent) const { return run(split_, layers_.size(), latent); }

    [[nodiscard]] std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& l : layers_) {
            n += l.parameter_count();
        }
        return n;
    }

    /// Flattened parameters, layer by layer in storage order.
    [[nodiscard]] Vector parameters() const {
        Vector p;
        p.reserve(parameter_count());
        for (const auto& l : layers_) {
            l.write_parameters(p);
        }
        return p;
    }

    void set_parameters(std::span<const double> p) {
        detail::require(p.size() == parameter_count(),
                        "PolicyNet::set_parameters: got " + std::to_string(p.size()) + " values, expected " + std::to_string(parameter_count()));
        std::size_t at = 0;
        for (auto& l : layers_) {
            l.read_parameters(p.subspan(at, l.parameter_count()));
            at += l.parameter_count();
        }
    }

    friend bool operator==(const PolicyNet&, const PolicyNet&) = default;

private:
    std::vector<Layer> layers_;
    std::size_t split_ = 1;
};

/// Zero-initialized MLP with the given layer specs.
inline PolicyNet make_net(const std::vector<LayerSpec>& specs, std::size_t split_index) {
    std::vector<Layer> layers;
    layers.reserve(specs.size());
    for (const auto& s : specs) {
        layers.emplace_back(s);
    }
    return PolicyNet(std::move(layers), split_index);
}

/// obs→64(relu)→32(relu) | 32→32(relu)→actions, latent dimension 32.
inline PolicyNet default_policy_net(std::size_t obs_dim, std::size_t n_actions) {
    return make_net({{obs_dim, 64, Activation::relu}, {64, 32, Activation::relu}, {32, 32, Activation::relu}, {32, n_actions, Activation::linear}}, 2);
}

/// Argmax with ties broken by lowest index.
inline int act_greedy(std::span<const double> logits) {
    detail::require(!logits.empty(), "act_greedy: empty logits");
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) {
            best = i;
        }
    }
    return static_cast<int>(best);
}

struct PolicyMeta {
    Visual visual = Visual::green;
    Task task = Task::standard;
    std::uint64_t seed = 0;
    double mean_return = 0.0;
    std::size_t obs_dim = kObsDim;
    std::size_t n_actions = kCanonicalActions;

    friend bool operator==(const PolicyMeta&, const PolicyMeta&) = default;
};

struct PolicyBundle {
    PolicyNet net;
    PolicyMeta meta;

    /// e.g. "green-standard-s0"
    [[nodiscard]] std::string id() const {
        return std::string(to_string(meta.visual)) + "-" + std::string(to_string(meta.task)) + "-s" + std::to_string(meta.seed);
    }

    void validate() const {
        net.validate();
        if (meta.obs_dim != net.input_dim()) {
            throw FormatError("PolicyBundle: meta.obs_dim " + std::to_string(meta.obs_dim) + " != network input " + std::to_string(net.input_dim()));
        }
        if (meta.n_actions != net.output_dim()) {
            throw FormatError("PolicyBundle: meta.n_actions " + std::to_string(meta.n_actions) + " != network output " +
                              std::to_string(net.output_dim()));
        }
    }

    friend bool operator==(const PolicyBundle&, const PolicyBundle&) = default;
};

inline constexpr int kBundleFormatVersion = 1;

inline Json to_json(const PolicyBundle& b) {
    Json layers = Json::array();
    for (const auto& l : b.net.layers()) {
        layers.push_back(Json{{"in", l.spec().in_dim},
                              {"out", l.spec().out_dim},
                              {"activation", std::string(to_string(l.spec().activation))},
                              {"weights", json_util::from_matrix(l.weights())},
                              {"bias", l.bias()}});
    }
    return Json{{"format_version", kBundleFormatVersion},
                {"layers", std::move(layers)},
                {"split_index", b.net.split_index()},
                {"meta",
                 Json{{"visual", std::string(to_string(b.meta.visual))},
                      {"task", std::string(to_string(b.meta.task))},
                      {"seed", b.meta.seed},
                      {"mean_return", b.meta.mean_return},
                      {"obs_dim", b.meta.obs_dim},
                      {"n_actions", b.meta.n_actions}}}};
}

inline PolicyBundle bundle_from_json(const Json& doc) {
    using namespace json_util;
    only_keys(doc, "bundle", {"format_version", "layers", "split_index", "meta"});
    const auto version = get_int(doc, "bundle", "format_version");
    if (version != kBundleFormatVersion) {
        throw FormatError("bundle.format_version: unsupported version " + std::to_string(version));
    }
    const Json& jl = field(doc, "bundle", "layers");
    if (!jl.is_array()) {
        throw FormatError("bundle.layers: expected an array");
    }
    std::vector<Layer> layers;
    for (std::size_t k = 0; k < jl.size(); ++k) {
        const std::string ctx = "bundle.layers[" + std::to_string(k) + "]";
        only_keys(jl[k], ctx, {"in", "out", "activation", "weights", "bias"});
        LayerSpec s{get_count(jl[k], ctx, "in"), get_count(jl[k], ctx, "out"), parse_activation(get_string(jl[k], ctx, "activation"))};
        Matrix w = get_matrix(jl[k], ctx, "weights", s.out_dim, s.in_dim);
        Vector bias = get_vector(jl[k], ctx, "bias");
        if (bias.size() != s.out_dim) {
            throw FormatError(ctx + ".bias: expected " + std::to_string(s.out_dim) + " values");
        }
        layers.emplace_back(s, w, std::move(bias));
    }
    PolicyBundle b;
    b.net = PolicyNet(std::move(layers), get_count(doc, "bundle", "split_index"));
    const Json& m = field(doc, "bundle", "meta");
    only_keys(m, "bundle.meta", {"visual", "task", "seed", "mean_return", "obs_dim", "n_actions"});
    b.meta.visual = parse_visual(get_string(m, "bundle.meta", "visual"));
    b.meta.task = parse_task(get_string(m, "bundle.meta", "task"));
    const Json& seed = field(m, "bundle.meta", "seed");
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
        throw FormatError("bundle.meta.seed: expected a nonnegative integer");
    }
    b.meta.seed = seed.get<std::uint64_t>();
    b.meta.mean_return = get_double(m, "bundle.meta", "mean_return");
    b.meta.obs_dim = get_count(m, "bundle.meta", "obs_dim");
    b.meta.n_actions = get_count(m, "bundle.meta", "n_actions");
    b.validate();
    return b;
}

inline void save_bundle(const PolicyBundle& b, const std::filesystem::path& path) { json_util::write_file(path, to_json(b)); }

inline PolicyBundle load_bundle(const std::filesystem::path& path) {
    const Json doc = json_util::parse_file(path);
    try {
        return bundle_from_json(doc);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace saps
