#pragma once

// Stitched policies, the stitching-table experiment and latent analyses.

#include "saps/alignment.hpp"
#include "saps/anchors.hpp"
#include "saps/env.hpp"
#include "saps/error.hpp"
#include "saps/json_util.hpp"
#include "saps/numerics.hpp"
#include "saps/parallel.hpp"
#include "saps/policy.hpp"
#include "saps/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace saps {

/// π̃(o) = ψ_v(τ(φ_u(o))); without a map the latent is passed through as is.
class StitchedPolicy {
public:
    StitchedPolicy(PolicyNet encoder, std::string encoder_id, PolicyNet controller, std::string controller_id, std::optional<LatentMap> map)
        : encoder_(std::move(encoder)), controller_(std::move(controller)), encoder_id_(std::move(encoder_id)),
          controller_id_(std::move(controller_id)), map_(std::move(map)) {
        const std::size_t du = encoder_.latent_dim();
        const std::size_t dv = controller_.latent_dim();
        if (map_) {
            if (map_->source_dim() != du || map_->target_dim() != dv) {
                throw IncompatibleError("stitch: map is " + std::to_string(map_->source_dim()) + "->" + std::to_string(map_->target_dim()) +
                                        " but encoder latent is " + std::to_string(du) + " and controller input is " + std::to_string(dv));
            }
        } else if (du != dv) {
            throw IncompatibleError("stitch: encoder latent dimension " + std::to_string(du) + " differs from controller input " +
                                    std::to_string(dv) + " and no map was given");
        }
    }

    [[nodiscard]] Vector latent(std::span<const double> obs) const {
        Vector z = encoder_.encode(obs);
        return map_ ? apply_map(*map_, z) : z;
    }
    [[nodiscard]] Vector logits(std::span<const double> obs) const { return controller_.control(latent(obs)); }
    [[nodiscard]] int act(std::span<const double> obs) const { return act_greedy(logits(obs)); }
    [[nodiscard]] std::size_t action_count() const { return controller_.output_dim(); }
    [[nodiscard]] std::size_t observation_dim() const { return encoder_.input_dim(); }

    [[nodiscard]] const PolicyNet& encoder() const noexcept { return encoder_; }
    [[nodiscard]] const PolicyNet& controller() const noexcept { return controller_; }
    [[nodiscard]] const std::string& encoder_id() const noexcept { return encoder_id_; }
    [[nodiscard]] const std::string& controller_id() const noexcept { return controller_id_; }
    [[nodiscard]] const std::optional<LatentMap>& map() const noexcept { return map_; }

private:
    PolicyNet encoder_;
    PolicyNet controller_;
    std::string encoder_id_;
    std::string controller_id_;
    std::optional<LatentMap> map_;
};

inline StitchedPolicy stitch(const PolicyBundle& encoder, const PolicyBundle& controller, std::optional<LatentMap> map = std::nullopt) {
    return StitchedPolicy(encoder.net, encoder.id(), controller.net, controller.id(), std::move(map));
}

/// The map folded into a single linear layer: y = x·A + c.
inline Layer map_as_layer(const LatentMap& map) {
    const std::size_t du = map.source_dim();
    const std::size_t dv = map.target_dim();
    Matrix a = map.linear;
    Vector c = map.offset;
    if (map.scaler_u) {
        const StandardScaler& su = *map.scaler_u;
        const StandardScaler& sv = *map.scaler_v;
        for (std::size_t j = 0; j < dv; ++j) {
            double shift = 0.0;
            for (std::size_t i = 0; i < du; ++i) {
                shift += su.mean[i] / su.std[i] * map.linear(i, j);
                a(i, j) = map.linear(i, j) / su.std[i] * sv.std[j];
            }
            c[j] = (map.offset[j] - shift) * sv.std[j] + sv.mean[j];
        }
    }
    return Layer(LayerSpec{du, dv, Activation::linear}, a.transpose(), std::move(c));
}

/// Plain bundle computing the same policy: encoder layers, the map as one
/// linear layer, then controller layers. Split stays after the encoder.
/// With scalers the folded arithmetic can differ from StitchedPolicy in the
/// last bits.
inline PolicyBundle to_bundle(const StitchedPolicy& p, const PolicyMeta& encoder_meta, const PolicyMeta& controller_meta) {
    std::vector<Layer> layers(p.encoder().layers().begin(), p.encoder().layers().begin() + static_cast<std::ptrdiff_t>(p.encoder().split_index()));
    const std::size_t split = layers.size();
    if (p.map()) {
        layers.push_back(map_as_layer(*p.map()));
    }
    const auto& cl = p.controller().layers();
    layers.insert(layers.end(), cl.begin() + static_cast<std::ptrdiff_t>(p.controller().split_index()), cl.end());
    PolicyBundle b;
    b.net = PolicyNet(std::move(layers), split);
    b.meta.visual = encoder_meta.visual;
    b.meta.task = controller_meta.task;
    b.meta.seed = encoder_meta.seed;
    b.meta.mean_return = 0.0;
    b.meta.obs_dim = b.net.input_dim();
    b.meta.n_actions = b.net.output_dim();
    return b;
}

// ---------------------------------------------------------------------------
// Stitching table

enum class StitchMethod { end_to_end, naive, saps };

inline std::string_view to_string(StitchMethod m) {
    switch (m) {
    case StitchMethod::end_to_end: return "end_to_end";
    case StitchMethod::naive: return "naive";
    case StitchMethod::saps: return "saps";
    }
    return "?";
}

inline StitchMethod parse_stitch_method(std::string_view s) {
    if (s == "end_to_end") return StitchMethod::end_to_end;
    if (s == "naive") return StitchMethod::naive;
    if (s == "saps") return StitchMethod::saps;
    throw FormatError("unknown stitching method '" + std::string(s) + "' (expected end_to_end, naive or saps)");
}

enum class AnchorMode { state, pixel };

inline std::string_view to_string(AnchorMode m) { return m == AnchorMode::state ? "state" : "pixel"; }

inline AnchorMode parse_anchor_mode(std::string_view s) {
    if (s == "state") return AnchorMode::state;
    if (s == "pixel") return AnchorMode::pixel;
    throw FormatError("unknown anchor mode '" + std::string(s) + "' (expected state or pixel)");
}

struct TableConfig {
    std::vector<StitchMethod> methods = {StitchMethod::end_to_end, StitchMethod::naive, StitchMethod::saps};
    // anchors
    std::size_t anchor_count = kDefaultAnchorCount;
    AnchorMode anchor_mode = AnchorMode::state;
    std::int64_t anchor_seed = 5'000'000;
    std::optional<std::size_t> subsample; ///< keep this many of the collected pairs
    EstimateOptions map{MapKind::affine, false, kDefaultScalerFloor, kDefaultCutoff};
    // evaluation
    std::size_t episodes = 10;
    std::int64_t eval_seed = 0;
    std::size_t horizon = 200;
    std::size_t track_length = 400;
    // grid
    bool per_bundle = false;   ///< rows/cols are bundle ids instead of variations
    bool exclude_self = false; ///< skip pairs that stitch a bundle with itself
    std::vector<std::string> variations; ///< empty = every variation in the library
    std::vector<std::uint64_t> seeds;    ///< empty = every seed in the library
    std::size_t workers = 0;

    void validate() const {
        detail::require(!methods.empty(), "TableConfig: methods must not be empty");
        detail::require(anchor_count >= 2, "TableConfig: anchor_count must be >= 2");
        detail::require(!subsample || (*subsample >= 2 && *subsample <= anchor_count), "TableConfig: subsample must be in [2, anchor_count]");
        detail::require(episodes >= 1, "TableConfig: episodes must be >= 1");
        detail::require(horizon >= 1 && track_length >= 1, "TableConfig: horizon and track_length must be >= 1");
        detail::require(!(map.kind == MapKind::linear && map.scale), "TableConfig: linear maps do not support scaling");
    }
};

inline Json to_json(const TableConfig& c) {
    Json methods = Json::array();
    for (auto m : c.methods) methods.push_back(to_string(m));
    Json j{{"methods", methods},
           {"anchor_count", c.anchor_count},
           {"anchor_mode", to_string(c.anchor_mode)},
           {"anchor_seed", c.anchor_seed},
           {"map_kind", to_string(c.map.kind)},
           {"scale", c.map.scale},
           {"floor", c.map.floor},
           {"cutoff", c.map.cutoff},
           {"episodes", c.episodes},
           {"eval_seed", c.eval_seed},
           {"horizon", c.horizon},
           {"track_length", c.track_length},
           {"per_bundle", c.per_bundle},
           {"exclude_self", c.exclude_self},
           {"variations", c.variations},
           {"seeds", c.seeds}};
    if (c.subsample) j["subsample"] = *c.subsample;
    return j;
}

/// Every field is optional; unknown keys are rejected.
inline TableConfig table_config_from_json(const Json& j, std::string_view ctx = "table") {
    using namespace json_util;
    only_keys(j, ctx,
              {"methods", "anchor_count", "anchor_mode", "anchor_seed", "subsample", "map_kind", "scale", "floor", "cutoff", "episodes", "eval_seed",
               "horizon", "track_length", "per_bundle", "exclude_self", "variations", "seeds", "workers"});
    TableConfig c;
    const std::string where(ctx);
    if (j.contains("methods")) {
        const Json& m = j.at("methods");
        if (!m.is_array()) throw FormatError(where + ".methods: expected an array of strings");
        c.methods.clear();
        for (const auto& e : m) {
            if (!e.is_string()) throw FormatError(where + ".methods: expected an array of strings");
            c.methods.push_back(parse_stitch_method(e.get<std::string>()));
        }
    }
    if (j.contains("anchor_count")) c.anchor_count = get_count(j, ctx, "anchor_count");
    if (j.contains("anchor_mode")) c.anchor_mode = parse_anchor_mode(get_string(j, ctx, "anchor_mode"));
    if (j.contains("anchor_seed")) c.anchor_seed = get_int(j, ctx, "anchor_seed");
    if (j.contains("subsample")) c.subsample = get_count(j, ctx, "subsample");
    if (j.contains("map_kind")) c.map.kind = parse_map_kind(get_string(j, ctx, "map_kind"));
    if (j.contains("scale")) c.map.scale = get_bool(j, ctx, "scale");
    if (j.contains("floor")) c.map.floor = get_double(j, ctx, "floor");
    if (j.contains("cutoff")) c.map.cutoff = get_double(j, ctx, "cutoff");
    if (j.contains("episodes")) c.episodes = get_count(j, ctx, "episodes");
    if (j.contains("eval_seed")) c.eval_seed = get_int(j, ctx, "eval_seed");
    if (j.contains("horizon")) c.horizon = get_count(j, ctx, "horizon");
    if (j.contains("track_length")) c.track_length = get_count(j, ctx, "track_length");
    if (j.contains("per_bundle")) c.per_bundle = get_bool(j, ctx, "per_bundle");
    if (j.contains("exclude_self")) c.exclude_self = get_bool(j, ctx, "exclude_self");
    if (j.contains("variations")) {
        const Json& v = j.at("variations");
        if (!v.is_array()) throw FormatError(where + ".variations: expected an array of strings");
        for (const auto& e : v) {
            if (!e.is_string()) throw FormatError(where + ".variations: expected an array of strings");
            c.variations.push_back(e.get<std::string>());
        }
    }
    if (j.contains("seeds")) {
        const Json& s = j.at("seeds");
        if (!s.is_array()) throw FormatError(where + ".seeds: expected an array of non-negative integers");
        for (const auto& e : s) {
            if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<std::int64_t>() >= 0)) {
                throw FormatError(where + ".seeds: expected an array of non-negative integers");
            }
            c.seeds.push_back(e.get<std::uint64_t>());
        }
    }
    if (j.contains("workers")) c.workers = get_count(j, ctx, "workers");
    try {
        c.validate();
    } catch (const PreconditionError& e) {
        throw FormatError(where + ": " + e.what());
    }
    return c;
}

struct StitchCell {
    std::string encoder_id;
    std::string controller_id;
    StitchMethod method = StitchMethod::naive;
    double mean_return = 0.0;
    double std_return = 0.0; ///< population std over all pooled episodes
    std::size_t n_runs = 0;
};

struct StitchReport {
    std::vector<std::string> rows; ///< encoder ids
    std::vector<std::string> cols; ///< controller ids
    std::vector<StitchCell> cells; ///< sorted by (encoder, controller, method)
    Json config;

    [[nodiscard]] const StitchCell* find(std::string_view encoder, std::string_view controller, StitchMethod method) const {
        for (const auto& c : cells) {
            if (c.encoder_id == encoder && c.controller_id == controller && c.method == method) {
                return &c;
            }
        }
        return nullptr;
    }

    [[nodiscard]] std::string to_csv() const {
        std::string out = "encoder_id,controller_id,method,mean_return,std_return,n_runs\n";
        char buf[96];
        for (const auto& c : cells) {
            std::snprintf(buf, sizeof buf, ",%.6g,%.6g,%zu\n", c.mean_return, c.std_return, c.n_runs);
            out += c.encoder_id + "," + c.controller_id + "," + std::string(to_string(c.method)) + buf;
        }
        return out;
    }
};

inline std::string variation_id(Visual v, Task t) { return std::string(to_string(v)) + "-" + std::string(to_string(t)); }
inline std::string variation_id(const PolicyMeta& m) { return variation_id(m.visual, m.task); }

/// Every *.json file in `dir`, in filename order.
inline std::vector<PolicyBundle> load_library(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw FormatError("library '" + dir.string() + "' is not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<PolicyBundle> out;
    for (const auto& f : files) {
        out.push_back(load_bundle(f));
    }
    return out;
}

/// Anchor pairs between `enc` (rolled out in its own variation) and `ctrl`.
inline AnchorPairSet table_anchors(const PolicyBundle& enc, const PolicyBundle& ctrl, const TableConfig& cfg) {
    GridDriveConfig cu{0, enc.meta.visual, enc.meta.task, cfg.horizon, cfg.track_length};
    GridDriveConfig cv{0, ctrl.meta.visual, ctrl.meta.task, cfg.horizon, cfg.track_length};
    ObservationPairs obs = cfg.anchor_mode == AnchorMode::state
                               ? collect_state_anchors(enc, cu, cv, cfg.anchor_count, cfg.anchor_seed)
                               : collect_pixel_anchors(collect_state_anchors(enc, cu, cu, cfg.anchor_count, cfg.anchor_seed).u, cu.visual, cv.visual);
    AnchorPairSet set = embed_anchors(enc.net, ctrl.net, obs, AnchorMeta{enc.id(), ctrl.id(), std::string(to_string(cfg.anchor_mode)),
                                                                          static_cast<std::uint64_t>(cfg.anchor_seed)});
    if (cfg.subsample) {
        set = subsample(set, *cfg.subsample, static_cast<std::uint64_t>(cfg.anchor_seed));
    }
    return set;
}

inline LatentMap table_map(const PolicyBundle& enc, const PolicyBundle& ctrl, const TableConfig& cfg) {
    LatentMap map = estimate(table_anchors(enc, ctrl, cfg), cfg.map);
    map.meta.source_id = enc.id();
    map.meta.target_id = ctrl.id();
    return map;
}

/// Encoder × controller grid. A stitched policy acts in the environment with
/// the encoder's visual and the controller's task; SAPS maps are refit for
/// every (encoder bundle, controller bundle) pair from anchors rolled out by
/// the encoder bundle. end_to_end cells sit on the diagonal only.
inline StitchReport run_stitching_table(const std::vector<PolicyBundle>& library, const TableConfig& cfg) {
    cfg.validate();
    detail::require(!library.empty(), "run_stitching_table: empty library");

    std::set<std::string> ids;
    for (const auto& b : library) {
        if (!ids.insert(b.id()).second) {
            throw PreconditionError("run_stitching_table: duplicate bundle " + b.id());
        }
    }
    std::vector<std::string> variations = cfg.variations;
    std::vector<std::uint64_t> seeds = cfg.seeds;
    if (variations.empty() || seeds.empty()) {
        std::set<std::string> vs;
        std::set<std::uint64_t> ss;
        for (const auto& b : library) {
            vs.insert(variation_id(b.meta));
            ss.insert(b.meta.seed);
        }
        if (variations.empty()) variations.assign(vs.begin(), vs.end());
        if (seeds.empty()) seeds.assign(ss.begin(), ss.end());
    }
    std::sort(variations.begin(), variations.end());
    std::sort(seeds.begin(), seeds.end());

    // group[v] = bundles of variation v, in seed order
    std::vector<std::vector<const PolicyBundle*>> group(variations.size());
    std::vector<std::string> missing;
    for (std::size_t v = 0; v < variations.size(); ++v) {
        for (auto s : seeds) {
            const std::string id = variations[v] + "-s" + std::to_string(s);
            auto it = std::find_if(library.begin(), library.end(), [&](const PolicyBundle& b) { return b.id() == id; });
            if (it == library.end()) {
                missing.push_back(id);
            } else {
                group[v].push_back(&*it);
            }
        }
    }
    if (!missing.empty()) {
        std::string msg = "run_stitching_table: library is missing bundles:";
        for (const auto& m : missing) msg += " " + m;
        throw PreconditionError(msg);
    }

    auto wants = [&](StitchMethod m) { return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end(); };
    auto env_for = [&](Visual visual, Task task) { return GridDriveConfig{0, visual, task, cfg.horizon, cfg.track_length}; };

    struct Job {
        std::string row;
        std::string col;
        StitchMethod method;
        const PolicyBundle* enc;
        const PolicyBundle* ctrl;
        std::vector<double> returns;
    };
    std::vector<Job> jobs;
    for (std::size_t vu = 0; vu < variations.size(); ++vu) {
        for (std::size_t vv = 0; vv < variations.size(); ++vv) {
            for (const PolicyBundle* bu : group[vu]) {
                for (const PolicyBundle* bv : group[vv]) {
                    const std::string row = cfg.per_bundle ? bu->id() : variations[vu];
                    const std::string col = cfg.per_bundle ? bv->id() : variations[vv];
                    if (wants(StitchMethod::end_to_end) && bu == bv) {
                        jobs.push_back({row, col, StitchMethod::end_to_end, bu, bv, {}});
                    }
                    if (cfg.exclude_self && bu == bv) {
                        continue;
                    }
                    for (auto m : {StitchMethod::naive, StitchMethod::saps}) {
                        if (wants(m)) {
                            jobs.push_back({row, col, m, bu, bv, {}});
                        }
                    }
                }
            }
        }
    }

    parallel_for(
        jobs.size(),
        [&](std::size_t i) {
            Job& job = jobs[i];
            const GridDriveConfig env = env_for(job.enc->meta.visual, job.ctrl->meta.task);
            EvalStats stats;
            switch (job.method) {
            case StitchMethod::end_to_end: stats = evaluate(*job.enc, env, cfg.episodes, cfg.eval_seed); break;
            case StitchMethod::naive: stats = evaluate(stitch(*job.enc, *job.ctrl), env, cfg.episodes, cfg.eval_seed); break;
            case StitchMethod::saps:
                stats = evaluate(stitch(*job.enc, *job.ctrl, table_map(*job.enc, *job.ctrl, cfg)), env, cfg.episodes, cfg.eval_seed);
                break;
            }
            job.returns = std::move(stats.returns);
        },
        cfg.workers);

    std::map<std::tuple<std::string, std::string, std::string>, std::pair<std::vector<double>, std::size_t>> pooled;
    for (auto& job : jobs) {
        auto& slot = pooled[{job.row, job.col, std::string(to_string(job.method))}];
        slot.first.insert(slot.first.end(), job.returns.begin(), job.returns.end());
        ++slot.second;
    }

    StitchReport report;
    report.config = to_json(cfg);
    if (cfg.per_bundle) {
        for (const auto& g : group) {
            for (const PolicyBundle* b : g) report.rows.push_back(b->id());
        }
        std::sort(report.rows.begin(), report.rows.end());
    } else {
        report.rows = variations;
    }
    report.cols = report.rows;
    for (auto& [key, slot] : pooled) {
        const EvalStats s = summarize(std::move(slot.first));
        report.cells.push_back({std::get<0>(key), std::get<1>(key), parse_stitch_method(std::get<2>(key)), s.mean, s.std, slot.second});
    }
    return report;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open '" + path.string() + "' for writing");
    }
    out << text;
    if (!out) {
        throw FormatError("failed writing '" + path.string() + "'");
    }
}

// ---------------------------------------------------------------------------
// Latent analysis

struct PcaSummary {
    double centroid_distance_aligned = 0.0;
    double centroid_distance_raw = 0.0;
};

namespace detail {

// Joint PCA of [a; b]; writes "set,pc1..pck" rows and returns the distance
// between the two sets' centroids in the projected space.
inline double pca_view(const Matrix& a, const Matrix& b, std::string_view a_name, std::size_t k, const std::filesystem::path& path) {
    Matrix pooled(a.rows() + b.rows(), a.cols());
    std::copy(a.data().begin(), a.data().end(), pooled.data().begin());
    std::copy(b.data().begin(), b.data().end(), pooled.data().begin() + static_cast<std::ptrdiff_t>(a.data().size()));
    const PcaResult pca = pca_project(pooled, k);
    std::string out = "set";
    for (std::size_t c = 0; c < k; ++c) out += ",pc" + std::to_string(c + 1);
    out += "\n";
    Vector ca(k, 0.0);
    Vector cb(k, 0.0);
    char buf[32];
    for (std::size_t i = 0; i < pooled.rows(); ++i) {
        const bool first = i < a.rows();
        out += first ? std::string(a_name) : std::string("v");
        for (std::size_t c = 0; c < k; ++c) {
            const double x = pca.projection(i, c);
            (first ? ca : cb)[c] += x;
            std::snprintf(buf, sizeof buf, ",%.6g", x);
            out += buf;
        }
        out += "\n";
    }
    write_text(path, out);
    double d2 = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        const double diff = ca[c] / static_cast<double>(a.rows()) - cb[c] / static_cast<double>(b.rows());
        d2 += diff * diff;
    }
    return std::sqrt(d2);
}

} // namespace detail

/// Writes <prefix>_pca_aligned.csv (τ(X_u) pooled with X_v) and
/// <prefix>_pca_raw.csv (X_u pooled with X_v), each jointly projected onto k
/// principal components.
inline PcaSummary analyze_pca(const Matrix& xu, const Matrix& xv, const LatentMap& map, std::size_t k, const std::string& prefix) {
    detail::require(xu.rows() == xv.rows() && xu.rows() >= 1, "analyze_pca: X_u and X_v must have the same, non-zero number of rows");
    detail::require(xu.cols() == map.source_dim() && xv.cols() == map.target_dim(), "analyze_pca: map dimensions do not match the embeddings");
    detail::require(xu.cols() == xv.cols(), "analyze_pca: the raw view needs equal latent dimensions");
    detail::require(k >= 1 && k <= xv.cols() && k <= 2 * xv.rows(),
                    "analyze_pca: k=" + std::to_string(k) + " exceeds the latent dimension " + std::to_string(xv.cols()));
    PcaSummary s;
    s.centroid_distance_aligned = detail::pca_view(apply_map(map, xu), xv, "u_aligned", k, prefix + "_pca_aligned.csv");
    s.centroid_distance_raw = detail::pca_view(xu, xv, "u_raw", k, prefix + "_pca_raw.csv");
    return s;
}

struct CosineSummary {
    double mean_aligned = 0.0;
    double mean_naive = 0.0;
    std::vector<std::size_t> count_aligned;
    std::vector<std::size_t> count_naive;
};

/// aligned_i = cos(τ(X_u)_i, X_v,i), naive_i = cos(X_u,i, X_v,i). Histogram over
/// `bins` equal bins of [-1, 1] written to `path` when non-empty.
inline CosineSummary analyze_cosine(const AnchorPairSet& anchors, const LatentMap& map, std::size_t bins, const std::filesystem::path& path = {}) {
    anchors.validate();
    detail::require(bins >= 1, "analyze_cosine: bins must be >= 1");
    detail::require(anchors.source.cols() == anchors.target.cols(), "analyze_cosine: naive cosine needs equal latent dimensions");
    const Matrix aligned = apply_map(map, anchors.source);
    CosineSummary s;
    s.mean_aligned = mean_pairwise_cosine(aligned, anchors.target);
    s.mean_naive = mean_pairwise_cosine(anchors.source, anchors.target);
    s.count_aligned = cosine_histogram(aligned, anchors.target, bins);
    s.count_naive = cosine_histogram(anchors.source, anchors.target, bins);
    if (!path.empty()) {
        std::string out = "bin_low,bin_high,count_aligned,count_naive\n";
        char buf[96];
        for (std::size_t b = 0; b < bins; ++b) {
            const double lo = -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins);
            const double hi = -1.0 + 2.0 * static_cast<double>(b + 1) / static_cast<double>(bins);
            std::snprintf(buf, sizeof buf, "%.6g,%.6g,%zu,%zu\n", lo, hi, s.count_aligned[b], s.count_naive[b]);
            out += buf;
        }
        write_text(path, out);
    }
    return s;
}

} // namespace saps
