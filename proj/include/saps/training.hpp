#pragma once

// Evaluation of greedy policies on GridDrive and two trainers that produce
// end-to-end PolicyBundles: policy gradient (default) and cross-entropy search.

#include "saps/env.hpp"
#include "saps/error.hpp"
#include "saps/json_util.hpp"
#include "saps/parallel.hpp"
#include "saps/policy.hpp"
#include "saps/rng.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace saps {

/// Anything that picks an action from a raw observation.
template <typename P>
concept GreedyActor = requires(const P& p, std::span<const double> obs) {
    { p.act(obs) } -> std::convertible_to<int>;
    { p.action_count() } -> std::convertible_to<std::size_t>;
    { p.observation_dim() } -> std::convertible_to<std::size_t>;
};

/// Greedy actor over a full network.
class NetActor {
public:
    explicit NetActor(const PolicyNet& net) : net_(&net) {}
    int act(std::span<const double> obs) const { return act_greedy(net_->forward(obs)); }
    std::size_t action_count() const { return net_->output_dim(); }
    std::size_t observation_dim() const { return net_->input_dim(); }

private:
    const PolicyNet* net_;
};

/// Track seeds used during training are offset so they never collide with
/// evaluation seeds (eval_seed + episode index).
inline constexpr std::int64_t kTrainTrackOffset = 1'000'000;

template <GreedyActor P>
void check_compatible(const P& policy, const GridDriveConfig& env) {
    if (policy.observation_dim() != kObsDim) {
        throw IncompatibleError("policy expects observations of length " + std::to_string(policy.observation_dim()) + ", GridDrive emits " +
                                std::to_string(kObsDim));
    }
    const auto n = static_cast<std::size_t>(action_count(env.task));
    if (policy.action_count() != n) {
        throw IncompatibleError("policy emits " + std::to_string(policy.action_count()) + " action logits but task '" +
                                std::string(to_string(env.task)) + "' has " + std::to_string(n) + " actions");
    }
}

/// Total reward of one greedy episode. If `actions` is given, the chosen
/// actions are appended to it.
template <GreedyActor P>
double run_episode(const P& policy, const GridDriveConfig& env_config, std::vector<int>* actions = nullptr) {
    GridDrive env(env_config);
    double total = 0.0;
    while (!env.done()) {
        const int a = policy.act(env.observation());
        if (actions != nullptr) {
            actions->push_back(a);
        }
        total += env.step(a);
    }
    return total;
}

struct EvalStats {
    double mean = 0.0;
    double std = 0.0; ///< population std over episodes
    std::vector<double> returns;
};

inline EvalStats summarize(std::vector<double> returns) {
    EvalStats s;
    s.returns = std::move(returns);
    if (s.returns.empty()) {
        return s;
    }
    const double n = static_cast<double>(s.returns.size());
    s.mean = std::accumulate(s.returns.begin(), s.returns.end(), 0.0) / n;
    double var = 0.0;
    for (double r : s.returns) {
        var += (r - s.mean) * (r - s.mean);
    }
    s.std = std::sqrt(var / n);
    return s;
}

/// Greedy episodes on tracks eval_seed, eval_seed+1, ...
template <GreedyActor P>
EvalStats evaluate(const P& policy, const GridDriveConfig& env_config, std::size_t n_episodes, std::int64_t eval_seed) {
    detail::require(n_episodes >= 1, "evaluate: n_episodes must be >= 1");
    check_compatible(policy, env_config);
    std::vector<double> returns(n_episodes);
    for (std::size_t e = 0; e < n_episodes; ++e) {
        GridDriveConfig cfg = env_config;
        cfg.track_seed = eval_seed + static_cast<std::int64_t>(e);
        returns[e] = run_episode(policy, cfg);
    }
    return summarize(std::move(returns));
}

inline EvalStats evaluate(const PolicyBundle& bundle, const GridDriveConfig& env_config, std::size_t n_episodes, std::int64_t eval_seed) {
    return evaluate(NetActor(bundle.net), env_config, n_episodes, eval_seed);
}

// ---------------------------------------------------------------------------
// Training

enum class TrainMethod { policy_gradient, cem };

inline std::string_view to_string(TrainMethod m) { return m == TrainMethod::cem ? "cem" : "policy_gradient"; }

inline TrainMethod parse_train_method(std::string_view s) {
    if (s == "policy_gradient") return TrainMethod::policy_gradient;
    if (s == "cem") return TrainMethod::cem;
    throw FormatError("unknown training method '" + std::string(s) + "' (expected policy_gradient or cem)");
}

struct TrainConfig {
    TrainMethod method = TrainMethod::policy_gradient;
    std::uint64_t seed = 0;
    std::size_t workers = 0; ///< 0 = hardware concurrency; never affects results

    // cross-entropy method
    std::size_t population = 64;
    double elite_frac = 0.125;
    std::size_t iterations = 120;
    std::size_t episodes_per_candidate = 2;
    double init_sigma = 0.5;
    double sigma_decay = 0.995;

    // policy gradient
    std::size_t updates = 400;
    std::size_t batch_episodes = 16;
    double learning_rate = 0.003;
    double discount = 0.9;
    double entropy_coef = 0.01;
    std::size_t eval_every = 20;
    double random_start_frac = 0.5; ///< share of each batch started at a random position and speed, on the track

    [[nodiscard]] std::size_t elite_count() const { return static_cast<std::size_t>(std::floor(static_cast<double>(population) * elite_frac)); }

    void validate() const {
        detail::require(population >= 1, "TrainConfig: population must be >= 1");
        detail::require(elite_frac > 0.0 && elite_frac <= 1.0, "TrainConfig: elite_frac must be in (0, 1]");
        detail::require(elite_count() >= 1, "TrainConfig: population * elite_frac must be >= 1");
        detail::require(episodes_per_candidate >= 1, "TrainConfig: episodes_per_candidate must be >= 1");
        detail::require(init_sigma > 0.0, "TrainConfig: init_sigma must be positive");
        detail::require(sigma_decay > 0.0 && sigma_decay <= 1.0, "TrainConfig: sigma_decay must be in (0, 1]");
        detail::require(batch_episodes >= 1, "TrainConfig: batch_episodes must be >= 1");
        detail::require(learning_rate > 0.0 && std::isfinite(learning_rate), "TrainConfig: learning_rate must be positive");
        detail::require(discount >= 0.0 && discount <= 1.0, "TrainConfig: discount must be in [0, 1]");
        detail::require(entropy_coef >= 0.0 && std::isfinite(entropy_coef), "TrainConfig: entropy_coef must be >= 0");
        detail::require(eval_every >= 1, "TrainConfig: eval_every must be >= 1");
        detail::require(random_start_frac >= 0.0 && random_start_frac <= 1.0, "TrainConfig: random_start_frac must be in [0, 1]");
    }
};

inline constexpr double kMinSigma = 0.02;
inline constexpr std::size_t kFinalEvalEpisodes = 10;

inline Json to_json(const TrainConfig& c) {
    return Json{{"method", to_string(c.method)},
                {"seed", c.seed},
                {"population", c.population},
                {"elite_frac", c.elite_frac},
                {"iterations", c.iterations},
                {"episodes_per_candidate", c.episodes_per_candidate},
                {"init_sigma", c.init_sigma},
                {"sigma_decay", c.sigma_decay},
                {"updates", c.updates},
                {"batch_episodes", c.batch_episodes},
                {"learning_rate", c.learning_rate},
                {"discount", c.discount},
                {"entropy_coef", c.entropy_coef},
                {"eval_every", c.eval_every},
                {"random_start_frac", c.random_start_frac}};
}

/// Every field is optional (defaults apply); unknown keys are rejected.
inline TrainConfig train_config_from_json(const Json& j, std::string_view ctx = "train") {
    using namespace json_util;
    only_keys(j, ctx,
              {"method", "seed", "workers", "population", "elite_frac", "iterations", "episodes_per_candidate", "init_sigma", "sigma_decay", "updates",
               "batch_episodes", "learning_rate", "discount", "entropy_coef", "eval_every", "random_start_frac"});
    TrainConfig c;
    if (j.contains("method")) c.method = parse_train_method(get_string(j, ctx, "method"));
    if (j.contains("seed")) c.seed = get_count(j, ctx, "seed");
    if (j.contains("workers")) c.workers = get_count(j, ctx, "workers");
    if (j.contains("population")) c.population = get_count(j, ctx, "population");
    if (j.contains("elite_frac")) c.elite_frac = get_double(j, ctx, "elite_frac");
    if (j.contains("iterations")) c.iterations = get_count(j, ctx, "iterations");
    if (j.contains("episodes_per_candidate")) c.episodes_per_candidate = get_count(j, ctx, "episodes_per_candidate");
    if (j.contains("init_sigma")) c.init_sigma = get_double(j, ctx, "init_sigma");
    if (j.contains("sigma_decay")) c.sigma_decay = get_double(j, ctx, "sigma_decay");
    if (j.contains("updates")) c.updates = get_count(j, ctx, "updates");
    if (j.contains("batch_episodes")) c.batch_episodes = get_count(j, ctx, "batch_episodes");
    if (j.contains("learning_rate")) c.learning_rate = get_double(j, ctx, "learning_rate");
    if (j.contains("discount")) c.discount = get_double(j, ctx, "discount");
    if (j.contains("entropy_coef")) c.entropy_coef = get_double(j, ctx, "entropy_coef");
    if (j.contains("eval_every")) c.eval_every = get_count(j, ctx, "eval_every");
    if (j.contains("random_start_frac")) c.random_start_frac = get_double(j, ctx, "random_start_frac");
    try {
        c.validate();
    } catch (const PreconditionError& e) {
        throw FormatError(std::string(ctx) + ": " + e.what());
    }
    return c;
}

/// One row per iteration. For CEM: elite mean/std and sigma. For policy
/// gradient: mean/std of the sampled batch returns and the greedy score on the
/// selection tracks (NaN when not evaluated that update).
struct TrainLogRow {
    std::size_t iteration = 0;
    double mean = 0.0;
    double std = 0.0;
    double extra = 0.0;
};

inline void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows, TrainMethod method = TrainMethod::cem) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open '" + path.string() + "' for writing");
    }
    out << (method == TrainMethod::cem ? "iteration,elite_mean,elite_std,sigma\n" : "iteration,batch_mean,batch_std,greedy_return\n");
    char buf[128];
    for (const auto& r : rows) {
        if (std::isnan(r.extra)) {
            std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g,\n", r.iteration, r.mean, r.std);
        } else {
            std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g,%.6g\n", r.iteration, r.mean, r.std, r.extra);
        }
        out << buf;
    }
}

/// Track seed for training episode `episode` of candidate `candidate`.
inline std::int64_t training_track_seed(std::uint64_t seed, std::size_t iteration, std::size_t candidate, std::size_t episode) {
    const std::uint64_t h = derive_seed({seed, iteration, candidate, episode});
    return kTrainTrackOffset + static_cast<std::int64_t>(h % 1'000'000'000ULL);
}

/// Mean greedy return of `net` over the given tracks.
inline double mean_return_on(const PolicyNet& net, GridDriveConfig env, std::span<const std::int64_t> track_seeds) {
    double total = 0.0;
    for (auto s : track_seeds) {
        env.track_seed = s;
        total += run_episode(NetActor(net), env);
    }
    return total / static_cast<double>(track_seeds.size());
}

namespace detail {

inline std::uint64_t variation_stream(std::uint64_t tag, const TrainConfig& cfg, const GridDriveConfig& env) {
    // The variation enters the stream so equal seeds on different variations
    // give independent networks.
    return derive_seed({tag, cfg.seed, static_cast<std::uint64_t>(env.visual), static_cast<std::uint64_t>(env.task)});
}

inline PolicyBundle make_bundle(const PolicyNet& net, const GridDriveConfig& env, std::uint64_t seed, double mean_return) {
    PolicyBundle bundle;
    bundle.net = net;
    bundle.meta.visual = env.visual;
    bundle.meta.task = env.task;
    bundle.meta.seed = seed;
    bundle.meta.obs_dim = net.input_dim();
    bundle.meta.n_actions = net.output_dim();
    bundle.meta.mean_return = mean_return;
    return bundle;
}

/// Fixed tracks used to score checkpoints and the final bundle.
inline std::vector<std::int64_t> selection_tracks(std::uint64_t seed) {
    std::vector<std::int64_t> tracks(kFinalEvalEpisodes);
    for (std::size_t e = 0; e < tracks.size(); ++e) {
        tracks[e] = training_track_seed(seed, ~std::size_t{0}, 0, e);
    }
    return tracks;
}

inline PolicyBundle train_cem(const GridDriveConfig& env_config, const PolicyNet& net_template, const TrainConfig& cfg, std::vector<TrainLogRow>* log) {
    const std::size_t dim = net_template.parameter_count();
    const std::size_t n_elite = cfg.elite_count();
    Vector mean(dim, 0.0);
    Rng rng(variation_stream(0x63656DULL, cfg, env_config));
    double sigma = cfg.init_sigma;

    std::vector<Vector> population(cfg.population, Vector(dim));
    std::vector<double> fitness(cfg.population);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        for (auto& cand : population) {
            for (std::size_t i = 0; i < dim; ++i) {
                cand[i] = mean[i] + sigma * rng.normal();
            }
        }
        parallel_for(
            cfg.population,
            [&](std::size_t c) {
                PolicyNet net = net_template;
                net.set_parameters(population[c]);
                std::vector<std::int64_t> tracks(cfg.episodes_per_candidate);
                for (std::size_t e = 0; e < tracks.size(); ++e) {
                    tracks[e] = training_track_seed(cfg.seed, it, c, e);
                }
                fitness[c] = mean_return_on(net, env_config, tracks);
            },
            cfg.workers);

        std::vector<std::size_t> order(cfg.population);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fitness[a] > fitness[b]; });

        std::fill(mean.begin(), mean.end(), 0.0);
        double elite_mean = 0.0;
        for (std::size_t k = 0; k < n_elite; ++k) {
            const Vector& cand = population[order[k]];
            for (std::size_t i = 0; i < dim; ++i) {
                mean[i] += cand[i];
            }
            elite_mean += fitness[order[k]];
        }
        for (double& m : mean) {
            m /= static_cast<double>(n_elite);
        }
        elite_mean /= static_cast<double>(n_elite);
        double elite_var = 0.0;
        for (std::size_t k = 0; k < n_elite; ++k) {
            const double d = fitness[order[k]] - elite_mean;
            elite_var += d * d;
        }
        if (log != nullptr) {
            log->push_back({it, elite_mean, std::sqrt(elite_var / static_cast<double>(n_elite)), sigma});
        }
        sigma = std::max(kMinSigma, sigma * cfg.sigma_decay);
    }

    PolicyNet net = net_template;
    net.set_parameters(mean);
    const auto tracks = selection_tracks(cfg.seed);
    return make_bundle(net, env_config, cfg.seed, mean_return_on(net, env_config, tracks));
}

/// Offsets of each layer's weights and bias inside the flat parameter vector.
struct FlatLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation act = Activation::linear;
    std::size_t w = 0; ///< in×out, input-major
    std::size_t b = 0;
};

inline std::vector<FlatLayer> flat_layout(const PolicyNet& net) {
    std::vector<FlatLayer> out;
    std::size_t at = 0;
    for (const auto& l : net.layers()) {
        const auto& s = l.spec();
        out.push_back({s.in_dim, s.out_dim, s.activation, at, at + s.in_dim * s.out_dim});
        at += l.parameter_count();
    }
    return out;
}

// Activations of every layer for one observation; acts[0] is the input.
inline void flat_forward(const std::vector<FlatLayer>& layout, const Vector& p, std::span<const double> obs, std::vector<Vector>& acts) {
    acts.resize(layout.size() + 1);
    acts[0].assign(obs.begin(), obs.end());
    for (std::size_t k = 0; k < layout.size(); ++k) {
        const FlatLayer& l = layout[k];
        Vector& y = acts[k + 1];
        y.assign(p.begin() + static_cast<std::ptrdiff_t>(l.b), p.begin() + static_cast<std::ptrdiff_t>(l.b + l.out));
        const Vector& x = acts[k];
        for (std::size_t j = 0; j < l.in; ++j) {
            const double xj = x[j];
            if (xj == 0.0) {
                continue;
            }
            const double* w = p.data() + l.w + j * l.out;
            for (std::size_t i = 0; i < l.out; ++i) {
                y[i] += xj * w[i];
            }
        }
        if (l.act == Activation::relu) {
            for (double& v : y) v = v > 0.0 ? v : 0.0;
        } else if (l.act == Activation::tanh) {
            for (double& v : y) v = std::tanh(v);
        }
    }
}

inline Vector softmax(std::span<const double> logits) {
    Vector p(logits.begin(), logits.end());
    const double mx = *std::max_element(p.begin(), p.end());
    double z = 0.0;
    for (double& v : p) {
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : p) v /= z;
    return p;
}

// Accumulates into `grad` the gradient of the objective for one step, given
// d(objective)/d(logits) in `delta`. Consumes `delta`.
inline void flat_backward(const std::vector<FlatLayer>& layout, const Vector& p, const std::vector<Vector>& acts, Vector delta, Vector& grad) {
    for (std::size_t k = layout.size(); k-- > 0;) {
        const FlatLayer& l = layout[k];
        const Vector& x = acts[k];
        for (std::size_t i = 0; i < l.out; ++i) {
            grad[l.b + i] += delta[i];
        }
        Vector prev(k > 0 ? l.in : 0, 0.0);
        for (std::size_t j = 0; j < l.in; ++j) {
            const double* w = p.data() + l.w + j * l.out;
            double* g = grad.data() + l.w + j * l.out;
            const double xj = x[j];
            if (xj != 0.0) {
                for (std::size_t i = 0; i < l.out; ++i) g[i] += xj * delta[i];
            }
            if (k > 0) {
                double acc = 0.0;
                for (std::size_t i = 0; i < l.out; ++i) acc += w[i] * delta[i];
                prev[j] = acc;
            }
        }
        if (k == 0) {
            break;
        }
        // derivative of the previous layer's activation, from its output
        switch (layout[k - 1].act) {
        case Activation::relu:
            for (std::size_t j = 0; j < prev.size(); ++j) {
                if (x[j] <= 0.0) prev[j] = 0.0;
            }
            break;
        case Activation::tanh:
            for (std::size_t j = 0; j < prev.size(); ++j) prev[j] *= 1.0 - x[j] * x[j];
            break;
        case Activation::linear: break;
        }
        delta = std::move(prev);
    }
}

// He-scaled gaussian init, small output layer so the first policy is near uniform.
inline Vector pg_initial_parameters(const PolicyNet& net_template, const GridDriveConfig& env_config, const TrainConfig& cfg) {
    const auto layout = flat_layout(net_template);
    Vector params(net_template.parameter_count(), 0.0);
    Rng rng(variation_stream(0x706731ULL, cfg, env_config));
    for (std::size_t k = 0; k < layout.size(); ++k) {
        const FlatLayer& l = layout[k];
        const double scale = std::sqrt(2.0 / static_cast<double>(l.in)) * (k + 1 == layout.size() ? 0.1 : 1.0);
        for (std::size_t i = 0; i < l.in * l.out; ++i) {
            params[l.w + i] = scale * rng.normal();
        }
    }
    return params;
}

/// Parameters a training run starts from: the CEM mean (zeros) or the
/// policy-gradient initialization.
inline Vector initial_parameters(const PolicyNet& net_template, const GridDriveConfig& env_config, const TrainConfig& cfg) {
    if (cfg.method == TrainMethod::cem) {
        return Vector(net_template.parameter_count(), 0.0);
    }
    return pg_initial_parameters(net_template, env_config, cfg);
}

struct PgEpisode {
    std::vector<std::vector<Vector>> acts;
    std::vector<Vector> probs;
    std::vector<int> actions;
    std::vector<double> rewards;
};

inline PolicyBundle train_policy_gradient(const GridDriveConfig& env_config, const PolicyNet& net_template, const TrainConfig& cfg,
                                          std::vector<TrainLogRow>* log) {
    const auto layout = flat_layout(net_template);
    const std::uint64_t stream = variation_stream(0x706731ULL, cfg, env_config);

    Vector params = initial_parameters(net_template, env_config, cfg);
    Vector adam_m(params.size(), 0.0);
    Vector adam_v(params.size(), 0.0);
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;

    const auto tracks = selection_tracks(cfg.seed);
    PolicyNet net = net_template;
    net.set_parameters(params);
    PolicyNet best = net;
    double best_score = mean_return_on(net, env_config, tracks);

    std::vector<PgEpisode> batch(cfg.batch_episodes);
    const auto n_random_starts = static_cast<std::size_t>(std::llround(cfg.random_start_frac * static_cast<double>(cfg.batch_episodes)));
    for (std::size_t u = 0; u < cfg.updates; ++u) {
        parallel_for(
            batch.size(),
            [&](std::size_t e) {
                PgEpisode& ep = batch[e];
                ep = {};
                GridDriveConfig c = env_config;
                c.track_seed = training_track_seed(cfg.seed, u, e, 0);
                Rng rng(derive_seed({stream, u, e}));
                ResetResult start = reset(c);
                EnvState state = std::move(start.state);
                Observation obs = std::move(start.obs);
                if (e < n_random_starts) {
                    state.pos = static_cast<std::size_t>(rng.below(c.track_length));
                    state.lane = state.center_at(0);
                    state.speed = static_cast<int>(rng.below(kMaxSpeed + 1));
                    obs = render(state, state, c.visual);
                }
                bool done = false;
                while (!done) {
                    std::vector<Vector> acts;
                    flat_forward(layout, params, obs, acts);
                    Vector prob = softmax(acts.back());
                    double r = rng.uniform();
                    int a = 0;
                    for (; a + 1 < static_cast<int>(prob.size()); ++a) {
                        r -= prob[static_cast<std::size_t>(a)];
                        if (r < 0.0) break;
                    }
                    StepResult next = step(state, a, c);
                    ep.rewards.push_back(next.reward);
                    ep.actions.push_back(a);
                    ep.acts.push_back(std::move(acts));
                    ep.probs.push_back(std::move(prob));
                    state = std::move(next.state);
                    obs = std::move(next.obs);
                    done = next.done;
                }
            },
            cfg.workers);

        // Discounted returns-to-go; baseline is the batch mean at each step.
        const std::size_t horizon = batch[0].rewards.size();
        std::vector<Vector> adv(batch.size(), Vector(horizon));
        std::vector<double> totals;
        for (std::size_t e = 0; e < batch.size(); ++e) {
            double g = 0.0;
            for (std::size_t t = horizon; t-- > 0;) {
                g = batch[e].rewards[t] + cfg.discount * g;
                adv[e][t] = g;
            }
            totals.push_back(std::accumulate(batch[e].rewards.begin(), batch[e].rewards.end(), 0.0));
        }
        double sq = 0.0;
        for (std::size_t t = 0; t < horizon; ++t) {
            double m = 0.0;
            for (const auto& a : adv) m += a[t];
            m /= static_cast<double>(batch.size());
            for (auto& a : adv) {
                a[t] -= m;
                sq += a[t] * a[t];
            }
        }
        const double adv_scale = 1.0 / (std::sqrt(sq / static_cast<double>(batch.size() * horizon)) + eps);

        Vector grad(params.size(), 0.0);
        for (std::size_t e = 0; e < batch.size(); ++e) {
            const PgEpisode& ep = batch[e];
            for (std::size_t t = 0; t < horizon; ++t) {
                const Vector& prob = ep.probs[t];
                double entropy = 0.0;
                for (double q : prob) {
                    if (q > 0.0) entropy -= q * std::log(q);
                }
                Vector delta(prob.size());
                const double a = adv[e][t] * adv_scale;
                for (std::size_t i = 0; i < prob.size(); ++i) {
                    const double onehot = static_cast<int>(i) == ep.actions[t] ? 1.0 : 0.0;
                    delta[i] = a * (onehot - prob[i]) - cfg.entropy_coef * prob[i] * (std::log(std::max(prob[i], 1e-300)) + entropy);
                }
                flat_backward(layout, params, ep.acts[t], std::move(delta), grad);
            }
        }

        // Adam ascent step.
        const double n_steps = static_cast<double>(batch.size() * horizon);
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(u + 1));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(u + 1));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = grad[i] / n_steps;
            adam_m[i] = beta1 * adam_m[i] + (1.0 - beta1) * g;
            adam_v[i] = beta2 * adam_v[i] + (1.0 - beta2) * g * g;
            params[i] += cfg.learning_rate * (adam_m[i] / c1) / (std::sqrt(adam_v[i] / c2) + eps);
        }

        double greedy = std::numeric_limits<double>::quiet_NaN();
        if ((u + 1) % cfg.eval_every == 0 || u + 1 == cfg.updates) {
            net.set_parameters(params);
            greedy = mean_return_on(net, env_config, tracks);
            if (greedy > best_score) {
                best_score = greedy;
                best = net;
            }
        }
        if (log != nullptr) {
            const EvalStats s = summarize(totals);
            log->push_back({u, s.mean, s.std, greedy});
        }
    }
    return make_bundle(best, env_config, cfg.seed, best_score);
}

} // namespace detail

/// Trains an end-to-end policy with the architecture of `net_template`.
/// Deterministic per (config, visual, task); `workers` only changes speed.
///
/// policy_gradient: REINFORCE with discounted returns-to-go, a per-step batch
/// mean baseline, normalized advantages, an entropy bonus and Adam. The
/// checkpoint with the best greedy return on fixed selection tracks is kept.
///
/// cem: cross-entropy search from an all-zero mean. Each iteration samples the
/// population with isotropic scale sigma, keeps the elite fraction by mean
/// return and moves the mean to the elite average. Sigma follows
/// max(kMinSigma, init_sigma * sigma_decay^t).
///
/// meta.mean_return is the greedy return on the selection tracks.
inline PolicyBundle train(const GridDriveConfig& env_config, const PolicyNet& net_template, const TrainConfig& cfg,
                          std::vector<TrainLogRow>* log = nullptr) {
    cfg.validate();
    env_config.validate();
    check_compatible(NetActor(net_template), env_config);
    if (cfg.method == TrainMethod::cem) {
        return detail::train_cem(env_config, net_template, cfg, log);
    }
    return detail::train_policy_gradient(env_config, net_template, cfg, log);
}

/// The network a training run with `cfg` starts from, before any update.
inline PolicyNet initial_policy(const GridDriveConfig& env_config, const PolicyNet& net_template, const TrainConfig& cfg) {
    PolicyNet net = net_template;
    net.set_parameters(detail::initial_parameters(net_template, env_config, cfg));
    return net;
}

/// Greedy return of the freshly initialized (untrained) policy of a run.
inline EvalStats random_policy_baseline(const GridDriveConfig& env_config, const PolicyNet& net_template, const TrainConfig& cfg, std::size_t n_episodes,
                                        std::int64_t eval_seed) {
    return evaluate(NetActor(initial_policy(env_config, net_template, cfg)), env_config, n_episodes, eval_seed);
}

} // namespace saps
