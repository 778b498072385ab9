#pragma once

// Anchor collection: observation pairs that depict the same underlying state
// under two environment variations, and their embeddings.

#include "saps/alignment.hpp"
#include "saps/env.hpp"
#include "saps/error.hpp"
#include "saps/numerics.hpp"
#include "saps/policy.hpp"
#include "saps/rng.hpp"
#include "saps/training.hpp"

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace saps {

inline constexpr std::size_t kDefaultAnchorCount = 512;

/// Row-aligned raw observations (n×obs_dim each).
struct ObservationPairs {
    Matrix u;
    Matrix v;
};

/// States visited by a greedy rollout share dynamics across variations only if
/// the episode geometry agrees; visuals and tasks are free to differ.
inline void check_anchor_configs(const GridDriveConfig& config_u, const GridDriveConfig& config_v) {
    config_u.validate();
    config_v.validate();
    if (config_u.horizon != config_v.horizon || config_u.track_length != config_v.track_length) {
        throw IncompatibleError("anchor collection needs matching dynamics: horizon " + std::to_string(config_u.horizon) + " vs " +
                                std::to_string(config_v.horizon) + ", track_length " + std::to_string(config_u.track_length) + " vs " +
                                std::to_string(config_v.track_length) + "; only visual and task may differ");
    }
}

/// Greedy rollouts of `bundle` in config_u's dynamics on tracks rollout_seed,
/// rollout_seed+1, ... until n states are gathered. Every state on which the
/// policy acts is rendered under both visuals.
inline ObservationPairs collect_state_anchors(const PolicyBundle& bundle, const GridDriveConfig& config_u, const GridDriveConfig& config_v,
                                              std::size_t n, std::int64_t rollout_seed) {
    detail::require(n >= 2, "collect_state_anchors: n must be >= 2, got " + std::to_string(n));
    check_anchor_configs(config_u, config_v);
    const NetActor actor(bundle.net);
    check_compatible(actor, config_u);

    ObservationPairs out{Matrix(n, kObsDim), Matrix(n, kObsDim)};
    std::size_t k = 0;
    for (std::int64_t episode = 0; k < n; ++episode) {
        GridDriveConfig cfg = config_u;
        cfg.track_seed = rollout_seed + episode;
        GridDrive env(cfg);
        while (!env.done() && k < n) {
            const Observation& obs = env.observation();
            std::copy(obs.begin(), obs.end(), out.u.row(k).begin());
            const Observation other = render(env.state(), env.previous_state(), config_v.visual);
            std::copy(other.begin(), other.end(), out.v.row(k).begin());
            ++k;
            env.step(actor.act(obs));
        }
    }
    return out;
}

/// V[i] = pixel_transform(U[i], from, to).
inline ObservationPairs collect_pixel_anchors(const Matrix& u, Visual from, Visual to) {
    detail::require(u.cols() == kObsDim, "collect_pixel_anchors: observations have length " + std::to_string(u.cols()) + ", expected " +
                                             std::to_string(kObsDim));
    ObservationPairs out{u, Matrix(u.rows(), u.cols())};
    for (std::size_t i = 0; i < u.rows(); ++i) {
        const Observation t = pixel_transform(u.row(i), from, to);
        std::copy(t.begin(), t.end(), out.v.row(i).begin());
    }
    return out;
}

/// Encodes every row of `obs` with the encoder half of `net`.
inline Matrix embed(const PolicyNet& net, const Matrix& obs) {
    if (obs.cols() != net.input_dim()) {
        throw IncompatibleError("embed: observations have length " + std::to_string(obs.cols()) + ", encoder expects " +
                                std::to_string(net.input_dim()));
    }
    Matrix out(obs.rows(), net.latent_dim());
    for (std::size_t i = 0; i < obs.rows(); ++i) {
        const Vector z = net.encode(obs.row(i));
        std::copy(z.begin(), z.end(), out.row(i).begin());
    }
    return out;
}

inline AnchorPairSet embed_anchors(const PolicyNet& net_u, const PolicyNet& net_v, const ObservationPairs& obs, AnchorMeta meta = {}) {
    if (obs.u.rows() != obs.v.rows()) {
        throw IncompatibleError("embed_anchors: observation lists differ in length (" + std::to_string(obs.u.rows()) + " vs " +
                                std::to_string(obs.v.rows()) + ")");
    }
    AnchorPairSet set{embed(net_u, obs.u), embed(net_v, obs.v), std::move(meta)};
    return set;
}

/// m pairs drawn uniformly without replacement; both sides use the same rows.
inline AnchorPairSet subsample(const AnchorPairSet& set, std::size_t m, std::uint64_t seed) {
    detail::require(set.source.rows() == set.target.rows(), "subsample: anchor row counts differ");
    const std::size_t n = set.size();
    detail::require(m <= n, "subsample: requested " + std::to_string(m) + " pairs from a set of " + std::to_string(n));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed({0x616E63ULL, seed}));
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    AnchorPairSet out{Matrix(m, set.source.cols()), Matrix(m, set.target.cols()), set.meta};
    for (std::size_t i = 0; i < m; ++i) {
        std::copy(set.source.row(idx[i]).begin(), set.source.row(idx[i]).end(), out.source.row(i).begin());
        std::copy(set.target.row(idx[i]).begin(), set.target.row(idx[i]).end(), out.target.row(i).begin());
    }
    return out;
}

} // namespace saps
