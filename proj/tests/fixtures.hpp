// Untrained but deterministic bundles shared by the anchor and harness tests.
#pragma once

#include "saps/saps.hpp"

namespace saps::testing {

inline PolicyBundle random_bundle(Visual v, Task t, std::uint64_t seed, double sigma = 0.3) {
    PolicyBundle b;
    b.net = default_policy_net(kObsDim, static_cast<std::size_t>(action_count(t)));
    Rng rng(derive_seed({0xF1, static_cast<std::uint64_t>(v), static_cast<std::uint64_t>(t), seed}));
    Vector p(b.net.parameter_count());
    for (double& x : p) x = sigma * rng.normal();
    b.net.set_parameters(p);
    b.meta.visual = v;
    b.meta.task = t;
    b.meta.seed = seed;
    b.meta.n_actions = b.net.output_dim();
    return b;
}

// The same policy rendered for another visual, with its latent units
// permuted: encode_to(render(s, to)) = P·encode_from(render(s, from)) exactly.
inline PolicyBundle recolored(const PolicyBundle& b, Visual from, Visual to, const std::vector<std::size_t>& latent_perm) {
    const auto& ls = b.net.layers();
    const auto perm = transfer_permutation(from, to);
    // x_to[px + c] = x_from[px + perm[c]], so W_to[:, px + c] = W_from[:, px + perm[c]]
    Matrix w0 = ls[0].weights();
    Matrix w0n(w0.rows(), w0.cols());
    for (std::size_t r = 0; r < w0.rows(); ++r)
        for (std::size_t px = 0; px < kObsDim; px += kChannels)
            for (std::size_t c = 0; c < kChannels; ++c) w0n(r, px + c) = w0(r, px + static_cast<std::size_t>(perm[c]));
    Matrix w1 = ls[1].weights();
    Matrix w1n(w1.rows(), w1.cols());
    Vector b1n(w1.rows());
    for (std::size_t r = 0; r < w1.rows(); ++r) {
        for (std::size_t c = 0; c < w1.cols(); ++c) w1n(latent_perm[r], c) = w1(r, c);
        b1n[latent_perm[r]] = ls[1].bias()[r];
    }
    Matrix w2 = ls[2].weights();
    Matrix w2n(w2.rows(), w2.cols());
    for (std::size_t r = 0; r < w2.rows(); ++r)
        for (std::size_t c = 0; c < w2.cols(); ++c) w2n(r, latent_perm[c]) = w2(r, c);
    std::vector<Layer> layers = {Layer(ls[0].spec(), w0n, ls[0].bias()), Layer(ls[1].spec(), w1n, b1n), Layer(ls[2].spec(), w2n, ls[2].bias()), ls[3]};
    PolicyBundle out = b;
    out.net = PolicyNet(std::move(layers), b.net.split_index());
    out.meta.visual = to;
    return out;
}

} // namespace saps::testing
