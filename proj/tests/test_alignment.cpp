#include "saps/alignment.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace saps;

namespace {

struct Fixture {
    AnchorPairSet anchors;
    Matrix q;
    Vector b;
};

// X_v = X_u·Q + 1bᵀ (+ noise)
Fixture orthogonal_fixture(std::uint64_t seed, std::size_t m = 512, std::size_t d = 32, double noise = 0.0) {
    Rng rng(derive_seed({seed, 1}));
    Fixture f;
    f.anchors.source = gaussian_matrix(m, d, rng);
    f.q = random_orthogonal(d, derive_seed({seed, 2}));
    f.b.resize(d);
    for (double& v : f.b) v = rng.normal();
    f.anchors.target = matmul(f.anchors.source, f.q);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) f.anchors.target(i, j) += f.b[j] + noise * rng.normal();
    return f;
}

double frob_residual(const LatentMap& map, const AnchorPairSet& a) { return frobenius_norm(subtract(apply_map(map, a.source), a.target)); }

void expect_maps_equal(const LatentMap& a, const LatentMap& b) {
    EXPECT_EQ(a.kind, b.kind);
    EXPECT_EQ(a.linear, b.linear);
    EXPECT_EQ(a.offset, b.offset);
    EXPECT_EQ(a.scaler_u, b.scaler_u);
    EXPECT_EQ(a.scaler_v, b.scaler_v);
    EXPECT_EQ(a.meta, b.meta);
}

} // namespace

TEST(Scaler, HandArithmetic) {
    StandardScaler s{{1, 1}, {2, 4}, kDefaultScalerFloor};
    const Matrix y = apply_scaler(s, Matrix::from_rows({{5, -3}}));
    EXPECT_EQ(y, Matrix::from_rows({{2, -1}}));
    EXPECT_EQ(invert_scaler(s, y), Matrix::from_rows({{5, -3}}));
}

TEST(Scaler, ConstantColumnIsFloored) {
    const Matrix x = Matrix::from_rows({{1, 7}, {2, 7}, {3, 7}});
    const StandardScaler s = fit_scaler(x, 1e-6);
    EXPECT_EQ(s.std[1], 1e-6);
    EXPECT_THROW(fit_scaler(Matrix(1, 2)), PreconditionError);
    EXPECT_THROW(fit_scaler(x, 0.0), PreconditionError);
}

TEST(Scaler, StandardizesAndRoundTrips) {
    Rng rng(3);
    Matrix x = gaussian_matrix(200, 6, rng, 3.0);
    for (std::size_t i = 0; i < 200; ++i) x(i, 2) += 10.0;
    const StandardScaler s = fit_scaler(x);
    const Matrix z = apply_scaler(s, x);
    const Vector mu = column_mean(z);
    const Vector sd = column_std(z, mu);
    for (std::size_t j = 0; j < 6; ++j) {
        EXPECT_LE(std::abs(mu[j]), 1e-12);
        EXPECT_NEAR(sd[j], 1.0, 1e-9);
    }
    EXPECT_LE(max_abs_diff(invert_scaler(s, z), x), 1e-12);
    EXPECT_THROW(apply_scaler(s, Matrix(2, 5)), PreconditionError);
}

TEST(Orthogonal, IdenticalSetsGiveIdentity) {
    Fixture f = orthogonal_fixture(1, 100, 8);
    f.anchors.target = f.anchors.source;
    const LatentMap m = estimate_orthogonal(f.anchors);
    EXPECT_LE(max_abs_diff(m.linear, Matrix::identity(8)), 1e-8);
    for (double v : m.offset) EXPECT_LE(std::abs(v), 1e-8);
}

TEST(Orthogonal, RecoversExactConstruction) {
    const Fixture f = orthogonal_fixture(42);
    const LatentMap m = estimate_orthogonal(f.anchors);
    EXPECT_LE(max_abs_diff(m.linear, f.q), 1e-6);
    for (std::size_t j = 0; j < f.b.size(); ++j) EXPECT_NEAR(m.offset[j], f.b[j], 1e-6);
    EXPECT_LE(m.meta.residual, 1e-8);
    EXPECT_LE(orthogonality_error(m.linear), 1e-8);
    EXPECT_LE(max_abs_diff(apply_map(m, f.anchors.source), f.anchors.target), 1e-6);
    EXPECT_EQ(m.meta.anchor_count, 512u);
    EXPECT_TRUE(m.meta.warning.empty());
}

TEST(Orthogonal, NoiseCalibration) {
    const Fixture f = orthogonal_fixture(7, 512, 32, 0.01);
    const LatentMap m = estimate_orthogonal(f.anchors);
    EXPECT_GE(m.meta.residual, 0.005);
    EXPECT_LE(m.meta.residual, 0.015);
}

TEST(Orthogonal, BeatsRandomCandidates) {
    const Fixture f = orthogonal_fixture(9, 128, 6, 0.5);
    const LatentMap m = estimate_orthogonal(f.anchors);
    const Vector mu = column_mean(f.anchors.source);
    const Vector mv = column_mean(f.anchors.target);
    const Matrix cu = subtract_row(f.anchors.source, mu);
    const Matrix cv = subtract_row(f.anchors.target, mv);
    const double best = frobenius_norm(subtract(matmul(cu, m.linear), cv));
    for (std::uint64_t s = 0; s < 100; ++s) {
        const Matrix r = random_orthogonal(6, 1000 + s);
        EXPECT_LE(best, frobenius_norm(subtract(matmul(cu, r), cv)) + 1e-9);
    }
}

TEST(Orthogonal, TranslationOnlyMovesOffset) {
    const Fixture f = orthogonal_fixture(11, 64, 5, 0.1);
    AnchorPairSet shifted = f.anchors;
    for (std::size_t i = 0; i < shifted.size(); ++i)
        for (std::size_t j = 0; j < 5; ++j) shifted.source(i, j) += 3.0 + static_cast<double>(j);
    const LatentMap a = estimate_orthogonal(f.anchors);
    const LatentMap b = estimate_orthogonal(shifted);
    EXPECT_LE(max_abs_diff(a.linear, b.linear), 1e-8);
    EXPECT_GT(std::abs(a.offset[0] - b.offset[0]), 1e-3);
}

TEST(Orthogonal, Errors) {
    AnchorPairSet a{Matrix(10, 3, 1.0), Matrix(10, 4, 1.0), {}};
    EXPECT_THROW(estimate_orthogonal(a), PreconditionError);
    AnchorPairSet one{Matrix(1, 3, 1.0), Matrix(1, 3, 1.0), {}};
    EXPECT_THROW(estimate_orthogonal(one), PreconditionError);
    AnchorPairSet ragged{Matrix(10, 3, 1.0), Matrix(9, 3, 1.0), {}};
    EXPECT_THROW(estimate_orthogonal(ragged), PreconditionError);
}

TEST(Orthogonal, WarnsWhenUnderDetermined) {
    const Fixture f = orthogonal_fixture(2, 5, 8);
    const LatentMap m = estimate_orthogonal(f.anchors);
    EXPECT_FALSE(m.meta.warning.empty());
    EXPECT_LE(orthogonality_error(m.linear), 1e-8);
}

TEST(Affine, DiagonalStretch) {
    Rng rng(5);
    AnchorPairSet a{gaussian_matrix(100, 4, rng), Matrix(), {}};
    const Vector b = {1, -2, 3, 0.5};
    a.target = a.source;
    for (std::size_t i = 0; i < 100; ++i)
        for (std::size_t j = 0; j < 4; ++j) a.target(i, j) = 2.0 * a.source(i, j) + b[j];
    const LatentMap m = estimate_affine(a);
    Matrix two = Matrix::identity(4);
    for (std::size_t j = 0; j < 4; ++j) two(j, j) = 2.0;
    EXPECT_LE(max_abs_diff(m.linear, two), 1e-8);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(m.offset[j], b[j], 1e-8);
    EXPECT_LE(m.meta.residual, 1e-8);
}

TEST(Affine, MatchesNormalEquationsWithOnesColumn) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        AnchorPairSet a{gaussian_matrix(60, 5, rng), gaussian_matrix(60, 4, rng), {}};
        const LatentMap m = estimate_affine(a);
        // Oracle: [X_u 1]ᵀ([X_u 1]·θ − X_v) = 0 at the optimum.
        Matrix aug(60, 6);
        for (std::size_t i = 0; i < 60; ++i) {
            for (std::size_t j = 0; j < 5; ++j) aug(i, j) = a.source(i, j);
            aug(i, 5) = 1.0;
        }
        Matrix theta(6, 4);
        for (std::size_t j = 0; j < 4; ++j) {
            for (std::size_t i = 0; i < 5; ++i) theta(i, j) = m.linear(i, j);
            theta(5, j) = m.offset[j];
        }
        EXPECT_LE(frobenius_norm(matmul_tn(aug, subtract(matmul(aug, theta), a.target))), 1e-9);
    }
}

TEST(Affine, ScaledResidualMatchesRecomputation) {
    const Fixture f = orthogonal_fixture(13, 200, 6, 0.2);
    for (auto kind : {MapKind::orthogonal, MapKind::affine}) {
        const LatentMap m = estimate(f.anchors, {kind, true, kDefaultScalerFloor, kDefaultCutoff});
        ASSERT_TRUE(m.scaler_u && m.scaler_v);
        EXPECT_NEAR(m.meta.residual, fit_residual(m, f.anchors), 1e-9);
        EXPECT_TRUE(m.meta.scaled);
    }
}

TEST(Linear, RecoversExactAndBasisProbe) {
    Rng rng(17);
    const Matrix w0 = gaussian_matrix(5, 3, rng);
    AnchorPairSet a{gaussian_matrix(40, 5, rng), Matrix(), {}};
    a.target = matmul(a.source, w0);
    const LatentMap m = estimate_linear(a);
    EXPECT_LE(max_abs_diff(m.linear, w0), 1e-8);
    for (double v : m.offset) EXPECT_EQ(v, 0.0);

    AnchorPairSet basis{Matrix::identity(4), gaussian_matrix(4, 3, rng), {}};
    EXPECT_LE(max_abs_diff(estimate_linear(basis).linear, basis.target), 1e-12);
}

TEST(Linear, OffsetMatters) {
    Fixture f = orthogonal_fixture(19, 100, 4, 0.05);
    for (std::size_t i = 0; i < 100; ++i)
        for (std::size_t j = 0; j < 4; ++j) f.anchors.target(i, j) += 50.0;
    EXPECT_GE(estimate_linear(f.anchors).meta.residual, estimate_affine(f.anchors).meta.residual);
    EXPECT_THROW(estimate(f.anchors, {MapKind::linear, true, kDefaultScalerFloor, kDefaultCutoff}), PreconditionError);
}

TEST(Estimators, NestingOnSharedFixtures) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Fixture f = orthogonal_fixture(100 + seed, 80, 6, 0.3);
        const double ra = estimate_affine(f.anchors).meta.residual;
        EXPECT_LE(ra, estimate_orthogonal(f.anchors).meta.residual + 1e-9);
        EXPECT_LE(ra, estimate_linear(f.anchors).meta.residual + 1e-9);
    }
}

TEST(Estimators, Deterministic) {
    const Fixture f = orthogonal_fixture(23, 90, 7, 0.3);
    for (auto kind : {MapKind::orthogonal, MapKind::affine, MapKind::linear}) {
        const EstimateOptions o{kind, false, kDefaultScalerFloor, kDefaultCutoff};
        expect_maps_equal(estimate(f.anchors, o), estimate(f.anchors, o));
    }
}

TEST(Estimators, RankZeroSourceFails) {
    AnchorPairSet a{Matrix(10, 3, 2.0), Matrix(10, 3, 1.0), {}};
    EXPECT_THROW(estimate_affine(a), NumericalError);
    AnchorPairSet z{Matrix(10, 3, 0.0), Matrix(10, 3, 1.0), {}};
    EXPECT_THROW(estimate_linear(z), NumericalError);
}

TEST(ApplyMap, IdentityAndResiduals) {
    const Fixture f = orthogonal_fixture(29, 50, 5, 0.1);
    EXPECT_EQ(apply_map(LatentMap::identity(5), f.anchors.source), f.anchors.source);
    AnchorPairSet same{f.anchors.source, f.anchors.source, {}};
    EXPECT_LE(fit_residual(LatentMap::identity(5), same), 1e-12);
    const LatentMap fitted = estimate_orthogonal(f.anchors);
    LatentMap random = fitted;
    random.linear = random_orthogonal(5, 99);
    EXPECT_GE(fit_residual(random, f.anchors), fitted.meta.residual);
    EXPECT_GE(frob_residual(random, f.anchors), frob_residual(fitted, f.anchors));
    EXPECT_THROW(apply_map(fitted, Matrix(2, 4)), PreconditionError);
    const Vector row = apply_map(fitted, f.anchors.source.row(3));
    const Matrix all = apply_map(fitted, f.anchors.source);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(row[j], all(3, j));
}

TEST(Cosine, SelfAntipodalAndZeroRows) {
    Rng rng(31);
    const Matrix a = gaussian_matrix(20, 4, rng);
    Matrix neg = a;
    for (double& v : neg.data()) v = -v;
    EXPECT_NEAR(mean_pairwise_cosine(a, a), 1.0, 1e-12);
    EXPECT_NEAR(mean_pairwise_cosine(a, neg), -1.0, 1e-12);
    Matrix z = a;
    for (double& v : z.row(7)) v = 0.0;
    try {
        mean_pairwise_cosine(a, z);
        FAIL() << "expected an error";
    } catch (const PreconditionError& e) {
        EXPECT_NE(std::string(e.what()).find("row 7"), std::string::npos);
    }
}

TEST(Cosine, HistogramEdgesAndBruteForce) {
    Rng rng(37);
    const Matrix a = gaussian_matrix(500, 3, rng);
    const Matrix b = gaussian_matrix(500, 3, rng);
    for (std::size_t bins : {1u, 7u, 20u}) {
        const auto counts = cosine_histogram(a, b, bins);
        std::vector<std::size_t> brute(bins, 0);
        for (std::size_t i = 0; i < 500; ++i) {
            double dot = 0, na = 0, nb = 0;
            for (std::size_t j = 0; j < 3; ++j) {
                dot += a(i, j) * b(i, j);
                na += a(i, j) * a(i, j);
                nb += b(i, j) * b(i, j);
            }
            const double c = dot / (std::sqrt(na) * std::sqrt(nb));
            std::size_t k = 0;
            while (k + 1 < bins && c >= -1.0 + 2.0 * static_cast<double>(k + 1) / static_cast<double>(bins)) ++k;
            ++brute[k];
        }
        EXPECT_EQ(counts, brute);
    }
    const auto same = cosine_histogram(a, a, 10);
    EXPECT_EQ(same[9], 500u);
    const Matrix e1 = Matrix::from_rows({{1, 0}, {0, 1}});
    const Matrix e2 = Matrix::from_rows({{0, 1}, {1, 0}});
    const auto ortho = cosine_histogram(e1, e2, 4);
    EXPECT_EQ(ortho[2], 2u);
    EXPECT_EQ(cosine_bin(1.0, 10), 9u);
    EXPECT_EQ(cosine_bin(-1.0, 10), 0u);
}

TEST(MapJson, RoundTripIsExact) {
    const Fixture f = orthogonal_fixture(41, 64, 6, 0.3);
    const auto path = std::filesystem::temp_directory_path() / "saps_map_roundtrip.json";
    for (bool scale : {false, true}) {
        LatentMap m = estimate_affine(f.anchors, scale);
        m.meta.source_id = "green-standard-s0";
        m.meta.target_id = "red-standard-s1";
        save_map(m, path);
        expect_maps_equal(load_map(path), m);
    }
    std::filesystem::remove(path);
}

TEST(MapJson, RejectsBrokenDocuments) {
    const Fixture f = orthogonal_fixture(43, 64, 4, 0.3);
    const Json good = to_json(estimate_orthogonal(f.anchors));
    Json extra = good;
    extra["surprise"] = 1;
    EXPECT_THROW(map_from_json(extra), FormatError);
    Json bad_kind = good;
    bad_kind["kind"] = "projective";
    EXPECT_THROW(map_from_json(bad_kind), FormatError);
    Json not_orth = good;
    not_orth["R"][0][0] = 3.0;
    EXPECT_THROW(map_from_json(not_orth), FormatError);
    Json short_b = good;
    short_b["b"].erase(0);
    EXPECT_THROW(map_from_json(short_b), FormatError);
    Json linear_offset = to_json(estimate_linear(f.anchors));
    linear_offset["b"][0] = 1.0;
    EXPECT_THROW(map_from_json(linear_offset), FormatError);
}
