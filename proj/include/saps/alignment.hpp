#pragma once

// Latent-space alignment between two encoders.
//
// Embeddings are stored as rows (m×d) and every map is applied to row vectors:
//     y = x·R + b
// Under this convention R = V·Uᵀ from SVD(X̃_vᵀ·X̃_u) = U·Σ·Vᵀ is the exact
// minimizer of ‖X̃_u·R − X̃_v‖_F over orthogonal R.

#include "saps/error.hpp"
#include "saps/json_util.hpp"
#include "saps/numerics.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace saps {

inline constexpr double kDefaultScalerFloor = 1e-8;

struct AnchorMeta {
    std::string source_id;
    std::string target_id;
    std::string mode; ///< "state", "pixel" or "synthetic"
    std::uint64_t seed = 0;
};

/// Row-aligned embeddings: row i of `source` and row i of `target` embed the
/// same underlying state.
struct AnchorPairSet {
    Matrix source; ///< X_u, m×d_u
    Matrix target; ///< X_v, m×d_v
    AnchorMeta meta;

    [[nodiscard]] std::size_t size() const noexcept { return source.rows(); }

    void validate() const {
        detail::require(source.rows() == target.rows(),
                        "AnchorPairSet: row counts differ (" + std::to_string(source.rows()) + " vs " + std::to_string(target.rows()) + ")");
        detail::require(source.rows() >= 2, "AnchorPairSet: at least 2 anchor pairs are required, got " + std::to_string(source.rows()));
        detail::require(source.cols() >= 1 && target.cols() >= 1, "AnchorPairSet: empty latent dimension");
    }
};

// ---------------------------------------------------------------------------
// Standard scaling

struct StandardScaler {
    Vector mean;
    Vector std; ///< already floored
    double floor = kDefaultScalerFloor;

    [[nodiscard]] std::size_t dim() const noexcept { return mean.size(); }

    friend bool operator==(const StandardScaler&, const StandardScaler&) = default;
};

inline StandardScaler fit_scaler(const Matrix& x, double floor = kDefaultScalerFloor) {
    detail::require(x.rows() >= 2, "fit_scaler: need at least 2 rows");
    detail::require(floor > 0.0, "fit_scaler: floor must be positive");
    StandardScaler s;
    s.floor = floor;
    s.mean = column_mean(x);
    s.std = column_std(x, s.mean);
    for (double& v : s.std) {
        v = std::max(v, floor);
    }
    return s;
}

inline Matrix apply_scaler(const StandardScaler& s, const Matrix& x) {
    detail::require(x.cols() == s.dim(), "apply_scaler: matrix has " + std::to_string(x.cols()) + " columns, scaler has dimension " + std::to_string(s.dim()));
    Matrix out = x;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            r[j] = (r[j] - s.mean[j]) / s.std[j];
        }
    }
    return out;
}

inline Matrix invert_scaler(const StandardScaler& s, const Matrix& x) {
    detail::require(x.cols() == s.dim(), "invert_scaler: matrix has " + std::to_string(x.cols()) + " columns, scaler has dimension " + std::to_string(s.dim()));
    Matrix out = x;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            r[j] = r[j] * s.std[j] + s.mean[j];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Latent maps

enum class MapKind { orthogonal, affine, linear };

inline std::string_view to_string(MapKind k) {
    switch (k) {
    case MapKind::orthogonal: return "orthogonal";
    case MapKind::affine: return "affine";
    case MapKind::linear: return "linear";
    }
    return "?";
}

inline MapKind parse_map_kind(std::string_view s) {
    if (s == "orthogonal") return MapKind::orthogonal;
    if (s == "affine") return MapKind::affine;
    if (s == "linear") return MapKind::linear;
    throw FormatError("unknown map kind '" + std::string(s) + "' (expected orthogonal, affine or linear)");
}

struct MapMeta {
    std::string source_id;
    std::string target_id;
    double residual = 0.0;
    std::size_t anchor_count = 0;
    bool scaled = false;
    double floor = kDefaultScalerFloor;
    double cutoff = kDefaultCutoff;
    std::string warning; ///< empty unless the fit was under-determined

    friend bool operator==(const MapMeta&, const MapMeta&) = default;
};

/// τ: source latent (d_u) → target latent (d_v).
struct LatentMap {
    MapKind kind = MapKind::linear;
    Matrix linear;  ///< R or W, d_u×d_v
    Vector offset;  ///< b, d_v
    std::optional<StandardScaler> scaler_u;
    std::optional<StandardScaler> scaler_v;
    MapMeta meta;

    [[nodiscard]] std::size_t source_dim() const noexcept { return linear.rows(); }
    [[nodiscard]] std::size_t target_dim() const noexcept { return linear.cols(); }

    static LatentMap identity(std::size_t d) {
        LatentMap m;
        m.kind = MapKind::orthogonal;
        m.linear = Matrix::identity(d);
        m.offset = Vector(d, 0.0);
        m.meta.source_id = "identity";
        m.meta.target_id = "identity";
        return m;
    }

    /// Throws FormatError describing the first broken invariant.
    void validate() const {
        const std::size_t du = source_dim();
        const std::size_t dv = target_dim();
        if (du == 0 || dv == 0) {
            throw FormatError("LatentMap: empty linear part");
        }
        if (offset.size() != dv) {
            throw FormatError("LatentMap: offset has length " + std::to_string(offset.size()) + ", expected " + std::to_string(dv));
        }
        if (!linear.all_finite()) {
            throw FormatError("LatentMap: linear part has non-finite entries");
        }
        if (scaler_u.has_value() != scaler_v.has_value()) {
            throw FormatError("LatentMap: scalers must be both present or both absent");
        }
        if (scaler_u && (scaler_u->dim() != du || scaler_u->std.size() != du)) {
            throw FormatError("LatentMap: source scaler dimension mismatch");
        }
        if (scaler_v && (scaler_v->dim() != dv || scaler_v->std.size() != dv)) {
            throw FormatError("LatentMap: target scaler dimension mismatch");
        }
        for (const auto* s : {&scaler_u, &scaler_v}) {
            if (*s) {
                for (double v : (*s)->std) {
                    if (!(v >= (*s)->floor) || !((*s)->floor > 0.0)) {
                        throw FormatError("LatentMap: scaler std below floor");
                    }
                }
            }
        }
        if (kind == MapKind::orthogonal) {
            if (du != dv) {
                throw FormatError("LatentMap: orthogonal map must be square");
            }
            if (orthogonality_error(linear) > 1e-8) {
                throw FormatError("LatentMap: orthogonal map fails ‖RᵀR − I‖_F <= 1e-8");
            }
        }
        if (kind == MapKind::linear) {
            for (double v : offset) {
                if (v != 0.0) {
                    throw FormatError("LatentMap: linear map must have a zero offset");
                }
            }
            if (scaler_u) {
                throw FormatError("LatentMap: linear map cannot carry scalers");
            }
        }
    }
};

/// x ↦ unscale_v((scale_u(x))·R + b), row-wise.
inline Matrix apply_map(const LatentMap& map, const Matrix& x) {
    detail::require(x.cols() == map.source_dim(),
                    "apply_map: input has " + std::to_string(x.cols()) + " columns, map expects " + std::to_string(map.source_dim()));
    Matrix y = matmul(map.scaler_u ? apply_scaler(*map.scaler_u, x) : x, map.linear);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        auto r = y.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            r[j] += map.offset[j];
        }
    }
    return map.scaler_v ? invert_scaler(*map.scaler_v, y) : y;
}

/// Single-vector form of apply_map.
inline Vector apply_map(const LatentMap& map, std::span<const double> x) {
    Matrix row(1, x.size(), Vector(x.begin(), x.end()));
    return apply_map(map, row).data();
}

/// RMSE over all entries of apply_map(map, X_u) − X_v.
inline double fit_residual(const LatentMap& map, const AnchorPairSet& anchors) {
    detail::require(anchors.source.rows() == anchors.target.rows(), "fit_residual: anchor row counts differ");
    detail::require(anchors.target.cols() == map.target_dim(), "fit_residual: target dimension mismatch");
    const Matrix diff = subtract(apply_map(map, anchors.source), anchors.target);
    const double n = static_cast<double>(diff.data().size());
    return n == 0.0 ? 0.0 : frobenius_norm(diff) / std::sqrt(n);
}

namespace detail {

struct Prepared {
    Matrix u;
    Matrix v;
    std::optional<StandardScaler> su;
    std::optional<StandardScaler> sv;
};

inline Prepared prepare(const AnchorPairSet& anchors, bool use_scaling, double floor) {
    anchors.validate();
    Prepared p{anchors.source, anchors.target, std::nullopt, std::nullopt};
    if (use_scaling) {
        p.su = fit_scaler(anchors.source, floor);
        p.sv = fit_scaler(anchors.target, floor);
        p.u = apply_scaler(*p.su, p.u);
        p.v = apply_scaler(*p.sv, p.v);
    }
    return p;
}

// b = x̄_v − x̄_u·R
inline Vector offset_from_means(const Vector& mean_u, const Vector& mean_v, const Matrix& r) {
    const Matrix mu(1, mean_u.size(), mean_u);
    const Matrix projected = matmul(mu, r);
    Vector b(mean_v.size());
    for (std::size_t j = 0; j < b.size(); ++j) {
        b[j] = mean_v[j] - projected(0, j);
    }
    return b;
}

inline void finish(LatentMap& map, const AnchorPairSet& anchors) {
    map.meta.source_id = anchors.meta.source_id;
    map.meta.target_id = anchors.meta.target_id;
    map.meta.anchor_count = anchors.size();
    if (anchors.size() < anchors.source.cols()) {
        map.meta.warning = "anchor count " + std::to_string(anchors.size()) + " is below the source latent dimension " +
                           std::to_string(anchors.source.cols()) + "; fit is under-determined";
    }
    map.meta.residual = fit_residual(map, anchors);
}

} // namespace detail

/// Orthogonal Procrustes with translation, optionally in standardized space.
inline LatentMap estimate_orthogonal(const AnchorPairSet& anchors, bool use_scaling = false, double floor = kDefaultScalerFloor) {
    anchors.validate();
    detail::require(anchors.source.cols() == anchors.target.cols(),
                    "estimate_orthogonal: latent dimensions differ (" + std::to_string(anchors.source.cols()) + " vs " +
                        std::to_string(anchors.target.cols()) + ")");
    auto p = detail::prepare(anchors, use_scaling, floor);
    const Vector mean_u = column_mean(p.u);
    const Vector mean_v = column_mean(p.v);
    const Matrix cu = subtract_row(p.u, mean_u);
    const Matrix cv = subtract_row(p.v, mean_v);

    const SvdResult d = svd(matmul_tn(cv, cu)); // X̃_vᵀ X̃_u = U Σ Vᵀ
    LatentMap map;
    map.kind = MapKind::orthogonal;
    map.linear = matmul(d.V, d.U.transpose()); // R = V Uᵀ
    map.offset = detail::offset_from_means(mean_u, mean_v, map.linear);
    map.scaler_u = std::move(p.su);
    map.scaler_v = std::move(p.sv);
    map.meta.scaled = use_scaling;
    map.meta.floor = floor;
    detail::finish(map, anchors);
    return map;
}

/// Unconstrained affine fit by least squares on centered data.
inline LatentMap estimate_affine(const AnchorPairSet& anchors, bool use_scaling = false, double floor = kDefaultScalerFloor,
                                 double cutoff = kDefaultCutoff) {
    auto p = detail::prepare(anchors, use_scaling, floor);
    const Vector mean_u = column_mean(p.u);
    const Vector mean_v = column_mean(p.v);
    LatentMap map;
    map.kind = MapKind::affine;
    map.linear = least_squares(subtract_row(p.u, mean_u), subtract_row(p.v, mean_v), cutoff);
    map.offset = detail::offset_from_means(mean_u, mean_v, map.linear);
    map.scaler_u = std::move(p.su);
    map.scaler_v = std::move(p.sv);
    map.meta.scaled = use_scaling;
    map.meta.floor = floor;
    map.meta.cutoff = cutoff;
    detail::finish(map, anchors);
    return map;
}

/// Linear fit through the origin: no centering, no offset, no scaling.
inline LatentMap estimate_linear(const AnchorPairSet& anchors, double cutoff = kDefaultCutoff) {
    anchors.validate();
    LatentMap map;
    map.kind = MapKind::linear;
    map.linear = least_squares(anchors.source, anchors.target, cutoff);
    map.offset = Vector(anchors.target.cols(), 0.0);
    map.meta.cutoff = cutoff;
    detail::finish(map, anchors);
    return map;
}

struct EstimateOptions {
    MapKind kind = MapKind::orthogonal;
    bool scale = false;
    double floor = kDefaultScalerFloor;
    double cutoff = kDefaultCutoff;
};

inline LatentMap estimate(const AnchorPairSet& anchors, const EstimateOptions& opts) {
    switch (opts.kind) {
    case MapKind::orthogonal: return estimate_orthogonal(anchors, opts.scale, opts.floor);
    case MapKind::affine: return estimate_affine(anchors, opts.scale, opts.floor, opts.cutoff);
    case MapKind::linear:
        detail::require(!opts.scale, "estimate: linear maps do not support standard scaling (scaling introduces an offset)");
        return estimate_linear(anchors, opts.cutoff);
    }
    detail::fail_precondition("estimate: unknown map kind");
}

// ---------------------------------------------------------------------------
// Cosine similarity between matched rows

namespace detail {
inline double row_cosine(std::span<const double> a, std::span<const double> b, std::size_t row) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        dot += a[j] * b[j];
        na += a[j] * a[j];
        nb += b[j] * b[j];
    }
    if (na == 0.0 || nb == 0.0) {
        throw PreconditionError("cosine similarity: row " + std::to_string(row) + " has zero norm");
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}
} // namespace detail

/// cos(A_i, B_i) for every row i.
inline Vector pairwise_cosines(const Matrix& a, const Matrix& b) {
    detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "pairwise_cosines: shapes differ");
    Vector out(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        out[i] = detail::row_cosine(a.row(i), b.row(i), i);
    }
    return out;
}

inline double mean_pairwise_cosine(const Matrix& a, const Matrix& b) {
    const Vector c = pairwise_cosines(a, b);
    detail::require(!c.empty(), "mean_pairwise_cosine: no rows");
    double s = 0.0;
    for (double v : c) {
        s += v;
    }
    return s / static_cast<double>(c.size());
}

/// Index of the equal-width bin over [-1, 1] holding `c`; 1.0 lands in the last bin.
inline std::size_t cosine_bin(double c, std::size_t bins) {
    const double pos = (c + 1.0) / 2.0 * static_cast<double>(bins);
    if (!(pos > 0.0)) {
        return 0;
    }
    return std::min(static_cast<std::size_t>(pos), bins - 1);
}

inline std::vector<std::size_t> cosine_histogram(const Matrix& a, const Matrix& b, std::size_t bins) {
    detail::require(bins >= 1, "cosine_histogram: bins must be >= 1");
    std::vector<std::size_t> counts(bins, 0);
    for (double c : pairwise_cosines(a, b)) {
        ++counts[cosine_bin(c, bins)];
    }
    return counts;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {
inline Json scaler_to_json(const StandardScaler& s) {
    return Json{{"mean", s.mean}, {"std", s.std}, {"floor", s.floor}};
}

inline StandardScaler scaler_from_json(const Json& j, const std::string& ctx, std::size_t dim) {
    json_util::only_keys(j, ctx, {"mean", "std", "floor"});
    StandardScaler s;
    s.mean = json_util::get_vector(j, ctx, "mean");
    s.std = json_util::get_vector(j, ctx, "std");
    s.floor = json_util::get_double(j, ctx, "floor");
    if (s.mean.size() != dim || s.std.size() != dim) {
        throw FormatError(ctx + ": expected dimension " + std::to_string(dim));
    }
    return s;
}
} // namespace detail

inline Json to_json(const LatentMap& map) {
    Json meta{{"source_id", map.meta.source_id},
              {"target_id", map.meta.target_id},
              {"residual", map.meta.residual},
              {"anchor_count", map.meta.anchor_count},
              {"flags", Json{{"scale", map.meta.scaled}, {"floor", map.meta.floor}, {"cutoff", map.meta.cutoff}}}};
    if (!map.meta.warning.empty()) {
        meta["warning"] = map.meta.warning;
    }
    Json doc{{"kind", std::string(to_string(map.kind))},
             {"d_u", map.source_dim()},
             {"d_v", map.target_dim()},
             {"R", json_util::from_matrix(map.linear)},
             {"b", map.offset}};
    if (map.scaler_u) {
        doc["scalers"] = Json{{"u", detail::scaler_to_json(*map.scaler_u)}, {"v", detail::scaler_to_json(*map.scaler_v)}};
    }
    doc["meta"] = std::move(meta);
    return doc;
}

inline LatentMap map_from_json(const Json& doc) {
    using namespace json_util;
    only_keys(doc, "map", {"kind", "d_u", "d_v", "R", "b", "scalers", "meta"});
    LatentMap map;
    map.kind = parse_map_kind(get_string(doc, "map", "kind"));
    const std::size_t du = get_count(doc, "map", "d_u");
    const std::size_t dv = get_count(doc, "map", "d_v");
    map.linear = get_matrix(doc, "map", "R", du, dv);
    map.offset = get_vector(doc, "map", "b");
    if (doc.contains("scalers")) {
        const Json& s = doc["scalers"];
        only_keys(s, "map.scalers", {"u", "v"});
        map.scaler_u = detail::scaler_from_json(field(s, "map.scalers", "u"), "map.scalers.u", du);
        map.scaler_v = detail::scaler_from_json(field(s, "map.scalers", "v"), "map.scalers.v", dv);
    }
    const Json& meta = field(doc, "map", "meta");
    only_keys(meta, "map.meta", {"source_id", "target_id", "residual", "anchor_count", "flags", "warning"});
    map.meta.source_id = get_string(meta, "map.meta", "source_id");
    map.meta.target_id = get_string(meta, "map.meta", "target_id");
    map.meta.residual = get_double(meta, "map.meta", "residual");
    map.meta.anchor_count = get_count(meta, "map.meta", "anchor_count");
    const Json& flags = field(meta, "map.meta", "flags");
    only_keys(flags, "map.meta.flags", {"scale", "floor", "cutoff"});
    map.meta.scaled = get_bool(flags, "map.meta.flags", "scale");
    map.meta.floor = get_double(flags, "map.meta.flags", "floor");
    map.meta.cutoff = get_double(flags, "map.meta.flags", "cutoff");
    if (meta.contains("warning")) {
        map.meta.warning = get_string(meta, "map.meta", "warning");
    }
    map.validate();
    return map;
}

inline void save_map(const LatentMap& map, const std::filesystem::path& path) { json_util::write_file(path, to_json(map)); }

inline LatentMap load_map(const std::filesystem::path& path) {
    const Json doc = json_util::parse_file(path);
    try {
        return map_from_json(doc);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace saps
