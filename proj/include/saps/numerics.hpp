#pragma once

#include "saps/error.hpp"
#include "saps/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace saps {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Samples are rows throughout the toolkit.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
        detail::require(data_.size() == rows_ * cols_, "Matrix: data length " + std::to_string(data_.size()) + " != rows*cols " + std::to_string(rows_ * cols_));
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    /// Build from nested rows; all rows must have equal length.
    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.front().size();
        Matrix m(r, c);
        for (std::size_t i = 0; i < r; ++i) {
            detail::require(rows[i].size() == c, "Matrix::from_rows: ragged row " + std::to_string(i));
            std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
        }
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

    [[nodiscard]] const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    [[nodiscard]] bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    [[nodiscard]] Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t j = 0; j < cols_; ++j) {
                t(j, i) = (*this)(i, j);
            }
        }
        return t;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + ")");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out[j] += aik * brow[j];
            }
        }
    }
    return c;
}

/// aᵀ·b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    detail::require(a.rows() == b.rows(), "matmul_tn: row counts differ");
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const auto arow = a.row(k);
        const auto brow = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = arow[i];
            auto out = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out[j] += aki * brow[j];
            }
        }
    }
    return c;
}

inline Matrix subtract(const Matrix& a, const Matrix& b) {
    detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "subtract: shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < c.data().size(); ++i) {
        c.data()[i] -= b.data()[i];
    }
    return c;
}

inline double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) {
        s += v * v;
    }
    return std::sqrt(s);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    }
    return m;
}

/// ‖MᵀM − I‖_F, the orthogonality defect of the columns of M.
inline double orthogonality_error(const Matrix& m) {
    return frobenius_norm(subtract(matmul_tn(m, m), Matrix::identity(m.cols())));
}

/// Subtract `offset` from every row.
inline Matrix subtract_row(const Matrix& x, std::span<const double> offset) {
    detail::require(offset.size() == x.cols(), "subtract_row: offset length mismatch");
    Matrix out = x;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            r[j] -= offset[j];
        }
    }
    return out;
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng, double sigma = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data()) {
        v = sigma * rng.normal();
    }
    return m;
}

// ---------------------------------------------------------------------------
// Column statistics

inline Vector column_mean(const Matrix& x) {
    detail::require(x.rows() >= 1 && x.cols() >= 1, "column_mean: empty matrix");
    Vector mean(x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            mean[j] += r[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(x.rows());
    for (double& m : mean) {
        m *= inv;
    }
    return mean;
}

/// Population standard deviation (divides by rows). Constant columns give 0.
inline Vector column_std(const Matrix& x, std::span<const double> mean) {
    detail::require(x.rows() >= 1, "column_std: empty matrix");
    detail::require(mean.size() == x.cols(), "column_std: mean has length " + std::to_string(mean.size()) + ", expected " + std::to_string(x.cols()));
    Vector var(x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            const double d = r[j] - mean[j];
            var[j] += d * d;
        }
    }
    for (double& v : var) {
        v = std::sqrt(v / static_cast<double>(x.rows()));
    }
    return var;
}

// ---------------------------------------------------------------------------
// SVD

/// Thin SVD M = U·diag(S)·Vᵀ with k = min(m, n).
struct SvdResult {
    Matrix U; ///< m×k, orthonormal columns
    Vector S; ///< k values, descending, nonnegative
    Matrix V; ///< n×k, orthonormal columns
};

struct SvdOptions {
    int max_sweeps = 80;
};

namespace detail {

// Replace columns flagged in `bad` with unit vectors orthogonal to every other column.
inline void complete_orthonormal(Matrix& q, const std::vector<bool>& bad) {
    const std::size_t m = q.rows();
    const std::size_t k = q.cols();
    std::vector<bool> done(k);
    for (std::size_t j = 0; j < k; ++j) {
        done[j] = !bad[j];
    }
    for (std::size_t j = 0; j < k; ++j) {
        if (done[j]) {
            continue;
        }
        Vector best;
        double best_norm = -1.0;
        for (std::size_t e = 0; e < m; ++e) {
            Vector v(m, 0.0);
            v[e] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t c = 0; c < k; ++c) {
                    if (!done[c]) {
                        continue;
                    }
                    double dot = 0.0;
                    for (std::size_t i = 0; i < m; ++i) {
                        dot += q(i, c) * v[i];
                    }
                    for (std::size_t i = 0; i < m; ++i) {
                        v[i] -= dot * q(i, c);
                    }
                }
            }
            double nrm = 0.0;
            for (double x : v) {
                nrm += x * x;
            }
            nrm = std::sqrt(nrm);
            if (nrm > best_norm) {
                best_norm = nrm;
                best = std::move(v);
            }
            if (best_norm > 0.7) {
                break;
            }
        }
        for (std::size_t i = 0; i < m; ++i) {
            q(i, j) = best[i] / best_norm;
        }
        done[j] = true;
    }
}

// One-sided Jacobi on a tall (m >= n) matrix.
inline SvdResult svd_tall(const Matrix& a, const SvdOptions& opts) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    // Work on columns stored contiguously: w is n×m (row j = column j of A).
    Matrix w = a.transpose();
    Matrix v = Matrix::identity(n); // row j of v = column j of V
    const double eps = std::numeric_limits<double>::epsilon();
    const double tol = eps * static_cast<double>(std::max<std::size_t>(m, 8));
    // Columns at round-off level relative to ‖A‖ never settle; leave them alone.
    double frob2 = 0.0;
    for (double x : w.data()) {
        frob2 += x * x;
    }
    const double tiny = frob2 * eps * eps;

    bool converged = n <= 1;
    for (int sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                auto wp = w.row(p);
                auto wq = w.row(q);
                double alpha = 0.0;
                double beta = 0.0;
                double gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += wp[i] * wp[i];
                    beta += wq[i] * wq[i];
                    gamma += wp[i] * wq[i];
                }
                if (gamma == 0.0 || alpha <= tiny || beta <= tiny || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) {
                    continue;
                }
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = wp[i];
                    const double y = wq[i];
                    wp[i] = c * x - s * y;
                    wq[i] = s * x + c * y;
                }
                auto vp = v.row(p);
                auto vq = v.row(q);
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = vp[i];
                    const double y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
        converged = !rotated;
    }
    if (!converged) {
        throw NumericalError("svd: one-sided Jacobi did not converge within " + std::to_string(opts.max_sweeps) + " sweeps");
    }

    Vector norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (double x : w.row(j)) {
            s += x * x;
        }
        norms[j] = std::sqrt(s);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    SvdResult out{Matrix(m, n), Vector(n), Matrix(n, n)};
    const double smax = n == 0 ? 0.0 : norms[order[0]];
    const double negligible = smax * eps * static_cast<double>(std::max(m, n)) * 4.0;
    std::vector<bool> bad(n, false);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.S[k] = norms[j];
        const auto wj = w.row(j);
        const auto vj = v.row(j);
        for (std::size_t i = 0; i < n; ++i) {
            out.V(i, k) = vj[i];
        }
        if (norms[j] <= negligible || norms[j] == 0.0) {
            bad[k] = true;
            continue;
        }
        for (std::size_t i = 0; i < m; ++i) {
            out.U(i, k) = wj[i] / norms[j];
        }
    }
    if (std::any_of(bad.begin(), bad.end(), [](bool b) { return b; })) {
        complete_orthonormal(out.U, bad);
    }
    return out;
}

} // namespace detail

/// Thin singular value decomposition by one-sided Jacobi rotations.
inline SvdResult svd(const Matrix& a, const SvdOptions& opts = {}) {
    detail::require(a.rows() >= 1 && a.cols() >= 1, "svd: matrix must have at least one row and column");
    if (!a.all_finite()) {
        throw NumericalError("svd: input contains non-finite entries");
    }
    if (a.rows() >= a.cols()) {
        return detail::svd_tall(a, opts);
    }
    SvdResult t = detail::svd_tall(a.transpose(), opts);
    return SvdResult{std::move(t.V), std::move(t.S), std::move(t.U)};
}

/// U·diag(S)·Vᵀ.
inline Matrix reconstruct(const SvdResult& r) {
    Matrix us = r.U;
    for (std::size_t i = 0; i < us.rows(); ++i) {
        for (std::size_t k = 0; k < us.cols(); ++k) {
            us(i, k) *= r.S[k];
        }
    }
    return matmul(us, r.V.transpose());
}

// ---------------------------------------------------------------------------
// Least squares, orthogonal generation, PCA

inline constexpr double kDefaultCutoff = 1e-10;

/// Minimum-norm X minimizing ‖A·X − B‖_F via the SVD pseudoinverse.
/// Singular values at or below cutoff·max(S) are treated as zero.
inline Matrix least_squares(const Matrix& a, const Matrix& b, double cutoff = kDefaultCutoff) {
    detail::require(a.rows() == b.rows(), "least_squares: A has " + std::to_string(a.rows()) + " rows, B has " + std::to_string(b.rows()));
    detail::require(cutoff >= 0.0, "least_squares: cutoff must be nonnegative");
    const SvdResult d = svd(a);
    const double smax = d.S.empty() ? 0.0 : d.S.front();
    if (!(smax > 0.0)) {
        throw NumericalError("least_squares: coefficient matrix has rank zero");
    }
    // X = V · diag(1/S) · Uᵀ · B
    Matrix utb = matmul_tn(d.U, b); // k×q
    for (std::size_t k = 0; k < utb.rows(); ++k) {
        const double s = d.S[k];
        const double inv = s > cutoff * smax ? 1.0 / s : 0.0;
        for (double& v : utb.row(k)) {
            v *= inv;
        }
    }
    return matmul(d.V, utb);
}

/// Seeded orthogonal matrix: Q factor (diag(R) > 0) of a Gaussian matrix,
/// computed by Gram-Schmidt with reorthogonalization.
inline Matrix random_orthogonal(std::size_t d, std::uint64_t seed) {
    detail::require(d >= 1, "random_orthogonal: dimension must be >= 1");
    Rng rng(seed);
    Matrix g = gaussian_matrix(d, d, rng);
    Matrix q(d, d);
    for (std::size_t j = 0; j < d; ++j) {
        Vector v(d);
        for (std::size_t i = 0; i < d; ++i) {
            v[i] = g(i, j);
        }
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t c = 0; c < j; ++c) {
                double dot = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    dot += q(i, c) * v[i];
                }
                for (std::size_t i = 0; i < d; ++i) {
                    v[i] -= dot * q(i, c);
                }
            }
        }
        double nrm = 0.0;
        for (double x : v) {
            nrm += x * x;
        }
        nrm = std::sqrt(nrm);
        if (!(nrm > 1e-12)) {
            throw NumericalError("random_orthogonal: degenerate Gaussian draw");
        }
        for (std::size_t i = 0; i < d; ++i) {
            q(i, j) = v[i] / nrm;
        }
    }
    return q;
}

struct PcaResult {
    Matrix projection; ///< m×k scores of the centered data
    Matrix components; ///< d×k principal directions
    Vector explained;  ///< fraction of total variance per component
};

/// Top-k principal components of the column-centered data.
/// Each component's sign is fixed so its largest-magnitude entry is positive.
inline PcaResult pca_project(const Matrix& x, std::size_t k) {
    detail::require(k >= 1 && k <= std::min(x.rows(), x.cols()),
                    "pca_project: k=" + std::to_string(k) + " out of range [1, " + std::to_string(std::min(x.rows(), x.cols())) + "]");
    const Vector mean = column_mean(x);
    const Matrix centered = subtract_row(x, mean);
    const SvdResult d = svd(centered);

    PcaResult out{Matrix(), Matrix(x.cols(), k), Vector(k)};
    double total = 0.0;
    for (double s : d.S) {
        total += s * s;
    }
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < x.cols(); ++i) {
            if (std::abs(d.V(i, c)) > std::abs(d.V(arg, c))) {
                arg = i;
            }
        }
        const double sign = d.V(arg, c) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < x.cols(); ++i) {
            out.components(i, c) = sign * d.V(i, c);
        }
        out.explained[c] = total > 0.0 ? d.S[c] * d.S[c] / total : 0.0;
    }
    out.projection = matmul(centered, out.components);
    return out;
}

} // namespace saps
