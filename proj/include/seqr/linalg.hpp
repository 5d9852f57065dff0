#pragma once

// Small dense linear algebra for adapter routing: row-major double matrices,
// products and norms, Householder reduced QR and one-sided Jacobi thin SVD.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seqr/errors.hpp"

namespace seqr {

// ---------------------------------------------------------------------------
// Multiply-accumulate accounting.
//
// Every kernel below reports the MACs it performs to the innermost active
// MacCounter on the calling thread. With no counter active the cost is a single
// null check per kernel call.
// ---------------------------------------------------------------------------
namespace detail {
inline thread_local std::uint64_t* mac_sink = nullptr;

inline void count_macs(std::uint64_t n) noexcept {
    if (mac_sink != nullptr) *mac_sink += n;
}
}  // namespace detail

class MacCounter {
public:
    MacCounter() noexcept : previous_(detail::mac_sink) { detail::mac_sink = &count_; }
    ~MacCounter() { detail::mac_sink = previous_; }
    MacCounter(const MacCounter&) = delete;
    MacCounter& operator=(const MacCounter&) = delete;

    std::uint64_t count() const noexcept { return count_; }

private:
    std::uint64_t count_ = 0;
    std::uint64_t* previous_;
};

namespace detail {
inline void require_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + ": non-finite entry");
    }
}
}  // namespace detail

class Vector {
public:
    explicit Vector(std::size_t dim) : data_(dim, 0.0) {
        if (dim == 0) throw DimensionError("Vector: dimension must be positive");
    }

    explicit Vector(std::vector<double> data) : data_(std::move(data)) {
        if (data_.empty()) throw DimensionError("Vector: dimension must be positive");
        detail::require_finite(data_, "Vector");
    }

    Vector(std::initializer_list<double> values) : Vector(std::vector<double>(values)) {}

    std::size_t dim() const noexcept { return data_.size(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool operator==(const Vector&) const = default;

private:
    std::vector<double> data_;
};

class Matrix {
public:
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
        if (rows == 0 || cols == 0) throw DimensionError("Matrix: dimensions must be positive");
    }

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (rows == 0 || cols == 0) throw DimensionError("Matrix: dimensions must be positive");
        if (data_.size() != rows * cols) {
            throw DimensionError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                                 std::to_string(rows) + "x" + std::to_string(cols));
        }
        detail::require_finite(data_, "Matrix");
    }

    // Row-major literal, e.g. Matrix::from_rows({{2, 0}, {0, 1}}).
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.begin()->size();
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw DimensionError("Matrix::from_rows: ragged rows");
            data.insert(data.end(), row.begin(), row.end());
        }
        return Matrix(r, c, std::move(data));
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    Vector column(std::size_t j) const {
        Vector out(rows_);
        for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
        return out;
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

inline void require_finite(const Matrix& m, const char* what) { detail::require_finite(m.values(), what); }
inline void require_finite(const Vector& v, const char* what) { detail::require_finite(v.values(), what); }

// ---------------------------------------------------------------------------
// Products and norms
// ---------------------------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    detail::count_macs(a.size());
    return acc;
}

inline double dot(const Vector& a, const Vector& b) { return dot(a.values(), b.values()); }

inline double norm2(std::span<const double> x) noexcept {
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc);
}

inline double norm2(const Vector& x) noexcept { return norm2(x.values()); }

inline double frobenius_norm(const Matrix& a) noexcept { return norm2(a.values()); }

inline Vector matvec(const Matrix& a, const Vector& x) {
    if (a.cols() != x.dim()) {
        throw DimensionError("matvec: matrix has " + std::to_string(a.cols()) + " columns, vector has dim " +
                             std::to_string(x.dim()));
    }
    Vector y(a.rows());
    const auto xs = x.values();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto row = a.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * xs[j];
        y[i] = acc;
    }
    detail::count_macs(static_cast<std::uint64_t>(a.rows()) * a.cols());
    return y;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                             std::to_string(b.rows()));
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const auto brow = b.row(k);
            for (std::size_t j = 0; j < out.size(); ++j) out[j] += aik * brow[j];
        }
    }
    detail::count_macs(static_cast<std::uint64_t>(a.rows()) * a.cols() * b.cols());
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline Vector add(const Vector& a, const Vector& b) {
    if (a.dim() != b.dim()) throw DimensionError("add: dimension mismatch");
    Vector out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline Vector subtract(const Vector& a, const Vector& b) {
    if (a.dim() != b.dim()) throw DimensionError("subtract: dimension mismatch");
    Vector out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline Vector scaled(const Vector& a, double s) {
    Vector out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] * s;
    return out;
}

inline Matrix scaled(const Matrix& a, double s) {
    Matrix out(a.rows(), a.cols());
    auto dst = out.values();
    const auto src = a.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * s;
    return out;
}

inline Matrix subtract(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("subtract: shape mismatch");
    Matrix out(a.rows(), a.cols());
    auto dst = out.values();
    const auto x = a.values();
    const auto y = b.values();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = x[i] - y[i];
    return out;
}

// Largest absolute entry of aᵀa − I.
inline double orthonormality_error(const Matrix& a) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.cols(); ++i) {
        for (std::size_t j = i; j < a.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.rows(); ++k) acc += a(k, i) * a(k, j);
            worst = std::max(worst, std::abs(acc - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Decompositions
// ---------------------------------------------------------------------------

struct ReducedQr {
    Matrix q;  // m x r, orthonormal columns
    Matrix r;  // r x r, upper triangular, nonnegative diagonal
};

struct ThinSvd {
    Matrix u;  // m x k, orthonormal columns
    Vector s;  // k values, nonincreasing, nonnegative
    Matrix v;  // n x k, orthonormal columns

    // Count of singular values above an absolute threshold.
    std::size_t numerical_rank(double threshold = 1e-8) const noexcept {
        std::size_t rank = 0;
        for (double sv : s.values())
            if (sv > threshold) ++rank;
        return rank;
    }
};

namespace detail {

// Column-major scratch copy; both decompositions sweep over columns.
struct ColumnMajor {
    std::size_t rows;
    std::size_t cols;
    std::vector<double> data;

    double* col(std::size_t j) noexcept { return data.data() + j * rows; }
    const double* col(std::size_t j) const noexcept { return data.data() + j * rows; }

    static ColumnMajor from(const Matrix& a) {
        ColumnMajor c{a.rows(), a.cols(), std::vector<double>(a.rows() * a.cols())};
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j) c.data[j * c.rows + i] = a(i, j);
        return c;
    }

    static ColumnMajor from_transpose(const Matrix& a) {
        // Rows of a become contiguous columns.
        return ColumnMajor{a.cols(), a.rows(), std::vector<double>(a.values().begin(), a.values().end())};
    }
};

}  // namespace detail

// Householder reduced QR of an m x r matrix with m >= r. No pivoting: a
// dependent or zero column yields a zero diagonal entry in r while q keeps
// orthonormal columns. Diagonal of r is forced nonnegative.
inline ReducedQr reduced_qr(const Matrix& b) {
    const std::size_t m = b.rows();
    const std::size_t n = b.cols();
    if (m < n) {
        throw DimensionError("reduced_qr: need rows >= cols, got " + std::to_string(m) + "x" + std::to_string(n));
    }
    require_finite(b, "reduced_qr");

    auto work = detail::ColumnMajor::from(b);
    // Householder vectors, stored with the implicit leading entry at index k.
    std::vector<std::vector<double>> reflectors(n);
    std::vector<bool> active(n, false);

    for (std::size_t k = 0; k < n; ++k) {
        double* col = work.col(k);
        double tail_sq = 0.0;
        for (std::size_t i = k; i < m; ++i) tail_sq += col[i] * col[i];
        const double alpha_norm = std::sqrt(tail_sq);
        if (alpha_norm == 0.0) continue;

        const double alpha = col[k] >= 0.0 ? -alpha_norm : alpha_norm;
        std::vector<double> v(col + k, col + m);
        v[0] -= alpha;
        const double v_sq = std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
        if (v_sq == 0.0) continue;

        col[k] = alpha;
        for (std::size_t i = k + 1; i < m; ++i) col[i] = 0.0;
        for (std::size_t j = k + 1; j < n; ++j) {
            double* cj = work.col(j);
            double proj = 0.0;
            for (std::size_t i = k; i < m; ++i) proj += v[i - k] * cj[i];
            const double f = 2.0 * proj / v_sq;
            for (std::size_t i = k; i < m; ++i) cj[i] -= f * v[i - k];
        }
        reflectors[k] = std::move(v);
        active[k] = true;
    }

    Matrix r(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) r(i, j) = work.col(j)[i];

    // q = H_0 H_1 ... H_{n-1} [I_n; 0], built by applying reflectors in reverse.
    detail::ColumnMajor q{m, n, std::vector<double>(m * n, 0.0)};
    for (std::size_t j = 0; j < n; ++j) q.col(j)[j] = 1.0;
    for (std::size_t kk = n; kk-- > 0;) {
        if (!active[kk]) continue;
        const auto& v = reflectors[kk];
        const double v_sq = std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            double* qj = q.col(j);
            double proj = 0.0;
            for (std::size_t i = kk; i < m; ++i) proj += v[i - kk] * qj[i];
            if (proj == 0.0) continue;
            const double f = 2.0 * proj / v_sq;
            for (std::size_t i = kk; i < m; ++i) qj[i] -= f * v[i - kk];
        }
    }

    Matrix q_out(m, n);
    for (std::size_t j = 0; j < n; ++j) {
        const double sign = r(j, j) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < m; ++i) q_out(i, j) = sign * q.col(j)[i];
        if (sign < 0.0)
            for (std::size_t c = j; c < n; ++c) r(j, c) = -r(j, c);
    }
    return ReducedQr{std::move(q_out), std::move(r)};
}

namespace detail {

// One-sided Jacobi on a tall column-major matrix (rows >= cols). On return the
// columns of w are mutually orthogonal and v accumulates the rotations.
inline void jacobi_orthogonalize(ColumnMajor& w, ColumnMajor& v) {
    constexpr int kMaxSweeps = 80;
    const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(w.rows);
    const std::size_t p = w.rows;
    const std::size_t q = w.cols;

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t i = 0; i + 1 < q; ++i) {
            for (std::size_t j = i + 1; j < q; ++j) {
                double* wi = w.col(i);
                double* wj = w.col(j);
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t k = 0; k < p; ++k) {
                    alpha += wi[k] * wi[k];
                    beta += wj[k] * wj[k];
                    gamma += wi[k] * wj[k];
                }
                if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < p; ++k) {
                    const double a = wi[k];
                    const double b = wj[k];
                    wi[k] = c * a - s * b;
                    wj[k] = s * a + c * b;
                }
                double* vi = v.col(i);
                double* vj = v.col(j);
                for (std::size_t k = 0; k < v.rows; ++k) {
                    const double a = vi[k];
                    const double b = vj[k];
                    vi[k] = c * a - s * b;
                    vj[k] = s * a + c * b;
                }
            }
        }
        if (!rotated) break;
    }
}

// Replace column j of u (m x k) by a unit vector orthogonal to columns [0, j).
inline void complete_orthonormal_column(Matrix& u, std::size_t j) {
    const std::size_t m = u.rows();
    for (std::size_t e = 0; e < m; ++e) {
        std::vector<double> cand(m, 0.0);
        cand[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t c = 0; c < j; ++c) {
                double proj = 0.0;
                for (std::size_t i = 0; i < m; ++i) proj += u(i, c) * cand[i];
                for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * u(i, c);
            }
        }
        const double nrm = norm2(cand);
        if (nrm > 0.5) {
            for (std::size_t i = 0; i < m; ++i) u(i, j) = cand[i] / nrm;
            return;
        }
    }
}

}  // namespace detail

// Thin SVD via one-sided Jacobi applied along the smaller dimension.
// `rank` truncates to the leading singular triplets (0 means min(m, n)).
// Each v column is sign-normalized so its largest-magnitude entry is positive.
inline ThinSvd thin_svd(const Matrix& mat, std::size_t rank = 0) {
    require_finite(mat, "thin_svd");
    const std::size_t m = mat.rows();
    const std::size_t n = mat.cols();
    const std::size_t full = std::min(m, n);
    if (rank == 0) rank = full;
    if (rank > full) {
        throw DimensionError("thin_svd: rank " + std::to_string(rank) + " exceeds min(m, n) = " + std::to_string(full));
    }

    // Work on a tall matrix: mat itself if m >= n, else matᵀ.
    const bool tall = m >= n;
    auto w = tall ? detail::ColumnMajor::from(mat) : detail::ColumnMajor::from_transpose(mat);
    detail::ColumnMajor rot{w.cols, w.cols, std::vector<double>(w.cols * w.cols, 0.0)};
    for (std::size_t j = 0; j < w.cols; ++j) rot.col(j)[j] = 1.0;
    detail::jacobi_orthogonalize(w, rot);

    std::vector<double> sigma(w.cols);
    for (std::size_t j = 0; j < w.cols; ++j) sigma[j] = norm2(std::span<const double>(w.col(j), w.rows));
    std::vector<std::size_t> order(w.cols);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

    // For the tall matrix T = W Σ⁻¹ · Σ · rotᵀ: left vectors come from w, right from rot.
    Matrix left(w.rows, rank);
    Matrix right(w.cols, rank);
    Vector s(rank);
    const double sigma_max = sigma[order[0]];
    const double tiny = sigma_max * std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(m, n));
    std::vector<std::size_t> needs_completion;
    for (std::size_t k = 0; k < rank; ++k) {
        const std::size_t src = order[k];
        s[k] = sigma[src];
        for (std::size_t i = 0; i < w.cols; ++i) right(i, k) = rot.col(src)[i];
        if (sigma[src] > tiny && sigma[src] > 0.0) {
            for (std::size_t i = 0; i < w.rows; ++i) left(i, k) = w.col(src)[i] / sigma[src];
        } else {
            needs_completion.push_back(k);
        }
    }
    for (std::size_t k : needs_completion) detail::complete_orthonormal_column(left, k);

    Matrix u = tall ? std::move(left) : std::move(right);
    Matrix v = tall ? std::move(right) : std::move(left);

    for (std::size_t k = 0; k < rank; ++k) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < v.rows(); ++i) {
            if (std::abs(v(i, k)) > best) {
                best = std::abs(v(i, k));
                arg = i;
            }
        }
        if (v(arg, k) < 0.0) {
            for (std::size_t i = 0; i < v.rows(); ++i) v(i, k) = -v(i, k);
            for (std::size_t i = 0; i < u.rows(); ++i) u(i, k) = -u(i, k);
        }
    }
    return ThinSvd{std::move(u), std::move(s), std::move(v)};
}

// u · diag(s) · vᵀ
inline Matrix reconstruct(const ThinSvd& svd) {
    Matrix us = svd.u;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= svd.s[k];
    return matmul(us, transpose(svd.v));
}

}  // namespace seqr
