#pragma once
// Dense/sparse kernels and the deterministic random source shared by every
// other module.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fgreg/error.hpp"

namespace fgreg {

using Vector = std::vector<double>;

// ---------------------------------------------------------------------------
// DenseMatrix
// ---------------------------------------------------------------------------

/// Row-major matrix of doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        detail::require_dims(data_.size() == rows_ * cols_,
                             "DenseMatrix: data length does not match rows*cols");
    }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    detail::require_dims(a.cols() == b.rows(), "matmul: inner dimensions differ");
    DenseMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto orow = out.row(i);
        for (std::size_t t = 0; t < a.cols(); ++t) {
            const double av = a(i, t);
            if (av == 0.0) continue;
            auto brow = b.row(t);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

/// max |a_ij - b_ij|
inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    detail::require_dims(a.rows() == b.rows() && a.cols() == b.cols(),
                         "max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.storage().size(); ++i)
        m = std::max(m, std::abs(a.storage()[i] - b.storage()[i]));
    return m;
}

inline Vector matvec(const DenseMatrix& a, std::span<const double> x) {
    detail::require_dims(a.cols() == x.size(), "matvec: dimension mismatch");
    Vector out(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) s += r[j] * x[j];
        out[i] = s;
    }
    return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    detail::require_dims(a.size() == b.size(), "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// ---------------------------------------------------------------------------
// SparseGrouping: k x p, at most one nonzero per column.
// ---------------------------------------------------------------------------

/// Row index marking a column with no nonzero (only legal in mask matrices).
inline constexpr std::uint32_t kDroppedColumn = std::numeric_limits<std::uint32_t>::max();

/// Sparse k x p matrix storing, for each column j, the single row that holds
/// its nonzero and the value of that nonzero. Grouping matrices have exactly
/// one nonzero per column; mask matrices (feature dropout) may drop columns.
class SparseGrouping {
public:
    SparseGrouping() = default;

    SparseGrouping(std::size_t k, std::vector<std::uint32_t> col_to_row,
                   std::vector<double> col_value, bool is_mask = false)
        : k_(k), col_to_row_(std::move(col_to_row)), col_value_(std::move(col_value)),
          is_mask_(is_mask) {
        detail::require_dims(col_to_row_.size() == col_value_.size(),
                             "SparseGrouping: row-index and value arrays differ in length");
        detail::require(k_ <= col_to_row_.size(), "SparseGrouping: k must not exceed p");
        for (std::size_t j = 0; j < col_to_row_.size(); ++j) {
            const auto r = col_to_row_[j];
            if (r == kDroppedColumn) {
                detail::require(is_mask_, "SparseGrouping: dropped column in a grouping matrix");
                continue;
            }
            detail::require(r < k_, "SparseGrouping: row index out of range");
            detail::require(col_value_[j] > 0.0 && std::isfinite(col_value_[j]),
                            "SparseGrouping: nonzero values must be finite and positive");
        }
    }

    static SparseGrouping identity(std::size_t p) {
        std::vector<std::uint32_t> rows(p);
        std::iota(rows.begin(), rows.end(), 0u);
        return SparseGrouping(p, std::move(rows), Vector(p, 1.0));
    }

    std::size_t k() const noexcept { return k_; }
    std::size_t p() const noexcept { return col_to_row_.size(); }
    bool is_mask() const noexcept { return is_mask_; }
    std::span<const std::uint32_t> col_to_row() const noexcept { return col_to_row_; }
    std::span<const double> col_value() const noexcept { return col_value_; }

    friend bool operator==(const SparseGrouping&, const SparseGrouping&) = default;

private:
    std::size_t k_ = 0;
    std::vector<std::uint32_t> col_to_row_;
    std::vector<double> col_value_;
    bool is_mask_ = false;
};

/// out = phi * x  (length k). O(p).
inline void spgemv(const SparseGrouping& phi, std::span<const double> x, std::span<double> out) {
    detail::require_dims(x.size() == phi.p(), "spgemv: x length must equal p");
    detail::require_dims(out.size() == phi.k(), "spgemv: output length must equal k");
    std::fill(out.begin(), out.end(), 0.0);
    const auto rows = phi.col_to_row();
    const auto vals = phi.col_value();
    for (std::size_t j = 0; j < rows.size(); ++j) {
        if (rows[j] == kDroppedColumn) continue;
        out[rows[j]] += vals[j] * x[j];
    }
}

inline Vector spgemv(const SparseGrouping& phi, std::span<const double> x) {
    Vector out(phi.k());
    spgemv(phi, x, out);
    return out;
}

/// out = phi^T * z  (length p). O(p).
inline void spgemv_t(const SparseGrouping& phi, std::span<const double> z, std::span<double> out) {
    detail::require_dims(z.size() == phi.k(), "spgemv_t: z length must equal k");
    detail::require_dims(out.size() == phi.p(), "spgemv_t: output length must equal p");
    const auto rows = phi.col_to_row();
    const auto vals = phi.col_value();
    for (std::size_t j = 0; j < rows.size(); ++j)
        out[j] = rows[j] == kDroppedColumn ? 0.0 : vals[j] * z[rows[j]];
}

inline Vector spgemv_t(const SparseGrouping& phi, std::span<const double> z) {
    Vector out(phi.p());
    spgemv_t(phi, z, out);
    return out;
}

/// phi^T phi x: replaces each feature by its cluster mean.
inline Vector reconstruct(const SparseGrouping& phi, std::span<const double> x) {
    return spgemv_t(phi, spgemv(phi, x));
}

inline DenseMatrix to_dense(const SparseGrouping& phi) {
    DenseMatrix d(phi.k(), phi.p());
    for (std::size_t j = 0; j < phi.p(); ++j)
        if (phi.col_to_row()[j] != kDroppedColumn) d(phi.col_to_row()[j], j) = phi.col_value()[j];
    return d;
}

/// Dense phi^T phi (p x p).
inline DenseMatrix gram_projector(const SparseGrouping& phi) {
    const auto d = to_dense(phi);
    return matmul(transpose(d), d);
}

/// ||phi phi^T - I_k||_inf, computed densely.
inline double orthonormality_error(const SparseGrouping& phi) {
    const auto d = to_dense(phi);
    return max_abs_diff(matmul(d, transpose(d)), DenseMatrix::identity(phi.k()));
}

/// ||(phi^T phi)^2 - phi^T phi||_inf, computed densely.
inline double idempotence_error(const SparseGrouping& phi) {
    const auto g = gram_projector(phi);
    return max_abs_diff(matmul(g, g), g);
}

// ---------------------------------------------------------------------------
// Rng: counter-based, platform independent.
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Counter-based generator: the i-th output is mix64(key + i * gamma), so the
/// stream depends only on (seed, stream id) and is bit-identical everywhere.
/// Not thread-safe; derive independent streams with `split`.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
        : seed_(seed), key_(mix64(seed ^ mix64(stream + 0x632BE59BD9B4E019ULL))) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept {
        return mix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal via Box-Muller (one value per call).
    double normal() noexcept {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

    template <class T>
    void shuffle(std::span<T> v) noexcept {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

    /// Independent generator for sub-task `stream`, derived from this seed.
    Rng split(std::uint64_t stream) const noexcept { return Rng(mix64(seed_ + 0x1D8E4E27C47D124FULL) ^ stream, stream); }

private:
    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// `count` distinct indices drawn uniformly from [0, n) (partial Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, Rng& rng) {
    detail::require(count <= n, "sample_without_replacement: count exceeds population");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(count);
    return idx;
}

} // namespace fgreg
