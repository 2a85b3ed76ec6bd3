#pragma once
// Penalty analysis of random projection regularizers for a scalar GLM.
//
// Every expectation over Phi is an exact weighted average over a finite set
// of matrices (a bank with uniform weights, or an enumerated mask
// distribution), so the identities below hold to rounding error.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "fgreg/bank.hpp"
#include "fgreg/error.hpp"
#include "fgreg/glm.hpp"
#include "fgreg/numkit.hpp"

namespace fgreg {

/// Largest p for which dense p x p moments are formed.
inline constexpr std::size_t kDenseMomentLimit = 4096;

/// A finite distribution over projection matrices.
class BankMeasure {
public:
    BankMeasure() = default;

    BankMeasure(std::vector<SparseGrouping> members, std::vector<double> weights)
        : members_(std::move(members)), weights_(std::move(weights)) {
        detail::require(!members_.empty(), "BankMeasure: no members");
        detail::require_dims(members_.size() == weights_.size(), "BankMeasure: one weight per member required");
        for (const auto& m : members_) detail::require_dims(m.p() == members_.front().p(), "BankMeasure: members differ in p");
        for (auto w : weights_) detail::require(w >= 0.0 && std::isfinite(w), "BankMeasure: weights must be >= 0");
    }

    /// Uniform weights 1/b.
    explicit BankMeasure(std::vector<SparseGrouping> members)
        : BankMeasure(members, std::vector<double>(members.size(), 1.0 / static_cast<double>(members.size()))) {}

    explicit BankMeasure(const ProjectionBank& bank) : BankMeasure(bank.matrices()) {}

    std::size_t size() const noexcept { return members_.size(); }
    std::size_t p() const noexcept { return members_.front().p(); }
    const std::vector<SparseGrouping>& members() const noexcept { return members_; }
    const std::vector<double>& weights() const noexcept { return weights_; }

private:
    std::vector<SparseGrouping> members_;
    std::vector<double> weights_;
};

/// All 2^p dropout masks with their probabilities (1-delta)^kept delta^dropped.
inline BankMeasure enumerate_dropout_masks(std::size_t p, double delta) {
    detail::require(p >= 1 && p <= 20, "enumerate_dropout_masks: p must be in [1, 20]");
    detail::require(delta >= 0.0 && delta < 1.0, "enumerate_dropout_masks: delta must be in [0, 1)");
    const double keep = 1.0 / std::sqrt(1.0 - delta);
    std::vector<SparseGrouping> masks;
    std::vector<double> probs;
    for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << p); ++bits) {
        std::vector<std::uint32_t> rows(p);
        Vector vals(p);
        double prob = 1.0;
        for (std::size_t j = 0; j < p; ++j) {
            const bool dropped = (bits >> j) & 1u;
            rows[j] = dropped ? kDroppedColumn : static_cast<std::uint32_t>(j);
            vals[j] = dropped ? 0.0 : keep;
            prob *= dropped ? delta : 1.0 - delta;
        }
        if (prob == 0.0) continue;
        masks.emplace_back(p, std::move(rows), std::move(vals), true);
        probs.push_back(prob);
    }
    return BankMeasure(std::move(masks), std::move(probs));
}

namespace detail {

inline void require_dense_ok(std::size_t p, const char* what) {
    if (p > kDenseMomentLimit)
        throw InvalidArgument(std::string(what) + ": p = " + std::to_string(p) + " exceeds the dense limit of " +
                              std::to_string(kDenseMomentLimit) +
                              "; use the matrix-free routines (omega_apply, var_target, penalty)");
}

/// Column lists per row of phi.
inline std::vector<std::vector<std::size_t>> row_members(const SparseGrouping& phi) {
    std::vector<std::vector<std::size_t>> out(phi.k());
    for (std::size_t j = 0; j < phi.p(); ++j)
        if (phi.col_to_row()[j] != kDroppedColumn) out[phi.col_to_row()[j]].push_back(j);
    return out;
}

/// acc += w * phi^T phi, using its block structure.
inline void add_projector(DenseMatrix& acc, const SparseGrouping& phi, double w) {
    const auto vals = phi.col_value();
    for (const auto& members : row_members(phi))
        for (auto a : members)
            for (auto b : members) acc(a, b) += w * vals[a] * vals[b];
}

} // namespace detail

/// Omega = E[Phi^T Phi] (dense p x p).
inline DenseMatrix estimate_omega(const BankMeasure& bank) {
    detail::require_dense_ok(bank.p(), "estimate_omega");
    DenseMatrix omega(bank.p(), bank.p());
    for (std::size_t i = 0; i < bank.size(); ++i) detail::add_projector(omega, bank.members()[i], bank.weights()[i]);
    return omega;
}

/// E[Delta^T Delta] with Delta = Phi^T Phi - Omega, by direct summation of
/// dense (P_i - Omega)^T (P_i - Omega). Costs O(b p^3).
inline DenseMatrix delta_second_moment(const BankMeasure& bank) {
    detail::require_dense_ok(bank.p(), "delta_second_moment");
    const auto omega = estimate_omega(bank);
    const auto p = bank.p();
    DenseMatrix acc(p, p);
    for (std::size_t i = 0; i < bank.size(); ++i) {
        DenseMatrix d(p, p);
        detail::add_projector(d, bank.members()[i], 1.0);
        for (std::size_t t = 0; t < d.storage().size(); ++t) d.data()[t] -= omega.storage()[t];
        const auto dtd = matmul(transpose(d), d);
        const double w = bank.weights()[i];
        for (std::size_t t = 0; t < acc.storage().size(); ++t) acc.data()[t] += w * dtd.storage()[t];
    }
    return acc;
}

/// Omega - Omega^2: closed form of E[Delta^T Delta] when every member is an
/// orthogonal projector and the weights sum to one.
inline DenseMatrix omega_minus_omega_sq(const DenseMatrix& omega) {
    auto sq = matmul(omega, omega);
    DenseMatrix out = omega;
    for (std::size_t t = 0; t < out.storage().size(); ++t) out.data()[t] -= sq.storage()[t];
    return out;
}

/// Omega x without forming Omega.
inline Vector omega_apply(const BankMeasure& bank, std::span<const double> x) {
    detail::require_dims(x.size() == bank.p(), "omega_apply: dimension mismatch");
    Vector out(bank.p(), 0.0);
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const auto px = reconstruct(bank.members()[i], x);
        const double w = bank.weights()[i];
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * px[j];
    }
    return out;
}

namespace detail {

/// s_i = x^T Phi_i^T Phi_i beta for every member.
inline Vector projected_targets(const BankMeasure& bank, std::span<const double> x, std::span<const double> beta) {
    require_dims(x.size() == bank.p() && beta.size() == bank.p(), "var_target: dimension mismatch");
    Vector s(bank.size());
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const auto& phi = bank.members()[i];
        s[i] = dot(spgemv(phi, x), spgemv(phi, beta));
    }
    return s;
}

inline double weighted_mean(std::span<const double> v, std::span<const double> w) {
    double m = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) m += w[i] * v[i];
    return m;
}

} // namespace detail

/// Var_Phi[x^T Phi^T Phi beta], matrix-free, O(b p).
inline double var_target(const BankMeasure& bank, std::span<const double> x, std::span<const double> beta) {
    const auto s = detail::projected_targets(bank, x, beta);
    const double mean = detail::weighted_mean(s, bank.weights());
    double var = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) var += bank.weights()[i] * (s[i] - mean) * (s[i] - mean);
    return var;
}

/// E_Phi[x^T Delta beta]: zero up to rounding when Delta is measured against
/// the same measure's Omega.
inline double first_order_term(const BankMeasure& bank, std::span<const double> x, std::span<const double> beta) {
    const auto s = detail::projected_targets(bank, x, beta);
    const double centre = dot(omega_apply(bank, x), beta);
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) acc += bank.weights()[i] * (s[i] - centre);
    return acc;
}

/// E[Delta x x^T Delta] (dense p x p); beta^T M beta equals var_target.
inline DenseMatrix delta_outer_moment(const BankMeasure& bank, std::span<const double> x) {
    detail::require_dense_ok(bank.p(), "delta_outer_moment");
    detail::require_dims(x.size() == bank.p(), "delta_outer_moment: dimension mismatch");
    const auto omega_x = omega_apply(bank, x);
    const auto p = bank.p();
    DenseMatrix out(p, p);
    Vector dx(p);
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const auto px = reconstruct(bank.members()[i], x);
        for (std::size_t j = 0; j < p; ++j) dx[j] = px[j] - omega_x[j];
        const double w = bank.weights()[i];
        for (std::size_t a = 0; a < p; ++a) {
            if (dx[a] == 0.0) continue;
            auto row = out.row(a);
            const double wa = w * dx[a];
            for (std::size_t b = 0; b < p; ++b) row[b] += wa * dx[b];
        }
    }
    return out;
}

inline double quadratic_form(const DenseMatrix& m, std::span<const double> v) { return dot(v, matvec(m, v)); }

/// Terms of the second-order expansion of the expected loss under random
/// projections: loss on the smoothed inputs Omega x_i, and
/// R(beta) = sum_i A''(x_i^T Omega beta) Var_Phi[x_i^T Phi^T Phi beta].
struct PenaltyReport {
    double smoothed_loss = 0.0;
    double penalty = 0.0;
    Vector per_sample_app;
    Vector per_sample_var;
};

inline PenaltyReport penalty(std::span<const double> beta, const DenseMatrix& X, std::span<const double> y,
                             const BankMeasure& bank, const GlmFamily& family) {
    detail::require_dims(beta.size() == X.cols() && X.cols() == bank.p(), "penalty: dimension mismatch");
    detail::require_dims(y.size() == X.rows(), "penalty: one response per sample required");
    PenaltyReport rep;
    rep.per_sample_app.resize(X.rows());
    rep.per_sample_var.resize(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const auto x = X.row(i);
        const double z = dot(omega_apply(bank, x), beta);
        rep.smoothed_loss += family.nll(z, y[i]);
        rep.per_sample_app[i] = family.d2A(z);
        rep.per_sample_var[i] = var_target(bank, x, beta);
        rep.penalty += rep.per_sample_app[i] * rep.per_sample_var[i];
    }
    return rep;
}

struct TaylorCheck {
    double lhs = 0.0;  ///< sum_i E_Phi[L(Phi^T Phi x_i, y_i; beta)]
    double rhs = 0.0;  ///< sum_i L(Omega x_i, y_i; beta) + R(beta)/2
    double gap = 0.0;  ///< lhs - rhs
};

inline TaylorCheck taylor_check(std::span<const double> beta, const DenseMatrix& X, std::span<const double> y,
                                const BankMeasure& bank, const GlmFamily& family) {
    const auto rep = penalty(beta, X, y, bank, family);
    TaylorCheck out;
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const auto s = detail::projected_targets(bank, X.row(i), beta);
        for (std::size_t t = 0; t < s.size(); ++t) out.lhs += bank.weights()[t] * family.nll(s[t], y[i]);
    }
    out.rhs = rep.smoothed_loss + 0.5 * rep.penalty;
    out.gap = out.lhs - out.rhs;
    return out;
}

} // namespace fgreg
