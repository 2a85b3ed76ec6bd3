#pragma once
// Generalized linear models (softmax / logistic / gaussian) trained by
// minibatch SGD or ADAM under one of several regularizers, including the
// stochastic feature-grouping regularizer.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fgreg/bank.hpp"
#include "fgreg/data.hpp"
#include "fgreg/error.hpp"
#include "fgreg/numkit.hpp"

namespace fgreg {

// ---------------------------------------------------------------------------
// Families
// ---------------------------------------------------------------------------

enum class FamilyKind { gaussian, logistic };

/// Exponential-family response p(y|z) = h(y) exp{y z - A(z)}. h(y) does not
/// depend on the parameters and is dropped from every loss.
struct GlmFamily {
    FamilyKind kind = FamilyKind::logistic;

    static GlmFamily gaussian() noexcept { return {FamilyKind::gaussian}; }
    static GlmFamily logistic() noexcept { return {FamilyKind::logistic}; }

    /// Log-partition A(z).
    double A(double z) const noexcept {
        if (kind == FamilyKind::gaussian) return 0.5 * z * z;
        return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    }
    /// A'(z): the mean response.
    double dA(double z) const noexcept {
        if (kind == FamilyKind::gaussian) return z;
        if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
        const double e = std::exp(z);
        return e / (1.0 + e);
    }
    /// A''(z): the response variance.
    double d2A(double z) const noexcept {
        if (kind == FamilyKind::gaussian) return 1.0;
        const double s = dA(z);
        return s * (1.0 - s);
    }
    /// Negative log-likelihood (without h) of target y at linear predictor z.
    double nll(double z, double y) const noexcept { return A(z) - y * z; }

    friend bool operator==(const GlmFamily&, const GlmFamily&) = default;
};

inline const char* to_string(FamilyKind k) noexcept { return k == FamilyKind::gaussian ? "gaussian" : "logistic"; }

inline GlmFamily parse_family(const std::string& s) {
    if (s == "gaussian") return GlmFamily::gaussian();
    if (s == "logistic") return GlmFamily::logistic();
    throw InvalidArgument("unknown GLM family '" + s + "' (expected gaussian or logistic)");
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Weights W (l x p) and bias b (l). With l >= 2 and the logistic family
/// the model is a softmax classifier; with l == 1 it is a scalar GLM.
/// Gaussian with l >= 2 treats each output as an independent least-squares
/// response to one-hot targets.
struct GlmModel {
    DenseMatrix W;
    Vector b;
    GlmFamily family;

    GlmModel() = default;
    GlmModel(std::size_t l, std::size_t p, GlmFamily fam = GlmFamily::logistic())
        : W(l, p), b(l, 0.0), family(fam) {
        detail::require(l >= 1, "GlmModel: need at least one output");
    }

    std::size_t outputs() const noexcept { return W.rows(); }
    std::size_t p() const noexcept { return W.cols(); }
    bool softmax() const noexcept { return family.kind == FamilyKind::logistic && outputs() >= 2; }

    bool all_finite() const noexcept {
        return W.all_finite() && std::all_of(b.begin(), b.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const GlmModel&, const GlmModel&) = default;
};

struct LossGrad {
    double loss = 0.0;
    DenseMatrix gW;
    Vector gb;
};

namespace detail {

inline void softmax_inplace(std::span<double> z) noexcept {
    double zmax = -std::numeric_limits<double>::infinity();
    for (auto v : z) zmax = std::max(zmax, v);
    double denom = 0.0;
    for (auto& v : z) {
        v = std::exp(v - zmax);
        denom += v;
    }
    for (auto& v : z) v /= denom;
}

inline void linear_predictor(const DenseMatrix& W, std::span<const double> b, std::span<const double> x,
                             std::span<double> z) noexcept {
    for (std::size_t c = 0; c < W.rows(); ++c) {
        auto w = W.row(c);
        double s = b[c];
        for (std::size_t j = 0; j < x.size(); ++j) s += w[j] * x[j];
        z[c] = s;
    }
}

/// Mean loss and gradients over the rows of X (m x d) for weights W (l x d).
/// `target(i)` gives the label (classification) or real response (l == 1).
template <class Target>
LossGrad batch_loss_grad(const DenseMatrix& W, std::span<const double> b, const GlmFamily& family,
                         const DenseMatrix& X, Target&& target) {
    const std::size_t m = X.rows(), l = W.rows(), d = W.cols();
    require_dims(X.cols() == d, "loss_grad: feature dimension differs from model");
    require_dims(b.size() == l, "loss_grad: bias length differs from output count");
    require(m >= 1, "loss_grad: empty batch");
    LossGrad out{0.0, DenseMatrix(l, d), Vector(l, 0.0)};
    const bool softmax = family.kind == FamilyKind::logistic && l >= 2;
    Vector z(l);
    Vector delta(l);
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        auto x = X.row(i);
        linear_predictor(W, b, x, z);
        const double y = target(i);
        if (softmax) {
            const auto label = static_cast<std::size_t>(y);
            double zmax = z[0];
            for (auto v : z) zmax = std::max(zmax, v);
            double denom = 0.0;
            for (auto v : z) denom += std::exp(v - zmax);
            loss += (zmax + std::log(denom)) - z[label];
            for (std::size_t c = 0; c < l; ++c) delta[c] = std::exp(z[c] - zmax) / denom - (c == label ? 1.0 : 0.0);
        } else if (l == 1) {
            loss += family.nll(z[0], y);
            delta[0] = family.dA(z[0]) - y;
        } else {
            const auto label = static_cast<std::size_t>(y);
            for (std::size_t c = 0; c < l; ++c) {
                const double yc = c == label ? 1.0 : 0.0;
                loss += family.nll(z[c], yc);
                delta[c] = family.dA(z[c]) - yc;
            }
        }
        for (std::size_t c = 0; c < l; ++c) {
            out.gb[c] += delta[c];
            auto g = out.gW.row(c);
            const double dc = delta[c];
            for (std::size_t j = 0; j < d; ++j) g[j] += dc * x[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(m);
    out.loss = loss * inv;
    for (auto& v : out.gW.data()) v *= inv;
    for (auto& v : out.gb) v *= inv;
    return out;
}

inline void check_labels(const GlmModel& model, std::span<const std::uint32_t> y) {
    const std::size_t limit = model.outputs() == 1 ? 2 : model.outputs();
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] >= limit)
            throw InvalidArgument("label " + std::to_string(y[i]) + " at row " + std::to_string(i) + " outside [0," +
                                  std::to_string(limit) + ")");
}

} // namespace detail

/// Mean response per row: softmax probabilities (m x l), sigmoid (m x 1) or
/// the identity link for the gaussian family.
inline DenseMatrix forward(const GlmModel& model, const DenseMatrix& X) {
    detail::require_dims(X.cols() == model.p(), "forward: feature dimension differs from model");
    DenseMatrix out(X.rows(), model.outputs());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        auto z = out.row(i);
        detail::linear_predictor(model.W, model.b, X.row(i), z);
        if (model.softmax()) detail::softmax_inplace(z);
        else
            for (auto& v : z) v = model.family.dA(v);
    }
    return out;
}

/// Mean negative log-likelihood over the batch and its gradient.
inline LossGrad loss_grad(const GlmModel& model, const DenseMatrix& X, std::span<const std::uint32_t> y) {
    detail::require_dims(y.size() == X.rows(), "loss_grad: label count differs from row count");
    detail::check_labels(model, y);
    return detail::batch_loss_grad(model.W, model.b, model.family, X,
                                   [&](std::size_t i) { return static_cast<double>(y[i]); });
}

/// Scalar GLM (l == 1) with real-valued responses.
inline LossGrad loss_grad(const GlmModel& model, const DenseMatrix& X, std::span<const double> y) {
    detail::require_dims(y.size() == X.rows(), "loss_grad: target count differs from row count");
    detail::require(model.outputs() == 1, "loss_grad: real-valued targets need a single-output model");
    return detail::batch_loss_grad(model.W, model.b, model.family, X, [&](std::size_t i) { return y[i]; });
}

/// Predicted class per row: argmax with ties to the lowest index; a
/// single-output model predicts 1 when its mean response exceeds 0.5.
inline std::vector<std::uint32_t> predict(const GlmModel& model, const DenseMatrix& X) {
    detail::require_dims(X.cols() == model.p(), "predict: feature dimension differs from model");
    std::vector<std::uint32_t> out(X.rows());
    Vector z(model.outputs());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        detail::linear_predictor(model.W, model.b, X.row(i), z);
        if (model.outputs() == 1) {
            out[i] = model.family.dA(z[0]) > 0.5 ? 1u : 0u;
            continue;
        }
        std::size_t best = 0;
        for (std::size_t c = 1; c < z.size(); ++c)
            if (z[c] > z[best]) best = c;
        out[i] = static_cast<std::uint32_t>(best);
    }
    return out;
}

/// Fraction of correctly classified samples.
inline double evaluate(const GlmModel& model, const Dataset& data) {
    detail::require(data.n() >= 1, "evaluate: empty dataset");
    const auto pred = predict(model, data.X);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.y[i];
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

/// Feature-dropout masking matrix (p x p): column j is kept with probability
/// 1 - delta and scaled by 1/sqrt(1 - delta), so that E[M^T M] = I.
inline SparseGrouping dropout_mask(std::size_t p, double delta, Rng& rng) {
    detail::require(delta >= 0.0 && delta < 1.0, "dropout_mask: delta must be in [0, 1)");
    const double keep = 1.0 / std::sqrt(1.0 - delta);
    std::vector<std::uint32_t> rows(p);
    Vector vals(p);
    for (std::size_t j = 0; j < p; ++j) {
        const bool dropped = rng.uniform() < delta;
        rows[j] = dropped ? kDroppedColumn : static_cast<std::uint32_t>(j);
        vals[j] = dropped ? 0.0 : keep;
    }
    return SparseGrouping(p, std::move(rows), std::move(vals), /*is_mask=*/true);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class OptimizerKind { sgd, adam };
enum class RegularizerKind { none, l2, dropout, grouping, grouping_l2 };

inline const char* to_string(RegularizerKind k) noexcept {
    switch (k) {
    case RegularizerKind::none: return "none";
    case RegularizerKind::l2: return "l2";
    case RegularizerKind::dropout: return "dropout";
    case RegularizerKind::grouping: return "grouping";
    case RegularizerKind::grouping_l2: return "grouping+l2";
    }
    return "?";
}

inline RegularizerKind parse_regularizer(const std::string& s) {
    if (s == "none") return RegularizerKind::none;
    if (s == "l2") return RegularizerKind::l2;
    if (s == "dropout") return RegularizerKind::dropout;
    if (s == "grouping") return RegularizerKind::grouping;
    if (s == "grouping+l2" || s == "grouping_l2") return RegularizerKind::grouping_l2;
    throw InvalidArgument("unknown regularizer '" + s + "'");
}

struct Regularizer {
    RegularizerKind kind = RegularizerKind::none;
    double lambda = 0.0;  ///< l2 strength (l2, grouping+l2)
    double delta = 0.0;   ///< dropout probability
    std::shared_ptr<const ProjectionBank> bank;  ///< grouping, grouping+l2
    BankPolicy policy = BankPolicy::per_minibatch;

    static Regularizer none() { return {}; }
    static Regularizer l2(double lambda) { return {RegularizerKind::l2, lambda, 0.0, nullptr, BankPolicy::per_minibatch}; }
    static Regularizer dropout(double delta, BankPolicy policy = BankPolicy::per_minibatch) {
        return {RegularizerKind::dropout, 0.0, delta, nullptr, policy};
    }
    static Regularizer grouping(std::shared_ptr<const ProjectionBank> bank, BankPolicy policy = BankPolicy::per_minibatch,
                                double lambda = 0.0) {
        return {lambda > 0.0 ? RegularizerKind::grouping_l2 : RegularizerKind::grouping, lambda, 0.0, std::move(bank),
                policy};
    }
};

struct TrainConfig {
    std::size_t epochs = 300;
    std::size_t minibatch = 32;
    double learning_rate = 1e-4;
    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    Regularizer regularizer;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require(learning_rate > 0.0 && std::isfinite(learning_rate), "TrainConfig: learning rate must be > 0");
        detail::require(minibatch >= 1, "TrainConfig: minibatch must be >= 1");
        detail::require(regularizer.lambda >= 0.0, "TrainConfig: lambda must be >= 0");
        detail::require(regularizer.delta >= 0.0 && regularizer.delta < 1.0, "TrainConfig: delta must be in [0,1)");
        const auto k = regularizer.kind;
        if (k == RegularizerKind::grouping || k == RegularizerKind::grouping_l2)
            detail::require(regularizer.bank && regularizer.bank->size() > 0, "TrainConfig: grouping needs a bank");
    }
};

/// Per-epoch learning curve. `seconds` is cumulative optimisation time,
/// excluding the per-epoch test evaluation.
struct Metrics {
    std::vector<std::size_t> epoch;
    std::vector<double> train_loss;
    std::vector<double> test_acc;
    std::vector<double> seconds;

    std::size_t size() const noexcept { return epoch.size(); }
};

inline void write_metrics_csv(std::ostream& os, const Metrics& m) {
    os << "epoch,train_loss,test_acc,seconds\n";
    char buf[128];
    for (std::size_t i = 0; i < m.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.6f\n", m.epoch[i], m.train_loss[i], m.test_acc[i], m.seconds[i]);
        os << buf;
    }
}

/// Optional per-step observer (epoch, step, model) used by tests to compare
/// parameter trajectories.
using StepObserver = std::function<void(std::size_t, std::size_t, const GlmModel&)>;

/// Minibatch training. Each epoch visits a fresh permutation of the training
/// set. Under grouping, every step (or epoch, per policy) draws Phi from the
/// bank, computes gradients for the reduced weights W Phi^T on inputs Phi x,
/// and applies the back-projected update W -= eps * g_w Phi; the bias is
/// updated directly. Dropout does the same with a random masking matrix. The
/// l2 term lambda * W is added to the full-space gradient.
///
/// Throws NumericalError if parameters become non-finite.
inline Metrics train(GlmModel& model, const Dataset& data, const TrainConfig& cfg, const Dataset* test = nullptr,
                     const StepObserver& observer = {}) {
    cfg.validate();
    detail::require_dims(data.p() == model.p(), "train: feature count differs from model");
    detail::check_labels(model, data.y);
    const auto& reg = cfg.regularizer;
    const bool grouping = reg.kind == RegularizerKind::grouping || reg.kind == RegularizerKind::grouping_l2;
    const bool dropout = reg.kind == RegularizerKind::dropout;
    const bool projected = grouping || dropout;
    const bool l2 = reg.kind == RegularizerKind::l2 || reg.kind == RegularizerKind::grouping_l2;
    if (grouping) detail::require_dims(reg.bank->p() == model.p(), "train: bank dimension differs from model");

    const std::size_t n = data.n(), p = model.p(), l = model.outputs();
    const std::size_t m = std::min(cfg.minibatch, n);
    Rng order_rng(cfg.seed, 1);
    Rng phi_rng(cfg.seed, 2);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    DenseMatrix adam_m, adam_v;
    Vector adam_mb, adam_vb;
    if (cfg.optimizer == OptimizerKind::adam) {
        adam_m = DenseMatrix(l, p);
        adam_v = DenseMatrix(l, p);
        adam_mb.assign(l, 0.0);
        adam_vb.assign(l, 0.0);
    }
    std::size_t t = 0;

    SparseGrouping mask;
    const SparseGrouping* phi = nullptr;
    Metrics metrics;
    double elapsed = 0.0;
    DenseMatrix batch, reduced, w_hat, full_grad(l, p);
    std::vector<std::uint32_t> batch_y;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        order_rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t step = 0;
        for (std::size_t first = 0; first < n; first += m, ++step) {
            const std::size_t count = std::min(m, n - first);
            if (projected && (reg.policy == BankPolicy::per_minibatch || step == 0)) {
                if (grouping) {
                    phi = &draw(*reg.bank, phi_rng);
                } else {
                    mask = dropout_mask(p, reg.delta, phi_rng);
                    phi = &mask;
                }
            }

            batch_y.resize(count);
            for (std::size_t i = 0; i < count; ++i) batch_y[i] = data.y[order[first + i]];
            auto target = [&](std::size_t i) { return static_cast<double>(batch_y[i]); };

            LossGrad lg;
            if (projected) {
                const auto k = phi->k();
                reduced = DenseMatrix(count, k);
                for (std::size_t i = 0; i < count; ++i) spgemv(*phi, data.X.row(order[first + i]), reduced.row(i));
                w_hat = DenseMatrix(l, k);
                for (std::size_t c = 0; c < l; ++c) spgemv(*phi, model.W.row(c), w_hat.row(c));
                lg = detail::batch_loss_grad(w_hat, model.b, model.family, reduced, target);
                for (std::size_t c = 0; c < l; ++c) spgemv_t(*phi, lg.gW.row(c), full_grad.row(c));
            } else {
                batch = DenseMatrix(count, p);
                for (std::size_t i = 0; i < count; ++i) {
                    auto src = data.X.row(order[first + i]);
                    std::copy(src.begin(), src.end(), batch.row(i).begin());
                }
                lg = detail::batch_loss_grad(model.W, model.b, model.family, batch, target);
                std::copy(lg.gW.data().begin(), lg.gW.data().end(), full_grad.data().begin());
            }
            loss_sum += lg.loss * static_cast<double>(count);

            if (l2) {
                auto g = full_grad.data();
                auto w = model.W.data();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += reg.lambda * w[i];
            }

            auto w = model.W.data();
            auto g = full_grad.data();
            if (cfg.optimizer == OptimizerKind::sgd) {
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * g[i];
                for (std::size_t c = 0; c < l; ++c) model.b[c] -= cfg.learning_rate * lg.gb[c];
            } else {
                ++t;
                const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
                const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
                auto adam = [&](double& param, double& mom, double& vel, double grad) {
                    mom = cfg.beta1 * mom + (1.0 - cfg.beta1) * grad;
                    vel = cfg.beta2 * vel + (1.0 - cfg.beta2) * grad * grad;
                    param -= cfg.learning_rate * (mom / bc1) / (std::sqrt(vel / bc2) + cfg.adam_epsilon);
                };
                auto am = adam_m.data();
                auto av = adam_v.data();
                for (std::size_t i = 0; i < w.size(); ++i) adam(w[i], am[i], av[i], g[i]);
                for (std::size_t c = 0; c < l; ++c) adam(model.b[c], adam_mb[c], adam_vb[c], lg.gb[c]);
            }
            if (observer) observer(epoch, step, model);
        }
        elapsed += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        if (!model.all_finite())
            throw NumericalError("train: non-finite parameters after epoch " + std::to_string(epoch) +
                                 " (regularizer " + to_string(reg.kind) + ", learning rate " +
                                 std::to_string(cfg.learning_rate) + ")");
        metrics.epoch.push_back(epoch);
        metrics.train_loss.push_back(loss_sum / static_cast<double>(n));
        metrics.test_acc.push_back(test ? evaluate(model, *test) : std::numeric_limits<double>::quiet_NaN());
        metrics.seconds.push_back(elapsed);
    }
    return metrics;
}

// ---------------------------------------------------------------------------
// FGW1 model file: magic, u32 l, u64 p, l*p f64 weights row-major, l f64 bias.
// ---------------------------------------------------------------------------

inline void write_model(std::ostream& os, const GlmModel& model) {
    os.write("FGW1", 4);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.outputs()));
    detail::put_le<std::uint64_t>(os, model.p());
    for (auto v : model.W.data()) detail::put_f64(os, v);
    for (auto v : model.b) detail::put_f64(os, v);
}

inline GlmModel read_model(std::istream& is, GlmFamily family = GlmFamily::logistic()) {
    detail::expect_magic(is, "FGW1");
    const auto l = detail::get_le<std::uint32_t>(is, "l");
    const auto p = detail::get_le<std::uint64_t>(is, "p");
    if (l == 0 || p == 0) throw FormatError("model header has a zero size");
    if (p > (std::uint64_t{1} << 40) / l) throw FormatError("model header sizes are implausibly large");
    GlmModel model(l, p, family);
    for (auto& v : model.W.data()) v = detail::get_f64(is, "weights");
    for (auto& v : model.b) v = detail::get_f64(is, "bias");
    if (!model.all_finite()) throw FormatError("model contains non-finite parameters");
    return model;
}

inline void save_model(const std::string& path, const GlmModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_model(os, model);
    if (!os) throw Error("write failed: '" + path + "'");
}

inline GlmModel load_model(const std::string& path, GlmFamily family = GlmFamily::logistic()) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open '" + path + "'");
    return read_model(is, family);
}

} // namespace fgreg
