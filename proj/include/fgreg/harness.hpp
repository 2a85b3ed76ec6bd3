#pragma once
// Experiment orchestration: flat key-value configs, regularizer sweeps over
// noise levels and seeds, aggregation, and scaling benchmarks.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fgreg/bank.hpp"
#include "fgreg/data.hpp"
#include "fgreg/error.hpp"
#include "fgreg/glm.hpp"
#include "fgreg/grouping.hpp"

namespace fgreg {

// ---------------------------------------------------------------------------
// Flat key-value config
// ---------------------------------------------------------------------------

/// `key = value` lines; '#' starts a comment. Later assignments win.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& is, const std::string& origin = "config") {
        KeyValueConfig cfg;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            const auto key = trim(trimmed.substr(0, eq));
            if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            cfg.values_[key] = trim(trimmed.substr(eq + 1));
        }
        return cfg;
    }

    static KeyValueConfig load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config '" + path + "'");
        return parse(is, path);
    }

    /// Apply a `key=value` override.
    void set(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
        values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
    }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    std::string str(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }
    double real(const std::string& key, double fallback) const {
        return has(key) ? to_real(key, values_.at(key)) : fallback;
    }
    std::uint64_t integer(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? to_integer(key, values_.at(key)) : fallback;
    }
    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = values_.at(key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
    }
    std::vector<double> reals(const std::string& key, std::vector<double> fallback) const {
        if (!has(key)) return fallback;
        std::vector<double> out;
        for (const auto& tok : split_list(values_.at(key))) out.push_back(to_real(key, tok));
        if (out.empty()) throw ConfigError("key '" + key + "': empty list");
        return out;
    }
    std::vector<std::uint64_t> integers(const std::string& key, std::vector<std::uint64_t> fallback) const {
        if (!has(key)) return fallback;
        std::vector<std::uint64_t> out;
        for (const auto& tok : split_list(values_.at(key))) out.push_back(to_integer(key, tok));
        if (out.empty()) throw ConfigError("key '" + key + "': empty list");
        return out;
    }
    std::vector<std::string> strings(const std::string& key, std::vector<std::string> fallback) const {
        if (!has(key)) return fallback;
        auto out = split_list(values_.at(key));
        if (out.empty()) throw ConfigError("key '" + key + "': empty list");
        return out;
    }

    /// Throws ConfigError naming the first key not in `known`.
    void reject_unknown(const std::set<std::string>& known) const {
        for (const auto& [k, v] : values_)
            if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    static std::vector<std::string> split_list(const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = trim(tok);
            if (!tok.empty()) out.push_back(tok);
        }
        return out;
    }

private:
    static double to_real(const std::string& key, const std::string& v) {
        try {
            std::size_t used = 0;
            const double d = std::stod(v, &used);
            if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': '" + v + "' is not a finite number");
        }
    }
    static std::uint64_t to_integer(const std::string& key, const std::string& v) {
        try {
            std::size_t used = 0;
            if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
            const auto u = std::stoull(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return u;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': '" + v + "' is not a non-negative integer");
        }
    }

    std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Experiment description
// ---------------------------------------------------------------------------

struct GroupingGrid {
    std::vector<double> k_ratio{0.2};       ///< used when `k` is empty
    std::vector<std::uint64_t> k;           ///< explicit cluster counts
    std::vector<std::uint64_t> r{20};
    std::vector<std::uint64_t> b{1000};
    BankPolicy policy = BankPolicy::per_minibatch;
    std::vector<double> lambda{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};  ///< for grouping+l2
};

struct ExperimentConfig {
    std::string data_path;                  ///< empty: synthetic
    std::vector<std::size_t> data_dims;     ///< geometry override for CSV input
    bool standardize = false;
    std::size_t synth_classes = 40;
    std::size_t synth_per_class = 10;
    std::vector<std::size_t> synth_dims{64, 64};
    std::uint64_t synth_seed = 0;
    SynthOptions synth;

    std::vector<double> sigma{0.0};
    double test_fraction = 0.33;
    std::vector<std::string> regularizers{"none", "l2", "dropout", "grouping"};
    std::vector<double> l2_lambda{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
    std::vector<double> dropout_delta{0.05, 0.1, 0.2, 0.3};
    GroupingGrid grouping;

    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 1e-4;
    std::size_t epochs = 300;
    std::size_t minibatch = 32;
    std::vector<std::uint64_t> seeds;
    std::string out_dir = "results";
    unsigned jobs = 1;

    void validate() const {
        if (sigma.empty() || regularizers.empty()) throw ConfigError("noise and regularizer grids must be nonempty");
        for (auto s : sigma)
            if (s < 0.0) throw ConfigError("noise.sigma values must be >= 0");
        if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must be in (0,1)");
        if (seeds.empty()) throw ConfigError("at least one seed is required");
        if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
            throw ConfigError("seeds must be unique");
        if (!(learning_rate > 0.0)) throw ConfigError("lr must be > 0");
        if (epochs == 0 || minibatch == 0) throw ConfigError("epochs and minibatch must be >= 1");
        for (const auto& r : regularizers) {
            try {
                parse_regularizer(r);
            } catch (const InvalidArgument& e) {
                throw ConfigError(e.what());
            }
        }
        for (auto l : l2_lambda)
            if (l < 0.0) throw ConfigError("l2.lambda values must be >= 0");
        for (auto d : dropout_delta)
            if (d < 0.0 || d >= 1.0) throw ConfigError("dropout.delta values must be in [0,1)");
        for (auto kr : grouping.k_ratio)
            if (!(kr > 0.0 && kr <= 1.0)) throw ConfigError("grouping.k_ratio values must be in (0,1]");
    }
};

inline const std::set<std::string>& experiment_keys() {
    static const std::set<std::string> keys{
        "data", "data.dims", "standardize", "synth.classes", "synth.per_class", "synth.dims", "synth.seed",
        "synth.amplitude", "synth.intra_sigma", "noise.sigma", "test_fraction", "regularizers", "l2.lambda",
        "dropout.delta", "grouping.k", "grouping.k_ratio", "grouping.r", "grouping.b", "grouping.policy",
        "grouping.lambda", "optimizer", "lr", "epochs", "minibatch", "seeds", "out", "jobs"};
    return keys;
}

inline ExperimentConfig experiment_from_config(const KeyValueConfig& kv) {
    kv.reject_unknown(experiment_keys());
    ExperimentConfig c;
    try {
        c.data_path = kv.str("data", "");
        if (kv.has("data.dims")) c.data_dims = detail::parse_dims(kv.str("data.dims", ""));
        c.standardize = kv.flag("standardize", false);
        c.synth_classes = kv.integer("synth.classes", c.synth_classes);
        c.synth_per_class = kv.integer("synth.per_class", c.synth_per_class);
        if (kv.has("synth.dims")) c.synth_dims = detail::parse_dims(kv.str("synth.dims", ""));
        c.synth_seed = kv.integer("synth.seed", c.synth_seed);
        c.synth.blob_amplitude = kv.real("synth.amplitude", c.synth.blob_amplitude);
        c.synth.intra_sigma = kv.real("synth.intra_sigma", c.synth.intra_sigma);
        c.sigma = kv.reals("noise.sigma", c.sigma);
        c.test_fraction = kv.real("test_fraction", c.test_fraction);
        c.regularizers = kv.strings("regularizers", c.regularizers);
        c.l2_lambda = kv.reals("l2.lambda", c.l2_lambda);
        c.dropout_delta = kv.reals("dropout.delta", c.dropout_delta);
        c.grouping.k = kv.integers("grouping.k", c.grouping.k);
        c.grouping.k_ratio = kv.reals("grouping.k_ratio", c.grouping.k_ratio);
        c.grouping.r = kv.integers("grouping.r", c.grouping.r);
        c.grouping.b = kv.integers("grouping.b", c.grouping.b);
        if (kv.has("grouping.policy")) c.grouping.policy = parse_bank_policy(kv.str("grouping.policy", ""));
        c.grouping.lambda = kv.reals("grouping.lambda", c.grouping.lambda);
        const auto opt = kv.str("optimizer", "adam");
        if (opt == "adam") c.optimizer = OptimizerKind::adam;
        else if (opt == "sgd") c.optimizer = OptimizerKind::sgd;
        else throw ConfigError("optimizer must be adam or sgd, got '" + opt + "'");
        c.learning_rate = kv.real("lr", c.learning_rate);
        c.epochs = kv.integer("epochs", c.epochs);
        c.minibatch = kv.integer("minibatch", c.minibatch);
        c.seeds = kv.integers("seeds", c.seeds);
        c.out_dir = kv.str("out", c.out_dir);
        c.jobs = static_cast<unsigned>(std::max<std::uint64_t>(1, kv.integer("jobs", 1)));
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    c.validate();
    return c;
}

/// Dataset described by the config (before noise).
inline Dataset experiment_dataset(const ExperimentConfig& c) {
    if (!c.data_path.empty()) {
        CsvOptions opts;
        opts.dims = c.data_dims;
        opts.standardize = c.standardize;
        auto ds = load_dataset(c.data_path, opts);
        if (!c.data_dims.empty()) ds.dims = c.data_dims;
        ds.validate();
        return ds;
    }
    Rng rng(c.synth_seed, 0x73796E7468ULL);
    return synth_faces(c.synth_classes, c.synth_per_class, c.synth_dims, rng, c.synth);
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

/// One regularizer setting at one noise level.
struct SweepCell {
    RegularizerKind kind = RegularizerKind::none;
    double lambda = 0.0;
    double delta = 0.0;
    std::size_t k = 0, r = 0, b = 0;
    double sigma = 0.0;

    std::string params() const {
        char buf[160];
        switch (kind) {
        case RegularizerKind::none: return "-";
        case RegularizerKind::l2: std::snprintf(buf, sizeof buf, "lambda=%g", lambda); break;
        case RegularizerKind::dropout: std::snprintf(buf, sizeof buf, "delta=%g", delta); break;
        case RegularizerKind::grouping: std::snprintf(buf, sizeof buf, "k=%zu;r=%zu;b=%zu", k, r, b); break;
        case RegularizerKind::grouping_l2:
            std::snprintf(buf, sizeof buf, "k=%zu;r=%zu;b=%zu;lambda=%g", k, r, b, lambda);
            break;
        }
        return buf;
    }
};

/// Result of one (cell, seed) run.
struct ResultRow {
    SweepCell cell;
    std::uint64_t seed = 0;
    double final_accuracy = 0.0;
    double final_loss = 0.0;
    double train_seconds = 0.0;  ///< optimisation time, all epochs
    double bank_seconds = 0.0;   ///< time to build the bank (grouping only)
    Metrics curve;
};

inline std::vector<SweepCell> expand_grid(const ExperimentConfig& c, std::size_t p) {
    std::vector<std::size_t> ks;
    if (!c.grouping.k.empty()) {
        for (auto k : c.grouping.k) ks.push_back(static_cast<std::size_t>(k));
    } else {
        for (auto ratio : c.grouping.k_ratio)
            ks.push_back(std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(ratio * static_cast<double>(p))), 1, p));
    }
    std::vector<SweepCell> cells;
    for (auto sigma : c.sigma)
        for (const auto& name : c.regularizers) {
            const auto kind = parse_regularizer(name);
            SweepCell base;
            base.kind = kind;
            base.sigma = sigma;
            switch (kind) {
            case RegularizerKind::none: cells.push_back(base); break;
            case RegularizerKind::l2:
                for (auto l : c.l2_lambda) { auto cell = base; cell.lambda = l; cells.push_back(cell); }
                break;
            case RegularizerKind::dropout:
                for (auto d : c.dropout_delta) { auto cell = base; cell.delta = d; cells.push_back(cell); }
                break;
            case RegularizerKind::grouping:
            case RegularizerKind::grouping_l2:
                for (auto k : ks)
                    for (auto r : c.grouping.r)
                        for (auto b : c.grouping.b) {
                            auto cell = base;
                            cell.k = k;
                            cell.r = r;
                            cell.b = b;
                            if (kind == RegularizerKind::grouping) { cells.push_back(cell); continue; }
                            for (auto l : c.grouping.lambda) { cell.lambda = l; cells.push_back(cell); }
                        }
                break;
            }
        }
    return cells;
}

/// Noisy train/test split for one seed; depends only on (base, sigma, seed).
inline std::pair<Dataset, Dataset> prepare_split(const Dataset& base, double sigma, double test_fraction,
                                                 std::uint64_t seed) {
    const auto noisy = add_noise(base, NoiseSpec{sigma, mix64(seed ^ 0x5EEDULL)});
    Rng rng(seed, 0x73706C6974ULL);
    return split(noisy, test_fraction, rng);
}

inline std::shared_ptr<const ProjectionBank> prepare_bank(const Dataset& train, std::size_t k, std::size_t r,
                                                          std::size_t b, std::uint64_t seed) {
    const auto graph = grid_adjacency(train.dims);
    Rng rng(mix64(seed ^ 0xBA4CULL), 3);
    return std::make_shared<const ProjectionBank>(build_bank(train, graph, k, r, b, rng));
}

/// Train one cell for one seed on a prepared split.
inline ResultRow run_cell(const SweepCell& cell, const ExperimentConfig& c, const Dataset& train, const Dataset& test,
                          std::uint64_t seed, std::shared_ptr<const ProjectionBank> bank = nullptr) {
    ResultRow row;
    row.cell = cell;
    row.seed = seed;
    TrainConfig tc;
    tc.epochs = c.epochs;
    tc.minibatch = c.minibatch;
    tc.learning_rate = c.learning_rate;
    tc.optimizer = c.optimizer;
    tc.seed = seed;
    switch (cell.kind) {
    case RegularizerKind::none: break;
    case RegularizerKind::l2: tc.regularizer = Regularizer::l2(cell.lambda); break;
    case RegularizerKind::dropout: tc.regularizer = Regularizer::dropout(cell.delta); break;
    case RegularizerKind::grouping:
    case RegularizerKind::grouping_l2: {
        if (!bank) {
            const auto t0 = std::chrono::steady_clock::now();
            bank = prepare_bank(train, cell.k, cell.r, cell.b, seed);
            row.bank_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        tc.regularizer = Regularizer::grouping(bank, c.grouping.policy, cell.kind == RegularizerKind::grouping_l2 ? cell.lambda : 0.0);
        tc.regularizer.kind = cell.kind;
        break;
    }
    }
    GlmModel model(train.classes <= 2 ? 1 : train.classes, train.p());
    row.curve = fgreg::train(model, train, tc, &test);
    row.final_accuracy = row.curve.test_acc.back();
    row.final_loss = row.curve.train_loss.back();
    row.train_seconds = row.curve.seconds.back();
    return row;
}

struct SweepOutput {
    std::vector<ResultRow> rows;  ///< cell-major, then seed order
};

/// Run every (cell, seed) pair. Banks are shared across cells that differ only
/// in lambda. Rows come back in deterministic order regardless of `jobs`.
inline SweepOutput run_sweep(const ExperimentConfig& c, const Dataset& base) {
    c.validate();
    const auto cells = expand_grid(c, base.p());
    struct Task { std::size_t cell, seed_idx; };
    std::vector<Task> tasks;
    for (std::size_t ci = 0; ci < cells.size(); ++ci)
        for (std::size_t si = 0; si < c.seeds.size(); ++si) tasks.push_back({ci, si});

    std::mutex cache_mutex;
    std::map<std::tuple<double, std::uint64_t>, std::shared_ptr<std::pair<Dataset, Dataset>>> splits;
    std::map<std::tuple<double, std::uint64_t, std::size_t, std::size_t, std::size_t>,
             std::pair<std::shared_ptr<const ProjectionBank>, double>> banks;

    std::vector<ResultRow> rows(tasks.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    auto worker = [&] {
        while (true) {
            const auto t = next.fetch_add(1);
            if (t >= tasks.size()) return;
            try {
                const auto& cell = cells[tasks[t].cell];
                const auto seed = c.seeds[tasks[t].seed_idx];
                std::shared_ptr<std::pair<Dataset, Dataset>> sp;
                {
                    std::lock_guard lock(cache_mutex);
                    auto& slot = splits[{cell.sigma, seed}];
                    if (!slot) slot = std::make_shared<std::pair<Dataset, Dataset>>(
                                   prepare_split(base, cell.sigma, c.test_fraction, seed));
                    sp = slot;
                }
                std::shared_ptr<const ProjectionBank> bank;
                double bank_seconds = 0.0;
                if (cell.kind == RegularizerKind::grouping || cell.kind == RegularizerKind::grouping_l2) {
                    std::lock_guard lock(cache_mutex);
                    auto& slot = banks[{cell.sigma, seed, cell.k, cell.r, cell.b}];
                    if (!slot.first) {
                        const auto t0 = std::chrono::steady_clock::now();
                        slot.first = prepare_bank(sp->first, cell.k, cell.r, cell.b, seed);
                        slot.second = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                    }
                    bank = slot.first;
                    bank_seconds = slot.second;
                }
                rows[t] = run_cell(cell, c, sp->first, sp->second, seed, bank);
                rows[t].bank_seconds = bank_seconds;
            } catch (...) {
                std::lock_guard lock(cache_mutex);
                if (!failure) failure = std::current_exception();
                next = tasks.size();
            }
        }
    };
    const unsigned jobs = std::max(1u, c.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return {std::move(rows)};
}

// ---------------------------------------------------------------------------
// Aggregation and CSV output
// ---------------------------------------------------------------------------

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
};

/// Mean and standard error (sample standard deviation / sqrt(n)).
inline MeanStderr mean_stderr(std::span<const double> v) {
    MeanStderr out;
    out.n = v.size();
    if (v.empty()) return out;
    out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return out;
    double ss = 0.0;
    for (auto x : v) ss += (x - out.mean) * (x - out.mean);
    out.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
    return out;
}

struct CellSummary {
    SweepCell cell;
    MeanStderr accuracy;
    MeanStderr train_seconds;
};

inline std::vector<CellSummary> summarize(const SweepOutput& out) {
    std::vector<CellSummary> summary;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    std::vector<std::vector<double>> accs, secs;
    for (const auto& row : out.rows) {
        char sig[32];
        std::snprintf(sig, sizeof sig, "%.17g", row.cell.sigma);
        const auto key = std::make_pair(std::string(to_string(row.cell.kind)) + "|" + row.cell.params(), std::string(sig));
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, summary.size()).first;
            summary.push_back({row.cell, {}, {}});
            accs.emplace_back();
            secs.emplace_back();
        }
        accs[it->second].push_back(row.final_accuracy);
        secs[it->second].push_back(row.train_seconds);
    }
    for (std::size_t i = 0; i < summary.size(); ++i) {
        summary[i].accuracy = mean_stderr(accs[i]);
        summary[i].train_seconds = mean_stderr(secs[i]);
    }
    return summary;
}

inline constexpr const char* kResultsHeader = "regularizer,params,sigma,seed,epoch,train_loss,test_acc,seconds";

/// One line per (cell, seed) with the final-epoch values.
inline void write_results_csv(std::ostream& os, const SweepOutput& out) {
    os << kResultsHeader << '\n';
    char buf[256];
    for (const auto& r : out.rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%g,%llu,%zu,%.17g,%.17g,%.6f\n", to_string(r.cell.kind),
                      r.cell.params().c_str(), r.cell.sigma, static_cast<unsigned long long>(r.seed),
                      r.curve.epoch.back(), r.final_loss, r.final_accuracy, r.train_seconds);
        os << buf;
    }
}

/// Every epoch of every run (learning curves), same columns.
inline void write_curves_csv(std::ostream& os, const SweepOutput& out) {
    os << kResultsHeader << '\n';
    char buf[256];
    for (const auto& r : out.rows)
        for (std::size_t e = 0; e < r.curve.size(); ++e) {
            std::snprintf(buf, sizeof buf, "%s,%s,%g,%llu,%zu,%.17g,%.17g,%.6f\n", to_string(r.cell.kind),
                          r.cell.params().c_str(), r.cell.sigma, static_cast<unsigned long long>(r.seed),
                          r.curve.epoch[e], r.curve.train_loss[e], r.curve.test_acc[e], r.curve.seconds[e]);
            os << buf;
        }
}

inline void write_summary_csv(std::ostream& os, const std::vector<CellSummary>& summary) {
    os << "regularizer,params,sigma,seeds,mean_acc,stderr_acc,mean_seconds\n";
    char buf[256];
    for (const auto& s : summary) {
        std::snprintf(buf, sizeof buf, "%s,%s,%g,%zu,%.17g,%.17g,%.6f\n", to_string(s.cell.kind), s.cell.params().c_str(),
                      s.cell.sigma, s.accuracy.n, s.accuracy.mean, s.accuracy.stderr_, s.train_seconds.mean);
        os << buf;
    }
}

// ---------------------------------------------------------------------------
// Scaling benchmark
// ---------------------------------------------------------------------------

struct BenchConfig {
    std::vector<std::size_t> p{1024, 2048, 4096};
    double k_ratio = 0.2;
    std::size_t r = 20;
    std::size_t n = 200;
    std::size_t classes = 20;
    std::size_t minibatch = 32;
    std::size_t repeats = 5;
    std::uint64_t seed = 0;
};

struct BenchRow {
    std::size_t p = 0, k = 0;
    std::string phase;
    double seconds = 0.0;  ///< median over repeats
};

/// h x w with h the largest divisor of p not above sqrt(p).
inline std::vector<std::size_t> grid_for(std::size_t p) {
    std::size_t h = static_cast<std::size_t>(std::sqrt(static_cast<double>(p)));
    while (h > 1 && p % h != 0) --h;
    return {h, p / h};
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Phases: "cluster" (one rena_cluster call on r samples) and "epoch" (one
/// grouping-regularized training epoch), each the median of `repeats` runs.
inline std::vector<BenchRow> run_bench(const BenchConfig& bc) {
    std::vector<BenchRow> rows;
    for (auto p : bc.p) {
        const auto dims = grid_for(p);
        detail::require(dims[0] >= 8 && dims[1] >= 8, "bench: p too small for an 8x8 grid");
        Rng data_rng(bc.seed, p);
        const auto per_class = std::max<std::size_t>(2, bc.n / bc.classes);
        const auto ds = synth_faces(bc.classes, per_class, dims, data_rng);
        const auto graph = grid_adjacency(dims);
        const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(bc.k_ratio * static_cast<double>(p))), 1, p);
        const auto r = std::min(bc.r, ds.n());

        std::vector<double> cluster_times, epoch_times;
        std::vector<std::size_t> idx(r);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        const auto samples = ds.subset(idx).X;
        for (std::size_t rep = 0; rep < bc.repeats; ++rep) {
            Rng rng(bc.seed + rep);
            const auto t0 = std::chrono::steady_clock::now();
            auto part = rena_cluster(samples, graph, k, rng);
            cluster_times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            if (part.k() != k) throw Error("bench: clustering returned the wrong k");
        }

        Rng bank_rng(bc.seed, 7);
        auto bank = std::make_shared<const ProjectionBank>(build_bank(ds, graph, k, r, 4, bank_rng));
        for (std::size_t rep = 0; rep < bc.repeats; ++rep) {
            GlmModel model(bc.classes, p);
            TrainConfig tc;
            tc.epochs = 1;
            tc.minibatch = bc.minibatch;
            tc.learning_rate = 1e-3;
            tc.seed = bc.seed + rep;
            tc.regularizer = Regularizer::grouping(bank);
            const auto m = fgreg::train(model, ds, tc);
            epoch_times.push_back(m.seconds.back());
        }
        rows.push_back({p, k, "cluster", median(cluster_times)});
        rows.push_back({p, k, "epoch", median(epoch_times)});
    }
    return rows;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
    os << "p,k,phase,seconds\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%s,%.9f\n", r.p, r.k, r.phase.c_str(), r.seconds);
        os << buf;
    }
}

} // namespace fgreg
