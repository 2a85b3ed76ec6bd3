// fgreg: command-line front end for clustering, bank construction, training,
// evaluation, penalty analysis, synthetic data, sweeps and benchmarks.
//
// Every subcommand reads an optional flat `key = value` config (--config),
// then `--set key=value` overrides, then its dedicated flags. Exit codes:
// 0 success, 1 runtime/IO failure, 2 malformed config or arguments,
// 3 numerical abort during training.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fgreg/analysis.hpp"
#include "fgreg/bank.hpp"
#include "fgreg/data.hpp"
#include "fgreg/glm.hpp"
#include "fgreg/grouping.hpp"
#include "fgreg/harness.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fgreg;

namespace {

/// Config assembled from --config, --set and flags, in that precedence order.
struct Settings {
    std::string config_path;
    std::vector<std::string> assignments;
    std::vector<std::pair<std::string, std::string>> flags;
    std::set<std::string> known;

    KeyValueConfig resolve() const {
        KeyValueConfig kv = config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path);
        for (const auto& a : assignments) kv.set(a);
        for (const auto& [k, v] : flags) kv.set(k, v);
        kv.reject_unknown(known);
        return kv;
    }
};

/// Register a flag that writes `key` in the resolved config.
void flag(CLI::App* sub, Settings& s, const std::string& name, const std::string& key, const std::string& help) {
    s.known.insert(key);
    sub->add_option_function<std::string>(name, [&s, key](const std::string& v) { s.flags.emplace_back(key, v); }, help);
}

void common(CLI::App* sub, Settings& s) {
    sub->add_option("-c,--config", s.config_path, "flat key = value config file");
    sub->add_option("--set", s.assignments, "override a config key (key=value), repeatable");
}

void require_key(const KeyValueConfig& kv, const std::string& key, const std::string& flag_name) {
    if (!kv.has(key)) throw ConfigError("missing required setting '" + key + "' (" + flag_name + ")");
}

Dataset load_input(const KeyValueConfig& kv) {
    require_key(kv, "data", "--data");
    CsvOptions opts;
    try {
        if (kv.has("data.dims")) opts.dims = detail::parse_dims(kv.str("data.dims", ""));
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    opts.standardize = kv.flag("standardize", false);
    auto ds = load_dataset(kv.str("data", ""), opts);
    if (!opts.dims.empty()) ds.dims = opts.dims;
    ds.validate();
    return ds;
}

FeatureGraph graph_for(const Dataset& ds) {
    if (ds.dims.empty())
        throw ConfigError("dataset has no image geometry; set data.dims (e.g. --dims 64x64)");
    return grid_adjacency(ds.dims);
}

std::size_t cluster_count(const KeyValueConfig& kv, std::size_t p) {
    if (kv.has("k")) return kv.integer("k", 0);
    if (kv.has("k_ratio")) {
        const double ratio = kv.real("k_ratio", 0.2);
        if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("k_ratio must be in (0,1]");
        return std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(ratio * static_cast<double>(p))), 1, p);
    }
    return default_k(p);
}

std::ofstream open_out(const std::string& path) {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    return os;
}

void write_matrix_csv(const std::string& path, const DenseMatrix& m) {
    auto os = open_out(path);
    char buf[64];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            os << (j ? "," : "") << buf;
        }
        os << '\n';
    }
}

// ---------------------------------------------------------------------------

int cmd_cluster(const KeyValueConfig& kv) {
    const auto ds = load_input(kv);
    require_key(kv, "out", "--out");
    require_key(kv, "seed", "--seed");
    const auto seed = kv.integer("seed", 0);
    const auto r = std::min<std::size_t>(kv.integer("r", ds.n()), ds.n());
    if (r == 0) throw ConfigError("r must be >= 1");
    Rng rows_rng(seed, 0x726F7773ULL);
    auto idx = sample_without_replacement(ds.n(), r, rows_rng);
    std::sort(idx.begin(), idx.end());
    Rng rng(seed);
    const auto part = rena_cluster(ds.subset(idx).X, graph_for(ds), cluster_count(kv, ds.p()), rng);
    save_partition(kv.str("out", ""), part);
    std::printf("p=%zu k=%zu r=%zu -> %s\n", part.p(), part.k(), r, kv.str("out", "").c_str());
    return 0;
}

int cmd_bank(const KeyValueConfig& kv) {
    const auto ds = load_input(kv);
    require_key(kv, "out", "--out");
    require_key(kv, "seed", "--seed");
    Rng rng(kv.integer("seed", 0));
    const auto k = cluster_count(kv, ds.p());
    const auto r = kv.integer("r", 20), b = kv.integer("b", 1000);
    const auto jobs = static_cast<unsigned>(std::max<std::uint64_t>(1, kv.integer("jobs", 1)));
    const auto bank = build_bank(ds, graph_for(ds), k, r, b, rng, jobs);
    save_bank(kv.str("out", ""), bank);
    std::printf("bank b=%zu k=%zu r=%zu p=%zu -> %s\n", bank.size(), bank.k(), bank.r(), bank.p(),
                kv.str("out", "").c_str());
    return 0;
}

int cmd_train(const KeyValueConfig& kv) {
    auto base = load_input(kv);
    const auto seed = kv.integer("seed", 0);
    const double sigma = kv.real("noise.sigma", 0.0);
    if (sigma < 0.0) throw ConfigError("noise.sigma must be >= 0");

    Dataset train_set, test_set;
    if (kv.has("test")) {
        CsvOptions opts;
        opts.dims = base.dims;
        opts.standardize = kv.flag("standardize", false);
        auto test_raw = load_dataset(kv.str("test", ""), opts);
        test_raw.dims = base.dims;
        if (test_raw.p() != base.p()) throw ConfigError("test set feature count differs from training set");
        train_set = add_noise(base, {sigma, mix64(seed ^ 0x5EEDULL)});
        test_set = add_noise(test_raw, {sigma, mix64(seed ^ 0x7E57ULL)});
        test_set.classes = train_set.classes = std::max(train_set.classes, test_raw.classes);
    } else {
        const double frac = kv.real("test_fraction", 0.33);
        if (!(frac > 0.0 && frac < 1.0)) throw ConfigError("test_fraction must be in (0,1)");
        std::tie(train_set, test_set) = prepare_split(base, sigma, frac, seed);
    }

    TrainConfig tc;
    tc.seed = seed;
    tc.epochs = kv.integer("epochs", tc.epochs);
    tc.minibatch = kv.integer("minibatch", tc.minibatch);
    tc.learning_rate = kv.real("lr", tc.learning_rate);
    const auto opt = kv.str("optimizer", "adam");
    if (opt == "adam") tc.optimizer = OptimizerKind::adam;
    else if (opt == "sgd") tc.optimizer = OptimizerKind::sgd;
    else throw ConfigError("optimizer must be adam or sgd, got '" + opt + "'");

    const auto kind = parse_regularizer(kv.str("regularizer", "none"));
    const auto policy = parse_bank_policy(kv.str("policy", "per-minibatch"));
    const double lambda = kv.real("lambda", 0.0);
    std::shared_ptr<const ProjectionBank> bank;
    if (kind == RegularizerKind::grouping || kind == RegularizerKind::grouping_l2) {
        if (kv.has("bank")) {
            bank = std::make_shared<const ProjectionBank>(load_bank(kv.str("bank", "")));
        } else {
            bank = prepare_bank(train_set, cluster_count(kv, base.p()), kv.integer("r", 20), kv.integer("b", 1000), seed);
        }
    }
    switch (kind) {
        case RegularizerKind::none: tc.regularizer = Regularizer::none(); break;
        case RegularizerKind::l2: tc.regularizer = Regularizer::l2(lambda); break;
        case RegularizerKind::dropout: tc.regularizer = Regularizer::dropout(kv.real("delta", 0.0), policy); break;
        case RegularizerKind::grouping: tc.regularizer = Regularizer::grouping(bank, policy); break;
        case RegularizerKind::grouping_l2: tc.regularizer = Regularizer::grouping(bank, policy, lambda); break;
    }
    try {
        tc.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }

    const auto family = parse_family(kv.str("family", "logistic"));
    GlmModel model(train_set.classes <= 2 ? 1 : train_set.classes, train_set.p(), family);
    const auto metrics = fgreg::train(model, train_set, tc, &test_set);
    if (kv.has("model")) save_model(kv.str("model", ""), model);
    if (kv.has("metrics")) {
        auto os = open_out(kv.str("metrics", ""));
        write_metrics_csv(os, metrics);
    }
    std::printf("regularizer=%s epochs=%zu final_loss=%.6f test_acc=%.6f seconds=%.3f\n", to_string(kind), tc.epochs,
                metrics.train_loss.back(), metrics.test_acc.back(), metrics.seconds.back());
    return 0;
}

int cmd_eval(const KeyValueConfig& kv) {
    require_key(kv, "model", "--model");
    const auto ds = load_input(kv);
    const auto model = load_model(kv.str("model", ""), parse_family(kv.str("family", "logistic")));
    const double acc = evaluate(model, ds);
    if (kv.has("out")) {
        auto os = open_out(kv.str("out", ""));
        os << json{{"accuracy", acc}, {"n", ds.n()}}.dump(2) << '\n';
    }
    std::printf("accuracy=%.6f n=%zu\n", acc, ds.n());
    return 0;
}

BankMeasure analysis_measure(const KeyValueConfig& kv) {
    const auto source = kv.str("measure", kv.has("bank") ? "bank" : "partitions");
    if (source == "bank") {
        require_key(kv, "bank", "--bank");
        return BankMeasure(load_bank(kv.str("bank", "")));
    }
    if (source == "dropout") {
        require_key(kv, "p", "--p");
        return enumerate_dropout_masks(kv.integer("p", 0), kv.real("delta", 0.0));
    }
    if (source != "partitions") throw ConfigError("measure must be bank, partitions or dropout");
    const auto files = kv.strings("partitions", {});
    if (files.empty()) throw ConfigError("analyze needs bank, partitions or measure = dropout");
    std::vector<SparseGrouping> members;
    for (const auto& f : files) members.push_back(partition_to_phi(load_partition(f)));
    return BankMeasure(std::move(members));
}

Vector analysis_beta(const KeyValueConfig& kv, std::size_t p) {
    Vector beta;
    if (kv.has("beta")) {
        std::ifstream is(kv.str("beta", ""));
        if (!is) throw Error("cannot open beta file '" + kv.str("beta", "") + "'");
        std::string tok;
        while (is >> tok) {
            try {
                beta.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw FormatError("beta file: non-numeric value '" + tok + "'");
            }
        }
    } else {
        Rng rng(kv.integer("beta.seed", 0), 0x62657461ULL);
        const double scale = kv.real("beta.scale", 1.0);
        beta.resize(p);
        for (auto& v : beta) v = scale * rng.normal();
    }
    if (beta.size() != p) throw ConfigError("beta has " + std::to_string(beta.size()) + " entries, expected " + std::to_string(p));
    return beta;
}

int cmd_analyze(const KeyValueConfig& kv) {
    const auto measure = analysis_measure(kv);
    const auto p = measure.p();
    json out{{"p", p}, {"members", measure.size()}};

    if (p <= kDenseMomentLimit) {
        const auto omega = estimate_omega(measure);
        const auto second = delta_second_moment(measure);
        Vector od(p), sd(p);
        for (std::size_t j = 0; j < p; ++j) od[j] = omega(j, j), sd[j] = second(j, j);
        out["omega_diagonal"] = od;
        out["delta_second_moment_diagonal"] = sd;
        out["closed_form_error"] = max_abs_diff(second, omega_minus_omega_sq(omega));
        if (kv.has("matrices")) {
            if (p > 64) throw ConfigError("dense matrix dumps are limited to p <= 64");
            const auto dir = fs::path(kv.str("matrices", ""));
            fs::create_directories(dir);
            write_matrix_csv((dir / "omega.csv").string(), omega);
            write_matrix_csv((dir / "delta_second_moment.csv").string(), second);
        }
    }

    if (kv.has("data")) {
        const auto ds = load_input(kv);
        if (ds.p() != p) throw ConfigError("dataset feature count differs from the projection measure");
        const auto beta = analysis_beta(kv, p);
        const Vector y(ds.y.begin(), ds.y.end());
        const auto family = parse_family(kv.str("family", "gaussian"));
        const auto rep = penalty(beta, ds.X, y, measure, family);
        out["family"] = to_string(family.kind);
        out["smoothed_loss"] = rep.smoothed_loss;
        out["penalty"] = rep.penalty;
        out["per_sample_app"] = rep.per_sample_app;
        out["per_sample_var"] = rep.per_sample_var;
        const auto tc = taylor_check(beta, ds.X, y, measure, family);
        out["expected_loss"] = tc.lhs;
        out["taylor_gap"] = tc.gap;
    }

    const auto text = out.dump(2);
    if (kv.has("out")) {
        auto os = open_out(kv.str("out", ""));
        os << text << '\n';
    } else {
        std::cout << text << '\n';
    }
    return 0;
}

int cmd_synth(const KeyValueConfig& kv) {
    require_key(kv, "out", "--out");
    SynthOptions opts;
    opts.blob_amplitude = kv.real("amplitude", opts.blob_amplitude);
    opts.intra_sigma = kv.real("intra_sigma", opts.intra_sigma);
    std::vector<std::size_t> dims{64, 64};
    try {
        if (kv.has("dims")) dims = detail::parse_dims(kv.str("dims", ""));
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    const auto seed = kv.integer("seed", 0);
    Rng rng(seed, 0x73796E7468ULL);
    auto ds = synth_faces(kv.integer("classes", 40), kv.integer("per_class", 10), dims, rng, opts);
    const double sigma = kv.real("noise.sigma", 0.0);
    if (sigma < 0.0) throw ConfigError("noise.sigma must be >= 0");
    ds = add_noise(ds, {sigma, mix64(seed ^ 0x5EEDULL)});
    save_dataset(kv.str("out", ""), ds);
    std::printf("n=%zu p=%zu classes=%zu -> %s\n", ds.n(), ds.p(), ds.classes, kv.str("out", "").c_str());
    return 0;
}

int cmd_sweep(const KeyValueConfig& kv) {
    const auto c = experiment_from_config(kv);
    const auto base = experiment_dataset(c);
    const auto out = run_sweep(c, base);
    const fs::path dir(c.out_dir);
    fs::create_directories(dir);
    {
        auto os = open_out((dir / "results.csv").string());
        write_results_csv(os, out);
    }
    {
        auto os = open_out((dir / "curves.csv").string());
        write_curves_csv(os, out);
    }
    const auto summary = summarize(out);
    {
        auto os = open_out((dir / "summary.csv").string());
        write_summary_csv(os, summary);
    }
    for (const auto& s : summary)
        std::printf("%-12s %-28s sigma=%-5g acc=%.4f +- %.4f (n=%zu)\n", to_string(s.cell.kind), s.cell.params().c_str(),
                    s.cell.sigma, s.accuracy.mean, s.accuracy.stderr_, s.accuracy.n);
    return 0;
}

int cmd_bench(const KeyValueConfig& kv) {
    BenchConfig bc;
    std::vector<std::uint64_t> ps(bc.p.begin(), bc.p.end());
    ps = kv.integers("p", ps);
    bc.p.assign(ps.begin(), ps.end());
    bc.k_ratio = kv.real("k_ratio", bc.k_ratio);
    bc.r = kv.integer("r", bc.r);
    bc.n = kv.integer("n", bc.n);
    bc.classes = kv.integer("classes", bc.classes);
    bc.minibatch = kv.integer("minibatch", bc.minibatch);
    bc.repeats = kv.integer("repeats", bc.repeats);
    bc.seed = kv.integer("seed", bc.seed);
    if (bc.repeats == 0) throw ConfigError("repeats must be >= 1");
    const auto rows = run_bench(bc);
    if (kv.has("out")) {
        auto os = open_out(kv.str("out", ""));
        write_bench_csv(os, rows);
    } else {
        write_bench_csv(std::cout, rows);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"feature-grouping regularization toolkit"};
    app.require_subcommand(1);

    struct Command {
        Settings settings;
        int (*run)(const KeyValueConfig&);
        CLI::App* app = nullptr;
        bool needs_seed = false;
    };
    std::vector<std::unique_ptr<Command>> commands;
    auto add = [&](const std::string& name, const std::string& help, int (*run)(const KeyValueConfig&)) -> Command& {
        auto& c = *commands.emplace_back(std::make_unique<Command>());
        c.run = run;
        c.app = app.add_subcommand(name, help);
        common(c.app, c.settings);
        return c;
    };
    auto data_flags = [](Command& c) {
        flag(c.app, c.settings, "--data", "data", "dataset (.csv or binary)");
        flag(c.app, c.settings, "--dims", "data.dims", "image geometry, e.g. 64x64");
        flag(c.app, c.settings, "--standardize", "standardize", "standardize feature columns (true/false)");
    };

    {
        auto& c = add("cluster", "cluster features of a dataset into k groups", cmd_cluster);
        data_flags(c);
        flag(c.app, c.settings, "--k", "k", "number of clusters (default p/5)");
        flag(c.app, c.settings, "--k-ratio", "k_ratio", "k as a fraction of p");
        flag(c.app, c.settings, "--r", "r", "rows used for clustering (default all)");
        flag(c.app, c.settings, "--seed", "seed", "random seed");
        flag(c.app, c.settings, "-o,--out", "out", "output partition file");
    }
    {
        auto& c = add("bank", "build a bank of grouping matrices", cmd_bank);
        data_flags(c);
        flag(c.app, c.settings, "--k", "k", "clusters per matrix (default p/5)");
        flag(c.app, c.settings, "--k-ratio", "k_ratio", "k as a fraction of p");
        flag(c.app, c.settings, "--r", "r", "samples per clustering (default 20)");
        flag(c.app, c.settings, "--b", "b", "bank size (default 1000)");
        flag(c.app, c.settings, "--jobs", "jobs", "worker threads");
        flag(c.app, c.settings, "--seed", "seed", "random seed");
        flag(c.app, c.settings, "-o,--out", "out", "output bank directory");
    }
    {
        auto& c = add("train", "train a regularized GLM classifier", cmd_train);
        c.needs_seed = true;
        data_flags(c);
        flag(c.app, c.settings, "--test", "test", "separate test set (default: stratified split)");
        flag(c.app, c.settings, "--test-fraction", "test_fraction", "held-out fraction (default 0.33)");
        flag(c.app, c.settings, "--sigma", "noise.sigma", "additive gaussian noise level");
        flag(c.app, c.settings, "--regularizer", "regularizer", "none | l2 | dropout | grouping | grouping+l2");
        flag(c.app, c.settings, "--lambda", "lambda", "l2 penalty");
        flag(c.app, c.settings, "--delta", "delta", "dropout probability");
        flag(c.app, c.settings, "--bank", "bank", "bank directory (otherwise built from the training split)");
        flag(c.app, c.settings, "--k", "k", "clusters per matrix when building a bank");
        flag(c.app, c.settings, "--k-ratio", "k_ratio", "k as a fraction of p");
        flag(c.app, c.settings, "--r", "r", "samples per clustering");
        flag(c.app, c.settings, "--b", "b", "bank size");
        flag(c.app, c.settings, "--policy", "policy", "per-minibatch | per-epoch");
        flag(c.app, c.settings, "--family", "family", "logistic | gaussian");
        flag(c.app, c.settings, "--optimizer", "optimizer", "adam | sgd");
        flag(c.app, c.settings, "--lr", "lr", "learning rate (default 1e-4)");
        flag(c.app, c.settings, "--epochs", "epochs", "epochs (default 300)");
        flag(c.app, c.settings, "--minibatch", "minibatch", "minibatch size (default 32)");
        flag(c.app, c.settings, "--seed", "seed", "random seed (required)");
        flag(c.app, c.settings, "--model", "model", "output model file");
        flag(c.app, c.settings, "--metrics", "metrics", "output metrics CSV");
    }
    {
        auto& c = add("eval", "accuracy of a saved model on a dataset", cmd_eval);
        data_flags(c);
        flag(c.app, c.settings, "--model", "model", "model file");
        flag(c.app, c.settings, "--family", "family", "logistic | gaussian");
        flag(c.app, c.settings, "-o,--out", "out", "optional JSON output");
    }
    {
        auto& c = add("analyze", "moments and induced penalty of a projection distribution", cmd_analyze);
        data_flags(c);
        flag(c.app, c.settings, "--measure", "measure", "bank | partitions | dropout");
        flag(c.app, c.settings, "--bank", "bank", "bank directory");
        flag(c.app, c.settings, "--partitions", "partitions", "comma-separated partition files");
        flag(c.app, c.settings, "--p", "p", "feature count for the dropout measure");
        flag(c.app, c.settings, "--delta", "delta", "dropout probability");
        flag(c.app, c.settings, "--beta", "beta", "coefficient file, one value per line");
        flag(c.app, c.settings, "--beta-seed", "beta.seed", "seed for random coefficients");
        flag(c.app, c.settings, "--beta-scale", "beta.scale", "scale of random coefficients");
        flag(c.app, c.settings, "--family", "family", "gaussian | logistic");
        flag(c.app, c.settings, "--matrices", "matrices", "directory for dense moment CSVs (p <= 64)");
        flag(c.app, c.settings, "-o,--out", "out", "output JSON (default stdout)");
    }
    {
        auto& c = add("synth", "generate a synthetic image classification dataset", cmd_synth);
        flag(c.app, c.settings, "--classes", "classes", "number of classes (default 40)");
        flag(c.app, c.settings, "--per-class", "per_class", "samples per class (default 10)");
        flag(c.app, c.settings, "--dims", "dims", "image size (default 64x64)");
        flag(c.app, c.settings, "--amplitude", "amplitude", "class blob amplitude");
        flag(c.app, c.settings, "--intra-sigma", "intra_sigma", "within-class jitter");
        flag(c.app, c.settings, "--sigma", "noise.sigma", "additive gaussian noise level");
        flag(c.app, c.settings, "--seed", "seed", "random seed");
        flag(c.app, c.settings, "-o,--out", "out", "output dataset (.csv or binary)");
    }
    {
        auto& c = add("sweep", "regularizer grid over noise levels and seeds", cmd_sweep);
        c.needs_seed = true;
        c.settings.known = experiment_keys();
        flag(c.app, c.settings, "--data", "data", "dataset (default: synthetic)");
        flag(c.app, c.settings, "--seed", "seeds", "comma-separated seeds (required)");
        flag(c.app, c.settings, "-o,--out", "out", "output directory");
        flag(c.app, c.settings, "--jobs", "jobs", "parallel cells");
        flag(c.app, c.settings, "--epochs", "epochs", "epochs per run");
    }
    {
        auto& c = add("bench", "scaling benchmark of clustering and training", cmd_bench);
        flag(c.app, c.settings, "--p", "p", "comma-separated feature counts");
        flag(c.app, c.settings, "--k-ratio", "k_ratio", "k / p");
        flag(c.app, c.settings, "--r", "r", "samples per clustering");
        flag(c.app, c.settings, "--n", "n", "training samples");
        flag(c.app, c.settings, "--classes", "classes", "classes");
        flag(c.app, c.settings, "--minibatch", "minibatch", "minibatch size");
        flag(c.app, c.settings, "--repeats", "repeats", "runs per timing");
        flag(c.app, c.settings, "--seed", "seed", "random seed");
        flag(c.app, c.settings, "-o,--out", "out", "output CSV (default stdout)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    for (auto& c : commands) {
        if (!c->app->parsed()) continue;
        try {
            if (c->needs_seed && c->app->count("--seed") == 0) throw ConfigError("--seed is required");
            return c->run(c->settings.resolve());
        } catch (const ConfigError& e) {
            std::fprintf(stderr, "fgreg %s: config error: %s\n", c->app->get_name().c_str(), e.what());
            return 2;
        } catch (const InvalidArgument& e) {
            std::fprintf(stderr, "fgreg %s: invalid argument: %s\n", c->app->get_name().c_str(), e.what());
            return 2;
        } catch (const NumericalError& e) {
            std::fprintf(stderr, "fgreg %s: numerical failure: %s\n", c->app->get_name().c_str(), e.what());
            return 3;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "fgreg %s: %s\n", c->app->get_name().c_str(), e.what());
            return 1;
        }
    }
    return 1;
}
