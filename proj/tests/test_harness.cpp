#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fgreg/harness.hpp"

using namespace fgreg;

namespace {

KeyValueConfig parse(const std::string& text) {
    std::stringstream ss(text);
    return KeyValueConfig::parse(ss);
}

ExperimentConfig small_experiment() {
    ExperimentConfig c;
    c.synth_classes = 4;
    c.synth_per_class = 6;
    c.synth_dims = {8, 8};
    c.sigma = {0.0, 0.3};
    c.regularizers = {"none", "l2", "dropout", "grouping", "grouping+l2"};
    c.l2_lambda = {0.1};
    c.dropout_delta = {0.2};
    c.grouping.k = {12};
    c.grouping.r = {5};
    c.grouping.b = {4};
    c.grouping.lambda = {0.01};
    c.epochs = 3;
    c.minibatch = 8;
    c.learning_rate = 1e-2;
    c.seeds = {1, 2};
    return c;
}

} // namespace

TEST(KeyValueConfig, ParsesCommentsListsAndOverrides) {
    auto kv = parse("# header\nlr = 0.01  # trailing\n\nnoise.sigma = 0, 0.1 ,0.2\nstandardize = yes\nlr=0.5\n");
    EXPECT_EQ(kv.real("lr", 0.0), 0.5);
    EXPECT_EQ(kv.reals("noise.sigma", {}), (std::vector<double>{0.0, 0.1, 0.2}));
    EXPECT_TRUE(kv.flag("standardize", false));
    EXPECT_EQ(kv.integer("epochs", 7), 7u);
    kv.set("epochs=12");
    EXPECT_EQ(kv.integer("epochs", 7), 12u);
    EXPECT_EQ(kv.str("missing", "x"), "x");
}

TEST(KeyValueConfig, Errors) {
    EXPECT_THROW(parse("no equals sign\n"), ConfigError);
    EXPECT_THROW(parse("= 3\n"), ConfigError);
    EXPECT_THROW(parse("lr = fast\n").real("lr", 0.0), ConfigError);
    EXPECT_THROW(parse("epochs = -3\n").integer("epochs", 0), ConfigError);
    EXPECT_THROW(parse("epochs = 3.5\n").integer("epochs", 0), ConfigError);
    EXPECT_THROW(parse("standardize = maybe\n").flag("standardize", false), ConfigError);
    EXPECT_THROW(parse("seeds = ,\n").integers("seeds", {}), ConfigError);
    EXPECT_THROW(parse("lr = 1\nbogus = 2\n").reject_unknown({"lr"}), ConfigError);
    KeyValueConfig kv;
    EXPECT_THROW(kv.set("noequals"), ConfigError);
    EXPECT_THROW(KeyValueConfig::load("/nonexistent/dir/x.cfg"), ConfigError);
}

TEST(ExperimentConfig, FromConfigAndValidation) {
    const auto c = experiment_from_config(
        parse("regularizers = none, grouping\nseeds = 1,2,3\ngrouping.policy = per-epoch\noptimizer = sgd\nepochs = 5\n"));
    EXPECT_EQ(c.regularizers, (std::vector<std::string>{"none", "grouping"}));
    EXPECT_EQ(c.seeds.size(), 3u);
    EXPECT_EQ(c.grouping.policy, BankPolicy::per_epoch);
    EXPECT_EQ(c.optimizer, OptimizerKind::sgd);
    EXPECT_EQ(c.epochs, 5u);
    EXPECT_EQ(c.learning_rate, 1e-4);

    EXPECT_THROW(experiment_from_config(parse("seeds = 1\nunknown.key = 3\n")), ConfigError);
    EXPECT_THROW(experiment_from_config(parse("epochs = 4\n")), ConfigError);  // no seeds
    EXPECT_THROW(experiment_from_config(parse("seeds = 1,1\n")), ConfigError);
    EXPECT_THROW(experiment_from_config(parse("seeds = 1\nregularizers = lasso\n")), ConfigError);
    EXPECT_THROW(experiment_from_config(parse("seeds = 1\noptimizer = rmsprop\n")), ConfigError);
    EXPECT_THROW(experiment_from_config(parse("seeds = 1\ndropout.delta = 1\n")), ConfigError);
    EXPECT_THROW(experiment_from_config(parse("seeds = 1\ngrouping.policy = never\n")), ConfigError);
    EXPECT_THROW(experiment_from_config(parse("seeds = 1\ntest_fraction = 1.5\n")), ConfigError);
    EXPECT_THROW(experiment_from_config(parse("seeds = 1\nnoise.sigma = -0.1\n")), ConfigError);
}

TEST(ExpandGrid, CountsPerRegularizer) {
    ExperimentConfig c;
    c.seeds = {1, 2, 3};
    c.sigma = {0.0, 0.1, 0.2};
    c.regularizers = {"l2"};
    EXPECT_EQ(expand_grid(c, 4096).size(), 6u * 3);  // six lambdas per sigma; seeds are applied by the sweep

    c.regularizers = {"none", "l2", "dropout", "grouping", "grouping+l2"};
    c.grouping.k_ratio = {0.05, 0.2};
    c.grouping.r = {10, 20};
    c.grouping.b = {100};
    const auto cells = expand_grid(c, 4096);
    EXPECT_EQ(cells.size(), 3u * (1 + 6 + 4 + 4 + 4 * 6));
    for (const auto& cell : cells)
        if (cell.kind == RegularizerKind::grouping) {
            EXPECT_TRUE(cell.k == 205 || cell.k == 819) << cell.k;
        }

    c.grouping.k = {7};
    c.regularizers = {"grouping"};
    EXPECT_EQ(expand_grid(c, 64).front().k, 7u);
    EXPECT_EQ(expand_grid(c, 64).front().params(), "k=7;r=10;b=100");
}

TEST(MeanStderr, MatchesOracle) {
    const std::vector<double> v{0.2, 0.4, 0.9, 0.5};
    const auto ms = mean_stderr(v);
    // mean 0.5; deviations -0.3,-0.1,0.4,0; ss = 0.26; sd = sqrt(0.26/3); se = sd/2.
    EXPECT_NEAR(ms.mean, 0.5, 1e-15);
    EXPECT_NEAR(ms.stderr_, std::sqrt(0.26 / 3.0) / 2.0, 1e-15);
    EXPECT_EQ(ms.n, 4u);
    EXPECT_EQ(mean_stderr(std::vector<double>{0.7}).stderr_, 0.0);
    EXPECT_EQ(mean_stderr(std::vector<double>{}).n, 0u);
}

TEST(Sweep, ReproducibleAcrossRunsAndJobs) {
    auto c = small_experiment();
    const auto base = experiment_dataset(c);
    const auto a = run_sweep(c, base);
    c.jobs = 3;
    const auto b = run_sweep(c, base);
    ASSERT_EQ(a.rows.size(), expand_grid(c, base.p()).size() * 2);
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].seed, b.rows[i].seed);
        EXPECT_EQ(a.rows[i].cell.params(), b.rows[i].cell.params());
        EXPECT_EQ(a.rows[i].curve.train_loss, b.rows[i].curve.train_loss);
        EXPECT_EQ(a.rows[i].curve.test_acc, b.rows[i].curve.test_acc);
        EXPECT_EQ(a.rows[i].curve.size(), 3u);
    }
    const auto summary = summarize(a);
    EXPECT_EQ(summary.size(), expand_grid(c, base.p()).size());
    for (const auto& s : summary) EXPECT_EQ(s.accuracy.n, 2u);
}

TEST(Sweep, SplitDependsOnlyOnSigmaAndSeed) {
    const auto c = small_experiment();
    const auto base = experiment_dataset(c);
    const auto [tr1, te1] = prepare_split(base, 0.3, 0.33, 5);
    const auto [tr2, te2] = prepare_split(base, 0.3, 0.33, 5);
    EXPECT_EQ(tr1.X, tr2.X);
    EXPECT_EQ(te1.y, te2.y);
    const auto [tr3, te3] = prepare_split(base, 0.3, 0.33, 6);
    EXPECT_NE(tr1.X, tr3.X);
}

TEST(Sweep, CsvHeaders) {
    auto c = small_experiment();
    c.regularizers = {"none", "grouping"};
    c.sigma = {0.0};
    c.seeds = {3};
    const auto out = run_sweep(c, experiment_dataset(c));
    std::stringstream results, curves, summary;
    write_results_csv(results, out);
    write_curves_csv(curves, out);
    write_summary_csv(summary, summarize(out));
    std::string line;
    std::getline(results, line);
    EXPECT_EQ(line, "regularizer,params,sigma,seed,epoch,train_loss,test_acc,seconds");
    std::size_t rows = 0;
    while (std::getline(results, line)) ++rows;
    EXPECT_EQ(rows, 2u);
    std::getline(curves, line);
    EXPECT_EQ(line, kResultsHeader);
    rows = 0;
    while (std::getline(curves, line)) ++rows;
    EXPECT_EQ(rows, 2u * 3);
    std::getline(summary, line);
    EXPECT_EQ(line, "regularizer,params,sigma,seeds,mean_acc,stderr_acc,mean_seconds");
}

TEST(Bench, RowsPerPhase) {
    BenchConfig bc;
    bc.p = {64, 144, 256};
    bc.n = 40;
    bc.classes = 4;
    bc.repeats = 2;
    bc.r = 6;
    const auto rows = run_bench(bc);
    ASSERT_EQ(rows.size(), 6u);
    std::size_t clusters = 0, epochs = 0;
    for (const auto& r : rows) {
        clusters += r.phase == "cluster";
        epochs += r.phase == "epoch";
        EXPECT_GE(r.seconds, 0.0);
        EXPECT_EQ(r.k, static_cast<std::size_t>(std::llround(0.2 * double(r.p))));
    }
    EXPECT_EQ(clusters, 3u);
    EXPECT_EQ(epochs, 3u);
    std::stringstream ss;
    write_bench_csv(ss, rows);
    std::string header;
    std::getline(ss, header);
    EXPECT_EQ(header, "p,k,phase,seconds");
    EXPECT_EQ(grid_for(4096), (std::vector<std::size_t>{64, 64}));
    EXPECT_EQ(grid_for(2048), (std::vector<std::size_t>{32, 64}));
    bc.p = {30};
    EXPECT_THROW(run_bench(bc), InvalidArgument);
}
