#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "mlinucb/harness.hpp"

using namespace mlinucb;

namespace {

ExperimentConfig synthetic_config(Algorithm algo, double missing, std::uint64_t seed = 1, std::size_t rows = 400) {
    ExperimentConfig cfg;
    SyntheticParams p;
    p.rows = rows;
    p.dim = 5;
    p.arms = 3;
    p.seed = 77;
    cfg.data = DataSource::from_synthetic(p);
    cfg.algorithm = algo;
    cfg.missing_rate = missing;
    cfg.seed = seed;
    cfg.clusters = 4;
    return cfg;
}

std::string ndjson(const std::vector<RoundLog>& logs) {
    std::ostringstream os;
    write_rounds_ndjson(os, logs);
    return os.str();
}

}  // namespace

TEST(ExperimentConfig, Validation) {
    auto cfg = synthetic_config(Algorithm::mlinucb, 0.5);
    EXPECT_NO_THROW(cfg.validate());
    cfg.neighbors = 5;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.algorithm = Algorithm::linucb;
    EXPECT_NO_THROW(cfg.validate()) << "linucb ignores N and m";
    cfg.delta = 1.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.delta = 0.05;
    cfg.missing_rate = -0.1;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    EXPECT_EQ(parse_algorithm("mlinucb"), Algorithm::mlinucb);
    EXPECT_THROW(parse_algorithm("ucb1"), std::invalid_argument);
}

TEST(RunExperiment, ReducesToLinUcbWithoutMissingRewards) {
    const auto lin = run_experiment(synthetic_config(Algorithm::linucb, 0.0));
    const auto mlin = run_experiment(synthetic_config(Algorithm::mlinucb, 0.0));
    ASSERT_EQ(lin.rounds.size(), mlin.rounds.size());
    for (std::size_t t = 0; t < lin.rounds.size(); ++t) {
        EXPECT_EQ(lin.rounds[t].chosen_arm, mlin.rounds[t].chosen_arm);
        EXPECT_EQ(lin.rounds[t].logdet_A, mlin.rounds[t].logdet_A);
    }
    EXPECT_EQ(lin.summary.correct, mlin.summary.correct);
    EXPECT_EQ(lin.summary.cumulative_regret, mlin.summary.cumulative_regret);
}

TEST(RunExperiment, DeterministicInSeed) {
    const auto cfg = synthetic_config(Algorithm::mlinucb, 0.5, 3);
    const auto a = run_experiment(cfg);
    const auto b = run_experiment(cfg);
    EXPECT_EQ(ndjson(a.rounds), ndjson(b.rounds));
    const auto c = run_experiment(synthetic_config(Algorithm::mlinucb, 0.5, 4));
    EXPECT_NE(ndjson(a.rounds), ndjson(c.rounds));
}

TEST(RunExperiment, SummaryInvariants) {
    for (auto algo : {Algorithm::linucb, Algorithm::mlinucb, Algorithm::random}) {
        const auto r = run_experiment(synthetic_config(algo, 0.5));
        const auto& s = r.summary;
        ASSERT_EQ(s.rounds, 400u);
        std::size_t correct = 0;
        for (const auto& log : r.rounds) correct += log.chosen_arm == log.best_arm;
        EXPECT_EQ(s.correct, correct);
        EXPECT_EQ(s.total_average_accuracy, static_cast<double>(correct) / 400.0);
        EXPECT_EQ(s.cumulative_regret, 400u - correct);
        EXPECT_DOUBLE_EQ(s.total_average_accuracy + static_cast<double>(s.cumulative_regret) / 400.0, 1.0);
        EXPECT_DOUBLE_EQ(r.rounds.back().cumulative_accuracy, s.total_average_accuracy);
        EXPECT_NEAR(s.missing_fraction_realized, 0.5, 3.0 * std::sqrt(0.25 / 400.0));
    }
}

TEST(RunExperiment, EffectiveRewardsAndSources) {
    const auto r = run_experiment(synthetic_config(Algorithm::mlinucb, 0.75));
    for (const auto& log : r.rounds) {
        EXPECT_GE(log.effective_reward, 0.0);
        EXPECT_LE(log.effective_reward, 1.0);
        if (log.revealed) {
            EXPECT_EQ(log.source, RewardSource::observed);
            EXPECT_EQ(log.effective_reward, log.chosen_arm == log.best_arm ? 1.0 : 0.0);
        } else {
            EXPECT_NE(log.source, RewardSource::observed);
        }
    }
    EXPECT_GT(r.summary.reward_sources.at("weighted"), 0u);
    ASSERT_TRUE(r.clusters.has_value());
    EXPECT_TRUE(r.clusters->initialized());
}

TEST(RunExperiment, PassesAndSubsample) {
    auto cfg = synthetic_config(Algorithm::linucb, 0.1);
    cfg.passes = 2;
    EXPECT_EQ(run_experiment(cfg).summary.rounds, 800u);
    cfg.passes = 1;
    cfg.subsample = 100;
    const auto r = run_experiment(cfg);
    EXPECT_EQ(r.summary.rounds, 100u);
    EXPECT_EQ(ndjson(r.rounds), ndjson(run_experiment(cfg).rounds));
}

TEST(BoundTrace, EmptyStateIsZero) {
    const auto b = bound_terms(0, 0.0, 0.0, 5);
    EXPECT_EQ(b.delta_logdet, 0.0);
    EXPECT_EQ(b.bound, 0.0);
    EXPECT_TRUE(b.phi_unnormalized);
}

TEST(BoundTrace, AllMissingKeepsDeltaAtZero) {
    for (auto algo : {Algorithm::mlinucb, Algorithm::linucb}) {
        const auto r = run_experiment(synthetic_config(algo, 1.0));
        auto cfg = synthetic_config(algo, 1.0);
        for (const auto& b : bound_trace(r.rounds, cfg, 5)) {
            EXPECT_EQ(b.delta_logdet, 0.0);
            EXPECT_EQ(b.bound, 0.0);
        }
        if (algo == Algorithm::mlinucb) EXPECT_GT(r.rounds.back().logdet_S, 0.0);
    }
}

TEST(BoundTrace, SingleRevealedUnitContext) {
    BanditDataset ds;
    ds.name = "one";
    ds.num_arms = 2;
    ds.contexts = ContextMatrix::Zero(1, 2);
    ds.contexts(0, 0) = 1.0;
    ds.labels = {0};
    for (auto algo : {Algorithm::linucb, Algorithm::mlinucb}) {
        ExperimentConfig cfg;
        cfg.algorithm = algo;
        cfg.clusters = 1;
        const auto r = run_experiment(ds, cfg);
        ASSERT_EQ(r.rounds.size(), 1u);
        const auto trace = bound_trace(r.rounds, cfg, 2);
        EXPECT_NEAR(trace[0].delta_logdet, std::log(2.0), 1e-12);
        EXPECT_EQ(r.rounds[0].logdet_S, 0.0);
        const double conf = std::sqrt(2.0 * (0.5 * std::log(2.0) - std::log(0.05)));
        EXPECT_NEAR(trace[0].bound, (conf + 1.0) * std::sqrt(18.0 * std::log(2.0)), 1e-12);
    }
}

TEST(BoundTrace, DeltaGrowsOnlyOnRevealedRounds) {
    for (double missing : {0.1, 0.5, 0.75}) {
        for (auto algo : {Algorithm::mlinucb, Algorithm::linucb}) {
            const auto r = run_experiment(synthetic_config(algo, missing, 9));
            double prev = 0.0;
            for (const auto& log : r.rounds) {
                EXPECT_GE(log.logdet_S, 0.0);
                EXPECT_GE(log.logdet_A, log.logdet_S - 1e-9);
                const double delta = log.logdet_A - log.logdet_S;
                if (delta > prev + 1e-12) EXPECT_TRUE(log.revealed) << "t=" << log.t;
                if (log.revealed && log.updated) EXPECT_GE(delta, prev - 1e-9);
                prev = delta;
            }
        }
    }
}

TEST(RandomPolicy, AccuracyNearOneOverK) {
    auto cfg = synthetic_config(Algorithm::random, 0.0, 5, 3000);
    const auto s = run_experiment(cfg).summary;
    const double p = 1.0 / 3.0;
    EXPECT_NEAR(s.total_average_accuracy, p, 3.0 * std::sqrt(p * (1.0 - p) / 3000.0));
}

TEST(SynthLinear, LinUcbLearnsRealizableLabels) {
    ExperimentConfig cfg;
    SyntheticParams p;
    p.rows = 5000;
    p.dim = 10;
    p.arms = 3;
    p.seed = 2024;
    cfg.data = DataSource::from_synthetic(p);
    cfg.algorithm = Algorithm::linucb;
    const auto r = run_experiment(cfg);
    std::size_t correct = 0;
    for (std::size_t t = 4500; t < 5000; ++t) correct += r.rounds[t].chosen_arm == r.rounds[t].best_arm;
    EXPECT_GE(static_cast<double>(correct) / 500.0, 0.90);
}

TEST(Sweep, EmptyGridIsEmptyTable) {
    EXPECT_TRUE(sweep({}, {}).empty());
    std::ostringstream os;
    write_summary_csv(os, {});
    EXPECT_EQ(os.str(), "dataset,algo,N,m,alpha,missing_rate,seeds,acc_mean,acc_std,regret_mean\n");
}

TEST(Sweep, SeedsAggregatedPerCell) {
    SweepOptions opt;
    opt.seeds = 3;
    const auto cells = sweep({synthetic_config(Algorithm::linucb, 0.5), synthetic_config(Algorithm::mlinucb, 0.5)}, opt);
    ASSERT_EQ(cells.size(), 2u);
    for (const auto& c : cells) {
        ASSERT_TRUE(c.ok()) << c.error;
        ASSERT_EQ(c.runs.size(), 3u);
        double mean = 0.0;
        for (const auto& s : c.runs) mean += s.total_average_accuracy;
        EXPECT_NEAR(c.acc_mean, mean / 3.0, 1e-15);
        EXPECT_EQ(c.runs[0].config.seed + 2, c.runs[2].config.seed);
    }
    std::ostringstream os;
    write_summary_csv(os, cells);
    const auto text = os.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
    EXPECT_NE(text.find("synthetic,linucb,,,0.25,0.5,3,"), std::string::npos) << text;
    EXPECT_NE(text.find("synthetic,mlinucb,4,1,0.25,0.5,3,"), std::string::npos) << text;
}

TEST(Sweep, FailingCellDoesNotAbort) {
    auto bad = synthetic_config(Algorithm::linucb, 0.5);
    DatasetSpec missing;
    missing.name = "ghost";
    missing.path = "/nonexistent/ghost.csv";
    bad.data = DataSource::from_file(missing);
    const auto cells = sweep({bad, synthetic_config(Algorithm::linucb, 0.5)}, {});
    ASSERT_EQ(cells.size(), 2u);
    EXPECT_FALSE(cells[0].ok());
    EXPECT_TRUE(cells[1].ok());
    std::ostringstream os;
    write_summary_csv(os, cells);
    EXPECT_NE(os.str().find("ghost,linucb,,,0.25,0.5,0,,,\n"), std::string::npos) << os.str();
}

TEST(Sweep, ParallelismDoesNotChangeResults) {
    std::vector<ExperimentConfig> grid;
    for (auto algo : {Algorithm::linucb, Algorithm::mlinucb, Algorithm::random}) grid.push_back(synthetic_config(algo, 0.5));
    SweepOptions seq;
    seq.seeds = 2;
    seq.keep_curves = true;
    SweepOptions par = seq;
    par.parallelism = 4;
    const auto a = sweep(grid, seq);
    const auto b = sweep(grid, par);
    std::ostringstream sa, sb, ca, cb;
    write_summary_csv(sa, a);
    write_summary_csv(sb, b);
    write_accuracy_series(ca, a, 50);
    write_accuracy_series(cb, b, 50);
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(ca.str(), cb.str());
}

TEST(SweepGrid, DefaultGridLayout) {
    SweepGrid grid;
    grid.datasets = {DataSource::from_synthetic({})};
    const auto cells = grid.expand();
    EXPECT_EQ(cells.size(), 18u);
    std::size_t lin = 0;
    for (const auto& c : cells) lin += c.algorithm == Algorithm::linucb;
    EXPECT_EQ(lin, 3u);
    EXPECT_EQ(algorithm_label(cells[1]), "MLINUCB - N=2");
}

TEST(Emit, AccuracyTableRows) {
    std::vector<CellResult> cells(2);
    cells[0].config = synthetic_config(Algorithm::linucb, 0.5);
    cells[0].acc_mean = 0.8244;
    cells[1].config = synthetic_config(Algorithm::mlinucb, 0.5);
    cells[1].config.clusters = 15;
    cells[1].acc_mean = 0.9031;
    std::ostringstream os;
    write_accuracy_table(os, cells);
    EXPECT_EQ(os.str(),
              "missing_rate,alpha,algorithm,synthetic\n"
              "0.5,0.25,LINUCB,0.824\n"
              "0.5,0.25,MLINUCB - N=15,0.903\n");
}

TEST(Emit, RoundLogsOneRecordPerRound) {
    auto cfg = synthetic_config(Algorithm::mlinucb, 0.5, 1, 100);
    const auto r = run_experiment(cfg);
    const auto text = ndjson(r.rounds);
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("t").get<std::size_t>(), n);
        EXPECT_TRUE(j.contains("logdet_S"));
        EXPECT_TRUE(j.contains("fallback_level"));
        ++n;
    }
    EXPECT_EQ(n, 100u);
    std::ostringstream csv;
    write_rounds_csv(csv, r.rounds);
    const auto csv_text = csv.str();
    EXPECT_EQ(std::count(csv_text.begin(), csv_text.end(), '\n'), 101);
}

TEST(Emit, OpenOutputFailsOnUnwritablePath) {
    EXPECT_THROW(open_output("/proc/definitely/not/writable.csv"), std::exception);
    EXPECT_THROW(ensure_writable_dir("/proc/not-a-dir"), std::exception);
}

TEST(Emit, ClusterLabelsForVisualization) {
    const auto ds = synth_linear(60, 3, 2, 0.0, 3).dataset;
    const auto model = fit_clusters(ds, 4, 1);
    const auto labels = cluster_labels(ds, &model);
    ASSERT_EQ(labels.size(), 60u);
    for (long l : labels) {
        EXPECT_GE(l, 0);
        EXPECT_LT(l, 4);
    }
    EXPECT_EQ(cluster_labels(ds, nullptr), std::vector<long>(60, -1));
}

TEST(ConfigFile, FlatKeyValue) {
    std::istringstream in("# comment\nalgo = mlinucb\nmissing-rate: 0.5  # inline\n\nclusters=15\n");
    const auto kv = parse_config_text(in);
    EXPECT_EQ(kv.at("algo"), "mlinucb");
    EXPECT_EQ(kv.at("missing_rate"), "0.5");
    EXPECT_EQ(kv.at("clusters"), "15");
    std::istringstream bad("just words\n");
    EXPECT_THROW(parse_config_text(bad), std::runtime_error);
}
