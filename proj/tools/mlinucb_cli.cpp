// Command-line front end: run, sweep, pca, fetch-instructions.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mlinucb/mlinucb.hpp"

namespace fs = std::filesystem;
using namespace mlinucb;

namespace {

constexpr std::size_t kCovertypeDefaultRows = 20000;

// Options shared by every subcommand that loads data.
struct DataOptions {
    std::string data_dir = "data";
    std::string label_column;
    bool scale_features = false;
    std::size_t rows = 5000;
    std::size_t dim = 10;
    std::size_t arms = 3;
    double noise = 0.0;
    std::uint64_t data_seed = 0;

    void add_to(CLI::App& app) {
        if (const char* env = std::getenv("MLINUCB_DATA_DIR")) data_dir = env;
        app.add_option("--data-dir", data_dir, "Directory holding prepared dataset files")->capture_default_str();
        app.add_option("--label-column", label_column, "Label column for CSV paths: first, last, index or header name");
        app.add_flag("--scale-features", scale_features, "Min-max scale every feature to [0,1]");
        app.add_option("--rows", rows, "Synthetic dataset rows")->capture_default_str();
        app.add_option("--dim", dim, "Synthetic dataset dimension")->capture_default_str();
        app.add_option("--arms", arms, "Synthetic dataset classes")->capture_default_str();
        app.add_option("--noise", noise, "Synthetic label noise sigma")->capture_default_str();
        app.add_option("--data-seed", data_seed, "Synthetic generator seed")->capture_default_str();
    }

    // "synthetic", a registered dataset name, or a path to a delimited file.
    DataSource resolve(const std::string& name) const {
        if (name == "synthetic") return DataSource::from_synthetic({rows, dim, arms, noise, data_seed});
        DatasetSpec spec;
        if (find_registry_entry(name) != nullptr) {
            auto found = resolve_dataset(name, data_dir);
            if (!found) {
                throw std::runtime_error("dataset '" + name + "' not found under " + data_dir +
                                         "; see `mlinucb fetch-instructions " + name + "`");
            }
            spec = *found;
        } else {
            spec.path = name;
            spec.name = fs::path(name).stem().string();
            if (!fs::exists(spec.path)) throw std::runtime_error("no such dataset or file: " + name);
        }
        if (!label_column.empty()) spec.label_column = label_column;
        spec.scale_features = scale_features;
        return DataSource::from_file(spec);
    }
};

std::optional<std::size_t> default_subsample(const std::string& dataset, std::optional<std::size_t> given) {
    if (given) return given;
    if (dataset == "covertype") {
        std::cerr << "covertype: using a " << kCovertypeDefaultRows << "-row subsample (pass --subsample to change)\n";
        return kCovertypeDefaultRows;
    }
    return std::nullopt;
}

void write_rounds(const fs::path& dir, const std::string& format, const ExperimentConfig& cfg,
                  const std::vector<RoundLog>& rounds) {
    auto out = open_output(dir / ("rounds-" + cfg.cell_name() + "." + format));
    if (format == "csv") {
        write_rounds_csv(out, rounds);
    } else {
        write_rounds_ndjson(out, rounds);
    }
}

// Appends config-file entries to argv unless the same flag was given on
// the command line, so explicit flags win.
std::vector<std::string> merge_config(std::vector<std::string> args) {
    std::optional<std::string> path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (!path) return args;
    for (const auto& [key, value] : parse_config_file(*path)) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        bool given = false;
        for (const auto& a : args) given = given || a == flag || a.rfind(flag + "=", 0) == 0;
        if (!given) args.push_back(flag + "=" + value);
    }
    return args;
}

struct RunOptions {
    std::string dataset = "synthetic";
    std::string algo = "mlinucb";
    double alpha = 0.25;
    std::size_t clusters = 5;
    std::size_t neighbors = 1;
    double missing_rate = 0.0;
    std::uint64_t seed = 0;
    std::size_t seeds = 1;
    std::optional<std::size_t> subsample;
    std::size_t passes = 1;
    double delta = 0.05;
    double sigma = 1.0;
    std::string out_dir = "out";
    std::string format = "ndjson";
    bool full_recluster = false;
    bool fixed_count_mask = false;
    bool bound_trace = false;
};

int do_run(const RunOptions& o, const DataOptions& d) {
    ExperimentConfig cfg;
    cfg.data = d.resolve(o.dataset);
    cfg.algorithm = parse_algorithm(o.algo);
    cfg.alpha = o.alpha;
    cfg.clusters = o.clusters;
    cfg.neighbors = o.neighbors;
    cfg.missing_rate = o.missing_rate;
    cfg.seed = o.seed;
    cfg.subsample = default_subsample(o.dataset, o.subsample);
    cfg.passes = o.passes;
    cfg.delta = o.delta;
    cfg.sigma = o.sigma;
    cfg.full_recluster = o.full_recluster;
    cfg.fixed_count_mask = o.fixed_count_mask;
    cfg.validate();

    const fs::path dir = o.out_dir;
    ensure_writable_dir(dir);
    const auto base = load_dataset(cfg.data);

    SweepOptions sopt;
    sopt.seeds = o.seeds;
    sopt.on_run = [&](const ExperimentConfig& run_cfg, const RunResult& r) {
        write_rounds(dir, o.format, run_cfg, r.rounds);
        if (r.clusters) {
            auto out = open_output(dir / ("centroids-" + run_cfg.cell_name() + ".csv"));
            r.clusters->dump_centroids(out);
        }
        if (o.bound_trace) {
            auto out = open_output(dir / ("bound-" + run_cfg.cell_name() + ".csv"));
            write_bound_trace_csv(out, bound_trace(r.rounds, run_cfg, base.dim()));
        }
        std::cout << run_cfg.cell_name() << ": accuracy " << r.summary.total_average_accuracy << ", regret "
                  << r.summary.cumulative_regret << ", missing " << r.summary.missing_fraction_realized << ", "
                  << r.summary.wall_time_seconds << " s\n";
    };
    const auto cells = sweep({cfg}, sopt);
    auto out = open_output(dir / "summary.csv");
    write_summary_csv(out, cells);
    if (!cells.front().ok()) {
        std::cerr << "run failed: " << cells.front().error << '\n';
        return 1;
    }
    return 0;
}

struct SweepCliOptions {
    std::vector<std::string> datasets{"synthetic"};
    std::vector<std::string> algos{"linucb", "mlinucb"};
    std::vector<double> alphas{0.25};
    std::vector<std::size_t> clusters{2, 5, 10, 15, 20};
    std::vector<std::size_t> neighbors{1};
    std::vector<double> missing_rates{0.1, 0.5, 0.75};
    std::uint64_t seed = 0;
    std::size_t seeds = 5;
    std::optional<std::size_t> subsample;
    std::size_t parallelism = 1;
    std::string out_dir = "out";
    std::string format = "ndjson";
    bool full_recluster = false;
    bool write_round_logs = false;
    std::size_t series_stride = 1;
};

int do_sweep(const SweepCliOptions& o, const DataOptions& d) {
    const fs::path dir = o.out_dir;
    ensure_writable_dir(dir);

    std::vector<ExperimentConfig> grid;
    for (const auto& name : o.datasets) {
        SweepGrid g;
        g.datasets = {d.resolve(name)};
        g.algorithms.clear();
        for (const auto& a : o.algos) g.algorithms.push_back(parse_algorithm(a));
        g.alphas = o.alphas;
        g.clusters = o.clusters;
        g.neighbors = o.neighbors;
        g.missing_rates = o.missing_rates;
        g.base.seed = o.seed;
        g.base.subsample = default_subsample(name, o.subsample);
        g.base.full_recluster = o.full_recluster;
        for (auto& cfg : g.expand()) grid.push_back(std::move(cfg));
    }
    for (const auto& cfg : grid) cfg.validate();

    SweepOptions sopt;
    sopt.seeds = o.seeds;
    sopt.parallelism = o.parallelism;
    sopt.keep_curves = true;
    sopt.on_run = [&](const ExperimentConfig& cfg, const RunResult& r) {
        if (o.write_round_logs) write_rounds(dir, o.format, cfg, r.rounds);
        std::cerr << cfg.cell_name() << ": " << r.summary.total_average_accuracy << '\n';
    };
    const auto cells = sweep(grid, sopt);

    {
        auto out = open_output(dir / "summary.csv");
        write_summary_csv(out, cells);
    }
    {
        auto out = open_output(dir / "table.csv");
        write_accuracy_table(out, cells);
    }
    {
        auto out = open_output(dir / "accuracy-series.csv");
        write_accuracy_series(out, cells, o.series_stride);
    }
    std::size_t failed = 0;
    for (const auto& c : cells) {
        if (!c.ok()) {
            ++failed;
            std::cerr << "cell " << c.config.cell_name() << " failed: " << c.error << '\n';
        }
    }
    std::cout << cells.size() << " cells, " << failed << " failed; results in " << dir.string() << '\n';
    return failed == 0 ? 0 : 1;
}

struct PcaOptions {
    std::string dataset = "synthetic";
    std::optional<std::size_t> clusters;
    std::uint64_t seed = 0;
    std::optional<std::size_t> subsample;
    std::string out_dir = "out";
};

int do_pca(const PcaOptions& o, const DataOptions& d) {
    const fs::path dir = o.out_dir;
    ensure_writable_dir(dir);
    const auto src = d.resolve(o.dataset);
    auto ds = load_dataset(src);
    if (const auto cap = default_subsample(o.dataset, o.subsample)) ds = subsample(ds, *cap, derive_seed(o.seed, 1));
    const auto pca = pca2_variance(ds);
    std::vector<long> ids(ds.rows(), -1);
    if (o.clusters) {
        const auto model = fit_clusters(ds, *o.clusters, derive_seed(o.seed, 4));
        ids = cluster_labels(ds, &model);
    }
    auto out = open_output(dir / ("pca-" + src.name + ".csv"));
    write_pca_csv(out, pca, ds.labels, ids);
    std::cout << src.name << ": variance explained by 2 components = " << pca.variance_fraction
              << (pca.degenerate ? " (zero total variance)" : "") << '\n';
    return 0;
}

int do_fetch_instructions(const std::string& which, const std::string& data_dir) {
    bool any = false;
    for (const auto& e : dataset_registry()) {
        if (!which.empty() && e.name != which) continue;
        any = true;
        const bool present = resolve_dataset(e.name, data_dir).has_value();
        std::cout << e.name << (present ? "  [present]" : "  [missing]") << "\n  source: " << e.origin
                  << "\n  files:";
        for (const auto& s : e.sources) std::cout << ' ' << (fs::path(data_dir) / s.file).string();
        std::cout << "\n  " << e.preparation << "\n\n";
    }
    if (!any) {
        std::cerr << "unknown dataset '" << which << "'\n";
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contextual bandits with missing rewards"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");
    app.add_option("--config", "Flat key = value file; command-line flags override it");

    DataOptions data;

    RunOptions run;
    auto* run_cmd = app.add_subcommand("run", "Run one configuration for one or more seeds");
    data.add_to(*run_cmd);
    run_cmd->add_option("--dataset", run.dataset, "synthetic, a registered name or a CSV path")->capture_default_str();
    run_cmd->add_option("--algo", run.algo)->check(CLI::IsMember({"linucb", "mlinucb", "random"}))->capture_default_str();
    run_cmd->add_option("--alpha", run.alpha)->capture_default_str();
    run_cmd->add_option("--clusters", run.clusters, "Number of clusters N")->capture_default_str();
    run_cmd->add_option("--neighbors", run.neighbors, "Clusters m used for imputation")->capture_default_str();
    run_cmd->add_option("--missing-rate", run.missing_rate)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    run_cmd->add_option("--seed", run.seed)->capture_default_str();
    run_cmd->add_option("--seeds", run.seeds, "Seeds aggregated into the summary row")->capture_default_str();
    run_cmd->add_option("--subsample", run.subsample, "Cap on rows per run");
    run_cmd->add_option("--passes", run.passes)->capture_default_str();
    run_cmd->add_option("--delta", run.delta, "Bound-trace confidence parameter")->capture_default_str();
    run_cmd->add_option("--sigma", run.sigma, "Bound-trace noise scale")->capture_default_str();
    run_cmd->add_option("--out-dir", run.out_dir)->capture_default_str();
    run_cmd->add_option("--format", run.format)->check(CLI::IsMember({"csv", "ndjson"}))->capture_default_str();
    run_cmd->add_flag("--full-recluster", run.full_recluster, "Recluster all contexts every round");
    run_cmd->add_flag("--fixed-count-mask", run.fixed_count_mask, "Hide exactly round(p*T) rewards");
    run_cmd->add_flag("--bound-trace", run.bound_trace, "Write bound-<cell>.csv");

    SweepCliOptions sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "Cross product of datasets, algorithms and parameters");
    data.add_to(*sweep_cmd);
    sweep_cmd->add_option("--dataset", sw.datasets)->delimiter(',')->capture_default_str();
    sweep_cmd->add_option("--algo", sw.algos)->delimiter(',')->check(CLI::IsMember({"linucb", "mlinucb", "random"}))
        ->capture_default_str();
    sweep_cmd->add_option("--alpha", sw.alphas)->delimiter(',')->capture_default_str();
    sweep_cmd->add_option("--clusters", sw.clusters)->delimiter(',')->capture_default_str();
    sweep_cmd->add_option("--neighbors", sw.neighbors)->delimiter(',')->capture_default_str();
    sweep_cmd->add_option("--missing-rate", sw.missing_rates)->delimiter(',')->capture_default_str();
    sweep_cmd->add_option("--seed", sw.seed, "First seed of every cell")->capture_default_str();
    sweep_cmd->add_option("--seeds", sw.seeds)->capture_default_str();
    sweep_cmd->add_option("--subsample", sw.subsample);
    sweep_cmd->add_option("--parallelism", sw.parallelism)->capture_default_str();
    sweep_cmd->add_option("--out-dir", sw.out_dir)->capture_default_str();
    sweep_cmd->add_option("--format", sw.format)->check(CLI::IsMember({"csv", "ndjson"}))->capture_default_str();
    sweep_cmd->add_flag("--full-recluster", sw.full_recluster);
    sweep_cmd->add_flag("--write-rounds", sw.write_round_logs, "Write per-round logs for every run");
    sweep_cmd->add_option("--series-stride", sw.series_stride, "Row stride of accuracy-series.csv")
        ->capture_default_str();

    PcaOptions pca;
    auto* pca_cmd = app.add_subcommand("pca", "Two-component PCA export joined with cluster ids");
    data.add_to(*pca_cmd);
    pca_cmd->add_option("--dataset", pca.dataset)->capture_default_str();
    pca_cmd->add_option("--clusters", pca.clusters, "Fit this many clusters for the cluster_id column");
    pca_cmd->add_option("--seed", pca.seed)->capture_default_str();
    pca_cmd->add_option("--subsample", pca.subsample);
    pca_cmd->add_option("--out-dir", pca.out_dir)->capture_default_str();

    std::string which;
    std::string fetch_dir = std::getenv("MLINUCB_DATA_DIR") ? std::getenv("MLINUCB_DATA_DIR") : "data";
    auto* fetch_cmd = app.add_subcommand("fetch-instructions", "Where to obtain and how to prepare each dataset");
    fetch_cmd->add_option("dataset", which);
    fetch_cmd->add_option("--data-dir", fetch_dir)->capture_default_str();

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = merge_config(std::move(args));
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*run_cmd) return do_run(run, data);
        if (*sweep_cmd) return do_sweep(sw, data);
        if (*pca_cmd) return do_pca(pca, data);
        if (*fetch_cmd) return do_fetch_instructions(which, fetch_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
