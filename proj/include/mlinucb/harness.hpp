#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "cluster.hpp"
#include "environment.hpp"
#include "ingest.hpp"
#include "policy.hpp"
#include "spd.hpp"

namespace mlinucb {

enum class Algorithm { linucb, mlinucb, random };

inline const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::linucb: return "linucb";
        case Algorithm::mlinucb: return "mlinucb";
        case Algorithm::random: return "random";
    }
    return "unknown";
}

inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "linucb") return Algorithm::linucb;
    if (s == "mlinucb") return Algorithm::mlinucb;
    if (s == "random") return Algorithm::random;
    throw std::invalid_argument("unknown algorithm '" + s + "' (expected linucb, mlinucb or random)");
}

struct SyntheticParams {
    std::size_t rows = 5000;
    std::size_t dim = 10;
    std::size_t arms = 3;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

// Where a run's data comes from: a delimited file or the linear generator.
struct DataSource {
    std::string name = "synthetic";
    std::optional<DatasetSpec> file;
    SyntheticParams synthetic;

    static DataSource from_file(DatasetSpec spec) {
        DataSource s;
        s.name = spec.name;
        s.file = std::move(spec);
        return s;
    }
    static DataSource from_synthetic(SyntheticParams p) {
        DataSource s;
        s.synthetic = p;
        return s;
    }

    std::string key() const {
        if (file) return file->path.string() + (file->scale_features ? "#scaled" : "");
        return "synthetic:" + std::to_string(synthetic.rows) + "x" + std::to_string(synthetic.dim) + "x" +
               std::to_string(synthetic.arms) + ":" + std::to_string(synthetic.noise_sigma) + ":" +
               std::to_string(synthetic.seed);
    }
};

inline BanditDataset load_dataset(const DataSource& src, LoadReport* report = nullptr) {
    if (src.file) return load_csv(*src.file, report);
    const auto& p = src.synthetic;
    return synth_linear(p.rows, p.dim, p.arms, p.noise_sigma, p.seed).dataset;
}

struct ExperimentConfig {
    DataSource data;
    Algorithm algorithm = Algorithm::mlinucb;
    double alpha = 0.25;
    std::size_t clusters = 5;   // N
    std::size_t neighbors = 1;  // m
    double missing_rate = 0.0;
    std::uint64_t seed = 0;
    std::optional<std::size_t> subsample;
    std::size_t passes = 1;
    double delta = 0.05;
    double sigma = 1.0;
    bool full_recluster = false;
    bool fixed_count_mask = false;

    bool uses_clusters() const { return algorithm == Algorithm::mlinucb; }

    void validate() const {
        if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("config: alpha must be >= 0");
        if (!(missing_rate >= 0.0 && missing_rate <= 1.0)) {
            throw std::invalid_argument("config: missing_rate must lie in [0,1]");
        }
        if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("config: delta must lie in (0,1)");
        if (!(sigma > 0.0)) throw std::invalid_argument("config: sigma must be positive");
        if (passes == 0) throw std::invalid_argument("config: passes must be >= 1");
        if (subsample && *subsample == 0) throw std::invalid_argument("config: subsample must be >= 1");
        if (uses_clusters()) {
            if (clusters == 0) throw std::invalid_argument("config: clusters must be >= 1");
            if (neighbors == 0 || neighbors > clusters) {
                throw std::invalid_argument("config: neighbors must satisfy 1 <= m <= N");
            }
        }
    }

    // File-name friendly identifier of the cell and seed.
    std::string cell_name() const {
        char buf[160];
        if (uses_clusters()) {
            std::snprintf(buf, sizeof buf, "%s_%s_N%zu_m%zu_a%g_p%g_s%llu", data.name.c_str(), to_string(algorithm),
                          clusters, neighbors, alpha, missing_rate, static_cast<unsigned long long>(seed));
        } else {
            std::snprintf(buf, sizeof buf, "%s_%s_a%g_p%g_s%llu", data.name.c_str(), to_string(algorithm), alpha,
                          missing_rate, static_cast<unsigned long long>(seed));
        }
        return buf;
    }
};

struct RoundLog {
    std::size_t t = 0;
    std::size_t chosen_arm = 0;
    std::size_t best_arm = 0;
    bool revealed = true;
    double effective_reward = 0.0;
    RewardSource source = RewardSource::observed;
    bool updated = false;
    double cumulative_accuracy = 0.0;
    double logdet_A = 0.0;  // sum over arms
    double logdet_S = 0.0;  // sum over arms
};

struct Summary {
    ExperimentConfig config;
    std::size_t rounds = 0;
    std::size_t correct = 0;
    double total_average_accuracy = 0.0;
    std::size_t cumulative_regret = 0;
    double missing_fraction_realized = 0.0;
    double wall_time_seconds = 0.0;
    std::map<std::string, std::size_t> reward_sources;
};

struct RunResult {
    Summary summary;
    std::vector<RoundLog> rounds;
    std::optional<ClusterModel> clusters;  // final state, mlinucb only
};

using RoundSink = std::function<void(const RoundLog&)>;

// Replays `base` under cfg. Deterministic in (cfg, cfg.seed): the seed
// drives subsampling, shuffling, masking, cluster seeding and the random
// policy through independent derived streams.
//
// S_k (identity plus the outer products of arm k's missing-reward
// contexts) is tracked for MLinUCB only. LinUCB never folds a missing
// round into A_k, so its S_k stays the identity.
inline RunResult run_experiment(const BanditDataset& base, const ExperimentConfig& cfg,
                                const RoundSink& sink = {}, bool keep_rounds = true) {
    cfg.validate();
    base.validate();
    const auto t0 = std::chrono::steady_clock::now();

    BanditDataset ds = cfg.subsample ? subsample(base, *cfg.subsample, derive_seed(cfg.seed, 1)) : base;
    const std::size_t per_pass = ds.rows();
    const std::size_t total = per_pass * cfg.passes;
    const MaskSchedule mask = cfg.fixed_count_mask
                                  ? MaskSchedule::fixed_count(cfg.missing_rate, derive_seed(cfg.seed, 3), total)
                                  : MaskSchedule::bernoulli(cfg.missing_rate, derive_seed(cfg.seed, 3), total);

    PolicyConfig pcfg{ds.num_arms, ds.dim(), cfg.alpha};
    pcfg.validate();
    std::vector<ArmModel> arms;
    if (cfg.algorithm != Algorithm::random) arms = make_arms(pcfg);

    std::optional<ClusterModel> clusters;
    std::vector<SpdState> missing_design;
    if (cfg.uses_clusters()) {
        ClusterConfig ccfg;
        ccfg.num_clusters = cfg.clusters;
        ccfg.neighbors = cfg.neighbors;
        ccfg.num_arms = ds.num_arms;
        ccfg.seed = derive_seed(cfg.seed, 4);
        ccfg.full_recluster = cfg.full_recluster;
        clusters.emplace(ccfg);
        missing_design.assign(ds.num_arms, SpdState::identity(ds.dim()));
    }
    std::mt19937_64 random_rng(derive_seed(cfg.seed, 5));
    std::uniform_int_distribution<std::size_t> random_arm(0, ds.num_arms - 1);

    RunResult result;
    if (keep_rounds) result.rounds.reserve(total);
    Summary& sum = result.summary;
    sum.config = cfg;

    double logdet_a = 0.0;
    double logdet_s = 0.0;
    std::size_t correct = 0;
    std::size_t t = 0;
    for (std::size_t pass = 0; pass < cfg.passes; ++pass) {
        const BanditDataset order = shuffle(ds, derive_seed(cfg.seed, 2 + 1000 * pass));
        // per-pass view of the mask
        for (std::size_t i = 0; i < per_pass; ++i, ++t) {
            const auto x = order.context(i);
            std::size_t best_arm = 0;
            auto feedback = [&](std::size_t arm) {
                const bool revealed = mask.reveal[t];
                best_arm = order.labels[i];
                return Feedback{order.reward(i, arm), revealed};
            };

            RoundLog log;
            log.t = t;
            RoundDecision dec;
            switch (cfg.algorithm) {
                case Algorithm::linucb:
                    dec = linucb_round(arms, x, feedback, pcfg);
                    break;
                case Algorithm::mlinucb:
                    dec = mlinucb_round(arms, *clusters, x, feedback, pcfg);
                    if (!dec.revealed) missing_design[dec.arm].rank1_update(x);
                    break;
                case Algorithm::random: {
                    dec.arm = random_arm(random_rng);
                    const Feedback fb = feedback(dec.arm);
                    dec.revealed = fb.revealed;
                    dec.effective_reward = fb.revealed ? fb.reward : 0.0;
                    dec.source = fb.revealed ? RewardSource::observed : RewardSource::discarded;
                    break;
                }
            }

            if (dec.updated) {
                logdet_a = 0.0;
                for (const auto& a : arms) logdet_a += a.design().logdet();
                if (!dec.revealed && cfg.uses_clusters()) {
                    logdet_s = 0.0;
                    for (const auto& s : missing_design) logdet_s += s.logdet();
                }
            }

            if (dec.arm == best_arm) ++correct;
            log.chosen_arm = dec.arm;
            log.best_arm = best_arm;
            log.revealed = dec.revealed;
            log.effective_reward = dec.effective_reward;
            log.source = dec.source;
            log.updated = dec.updated;
            log.cumulative_accuracy = static_cast<double>(correct) / static_cast<double>(t + 1);
            log.logdet_A = logdet_a;
            log.logdet_S = logdet_s;
            ++sum.reward_sources[to_string(dec.source)];
            if (sink) sink(log);
            if (keep_rounds) result.rounds.push_back(log);
        }
    }

    sum.rounds = total;
    sum.correct = correct;
    sum.total_average_accuracy = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
    sum.cumulative_regret = total - correct;
    sum.missing_fraction_realized = mask.realized_missing_fraction();
    sum.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (clusters) result.clusters = std::move(clusters);
    return result;
}

inline RunResult run_experiment(const ExperimentConfig& cfg, const RoundSink& sink = {}, bool keep_rounds = true) {
    cfg.validate();
    return run_experiment(load_dataset(cfg.data), cfg, sink, keep_rounds);
}

// Data-dependent pieces of the MLinUCB regret bound after t rounds:
//   delta_logdet  = log det A - log det S
//   confidence    = sigma * sqrt(d * (delta_logdet / 2 - log delta))
//   theta_term    = sigma * |theta| / sqrt(phi), with |theta| <= 1, phi = 1
//   bound         = (confidence + theta_term) * sqrt(18 t delta_logdet)
// phi has no assigned value, so theta_term is unnormalized.
struct BoundTerms {
    std::size_t t = 0;  // rounds completed
    double delta_logdet = 0.0;
    double confidence = 0.0;
    double theta_term = 0.0;
    double bound = 0.0;
    bool phi_unnormalized = true;
};

struct BoundParams {
    double delta = 0.05;
    double sigma = 1.0;
    double theta_norm = 1.0;
    double phi = 1.0;
};

inline BoundTerms bound_terms(std::size_t t, double logdet_a, double logdet_s, std::size_t dim,
                              const BoundParams& p = {}) {
    BoundTerms out;
    out.t = t;
    out.delta_logdet = std::max(0.0, logdet_a - logdet_s);
    const double inner = static_cast<double>(dim) * (0.5 * out.delta_logdet - std::log(p.delta));
    out.confidence = p.sigma * std::sqrt(std::max(0.0, inner));
    out.theta_term = p.sigma * p.theta_norm / std::sqrt(p.phi);
    out.bound = (out.confidence + out.theta_term) * std::sqrt(18.0 * static_cast<double>(t) * out.delta_logdet);
    return out;
}

inline std::vector<BoundTerms> bound_trace(const std::vector<RoundLog>& logs, const ExperimentConfig& cfg,
                                           std::size_t dim) {
    BoundParams p;
    p.delta = cfg.delta;
    p.sigma = cfg.sigma;
    std::vector<BoundTerms> out;
    out.reserve(logs.size());
    for (const auto& log : logs) out.push_back(bound_terms(log.t + 1, log.logdet_A, log.logdet_S, dim, p));
    return out;
}

// ---------------------------------------------------------------------------
// sweeps

struct CellResult {
    ExperimentConfig config;  // seed = first seed of the cell
    std::size_t seeds = 0;
    std::vector<Summary> runs;
    double acc_mean = 0.0;
    double acc_std = 0.0;  // sample standard deviation, 0 for a single seed
    double regret_mean = 0.0;
    std::vector<double> accuracy_curve;  // mean cumulative accuracy per round
    std::string error;

    bool ok() const { return error.empty(); }
};

struct SweepOptions {
    std::size_t seeds = 1;
    std::size_t parallelism = 1;
    bool keep_curves = false;
    // called once per finished run (from worker threads, serialized)
    std::function<void(const ExperimentConfig&, const RunResult&)> on_run;
};

// Runs every cell for seeds cfg.seed, cfg.seed+1, ... and aggregates.
// Each run is independent; results are gathered in grid order so output
// does not depend on the parallelism level. A failing cell records its
// error and the sweep carries on.
inline std::vector<CellResult> sweep(const std::vector<ExperimentConfig>& grid, const SweepOptions& opt) {
    std::vector<CellResult> cells(grid.size());
    if (grid.empty()) return cells;
    const std::size_t seeds = std::max<std::size_t>(opt.seeds, 1);

    std::map<std::string, std::shared_ptr<const BanditDataset>> cache;
    std::vector<std::shared_ptr<const BanditDataset>> data(grid.size());
    for (std::size_t c = 0; c < grid.size(); ++c) {
        cells[c].config = grid[c];
        cells[c].seeds = seeds;
        try {
            grid[c].validate();
            const auto key = grid[c].data.key();
            auto it = cache.find(key);
            if (it == cache.end()) {
                it = cache.emplace(key, std::make_shared<const BanditDataset>(load_dataset(grid[c].data))).first;
            }
            data[c] = it->second;
        } catch (const std::exception& e) {
            cells[c].error = e.what();
        }
    }

    struct Job {
        std::size_t cell;
        std::size_t seed_index;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        if (!cells[c].ok()) continue;
        for (std::size_t s = 0; s < seeds; ++s) jobs.push_back({c, s});
    }
    std::vector<std::optional<Summary>> summaries(jobs.size());
    std::vector<std::vector<double>> curves(jobs.size());
    std::vector<std::string> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex callback_mutex;

    auto worker = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            const auto& job = jobs[j];
            ExperimentConfig cfg = grid[job.cell];
            cfg.seed += job.seed_index;
            try {
                RunResult r = run_experiment(*data[job.cell], cfg, {}, opt.keep_curves || bool(opt.on_run));
                if (opt.keep_curves) {
                    curves[j].reserve(r.rounds.size());
                    for (const auto& log : r.rounds) curves[j].push_back(log.cumulative_accuracy);
                }
                if (opt.on_run) {
                    std::lock_guard lock(callback_mutex);
                    opt.on_run(cfg, r);
                }
                summaries[j] = std::move(r.summary);
            } catch (const std::exception& e) {
                errors[j] = e.what();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(opt.parallelism, 1, jobs.size() == 0 ? 1 : jobs.size());
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    }

    for (std::size_t j = 0; j < jobs.size(); ++j) {
        auto& cell = cells[jobs[j].cell];
        if (!errors[j].empty()) {
            if (cell.error.empty()) cell.error = errors[j];
            continue;
        }
        cell.runs.push_back(*summaries[j]);
        if (opt.keep_curves) {
            auto& curve = cell.accuracy_curve;
            if (curve.empty()) curve.assign(curves[j].size(), 0.0);
            for (std::size_t i = 0; i < curve.size() && i < curves[j].size(); ++i) curve[i] += curves[j][i];
        }
    }
    for (auto& cell : cells) {
        if (!cell.ok() || cell.runs.empty()) continue;
        const auto n = static_cast<double>(cell.runs.size());
        double acc = 0.0;
        double regret = 0.0;
        for (const auto& s : cell.runs) {
            acc += s.total_average_accuracy;
            regret += static_cast<double>(s.cumulative_regret);
        }
        cell.acc_mean = acc / n;
        cell.regret_mean = regret / n;
        double ss = 0.0;
        for (const auto& s : cell.runs) ss += (s.total_average_accuracy - cell.acc_mean) * (s.total_average_accuracy - cell.acc_mean);
        cell.acc_std = cell.runs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        for (auto& v : cell.accuracy_curve) v /= n;
    }
    return cells;
}

// Cross product for algorithm-by-missing-rate comparison tables. LinUCB and random
// cells ignore the cluster axes and appear once per remaining combination.
struct SweepGrid {
    std::vector<DataSource> datasets;
    std::vector<Algorithm> algorithms{Algorithm::linucb, Algorithm::mlinucb};
    std::vector<double> alphas{0.25};
    std::vector<std::size_t> clusters{2, 5, 10, 15, 20};
    std::vector<std::size_t> neighbors{1};
    std::vector<double> missing_rates{0.1, 0.5, 0.75};
    ExperimentConfig base;

    std::vector<ExperimentConfig> expand() const {
        std::vector<ExperimentConfig> out;
        for (const auto& rate : missing_rates) {
            for (const auto& ds : datasets) {
                for (const auto& alpha : alphas) {
                    for (const auto algo : algorithms) {
                        ExperimentConfig cfg = base;
                        cfg.data = ds;
                        cfg.algorithm = algo;
                        cfg.alpha = alpha;
                        cfg.missing_rate = rate;
                        if (algo != Algorithm::mlinucb) {
                            out.push_back(cfg);
                            continue;
                        }
                        for (auto n : clusters) {
                            for (auto m : neighbors) {
                                if (m > n) continue;
                                cfg.clusters = n;
                                cfg.neighbors = m;
                                out.push_back(cfg);
                            }
                        }
                    }
                }
            }
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// output

namespace detail {
inline std::string fmt_double(double v, const char* spec = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}
}  // namespace detail

inline void write_summary_csv(std::ostream& os, const std::vector<CellResult>& cells) {
    os << "dataset,algo,N,m,alpha,missing_rate,seeds,acc_mean,acc_std,regret_mean\n";
    for (const auto& c : cells) {
        const auto& cfg = c.config;
        os << cfg.data.name << ',' << to_string(cfg.algorithm) << ',';
        if (cfg.uses_clusters()) os << cfg.clusters << ',' << cfg.neighbors;
        else os << ',';
        os << ',' << detail::fmt_double(cfg.alpha, "%g") << ',' << detail::fmt_double(cfg.missing_rate, "%g") << ','
           << c.runs.size() << ',';
        if (c.ok()) {
            os << detail::fmt_double(c.acc_mean) << ',' << detail::fmt_double(c.acc_std) << ','
               << detail::fmt_double(c.regret_mean, "%.2f");
        } else {
            os << ",,";
        }
        os << '\n';
    }
}

inline std::string algorithm_label(const ExperimentConfig& cfg) {
    switch (cfg.algorithm) {
        case Algorithm::linucb: return "LINUCB";
        case Algorithm::random: return "RANDOM";
        case Algorithm::mlinucb: {
            std::string s = "MLINUCB - N=" + std::to_string(cfg.clusters);
            if (cfg.neighbors != 1) s += " m=" + std::to_string(cfg.neighbors);
            return s;
        }
    }
    return "?";
}

// Accuracy matrix: one block per (missing rate, alpha), rows are
// algorithms, columns datasets.
inline void write_accuracy_table(std::ostream& os, const std::vector<CellResult>& cells) {
    std::vector<std::string> datasets;
    std::vector<std::pair<double, double>> panels;  // (missing rate, alpha)
    std::vector<std::string> rows;
    for (const auto& c : cells) {
        const auto& cfg = c.config;
        if (std::find(datasets.begin(), datasets.end(), cfg.data.name) == datasets.end()) datasets.push_back(cfg.data.name);
        const std::pair<double, double> panel{cfg.missing_rate, cfg.alpha};
        if (std::find(panels.begin(), panels.end(), panel) == panels.end()) panels.push_back(panel);
        const auto label = algorithm_label(cfg);
        if (std::find(rows.begin(), rows.end(), label) == rows.end()) rows.push_back(label);
    }
    os << "missing_rate,alpha,algorithm";
    for (const auto& d : datasets) os << ',' << d;
    os << '\n';
    for (const auto& [rate, alpha] : panels) {
        for (const auto& row : rows) {
            bool any = false;
            std::string line = detail::fmt_double(rate, "%g") + "," + detail::fmt_double(alpha, "%g") + "," + row;
            for (const auto& d : datasets) {
                line += ',';
                for (const auto& c : cells) {
                    if (c.config.missing_rate == rate && c.config.alpha == alpha && c.config.data.name == d &&
                        algorithm_label(c.config) == row && c.ok()) {
                        line += detail::fmt_double(c.acc_mean, "%.3f");
                        any = true;
                        break;
                    }
                }
            }
            if (any) os << line << '\n';
        }
    }
}

// Mean cumulative-accuracy curves, sampled every `stride` rounds (and at
// the last round), for alpha and N comparisons.
inline void write_accuracy_series(std::ostream& os, const std::vector<CellResult>& cells, std::size_t stride = 1) {
    stride = std::max<std::size_t>(stride, 1);
    os << "dataset,algo,N,m,alpha,missing_rate,t,cumulative_accuracy\n";
    for (const auto& c : cells) {
        const auto& cfg = c.config;
        const auto& curve = c.accuracy_curve;
        for (std::size_t i = 0; i < curve.size(); ++i) {
            if ((i + 1) % stride != 0 && i + 1 != curve.size()) continue;
            os << cfg.data.name << ',' << to_string(cfg.algorithm) << ',';
            if (cfg.uses_clusters()) os << cfg.clusters << ',' << cfg.neighbors;
            else os << ',';
            os << ',' << detail::fmt_double(cfg.alpha, "%g") << ',' << detail::fmt_double(cfg.missing_rate, "%g") << ','
               << (i + 1) << ',' << detail::fmt_double(curve[i]) << '\n';
        }
    }
}

inline nlohmann::ordered_json round_to_json(const RoundLog& log) {
    nlohmann::ordered_json j;
    j["t"] = log.t;
    j["chosen_arm"] = log.chosen_arm;
    j["best_arm"] = log.best_arm;
    j["revealed"] = log.revealed;
    j["effective_reward"] = log.effective_reward;
    j["fallback_level"] = to_string(log.source);
    j["cumulative_accuracy"] = log.cumulative_accuracy;
    j["logdet_A"] = log.logdet_A;
    j["logdet_S"] = log.logdet_S;
    return j;
}

inline void write_rounds_ndjson(std::ostream& os, const std::vector<RoundLog>& logs) {
    for (const auto& log : logs) os << round_to_json(log).dump() << '\n';
}

inline void write_rounds_csv(std::ostream& os, const std::vector<RoundLog>& logs) {
    os << "t,chosen_arm,best_arm,revealed,effective_reward,fallback_level,cumulative_accuracy,logdet_A,logdet_S\n";
    for (const auto& log : logs) {
        os << log.t << ',' << log.chosen_arm << ',' << log.best_arm << ',' << (log.revealed ? 1 : 0) << ','
           << detail::fmt_double(log.effective_reward, "%.17g") << ',' << to_string(log.source) << ','
           << detail::fmt_double(log.cumulative_accuracy, "%.17g") << ','
           << detail::fmt_double(log.logdet_A, "%.17g") << ',' << detail::fmt_double(log.logdet_S, "%.17g") << '\n';
    }
}

inline void write_bound_trace_csv(std::ostream& os, const std::vector<BoundTerms>& trace) {
    os << "t,delta_logdet,confidence,theta_term_phi1,bound\n";
    for (const auto& b : trace) {
        os << b.t << ',' << detail::fmt_double(b.delta_logdet, "%.17g") << ','
           << detail::fmt_double(b.confidence, "%.17g") << ',' << detail::fmt_double(b.theta_term, "%.17g") << ','
           << detail::fmt_double(b.bound, "%.17g") << '\n';
    }
}

// Nearest-centroid id for every row; -1 when no clustering is available.
inline std::vector<long> cluster_labels(const BanditDataset& ds, const ClusterModel* model) {
    std::vector<long> out(ds.rows(), -1);
    if (model == nullptr || !model->initialized()) return out;
    for (std::size_t t = 0; t < ds.rows(); ++t) out[t] = static_cast<long>(model->assign(ds.context(t)).cluster);
    return out;
}

// Batch k-means over the whole dataset for visualization exports.
inline ClusterModel fit_clusters(const BanditDataset& ds, std::size_t n_clusters, std::uint64_t seed) {
    ClusterConfig cfg;
    cfg.num_clusters = n_clusters;
    cfg.num_arms = ds.num_arms;
    cfg.seed = seed;
    ClusterModel model(cfg);
    std::vector<Vector> rows;
    rows.reserve(ds.rows());
    for (std::size_t t = 0; t < ds.rows(); ++t) rows.emplace_back(ds.context(t));
    model.init_centroids(rows);
    return model;
}

// Opens a file for writing, failing before any computation if the
// destination is unwritable.
inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

inline void ensure_writable_dir(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto probe = dir / ".write-probe";
    {
        std::ofstream out(probe);
        if (!out) throw std::runtime_error("output directory not writable: " + dir.string());
    }
    std::filesystem::remove(probe);
}

// ---------------------------------------------------------------------------
// flat key = value configuration

inline std::map<std::string, std::string> parse_config_text(std::istream& in) {
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto body = std::string(detail::trim(line));
        if (body.empty()) continue;
        const auto eq = body.find_first_of("=:");
        if (eq == std::string::npos) {
            throw std::runtime_error("config line " + std::to_string(n) + ": expected key = value");
        }
        auto key = std::string(detail::trim(std::string_view(body).substr(0, eq)));
        auto value = std::string(detail::trim(std::string_view(body).substr(eq + 1)));
        std::replace(key.begin(), key.end(), '-', '_');
        if (key.empty()) throw std::runtime_error("config line " + std::to_string(n) + ": empty key");
        out[key] = value;
    }
    return out;
}

inline std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    return parse_config_text(in);
}

}  // namespace mlinucb
