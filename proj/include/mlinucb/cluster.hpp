#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "spd.hpp"

namespace mlinucb {

// Which rule produced an effective reward.
enum class RewardSource {
    observed,    // revealed by the environment
    weighted,    // inverse-distance average over nearest clusters
    global_arm,  // per-arm average over every observed reward
    constant,    // nothing observed yet for this arm
    discarded,   // missing and not imputed (LinUCB, random)
};

inline const char* to_string(RewardSource s) {
    switch (s) {
        case RewardSource::observed: return "observed";
        case RewardSource::weighted: return "weighted";
        case RewardSource::global_arm: return "global_arm";
        case RewardSource::constant: return "constant";
        case RewardSource::discarded: return "discarded";
    }
    return "unknown";
}

inline void require_unit_reward(const char* what, double r) {
    if (!(r >= 0.0 && r <= 1.0)) {
        throw std::invalid_argument(std::string(what) + ": reward " + std::to_string(r) +
                                    " outside [0,1]");
    }
}

struct Centroid {
    Vector mean;
    std::size_t count = 0;  // contexts assigned
    std::vector<double> reward_sum;
    std::vector<std::size_t> reward_count;

    Centroid() = default;
    Centroid(Vector m, std::size_t num_arms, std::size_t n = 0)
        : mean(std::move(m)), count(n), reward_sum(num_arms, 0.0), reward_count(num_arms, 0) {}

    std::optional<double> average(std::size_t arm) const {
        if (reward_count.at(arm) == 0) return std::nullopt;
        return reward_sum[arm] / static_cast<double>(reward_count[arm]);
    }
};

struct ClusterConfig {
    std::size_t num_clusters = 5;
    std::size_t neighbors = 1;  // m
    std::size_t num_arms = 2;
    double zero_dist_epsilon = 1e-9;
    std::uint64_t seed = 0;
    bool full_recluster = false;
    std::size_t lloyd_iterations = 20;

    std::size_t warmup_size() const { return std::max<std::size_t>(num_clusters, 25); }

    void validate() const {
        if (num_clusters == 0) throw std::invalid_argument("ClusterConfig: N must be >= 1");
        if (neighbors == 0 || neighbors > num_clusters) {
            throw std::invalid_argument("ClusterConfig: m must satisfy 1 <= m <= N");
        }
        if (num_arms == 0) throw std::invalid_argument("ClusterConfig: num_arms must be >= 1");
        if (!(zero_dist_epsilon > 0.0)) {
            throw std::invalid_argument("ClusterConfig: zero_dist_epsilon must be positive");
        }
    }
};

struct Assignment {
    std::size_t cluster;
    double distance;
};

struct Imputation {
    double value;
    RewardSource source;
};

// Online k-means over contexts plus per-(cluster, arm) reward statistics.
//
// Contexts are buffered until warmup_size() have arrived, then centroids
// are seeded with k-means++ and refined by Lloyd passes over the buffer.
// After that each context moves its nearest centroid by the running-mean
// rule mean += (x - mean) / n_j. Only revealed rewards enter the
// statistics; imputed ones never do.
class ClusterModel {
public:
    explicit ClusterModel(ClusterConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

    // Model with fixed centroids, skipping warmup.
    static ClusterModel from_centroids(ClusterConfig cfg, std::vector<Centroid> centroids) {
        ClusterModel model(std::move(cfg));
        if (centroids.size() != model.cfg_.num_clusters) {
            throw std::invalid_argument("ClusterModel::from_centroids: expected N centroids");
        }
        for (auto& c : centroids) {
            c.reward_sum.resize(model.cfg_.num_arms, 0.0);
            c.reward_count.resize(model.cfg_.num_arms, 0);
            for (std::size_t k = 0; k < model.cfg_.num_arms; ++k) {
                model.global_sum_[k] += c.reward_sum[k];
                model.global_count_[k] += c.reward_count[k];
            }
        }
        model.centroids_ = std::move(centroids);
        model.initialized_ = true;
        return model;
    }

    const ClusterConfig& config() const { return cfg_; }
    bool initialized() const { return initialized_; }
    const std::vector<Centroid>& centroids() const { return centroids_; }
    std::size_t padded_centroids() const { return padded_; }

    std::optional<double> global_average(std::size_t arm) const {
        if (global_count_.at(arm) == 0) return std::nullopt;
        return global_sum_[arm] / static_cast<double>(global_count_[arm]);
    }

    // Seeds N centroids from the buffer (k-means++, deterministic in
    // cfg.seed) and refines them with Lloyd passes. Duplicate-heavy
    // buffers get perturbed copies to reach N centroids; see padded_centroids().
    void init_centroids(const std::vector<Vector>& buffer) {
        const std::size_t n_clusters = cfg_.num_clusters;
        if (buffer.size() < n_clusters) {
            throw std::invalid_argument("init_centroids: buffer holds fewer than N vectors");
        }
        const auto d = buffer.front().size();
        for (const auto& x : buffer) require_dim("init_centroids", x.size(), static_cast<std::size_t>(d));

        std::mt19937_64 rng(cfg_.seed);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::vector<Vector> seeds;
        seeds.reserve(n_clusters);
        seeds.push_back(buffer[static_cast<std::size_t>(unif(rng) * buffer.size()) % buffer.size()]);

        std::vector<double> d2(buffer.size(), std::numeric_limits<double>::infinity());
        padded_ = 0;
        while (seeds.size() < n_clusters) {
            double total = 0.0;
            for (std::size_t i = 0; i < buffer.size(); ++i) {
                d2[i] = std::min(d2[i], (buffer[i] - seeds.back()).squaredNorm());
                total += d2[i];
            }
            if (total > 0.0) {
                double target = unif(rng) * total;
                std::size_t pick = buffer.size() - 1;
                for (std::size_t i = 0; i < buffer.size(); ++i) {
                    target -= d2[i];
                    if (target < 0.0 && d2[i] > 0.0) {
                        pick = i;
                        break;
                    }
                }
                while (d2[pick] == 0.0) --pick;  // guard the round-off tail
                seeds.push_back(buffer[pick]);
            } else {
                // every buffered vector already coincides with a seed
                std::normal_distribution<double> noise(0.0, 1.0);
                const Vector& base = seeds[padded_ % seeds.size()];
                const double scale = 1e-6 * (1.0 + base.norm());
                Vector v = base;
                for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += scale * noise(rng);
                seeds.push_back(std::move(v));
                ++padded_;
            }
        }

        centroids_.clear();
        for (auto& s : seeds) centroids_.emplace_back(std::move(s), cfg_.num_arms);
        initialized_ = true;
        lloyd(buffer, cfg_.lloyd_iterations);
    }

    // Nearest centroid by Euclidean distance, ties to the lowest index.
    Assignment assign(const VectorRef& x) const {
        if (!initialized_) throw std::logic_error("ClusterModel::assign: model not initialized");
        require_dim("ClusterModel::assign", x.size(), static_cast<std::size_t>(centroids_.front().mean.size()));
        std::size_t best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < centroids_.size(); ++j) {
            const double d2 = (x - centroids_[j].mean).squaredNorm();
            if (d2 < best_d2) {
                best_d2 = d2;
                best = j;
            }
        }
        return {best, std::sqrt(best_d2)};
    }

    // Moves the nearest centroid toward x with learning rate 1/n_j.
    std::size_t minibatch_update(const VectorRef& x) {
        const auto j = assign(x).cluster;
        auto& c = centroids_[j];
        ++c.count;
        c.mean += (x - c.mean) / static_cast<double>(c.count);
        return j;
    }

    void record_reward(std::size_t j, std::size_t k, double r) {
        require_unit_reward("ClusterModel::record_reward", r);
        auto& c = centroids_.at(j);
        if (k >= cfg_.num_arms) throw std::out_of_range("ClusterModel::record_reward: arm index");
        c.reward_sum[k] += r;
        c.reward_count[k] += 1;
    }

    // Feeds one arriving context into the clustering (warmup buffer,
    // incremental update, or full re-clustering in fidelity mode).
    void observe_context(const VectorRef& x) {
        if (!initialized_) {
            warmup_.emplace_back(x);
            if (warmup_.size() >= cfg_.warmup_size()) {
                init_centroids(warmup_);
                if (cfg_.full_recluster) {
                    history_ = std::move(warmup_);
                } else {
                    attribute_pending();
                }
                warmup_.clear();
                warmup_.shrink_to_fit();
                if (cfg_.full_recluster) rebuild_statistics();
            }
            return;
        }
        if (cfg_.full_recluster) {
            history_.emplace_back(x);
            lloyd(history_, cfg_.lloyd_iterations);
            rebuild_statistics();
        } else {
            minibatch_update(x);
        }
    }

    // Records a revealed reward for the most recently observed context x.
    void record_observed(const VectorRef& x, std::size_t k, double r) {
        require_unit_reward("ClusterModel::record_observed", r);
        if (k >= cfg_.num_arms) throw std::out_of_range("ClusterModel::record_observed: arm index");
        global_sum_[k] += r;
        global_count_[k] += 1;
        if (cfg_.full_recluster) {
            const std::size_t idx = (initialized_ ? history_.size() : warmup_.size()) - 1;
            records_.push_back({idx, k, r});
            if (initialized_) record_reward(assign(x).cluster, k, r);
            return;
        }
        if (initialized_) {
            record_reward(assign(x).cluster, k, r);
        } else {
            pending_.push_back({warmup_.size() - 1, k, r});
        }
    }

    // Weighted imputation over the m nearest clusters holding at least one
    // observation for arm k, with fallback to the global per-arm average
    // and then to 0.
    Imputation impute(const VectorRef& x, std::size_t k) const {
        if (k >= cfg_.num_arms) throw std::out_of_range("ClusterModel::impute: arm index");
        if (!initialized_) return {0.0, RewardSource::constant};
        require_dim("ClusterModel::impute", x.size(), static_cast<std::size_t>(centroids_.front().mean.size()));

        struct Candidate {
            double distance;
            std::size_t cluster;
        };
        std::vector<Candidate> cand;
        cand.reserve(centroids_.size());
        for (std::size_t j = 0; j < centroids_.size(); ++j) {
            if (centroids_[j].reward_count[k] == 0) continue;
            cand.push_back({(x - centroids_[j].mean).norm(), j});
        }
        if (cand.empty()) {
            if (auto g = global_average(k)) return {*g, RewardSource::global_arm};
            return {0.0, RewardSource::constant};
        }
        const std::size_t m = std::min(cfg_.neighbors, cand.size());
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(m), cand.end(),
                          [](const Candidate& a, const Candidate& b) {
                              return a.distance < b.distance ||
                                     (a.distance == b.distance && a.cluster < b.cluster);
                          });
        if (m == 1 || cand.front().distance < cfg_.zero_dist_epsilon) {
            return {*centroids_[cand.front().cluster].average(k), RewardSource::weighted};
        }
        double num = 0.0;
        double den = 0.0;
        double lo = 1.0;
        double hi = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double avg = *centroids_[cand[i].cluster].average(k);
            const double w = 1.0 / cand[i].distance;
            num += avg * w;
            den += w;
            lo = std::min(lo, avg);
            hi = std::max(hi, avg);
        }
        // keep the convex-combination guarantee exact under round-off
        return {std::clamp(num / den, lo, hi), RewardSource::weighted};
    }

    // One record per centroid: cluster id, n_j, mean vector, per-arm
    // averages (empty when unobserved).
    void dump_centroids(std::ostream& os) const {
        if (!initialized_) return;
        const auto d = centroids_.front().mean.size();
        os << "cluster,count";
        for (Eigen::Index i = 0; i < d; ++i) os << ",mean_" << i;
        for (std::size_t k = 0; k < cfg_.num_arms; ++k) os << ",avg_arm_" << k;
        os << '\n';
        os.precision(17);
        for (std::size_t j = 0; j < centroids_.size(); ++j) {
            const auto& c = centroids_[j];
            os << j << ',' << c.count;
            for (Eigen::Index i = 0; i < d; ++i) os << ',' << c.mean(i);
            for (std::size_t k = 0; k < cfg_.num_arms; ++k) {
                os << ',';
                if (auto a = c.average(k)) os << *a;
            }
            os << '\n';
        }
    }

private:
    struct RewardRecord {
        std::size_t point;
        std::size_t arm;
        double reward;
    };

    // Batch k-means passes over `points`, warm-started from the current
    // centroids. Empty clusters keep their position. Sets n_j to the final
    // assignment counts.
    void lloyd(const std::vector<Vector>& points, std::size_t max_iter) {
        const auto d = centroids_.front().mean.size();
        std::vector<std::size_t> labels(points.size(), centroids_.size());
        for (std::size_t it = 0; it < std::max<std::size_t>(max_iter, 1); ++it) {
            bool changed = false;
            for (std::size_t i = 0; i < points.size(); ++i) {
                const auto j = assign(points[i]).cluster;
                if (j != labels[i]) {
                    labels[i] = j;
                    changed = true;
                }
            }
            std::vector<Vector> sums(centroids_.size(), Vector::Zero(d));
            std::vector<std::size_t> counts(centroids_.size(), 0);
            for (std::size_t i = 0; i < points.size(); ++i) {
                sums[labels[i]] += points[i];
                ++counts[labels[i]];
            }
            for (std::size_t j = 0; j < centroids_.size(); ++j) {
                centroids_[j].count = counts[j];
                if (counts[j] > 0) centroids_[j].mean = sums[j] / static_cast<double>(counts[j]);
            }
            if (!changed) break;
        }
    }

    void attribute_pending() {
        for (const auto& rec : pending_) {
            record_reward(assign(warmup_[rec.point]).cluster, rec.arm, rec.reward);
        }
        pending_.clear();
    }

    void rebuild_statistics() {
        for (auto& c : centroids_) {
            std::fill(c.reward_sum.begin(), c.reward_sum.end(), 0.0);
            std::fill(c.reward_count.begin(), c.reward_count.end(), 0);
        }
        for (const auto& rec : records_) {
            record_reward(assign(history_[rec.point]).cluster, rec.arm, rec.reward);
        }
    }

    ClusterConfig cfg_;
    bool initialized_ = false;
    std::vector<Centroid> centroids_;
    std::vector<Vector> warmup_;
    std::vector<RewardRecord> pending_;
    std::vector<Vector> history_;       // full_recluster only
    std::vector<RewardRecord> records_; // full_recluster only
    std::vector<double> global_sum_ = std::vector<double>(cfg_.num_arms, 0.0);
    std::vector<std::size_t> global_count_ = std::vector<std::size_t>(cfg_.num_arms, 0);
    std::size_t padded_ = 0;
};

}  // namespace mlinucb
