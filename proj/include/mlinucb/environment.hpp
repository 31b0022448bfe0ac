#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "spd.hpp"

namespace mlinucb {

using ContextMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// splitmix64 finalizer; independent RNG streams from one run seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Labeled multiclass data replayed as a bandit: r(t, k) = 1 iff k == label[t].
struct BanditDataset {
    std::string name;
    ContextMatrix contexts;           // T x d
    std::vector<std::size_t> labels;  // T entries in [0, K)
    std::size_t num_arms = 0;
    std::vector<std::string> class_names;

    std::size_t rows() const { return static_cast<std::size_t>(contexts.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(contexts.cols()); }

    Eigen::Map<const Vector> context(std::size_t t) const {
        return {contexts.data() + static_cast<Eigen::Index>(t) * contexts.cols(), contexts.cols()};
    }

    double reward(std::size_t t, std::size_t arm) const { return labels.at(t) == arm ? 1.0 : 0.0; }

    void validate() const {
        if (labels.size() != rows()) throw std::invalid_argument("BanditDataset: label count != rows");
        if (num_arms < 2) throw std::invalid_argument("BanditDataset: need at least 2 classes");
        for (auto l : labels) {
            if (l >= num_arms) throw std::invalid_argument("BanditDataset: label out of range");
        }
        if (!contexts.allFinite()) throw std::invalid_argument("BanditDataset: non-finite context entry");
    }
};

// Which rounds reveal their reward to the policy.
struct MaskSchedule {
    double missing_rate = 0.0;
    std::uint64_t seed = 0;
    std::vector<bool> reveal;

    // i.i.d. Bernoulli(1 - p) per round.
    static MaskSchedule bernoulli(double p, std::uint64_t seed, std::size_t rounds) {
        check_rate(p);
        MaskSchedule m{p, seed, std::vector<bool>(rounds, true)};
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::size_t t = 0; t < rounds; ++t) m.reveal[t] = !(unif(rng) < p);
        return m;
    }

    // Exactly floor(p * T) masked rounds at shuffled positions.
    static MaskSchedule fixed_count(double p, std::uint64_t seed, std::size_t rounds) {
        check_rate(p);
        MaskSchedule m{p, seed, std::vector<bool>(rounds, true)};
        const auto masked = static_cast<std::size_t>(std::floor(p * static_cast<double>(rounds)));
        std::vector<std::size_t> idx(rounds);
        std::iota(idx.begin(), idx.end(), 0);
        std::mt19937_64 rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; i < masked; ++i) m.reveal[idx[i]] = false;
        return m;
    }

    double realized_missing_fraction() const {
        if (reveal.empty()) return 0.0;
        const auto hidden = std::count(reveal.begin(), reveal.end(), false);
        return static_cast<double>(hidden) / static_cast<double>(reveal.size());
    }

private:
    static void check_rate(double p) {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("MaskSchedule: missing rate outside [0,1]");
    }
};

struct StepResult {
    double reward;
    bool revealed;
    std::size_t best_arm;  // evaluation only
};

inline StepResult step(const BanditDataset& ds, const MaskSchedule& mask, std::size_t t,
                       std::size_t chosen_arm) {
    if (t >= ds.rows()) throw std::out_of_range("step: round index out of range");
    if (mask.reveal.size() != ds.rows()) throw std::invalid_argument("step: mask length != dataset rows");
    if (chosen_arm >= ds.num_arms) throw std::out_of_range("step: arm index out of range");
    return {ds.reward(t, chosen_arm), static_cast<bool>(mask.reveal[t]), ds.labels[t]};
}

inline BanditDataset select_rows(const BanditDataset& ds, const std::vector<std::size_t>& rows) {
    BanditDataset out;
    out.name = ds.name;
    out.num_arms = ds.num_arms;
    out.class_names = ds.class_names;
    out.contexts.resize(static_cast<Eigen::Index>(rows.size()), ds.contexts.cols());
    out.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.contexts.row(static_cast<Eigen::Index>(i)) = ds.contexts.row(static_cast<Eigen::Index>(rows[i]));
        out.labels[i] = ds.labels[rows[i]];
    }
    return out;
}

// Seeded row permutation; context/label pairs stay together.
inline BanditDataset shuffle(const BanditDataset& ds, std::uint64_t seed) {
    std::vector<std::size_t> perm(ds.rows());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    return select_rows(ds, perm);
}

// Seeded sample of at most `cap` rows, kept in original order.
inline BanditDataset subsample(const BanditDataset& ds, std::size_t cap, std::uint64_t seed) {
    if (cap >= ds.rows()) return ds;
    std::vector<std::size_t> perm(ds.rows());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    perm.resize(cap);
    std::sort(perm.begin(), perm.end());
    return select_rows(ds, perm);
}

}  // namespace mlinucb
