#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "cluster.hpp"
#include "spd.hpp"

namespace mlinucb {

struct PolicyConfig {
    std::size_t num_arms = 2;
    std::size_t dim = 1;
    double alpha = 0.25;

    void validate() const {
        if (num_arms < 2) throw std::invalid_argument("PolicyConfig: need at least 2 arms");
        if (dim == 0) throw std::invalid_argument("PolicyConfig: dim must be >= 1");
        if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
            throw std::invalid_argument("PolicyConfig: alpha must be finite and >= 0");
        }
    }
};

// Per-arm online ridge regression: A = I + sum x x^T, b = sum r x.
class ArmModel {
public:
    ArmModel(std::size_t arm_id, std::size_t dim)
        : arm_id_(arm_id), design_(SpdState::identity(dim)), b_(Vector::Zero(static_cast<Eigen::Index>(dim))),
          theta_(b_) {}

    // Restores an arm from an explicit design matrix and response vector.
    static ArmModel from_state(std::size_t arm_id, SpdState design, Vector b) {
        require_dim("ArmModel::from_state", b.size(), design.dim());
        ArmModel arm(arm_id, design.dim());
        arm.design_ = std::move(design);
        arm.b_ = std::move(b);
        arm.theta_ = arm.design_.solve(arm.b_);
        return arm;
    }

    std::size_t arm_id() const { return arm_id_; }
    std::size_t dim() const { return design_.dim(); }
    const SpdState& design() const { return design_; }
    const Vector& response() const { return b_; }
    // A^{-1} b, refreshed on every update.
    const Vector& theta() const { return theta_; }

    void update(const VectorRef& x, double r) {
        require_unit_reward("ArmModel::update", r);
        require_dim("ArmModel::update", x.size(), dim());
        design_.rank1_update(x);
        if (r != 0.0) b_ += r * x;
        theta_ = design_.solve(b_);
    }

private:
    std::size_t arm_id_;
    SpdState design_;
    Vector b_;
    Vector theta_;
};

inline std::vector<ArmModel> make_arms(const PolicyConfig& cfg) {
    cfg.validate();
    std::vector<ArmModel> arms;
    arms.reserve(cfg.num_arms);
    for (std::size_t k = 0; k < cfg.num_arms; ++k) arms.emplace_back(k, cfg.dim);
    return arms;
}

using ScoreVector = std::vector<double>;

// p_k = theta_k . x + alpha * sqrt(x^T A_k^{-1} x)
inline ScoreVector score_arms(const std::vector<ArmModel>& arms, const VectorRef& x,
                              const PolicyConfig& cfg) {
    require_dim("score_arms", x.size(), cfg.dim);
    if (arms.size() != cfg.num_arms) {
        throw std::invalid_argument("score_arms: arm count does not match config");
    }
    ScoreVector scores(arms.size());
    for (std::size_t k = 0; k < arms.size(); ++k) {
        require_dim("score_arms", static_cast<Eigen::Index>(arms[k].dim()), cfg.dim);
        const double exploit = arms[k].theta().dot(x);
        const double bonus = cfg.alpha == 0.0 ? 0.0 : cfg.alpha * std::sqrt(arms[k].design().quad_form(x));
        scores[k] = exploit + bonus;
    }
    return scores;
}

// Argmax with ties broken toward the lowest index.
inline std::size_t select_arm(const ScoreVector& scores) {
    if (scores.empty()) throw std::invalid_argument("select_arm: empty score vector");
    std::size_t best = 0;
    for (std::size_t k = 0; k < scores.size(); ++k) {
        if (std::isnan(scores[k])) throw std::invalid_argument("select_arm: NaN score");
        if (scores[k] > scores[best]) best = k;
    }
    return best;
}

inline void update_arm(ArmModel& arm, const VectorRef& x, double r) { arm.update(x, r); }

// What the environment hands back for the chosen arm. The true best arm
// is deliberately absent.
struct Feedback {
    double reward = 0.0;
    bool revealed = true;
};

using FeedbackFn = std::function<Feedback(std::size_t chosen_arm)>;

struct RoundDecision {
    std::size_t arm = 0;
    double effective_reward = 0.0;
    bool revealed = true;
    RewardSource source = RewardSource::observed;
    // whether the chosen arm's model was updated this round
    bool updated = false;
};

// One LinUCB round. Rounds with a missing reward leave the arms untouched.
inline RoundDecision linucb_round(std::vector<ArmModel>& arms, const VectorRef& x,
                                  const FeedbackFn& feedback, const PolicyConfig& cfg) {
    RoundDecision out;
    out.arm = select_arm(score_arms(arms, x, cfg));
    const Feedback fb = feedback(out.arm);
    out.revealed = fb.revealed;
    if (fb.revealed) {
        update_arm(arms[out.arm], x, fb.reward);
        out.effective_reward = fb.reward;
        out.updated = true;
    } else {
        out.source = RewardSource::discarded;
    }
    return out;
}

// One MLinUCB round: cluster x, pick the arm, then update it with the
// revealed reward or, when missing, with the cluster-imputed one.
inline RoundDecision mlinucb_round(std::vector<ArmModel>& arms, ClusterModel& clusters,
                                   const VectorRef& x, const FeedbackFn& feedback,
                                   const PolicyConfig& cfg) {
    clusters.observe_context(x);
    RoundDecision out;
    out.arm = select_arm(score_arms(arms, x, cfg));
    const Feedback fb = feedback(out.arm);
    out.revealed = fb.revealed;
    if (fb.revealed) {
        require_unit_reward("mlinucb_round", fb.reward);
        clusters.record_observed(x, out.arm, fb.reward);
        out.effective_reward = fb.reward;
        out.source = RewardSource::observed;
    } else {
        const Imputation g = clusters.impute(x, out.arm);
        out.effective_reward = g.value;
        out.source = g.source;
    }
    update_arm(arms[out.arm], x, out.effective_reward);
    out.updated = true;
    return out;
}

}  // namespace mlinucb
