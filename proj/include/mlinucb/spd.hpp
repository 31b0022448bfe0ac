#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace mlinucb {

using Vector = Eigen::VectorXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

inline void require_dim(const char* what, Eigen::Index got, std::size_t want) {
    if (static_cast<std::size_t>(got) != want) {
        throw std::invalid_argument(std::string(what) + ": dimension mismatch (got " +
                                    std::to_string(got) + ", expected " +
                                    std::to_string(want) + ")");
    }
}

// Symmetric positive-definite matrix A = L L^T kept in Cholesky form.
//
// Starts at the identity and grows by rank-1 terms x x^T, so every
// eigenvalue stays >= 1 and logdet() >= 0. Each update is O(d^2). The
// exact running sum of A is kept alongside L and the factor is rebuilt
// from it every kRefactorInterval updates to bound round-off drift.
class SpdState {
public:
    static constexpr std::size_t kRefactorInterval = 1000;

    static SpdState identity(std::size_t d) {
        if (d == 0) throw std::invalid_argument("SpdState: dimension must be >= 1");
        return SpdState(d);
    }

    std::size_t dim() const { return dim_; }
    std::size_t update_count() const { return updates_; }

    // Lower-triangular factor L with positive diagonal.
    const Eigen::MatrixXd& cholesky_factor() const { return chol_; }

    // Reconstructed A = L L^T.
    Eigen::MatrixXd matrix() const { return chol_ * chol_.transpose(); }

    // Accumulated A (exact sum of identity and outer products).
    Eigen::MatrixXd accumulated() const {
        return accum_.selfadjointView<Eigen::Lower>();
    }

    // A <- A + x x^T
    void rank1_update(const VectorRef& x) {
        require_dim("SpdState::rank1_update", x.size(), dim_);
        if (!x.allFinite()) {
            throw std::invalid_argument("SpdState::rank1_update: non-finite entry in x");
        }
        accum_.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0);

        Vector w = x;
        const auto n = static_cast<Eigen::Index>(dim_);
        for (Eigen::Index k = 0; k < n; ++k) {
            const double lkk = chol_(k, k);
            const double wk = w(k);
            if (wk == 0.0) continue;
            const double r = std::hypot(lkk, wk);
            const double c = r / lkk;
            const double s = wk / lkk;
            chol_(k, k) = r;
            const Eigen::Index rest = n - k - 1;
            if (rest > 0) {
                auto col = chol_.col(k).tail(rest);
                auto tail = w.tail(rest);
                col = (col + s * tail) / c;
                tail = c * tail - s * col;
            }
        }

        ++updates_;
        if (updates_ % kRefactorInterval == 0) refactor();
        refresh_logdet();
    }

    // A^{-1} v by forward/backward substitution.
    Vector solve(const VectorRef& v) const {
        require_dim("SpdState::solve", v.size(), dim_);
        Vector y = chol_.triangularView<Eigen::Lower>().solve(v);
        chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(y);
        return y;
    }

    // x^T A^{-1} x = |L^{-1} x|^2
    double quad_form(const VectorRef& x) const {
        require_dim("SpdState::quad_form", x.size(), dim_);
        const Vector y = chol_.triangularView<Eigen::Lower>().solve(x);
        return y.squaredNorm();
    }

    double logdet() const { return logdet_; }

    // Rebuilds L from the accumulated A.
    void refactor() {
        Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(accum_);
        if (llt.info() == Eigen::Success) {
            chol_ = llt.matrixL();
            refresh_logdet();
        }
    }

private:
    explicit SpdState(std::size_t d)
        : dim_(d),
          chol_(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d),
                                          static_cast<Eigen::Index>(d))),
          accum_(chol_) {}

    void refresh_logdet() {
        logdet_ = 2.0 * chol_.diagonal().array().log().sum();
    }

    std::size_t dim_;
    Eigen::MatrixXd chol_;
    Eigen::MatrixXd accum_;  // lower triangle significant
    double logdet_ = 0.0;
    std::size_t updates_ = 0;
};

}  // namespace mlinucb
