#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "barylab/errors.hpp"
#include "barylab/logsumexp.hpp"

namespace barylab {

namespace detail {

inline void require_finite(const Mat& m, const char* what) {
    if (!m.allFinite()) throw DomainError(std::string(what) + ": non-finite entry");
}

inline void require_finite(const Vec& v, const char* what) {
    if (!v.allFinite()) throw DomainError(std::string(what) + ": non-finite entry");
}

}  // namespace detail

enum class MassMode {
    kStrict,     // reject unless the mass is already 1 within 1e-12
    kNormalize,  // rescale to unit mass
};

// Probability vector on n >= 1 support points.
class Histogram {
  public:
    explicit Histogram(Vec values, MassMode mode = MassMode::kStrict)
        : v_(std::move(values)) {
        detail::require_finite(v_, "Histogram");
        if (v_.size() == 0) throw DimensionError("Histogram: empty");
        if ((v_.array() < 0.0).any()) throw DomainError("Histogram: negative entry");
        const double mass = v_.sum();
        if (mode == MassMode::kNormalize) {
            if (mass <= 0.0) throw DegenerateInput("Histogram: zero total mass");
            v_ /= mass;
        } else if (std::abs(mass - 1.0) > 1e-12) {
            throw DomainError("Histogram: mass " + std::to_string(mass) + " != 1");
        }
    }

    const Vec& vec() const { return v_; }
    Eigen::Index size() const { return v_.size(); }
    double operator[](Eigen::Index i) const { return v_[i]; }
    double min_entry() const { return v_.minCoeff(); }
    bool strictly_positive() const { return v_.minCoeff() > 0.0; }

  private:
    Vec v_;
};

// Convex weights over m components.
class Weights {
  public:
    explicit Weights(Vec w, MassMode mode = MassMode::kStrict) : w_(std::move(w)) {
        detail::require_finite(w_, "Weights");
        if (w_.size() == 0) throw DimensionError("Weights: empty");
        if ((w_.array() <= 0.0).any()) throw DomainError("Weights: non-positive entry");
        const double mass = w_.sum();
        if (mode == MassMode::kNormalize) {
            w_ /= mass;
        } else if (std::abs(mass - 1.0) > 1e-12) {
            throw DomainError("Weights: sum " + std::to_string(mass) + " != 1");
        }
    }

    static Weights uniform(int m) {
        return Weights(Vec::Constant(m, 1.0 / m), MassMode::kNormalize);
    }

    const Vec& vec() const { return w_; }
    int size() const { return static_cast<int>(w_.size()); }
    double operator[](Eigen::Index i) const { return w_[i]; }

  private:
    Vec w_;
};

// Symmetric non-negative cost matrix; max_abs() is its largest entry.
class CostMatrix {
  public:
    explicit CostMatrix(Mat c) : c_(std::move(c)) {
        detail::require_finite(c_, "CostMatrix");
        if (c_.rows() != c_.cols()) throw DimensionError("CostMatrix: not square");
        if ((c_.array() < 0.0).any()) throw DomainError("CostMatrix: negative entry");
        if (c_ != c_.transpose()) throw DomainError("CostMatrix: not symmetric");
        max_abs_ = c_.maxCoeff();
    }

    const Mat& mat() const { return c_; }
    Eigen::Index size() const { return c_.rows(); }
    double max_abs() const { return max_abs_; }

  private:
    Mat c_;
    double max_abs_;
};

// Non-negative coupling matrix; marginals need not match anything yet.
class TransportPlan {
  public:
    explicit TransportPlan(Mat p) : p_(std::move(p)) {
        detail::require_finite(p_, "TransportPlan");
        if (p_.rows() != p_.cols()) throw DimensionError("TransportPlan: not square");
        if ((p_.array() < 0.0).any()) throw DomainError("TransportPlan: negative entry");
    }

    const Mat& mat() const { return p_; }
    Eigen::Index size() const { return p_.rows(); }
    Vec row_marginal() const { return p_.rowwise().sum(); }
    Vec col_marginal() const { return p_.colwise().sum().transpose(); }
    double mass() const { return p_.sum(); }

  private:
    Mat p_;
};

// A family of measures with per-measure ground costs and convex weights.
struct BarycenterProblem {
    std::vector<Histogram> measures;
    std::vector<CostMatrix> costs;
    Weights weights;

    BarycenterProblem(std::vector<Histogram> p, std::vector<CostMatrix> c, Weights w)
        : measures(std::move(p)), costs(std::move(c)), weights(std::move(w)) {
        const int m = weights.size();
        if (static_cast<int>(measures.size()) != m ||
            static_cast<int>(costs.size()) != m) {
            throw DimensionError("BarycenterProblem: measure/cost/weight counts differ");
        }
        if (m < 2) throw DimensionError("BarycenterProblem: needs at least two measures");
        const Eigen::Index n = measures[0].size();
        for (int l = 0; l < m; ++l) {
            if (measures[l].size() != n || costs[l].size() != n) {
                throw DimensionError("BarycenterProblem: inconsistent support size");
            }
        }
    }

    // Convenience for the common single-cost case.
    static BarycenterProblem shared_cost(std::vector<Histogram> p, const CostMatrix& c,
                                         Weights w) {
        std::vector<CostMatrix> costs(p.size(), c);
        return BarycenterProblem(std::move(p), std::move(costs), std::move(w));
    }

    int num_measures() const { return weights.size(); }
    Eigen::Index support_size() const { return measures[0].size(); }

    // Largest cost entry across the family.
    double max_cost() const {
        double c = 0.0;
        for (const auto& cm : costs) c = std::max(c, cm.max_abs());
        return c;
    }

    // Weighted sum of per-measure largest cost entries.
    double weighted_cost() const {
        double s = 0.0;
        for (int l = 0; l < num_measures(); ++l) s += weights[l] * costs[l].max_abs();
        return s;
    }
};

// sum_ij pi_ij (ln pi_ij - 1) with the 0 ln 0 = 0 convention.
inline double entropy(const TransportPlan& plan) {
    double h = 0.0;
    const Mat& p = plan.mat();
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            const double x = p(i, j);
            if (x > 0.0) h += x * (std::log(x) - 1.0);
        }
    }
    return h;
}

// Generalized KL divergence sum_ij [pi ln(pi/theta) - pi + theta];
// finite only when pi vanishes wherever theta does.
inline double kl_divergence(const TransportPlan& plan, const TransportPlan& ref) {
    if (plan.size() != ref.size()) throw DimensionError("kl_divergence: shape mismatch");
    double d = 0.0;
    const Mat& p = plan.mat();
    const Mat& t = ref.mat();
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            const double pij = p(i, j);
            const double tij = t(i, j);
            if (pij > 0.0) {
                if (tij == 0.0) {
                    throw DomainError("kl_divergence: reference vanishes where plan does not");
                }
                d += pij * (std::log(pij) - std::log(tij)) - pij + tij;
            } else {
                d += tij;
            }
        }
    }
    return d;
}

// <C, pi>.
inline double transport_cost(const TransportPlan& plan, const CostMatrix& cost) {
    if (plan.size() != cost.size()) throw DimensionError("transport_cost: shape mismatch");
    return (plan.mat().array() * cost.mat().array()).sum();
}

}  // namespace barylab
