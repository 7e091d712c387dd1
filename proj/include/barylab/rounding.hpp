#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "barylab/errors.hpp"
#include "barylab/types.hpp"

namespace barylab {

// Projects an approximately feasible plan onto Pi(p, q) exactly: scale rows
// down to p, then columns down to q, then patch the missing mass with the
// rank-one outer product of the residuals.  The l1 movement satisfies
// ||out - B||_1 <= 2 (sum_i [B1 - p]_i^+ + sum_j [B^T1 - q]_j^+).
inline TransportPlan round_to_feasible(const TransportPlan& plan, const Histogram& p,
                                       const Histogram& q) {
    const Eigen::Index n = plan.size();
    if (p.size() != n || q.size() != n) throw DimensionError("round_to_feasible: size mismatch");
    if (plan.mass() <= 0.0) throw DegenerateInput("round_to_feasible: zero-mass plan");

    Mat x = plan.mat();
    // Rows: scale down any row heavier than its target.
    const Vec r = x.rowwise().sum();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (r[i] > p[i]) x.row(i) *= p[i] / r[i];
    }
    // Columns: likewise.
    const Vec c = x.colwise().sum();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (c[j] > q[j]) x.col(j) *= q[j] / c[j];
    }
    // Residual mass, non-negative up to round-off by the scalings above.
    Vec err_r = (p.vec() - x.rowwise().sum()).cwiseMax(0.0);
    Vec err_c = (q.vec() - x.colwise().sum().transpose()).cwiseMax(0.0);
    const double mass_r = err_r.sum();
    const double mass_c = err_c.sum();
    if (mass_r > 1e-14) {
        if (mass_c <= 0.0) throw NumericalError("round_to_feasible: inconsistent residuals");
        err_c *= mass_r / mass_c;  // equalize masses before the outer product
        x += err_r * (err_c.transpose() / mass_r);
    }
    return TransportPlan(std::move(x));
}

struct RoundedFamily {
    std::vector<TransportPlan> plans;
    Histogram q;
};

// Builds the common target marginal q from the weighted mean of the plans'
// column marginals (normalized by total mass) and rounds every plan to
// Pi(p_l, q).
inline RoundedFamily round_barycenter_family(const std::vector<TransportPlan>& plans,
                                             const std::vector<Histogram>& measures,
                                             const Weights& weights) {
    const int m = weights.size();
    if (static_cast<int>(plans.size()) != m || static_cast<int>(measures.size()) != m) {
        throw DimensionError("round_barycenter_family: family size mismatch");
    }
    Vec q_raw = Vec::Zero(plans[0].size());
    for (int l = 0; l < m; ++l) q_raw += weights[l] * plans[l].col_marginal();
    Histogram q(q_raw, MassMode::kNormalize);
    std::vector<TransportPlan> out;
    out.reserve(m);
    for (int l = 0; l < m; ++l) {
        out.push_back(round_to_feasible(plans[l], measures[l], q));
    }
    return RoundedFamily{std::move(out), std::move(q)};
}

}  // namespace barylab
