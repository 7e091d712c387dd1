#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "barylab/errors.hpp"
#include "barylab/logsumexp.hpp"
#include "barylab/types.hpp"

namespace barylab {

// Kernel of the entropic problem, kept in log form: log_k = -C/gamma for a
// plain Gibbs kernel, or ln(pi) - C/gamma for proximal sub-problems.  Entries
// never exceed zero (up to round-off), so exp never overflows; they are only
// exponentiated under a log-sum-exp shift or by make_plan.
class GibbsKernel {
  public:
    static GibbsKernel from_cost(const CostMatrix& cost, double gamma) {
        require_gamma(gamma);
        return GibbsKernel(-cost.mat() / gamma, gamma);
    }

    // For pre-assembled log kernels (proximal steps).  -inf entries are legal
    // (hard zeros in a reference plan); positive entries beyond round-off are not.
    static GibbsKernel from_log(Mat log_k, double gamma) {
        require_gamma(gamma);
        if (!(log_k.array() <= 1e-9).all()) {
            throw DomainError("GibbsKernel: log entries must be <= 0");
        }
        return GibbsKernel(std::move(log_k), gamma);
    }

    const Mat& log() const { return log_k_; }
    double gamma() const { return gamma_; }
    Eigen::Index size() const { return log_k_.rows(); }

  private:
    GibbsKernel(Mat log_k, double gamma) : log_k_(std::move(log_k)), gamma_(gamma) {
        if (log_k_.rows() != log_k_.cols()) throw DimensionError("GibbsKernel: not square");
    }

    static void require_gamma(double gamma) {
        if (!(gamma > 0.0) || !std::isfinite(gamma)) {
            throw DomainError("GibbsKernel: gamma must be positive");
        }
    }

    Mat log_k_;
    double gamma_;
};

// Scaling potentials (u, v) of a plan diag(e^u) K diag(e^v).
struct DualPotentials {
    Vec u;
    Vec v;

    DualPotentials(Vec u_in, Vec v_in) : u(std::move(u_in)), v(std::move(v_in)) {
        detail::require_finite(u, "DualPotentials.u");
        detail::require_finite(v, "DualPotentials.v");
    }

    static DualPotentials zero(Eigen::Index n) {
        return DualPotentials(Vec::Zero(n), Vec::Zero(n));
    }
};

// Materializes diag(e^u) K diag(e^v).  Throws rather than silently overflow;
// underflow to zero is fine.
inline TransportPlan make_plan(const DualPotentials& pot, const GibbsKernel& kernel) {
    const Eigen::Index n = kernel.size();
    if (pot.u.size() != n || pot.v.size() != n) {
        throw DimensionError("make_plan: potential/kernel size mismatch");
    }
    Mat p(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double e = pot.u[i] + kernel.log()(i, j) + pot.v[j];
            if (e > 700.0) throw NumericalError("make_plan: exponent overflow");
            p(i, j) = std::exp(e);
        }
    }
    return TransportPlan(std::move(p));
}

// Smoothed dual of the entropic transport cost in its first marginal:
//   W*(u) = gamma * sum_j p_j ln( sum_i exp((u_i - C_ij)/gamma) ) + gamma <p, ln p>.
// The additive <p, ln p> term makes W*(0) = 0 when C = 0 and fixes the
// constant so that W* is the exact convex conjugate of u -> W_gamma(p, .)
// over the simplex.
inline double conjugate_value(const Vec& u, const Histogram& p, const CostMatrix& cost,
                              double gamma) {
    const Eigen::Index n = cost.size();
    if (u.size() != n || p.size() != n) throw DimensionError("conjugate_value: size mismatch");
    if (!(gamma > 0.0)) throw DomainError("conjugate_value: gamma must be positive");
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double pj = p[j];
        if (pj == 0.0) continue;
        const double lse = log_sum_exp((u - cost.mat().col(j)) / gamma);
        acc += pj * (lse + std::log(pj));
    }
    return gamma * acc;
}

// Gradient of conjugate_value in u: a p-mixture of column softmaxes, hence a
// point of the simplex.
inline Vec conjugate_grad(const Vec& u, const Histogram& p, const CostMatrix& cost,
                          double gamma) {
    const Eigen::Index n = cost.size();
    if (u.size() != n || p.size() != n) throw DimensionError("conjugate_grad: size mismatch");
    if (!(gamma > 0.0)) throw DomainError("conjugate_grad: gamma must be positive");
    Vec g = Vec::Zero(n);
    Vec z(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double pj = p[j];
        if (pj == 0.0) continue;
        z = (u - cost.mat().col(j)) / gamma;
        const double m = z.maxCoeff();
        z = (z.array() - m).exp();
        g += (pj / z.sum()) * z;
    }
    return g;
}

struct RegOtResult {
    double value;           // <C, plan> + gamma * entropy(plan)
    TransportPlan plan;
    long iterations;        // scaling pairs performed
    DualPotentials potentials;
};

// Entropic transport cost between two strictly positive histograms by
// alternating log-domain scalings.  Stops when the summed l1 marginal error
// drops below tol.
inline RegOtResult reg_ot_cost(const Histogram& p, const Histogram& q,
                               const CostMatrix& cost, double gamma, double tol,
                               long max_iterations = 0) {
    const Eigen::Index n = cost.size();
    if (p.size() != n || q.size() != n) throw DimensionError("reg_ot_cost: size mismatch");
    if (!(tol > 0.0)) throw DomainError("reg_ot_cost: tol must be positive");
    if (!p.strictly_positive() || !q.strictly_positive()) {
        throw DomainError("reg_ot_cost: marginals must be strictly positive");
    }
    const GibbsKernel kernel = GibbsKernel::from_cost(cost, gamma);
    if (max_iterations <= 0) {
        max_iterations = 10 * static_cast<long>(std::ceil(cost.max_abs() / gamma / tol)) + 10;
    }
    const Vec log_p = p.vec().array().log();
    const Vec log_q = q.vec().array().log();
    Vec u = Vec::Zero(n);
    Vec v = Vec::Zero(n);
    for (long it = 1; it <= max_iterations; ++it) {
        u = log_p - log_row_sums(kernel.log(), v);
        v = log_q - log_col_sums(kernel.log(), u);
        // Column sums now match q exactly; only the rows can be off.
        const Vec row = (u + log_row_sums(kernel.log(), v)).array().exp();
        const double err = (row - p.vec()).lpNorm<1>();
        if (err <= tol) {
            DualPotentials pot(u, v);
            TransportPlan plan = make_plan(pot, kernel);
            const double value = transport_cost(plan, cost) + gamma * entropy(plan);
            return RegOtResult{value, std::move(plan), it, std::move(pot)};
        }
    }
    throw NonConvergence("reg_ot_cost: tolerance not reached within iteration budget");
}

}  // namespace barylab
