#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "barylab/entropic.hpp"
#include "barylab/errors.hpp"
#include "barylab/logsumexp.hpp"
#include "barylab/types.hpp"

namespace barylab {

// Entrywise logs of strictly positive measures (the u-update needs ln p_l).
inline std::vector<Vec> log_histograms(const std::vector<Histogram>& measures) {
    std::vector<Vec> out;
    out.reserve(measures.size());
    for (size_t l = 0; l < measures.size(); ++l) {
        if (!measures[l].strictly_positive()) {
            throw DomainError("measure " + std::to_string(l) +
                              " has a zero entry; smooth it before solving");
        }
        out.push_back(measures[l].vec().array().log());
    }
    return out;
}

// Alternating dual state: per-measure scaling potentials plus the half-step
// counter t.  v-updates run at even t, u-updates at odd t, so each full
// iteration advances t by two.  Kernels and weights ride along because every
// update touches all of them.
struct IbpState {
    std::vector<GibbsKernel> kernels;
    Weights weights;
    std::vector<Vec> u;
    std::vector<Vec> v;
    long t = 0;

    // Column log-marginal factors ln(K_l^T e^{u_l}) computed by the stopping
    // check, reused by the next v-update (valid only while cache_t == t).
    std::vector<Vec> cached_col_sums;
    long cache_t = -1;

    static IbpState start(std::vector<GibbsKernel> kernels, Weights weights) {
        const int m = weights.size();
        if (static_cast<int>(kernels.size()) != m) {
            throw DimensionError("IbpState: kernel/weight count mismatch");
        }
        const Eigen::Index n = kernels[0].size();
        for (const auto& k : kernels) {
            if (k.size() != n) throw DimensionError("IbpState: ragged kernels");
        }
        IbpState s{std::move(kernels), std::move(weights), {}, {}, 0, {}, -1};
        s.u.assign(m, Vec::Zero(n));
        s.v.assign(m, Vec::Zero(n));
        return s;
    }

    int num_measures() const { return weights.size(); }
    Eigen::Index support_size() const { return kernels[0].size(); }
};

// v_l <- sum_k w_k ln(K_k^T e^{u_k}) - ln(K_l^T e^{u_l}).  The weighted sum of
// the new v's telescopes to zero by construction.
inline void ibp_v_update(IbpState& s) {
    if (s.t % 2 != 0) throw Error("ibp_v_update: expected even half-step");
    const int m = s.num_measures();
    std::vector<Vec> col_sums;
    if (s.cache_t == s.t) {
        col_sums = std::move(s.cached_col_sums);
    } else {
        col_sums.reserve(m);
        for (int l = 0; l < m; ++l) {
            col_sums.push_back(log_col_sums(s.kernels[l].log(), s.u[l]));
        }
    }
    Vec mean = Vec::Zero(s.support_size());
    for (int l = 0; l < m; ++l) mean += s.weights[l] * col_sums[l];
    for (int l = 0; l < m; ++l) s.v[l] = mean - col_sums[l];
    s.cache_t = -1;
    s.t += 1;
}

// u_l <- ln p_l - ln(K_l e^{v_l}); afterwards every plan has row marginal p_l.
inline void ibp_u_update(IbpState& s, const std::vector<Vec>& log_measures) {
    if (s.t % 2 != 1) throw Error("ibp_u_update: expected odd half-step");
    const int m = s.num_measures();
    if (static_cast<int>(log_measures.size()) != m) {
        throw DimensionError("ibp_u_update: measure count mismatch");
    }
    for (int l = 0; l < m; ++l) {
        s.u[l] = log_measures[l] - log_row_sums(s.kernels[l].log(), s.v[l]);
    }
    s.cache_t = -1;
    s.t += 1;
}

struct IbpCriterion {
    double value;                // sum_l w_l || marginal_l - qbar ||_1
    Vec qbar;                    // weighted mean column marginal (unnormalized)
    std::vector<Vec> marginals;  // per-measure column marginals B_l^T 1
};

// Stopping quantity of the alternating scheme; also primes the column-sum
// cache so the following v-update does not recompute the same LSE pass.
inline IbpCriterion ibp_criterion(IbpState& s) {
    const int m = s.num_measures();
    const Eigen::Index n = s.support_size();
    std::vector<Vec> col_sums;
    col_sums.reserve(m);
    IbpCriterion crit;
    crit.marginals.reserve(m);
    crit.qbar = Vec::Zero(n);
    for (int l = 0; l < m; ++l) {
        col_sums.push_back(log_col_sums(s.kernels[l].log(), s.u[l]));
        crit.marginals.push_back((s.v[l] + col_sums[l]).array().exp());
        crit.qbar += s.weights[l] * crit.marginals[l];
    }
    crit.value = 0.0;
    for (int l = 0; l < m; ++l) {
        crit.value += s.weights[l] * (crit.marginals[l] - crit.qbar).lpNorm<1>();
    }
    s.cached_col_sums = std::move(col_sums);
    s.cache_t = s.t;
    return crit;
}

// f(u, v) = sum_l w_l { <1, B_l 1> - <u_l, p_l> }, the objective the
// alternating updates minimize exactly block by block.
inline double ibp_dual_objective(const IbpState& s, const std::vector<Histogram>& measures) {
    const int m = s.num_measures();
    if (static_cast<int>(measures.size()) != m) {
        throw DimensionError("ibp_dual_objective: measure count mismatch");
    }
    double f = 0.0;
    for (int l = 0; l < m; ++l) {
        const double log_mass = log_total_mass(s.kernels[l].log(), s.u[l], s.v[l]);
        if (log_mass > 700.0) throw NumericalError("ibp_dual_objective: mass overflow");
        f += s.weights[l] * (std::exp(log_mass) - s.u[l].dot(measures[l].vec()));
    }
    return f;
}

struct IbpReport {
    std::vector<TransportPlan> plans;  // B_l at the stopping state
    Histogram qbar;                    // normalized weighted mean column marginal
    long iterations;                   // half-steps t at termination
    double criterion_value;
    std::vector<double> dual_trace;    // f after every half-step (when recorded)
    double r_v;                        // potential-diameter constant of the run
    double iteration_bound;            // 4 + 44 r_v / eps'
    double gamma;
    double eps_prime;
};

struct IbpOptions {
    bool record_dual_trace = true;
    // Per-half-step observer (called after each update); used by tests to
    // watch potentials without re-running updates by hand.
    std::function<void(const IbpState&)> observer;
};

// Alg.-1 style loop over an arbitrary kernel family: iterate until the
// criterion drops below eps_prime (if positive) or until max_pairs full
// iterations have run.  Shared by the plain solver and the proximal inner loop.
struct IbpRunResult {
    double criterion = std::numeric_limits<double>::quiet_NaN();
    Vec qbar;
    long pairs = 0;
    std::vector<double> dual_trace;
    bool converged = false;
};

inline IbpRunResult ibp_run(IbpState& s, const std::vector<Histogram>& measures,
                            const std::vector<Vec>& log_measures, double eps_prime,
                            long max_pairs, const IbpOptions& opts = {}) {
    IbpRunResult res;
    for (long pair = 1; max_pairs <= 0 || pair <= max_pairs; ++pair) {
        ibp_v_update(s);
        if (opts.record_dual_trace) res.dual_trace.push_back(ibp_dual_objective(s, measures));
        if (opts.observer) opts.observer(s);
        ibp_u_update(s, log_measures);
        if (opts.record_dual_trace) res.dual_trace.push_back(ibp_dual_objective(s, measures));
        if (opts.observer) opts.observer(s);
        const IbpCriterion crit = ibp_criterion(s);
        res.criterion = crit.value;
        res.qbar = crit.qbar;
        res.pairs = pair;
        if (eps_prime > 0.0 && crit.value <= eps_prime) {
            res.converged = true;
            break;
        }
    }
    return res;
}

// Dual IBP with the adaptive stopping rule.  Terminates within the proven
// half-step bound 4 + 44 R_v/eps' (capped at twice that, which would signal
// a numerical bug rather than slow convergence).
inline IbpReport ibp_solve(const BarycenterProblem& problem, double gamma, double eps_prime,
                           const IbpOptions& opts = {}) {
    if (!(gamma > 0.0) || !(eps_prime > 0.0)) {
        throw DomainError("ibp_solve: gamma and eps' must be positive");
    }
    const int m = problem.num_measures();
    std::vector<GibbsKernel> kernels;
    kernels.reserve(m);
    for (int l = 0; l < m; ++l) {
        kernels.push_back(GibbsKernel::from_cost(problem.costs[l], gamma));
    }
    const std::vector<Vec> log_measures = log_histograms(problem.measures);
    IbpState s = IbpState::start(std::move(kernels), problem.weights);

    const double r_v = (problem.max_cost() + problem.weighted_cost()) / gamma;
    const double bound_half_steps = 4.0 + 44.0 * r_v / eps_prime;
    // cap = 2x the proven bound, counted in full iterations (= half the half-steps)
    const long max_pairs = static_cast<long>(std::ceil(bound_half_steps));

    IbpRunResult run = ibp_run(s, problem.measures, log_measures, eps_prime, max_pairs, opts);
    if (!run.converged) {
        throw IterationCapExceeded(
            "ibp_solve: stopping criterion " + std::to_string(run.criterion) +
            " > " + std::to_string(eps_prime) + " after twice the guaranteed bound");
    }

    IbpReport rep{{},
                  Histogram(run.qbar, MassMode::kNormalize),
                  s.t,
                  run.criterion,
                  std::move(run.dual_trace),
                  r_v,
                  bound_half_steps,
                  gamma,
                  eps_prime};
    rep.plans.reserve(m);
    for (int l = 0; l < m; ++l) {
        rep.plans.push_back(make_plan(DualPotentials(s.u[l], s.v[l]), s.kernels[l]));
    }
    return rep;
}

// Dense KL-projection steps of the primal alternating scheme; a test oracle
// for the potential-based updates.  Mirrors the dual ordering: at even t the
// plans get the shared geometric-mean column marginal (the v-update's primal
// face), at odd t rows are rescaled to p_l (the u-update's face).
inline std::vector<TransportPlan> primal_ibp_step(const std::vector<TransportPlan>& plans,
                                                  long t,
                                                  const std::vector<Histogram>& measures,
                                                  const Weights& weights) {
    const int m = weights.size();
    if (static_cast<int>(plans.size()) != m || static_cast<int>(measures.size()) != m) {
        throw DimensionError("primal_ibp_step: family size mismatch");
    }
    const Eigen::Index n = plans[0].size();
    std::vector<TransportPlan> out;
    out.reserve(m);
    if (t % 2 == 0) {
        // Column rescale to q = exp(sum_k w_k ln(pi_k^T 1)).
        Vec log_q = Vec::Zero(n);
        for (int l = 0; l < m; ++l) {
            const Vec col = plans[l].col_marginal();
            if (col.minCoeff() <= 0.0) {
                throw DomainError("primal_ibp_step: zero column marginal");
            }
            log_q += weights[l] * col.array().log().matrix();
        }
        const Vec q = log_q.array().exp();
        for (int l = 0; l < m; ++l) {
            const Vec scale = q.array() / plans[l].col_marginal().array();
            out.emplace_back(plans[l].mat() * scale.asDiagonal());
        }
    } else {
        // Row rescale to the prescribed marginals p_l.
        for (int l = 0; l < m; ++l) {
            const Vec row = plans[l].row_marginal();
            if (row.minCoeff() <= 0.0) {
                throw DomainError("primal_ibp_step: zero row marginal");
            }
            const Vec scale = measures[l].vec().array() / row.array();
            out.emplace_back(scale.asDiagonal() * plans[l].mat());
        }
    }
    return out;
}

struct IbpBarycenter {
    Histogram q;
    IbpReport report;
};

// eps-calibrated barycenter: gamma = eps/(4 ln n), eps' = eps/(4 max cost),
// output the mass-normalized mean column marginal.
inline IbpBarycenter barycenter_ibp(const BarycenterProblem& problem, double eps,
                                    const IbpOptions& opts = {}) {
    if (!(eps > 0.0)) throw DomainError("barycenter_ibp: eps must be positive");
    const Eigen::Index n = problem.support_size();
    if (n < 2) throw DomainError("barycenter_ibp: needs n >= 2");
    const double c_max = problem.max_cost();
    if (c_max <= 0.0) throw DegenerateInput("barycenter_ibp: all-zero cost family");
    const double gamma = eps / (4.0 * std::log(static_cast<double>(n)));
    const double eps_prime = eps / (4.0 * c_max);
    IbpReport rep = ibp_solve(problem, gamma, eps_prime, opts);
    Histogram q = rep.qbar;
    return IbpBarycenter{std::move(q), std::move(rep)};
}

}  // namespace barylab
