#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "barylab/entropic.hpp"
#include "barylab/errors.hpp"
#include "barylab/ibp.hpp"
#include "barylab/types.hpp"

namespace barylab {

// KL-proximal outer loop around the alternating dual solver.  gamma here is a
// prox strength, decoupled from the target accuracy.
struct ProxConfig {
    double gamma = 1.0;
    int outer_iters = 10;              // N
    int inner_iters = 100;             // M full (v,u) pairs, used when inner_tol is unset
    std::optional<double> inner_tol;   // stop inner runs at this criterion value instead
    long inner_cap = 500000;           // pair cap for the tolerance mode
    bool restart = false;              // run the gamma-halving probe first
    bool warm_start = true;            // carry dual potentials across outer steps
};

// Inner-tolerance recipe eps_tilde = const * eps^2 / (m n^3); the constant is
// an exposed knob because only the order is known.
inline double suggested_inner_tol(double eps, Eigen::Index n, int m, double constant = 1.0) {
    if (!(eps > 0.0)) throw DomainError("suggested_inner_tol: eps must be positive");
    const double nd = static_cast<double>(n);
    return constant * eps * eps / (static_cast<double>(m) * nd * nd * nd);
}

// Kernel of one proximal subproblem: log entries ln(pi_ij) - C_ij/gamma.
// The solver itself never calls this on dense plans (it accumulates logs);
// this entry point exists for plans that are already materialized.
inline GibbsKernel prox_kernel(const TransportPlan& plan, const CostMatrix& cost,
                               double gamma) {
    if (plan.size() != cost.size()) throw DimensionError("prox_kernel: size mismatch");
    if (plan.mat().minCoeff() <= 0.0) {
        throw DomainError("prox_kernel: plan must be strictly positive");
    }
    const Mat log_k = plan.mat().array().log().matrix() - cost.mat() / gamma;
    return GibbsKernel::from_log(log_k, gamma);
}

struct ProxOuterRecord {
    double objective;        // sum_l w_l <C_l, pi_l^k>
    double prox_penalty;     // gamma * sum_l w_l KL(pi^k | pi^{k-1})
    long inner_pairs;        // inner iterations spent on this outer step
    double inner_criterion;  // final inner stopping value
};

struct ProxResult {
    Histogram qbar;                     // from the last inner iteration
    std::vector<ProxOuterRecord> trace;
    std::vector<TransportPlan> plans;   // final outer iterate, materialized
    double gamma_used;                  // after the optional restart probe
};

struct ProbeResult {
    double gamma;
    std::vector<std::pair<double, long>> trace;  // (gamma probed, inner pairs)
};

namespace detail {

// Inner solve over explicit log kernels; returns pairs spent plus final state.
inline IbpRunResult prox_inner_run(IbpState& s, const std::vector<Histogram>& measures,
                                   const std::vector<Vec>& log_measures,
                                   const ProxConfig& cfg) {
    if (cfg.inner_tol) {
        if (!(*cfg.inner_tol > 0.0)) throw DomainError("prox inner_tol must be positive");
        return ibp_run(s, measures, log_measures, *cfg.inner_tol, cfg.inner_cap);
    }
    if (cfg.inner_iters < 1) throw DomainError("prox inner_iters must be >= 1");
    return ibp_run(s, measures, log_measures, /*eps_prime=*/0.0, cfg.inner_iters);
}

}  // namespace detail

// Halve gamma from gamma0 (default 4 * max cost) until the inner solve's
// iteration count more than quadruples between consecutive halvings; returns
// the last gamma before the blow-up, or gamma0 if none shows up within 20
// halvings.  Each probe solves the literal first proximal subproblem, whose
// kernel is exp(-2C/gamma).
inline ProbeResult gamma_restart_probe(const BarycenterProblem& problem, double inner_tol,
                                       double gamma0 = 0.0) {
    if (!(inner_tol > 0.0)) throw DomainError("gamma_restart_probe: tolerance must be positive");
    if (gamma0 <= 0.0) gamma0 = 4.0 * problem.max_cost();
    if (gamma0 <= 0.0) throw DegenerateInput("gamma_restart_probe: zero cost family");
    const int m = problem.num_measures();
    const std::vector<Vec> log_measures = log_histograms(problem.measures);

    ProbeResult res{gamma0, {}};
    double gamma = gamma0;
    double gamma_prev = gamma0;
    long pairs_prev = -1;
    for (int halving = 0; halving <= 20; ++halving) {
        std::vector<GibbsKernel> kernels;
        kernels.reserve(m);
        for (int l = 0; l < m; ++l) {
            kernels.push_back(
                GibbsKernel::from_log(-2.0 * problem.costs[l].mat() / gamma, gamma));
        }
        IbpState s = IbpState::start(std::move(kernels), problem.weights);
        // The doubled kernel behaves like regularization gamma/2; cap at the
        // corresponding proven bound so a probe can never spin forever.
        const double r_v =
            2.0 * (problem.max_cost() + problem.weighted_cost()) / gamma;
        const long cap = static_cast<long>(std::ceil(4.0 + 44.0 * r_v / inner_tol));
        const IbpRunResult run =
            ibp_run(s, problem.measures, log_measures, inner_tol, cap);
        res.trace.push_back({gamma, run.pairs});
        if (pairs_prev >= 0 && run.pairs > 4 * pairs_prev) {
            res.gamma = gamma_prev;
            return res;
        }
        pairs_prev = run.pairs;
        gamma_prev = gamma;
        gamma /= 2.0;
    }
    res.gamma = gamma0;  // never blew up: keep the cheap large-gamma regime
    return res;
}

// Proximal IBP: outer step k replaces the kernel by pi^k ⊙ exp(-C/gamma) and
// re-solves with warm-started potentials.  Log kernels are accumulated as
// running sums (potentials + previous log kernel - C/gamma), so no plan is
// exponentiated on the solve path.  Note the initialization quirk: with
// pi^0 = exp(-C/gamma) the first kernel is exp(-2C/gamma), i.e. the first
// inner solve runs at effective regularization gamma/2.  That is the stated
// procedure, kept literally.
inline ProxResult prox_ibp_solve(const BarycenterProblem& problem, const ProxConfig& cfg) {
    if (!(cfg.gamma > 0.0)) throw DomainError("prox_ibp_solve: gamma must be positive");
    if (cfg.outer_iters < 1) throw DomainError("prox_ibp_solve: outer_iters must be >= 1");
    const int m = problem.num_measures();
    const Eigen::Index n = problem.support_size();
    const std::vector<Vec> log_measures = log_histograms(problem.measures);

    double gamma = cfg.gamma;
    if (cfg.restart) {
        const double tol = cfg.inner_tol ? *cfg.inner_tol : 1e-4;
        gamma = gamma_restart_probe(problem, tol, cfg.gamma).gamma;
    }

    // Accumulated log kernels, starting from ln(pi^0) - C/gamma = -2C/gamma.
    std::vector<Mat> log_kernels;
    log_kernels.reserve(m);
    for (int l = 0; l < m; ++l) {
        log_kernels.push_back(-2.0 * problem.costs[l].mat() / gamma);
    }
    std::vector<Mat> prev_log_plans;  // ln(pi^{k-1}); starts at -C/gamma
    prev_log_plans.reserve(m);
    for (int l = 0; l < m; ++l) {
        prev_log_plans.push_back(-problem.costs[l].mat() / gamma);
    }

    std::vector<Vec> warm_u(m, Vec::Zero(n));
    std::vector<Vec> warm_v(m, Vec::Zero(n));
    ProxResult result{Histogram(Vec::Constant(n, 1.0 / n)), {}, {}, gamma};
    std::vector<Mat> log_plans(m);

    for (int k = 0; k < cfg.outer_iters; ++k) {
        std::vector<GibbsKernel> kernels;
        kernels.reserve(m);
        for (int l = 0; l < m; ++l) {
            kernels.push_back(GibbsKernel::from_log(log_kernels[l], gamma));
        }
        IbpState s = IbpState::start(std::move(kernels), problem.weights);
        if (cfg.warm_start) {
            s.u = warm_u;
            s.v = warm_v;
        }
        const IbpRunResult run =
            detail::prox_inner_run(s, problem.measures, log_measures, cfg);

        // Materialize ln(pi^{k+1}) and roll the kernel forward.
        double objective = 0.0;
        double penalty = 0.0;
        for (int l = 0; l < m; ++l) {
            log_plans[l] = log_kernels[l];
            log_plans[l].colwise() += s.u[l];
            log_plans[l].rowwise() += s.v[l].transpose();
            const Mat plan = log_plans[l].array().exp();
            objective += problem.weights[l] * (plan.array() * problem.costs[l].mat().array()).sum();
            // KL(pi^k | pi^{k-1}) from the two log matrices.
            const Mat prev = prev_log_plans[l].array().exp();
            penalty += problem.weights[l] *
                       ((plan.array() * (log_plans[l] - prev_log_plans[l]).array()).sum() -
                        plan.sum() + prev.sum());
            log_kernels[l] = log_plans[l] - problem.costs[l].mat() / gamma;
        }
        penalty *= gamma;
        result.trace.push_back({objective, penalty, run.pairs, run.criterion});
        prev_log_plans = log_plans;
        warm_u = s.u;
        warm_v = s.v;
        if (k + 1 == cfg.outer_iters) {
            result.qbar = Histogram(run.qbar, MassMode::kNormalize);
            result.plans.reserve(m);
            for (int l = 0; l < m; ++l) {
                result.plans.emplace_back(Mat(log_plans[l].array().exp()));
            }
        }
    }
    return result;
}

}  // namespace barylab
