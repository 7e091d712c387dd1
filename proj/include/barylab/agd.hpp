#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "barylab/entropic.hpp"
#include "barylab/errors.hpp"
#include "barylab/graph.hpp"
#include "barylab/rounding.hpp"
#include "barylab/types.hpp"

namespace barylab {

// p~ = (1 - eps/8)(p + eps/(n(8-eps)) 1): stays in the simplex, keeps the
// uniform point fixed, lifts every entry to at least eps/(8n), and moves p by
// at most eps/4 in l1.
inline Histogram smooth_marginal(const Histogram& p, double eps) {
    if (!(eps > 0.0 && eps < 8.0)) throw DomainError("smooth_marginal: need 0 < eps < 8");
    const double n = static_cast<double>(p.size());
    const Vec smoothed =
        (1.0 - eps / 8.0) * (p.vec().array() + eps / (n * (8.0 - eps))).matrix();
    return Histogram(smoothed, MassMode::kNormalize);
}

struct AlphaStep {
    double alpha;
    double a_next;
};

// Largest root of A + alpha = 2 L alpha^2; the accumulated weight A_k then
// grows like k^2/(8L), which is what gives the accelerated rate.
inline AlphaStep alpha_step(double a, double lipschitz) {
    if (!(lipschitz > 0.0)) throw DomainError("alpha_step: L must be positive");
    if (a < 0.0) throw DomainError("alpha_step: A must be non-negative");
    const double alpha = (1.0 + std::sqrt(1.0 + 8.0 * lipschitz * a)) / (4.0 * lipschitz);
    const double a_next = a + alpha;
    const double check = 2.0 * lipschitz * alpha * alpha;
    if (std::abs(a_next - check) > 1e-10 * std::max(1.0, std::abs(a_next))) {
        throw NumericalError("alpha_step: root identity violated");
    }
    return AlphaStep{alpha, a_next};
}

// Lemma-6-style bound on the dual solution norm:
//   R^2 = 2 n sum_l w_l^2 ||C_l||_inf^2 / lambda_min_plus(W).
inline double dual_radius(const BarycenterProblem& problem, const GraphLaplacian& lap) {
    const double n = static_cast<double>(problem.support_size());
    double s = 0.0;
    for (int l = 0; l < problem.num_measures(); ++l) {
        const double wc = problem.weights[l] * problem.costs[l].max_abs();
        s += wc * wc;
    }
    return std::sqrt(2.0 * n * s / lap.lambda_min_plus());
}

// Same bound with the smoothing-dependent term 2 n gamma^2 ln^2(8n/eps) that
// the analysis drops; kept by default because it costs nothing and only
// matters at large gamma.
inline double dual_radius(const BarycenterProblem& problem, const GraphLaplacian& lap,
                          double gamma, double eps, bool include_log_term = true) {
    const double base = dual_radius(problem, lap);
    if (!include_log_term) return base;
    const double n = static_cast<double>(problem.support_size());
    const double log_term = gamma * std::log(8.0 * n / eps);
    return std::sqrt(base * base + 2.0 * n * log_term * log_term / lap.lambda_min_plus());
}

// Step constants for a target accuracy eps on a given graph.
struct AgdCalibration {
    double eps;
    double gamma;                     // eps / (4 m ln n)
    Vec gamma_l;                      // gamma / w_l; gamma_l[l] * w_l == gamma
    double lipschitz;                 // lambda_max(W) / gamma
    double radius;                    // dual-ball bound R
    long n_bound;                     // ceil((1/eps) sqrt(64 chi m n ln n sum w^2 c^2))
    std::vector<Histogram> smoothed;  // per-measure smoothed marginals
};

inline AgdCalibration agd_calibrate(const BarycenterProblem& problem, double eps,
                                    const GraphLaplacian& lap,
                                    bool include_radius_log_term = true) {
    if (!(eps > 0.0 && eps < 1.0)) throw DomainError("agd_calibrate: need eps in (0,1)");
    const int m = problem.num_measures();
    if (lap.num_nodes() != m) throw DimensionError("agd_calibrate: graph/measure count mismatch");
    const double n = static_cast<double>(problem.support_size());
    if (n < 2) throw DomainError("agd_calibrate: needs n >= 2");
    const double log_n = std::log(n);

    AgdCalibration cal;
    cal.eps = eps;
    cal.gamma = eps / (4.0 * m * log_n);
    cal.gamma_l = Vec(m);
    double s = 0.0;
    for (int l = 0; l < m; ++l) {
        cal.gamma_l[l] = cal.gamma / problem.weights[l];
        const double wc = problem.weights[l] * problem.costs[l].max_abs();
        s += wc * wc;
    }
    cal.lipschitz = lap.lambda_max() / cal.gamma;
    cal.radius = dual_radius(problem, lap, cal.gamma, eps, include_radius_log_term);
    cal.n_bound = static_cast<long>(
        std::ceil(std::sqrt(64.0 * lap.chi() * m * n * log_n * s) / eps));
    cal.smoothed.reserve(m);
    for (int l = 0; l < m; ++l) {
        cal.smoothed.push_back(smooth_marginal(problem.measures[l], eps));
    }
    return cal;
}

// Dual sequences (eta, zeta, lambda) and the running primal average, all as
// m blocks of n-vectors.
struct AgdState {
    std::vector<Vec> eta;
    std::vector<Vec> zeta;
    std::vector<Vec> lambda;
    std::vector<Vec> q_avg;
    double a = 0.0;  // accumulated step weight A_k
    long k = 0;

    static AgdState start(int m, Eigen::Index n) {
        AgdState s;
        s.eta.assign(m, Vec::Zero(n));
        s.zeta.assign(m, Vec::Zero(n));
        s.lambda.assign(m, Vec::Zero(n));
        s.q_avg.assign(m, Vec::Zero(n));
        return s;
    }
};

// One accelerated iteration:
//   lambda <- (alpha zeta + A eta)/A+,
//   g_l    <- grad of the per-measure conjugate at lambda_l,
//   zeta_l <- zeta_l - (alpha/w_l) [(W (x) I) g]_l   (neighbor exchange),
//   eta    <- (alpha zeta_new + A eta)/A+,
//   q_avg  <- (alpha g + A q_avg)/A+.
// Returns the gradients so callers can reuse them (netsim shares them as the
// round's messages).
inline std::vector<Vec> agd_iterate(AgdState& s, const AgdCalibration& cal,
                                    const BarycenterProblem& problem,
                                    const GraphLaplacian& lap) {
    const int m = problem.num_measures();
    const AlphaStep st = alpha_step(s.a, cal.lipschitz);
    std::vector<Vec> grads(m);
    for (int l = 0; l < m; ++l) {
        s.lambda[l] = (st.alpha * s.zeta[l] + s.a * s.eta[l]) / st.a_next;
        grads[l] = conjugate_grad(s.lambda[l], cal.smoothed[l], problem.costs[l],
                                  cal.gamma_l[l]);
    }
    const std::vector<Vec> wg = apply_block(lap, grads);
    for (int l = 0; l < m; ++l) {
        // The 1/w_l keeps the stored blocks equal to [sqrt(W) u]_l / w_l for
        // the underlying u-space accelerated sequence, which is what makes
        // L = lambda_max(W)/gamma the right Lipschitz constant and the
        // consensus guarantee at the calibrated N provable.
        s.zeta[l] -= (st.alpha / problem.weights[l]) * wg[l];
        s.eta[l] = (st.alpha * s.zeta[l] + s.a * s.eta[l]) / st.a_next;
        s.q_avg[l] = (st.alpha * grads[l] + s.a * s.q_avg[l]) / st.a_next;
    }
    s.a = st.a_next;
    s.k += 1;
    return grads;
}

enum class AgdMode { kFixedN, kAdaptive };

struct AgdReport {
    long iterations;
    double consensus;             // final ||sqrt(W) q_avg||_2
    double consensus_threshold;   // eps / (2R)
    std::optional<double> gap;    // last duality-gap surrogate (adaptive mode)
    AgdCalibration calibration;
    std::vector<Vec> q_blocks;    // final per-node primal averages
    std::vector<double> consensus_trace;
};

struct AgdResult {
    Histogram q;
    AgdReport report;
};

namespace detail {

// Duality-gap surrogate for the adaptive stopping rule: value of the dual
// objective at the current lambda plus the primal regularized objective at
// the (positively mixed) common marginal.  Zero at the saddle point; a
// heuristic elsewhere.
inline double agd_gap_surrogate(const AgdState& s, const AgdCalibration& cal,
                                const BarycenterProblem& problem, const Weights& w) {
    const int m = problem.num_measures();
    const Eigen::Index n = problem.support_size();
    Vec q_mix = Vec::Zero(n);
    for (int l = 0; l < m; ++l) q_mix += w[l] * s.q_avg[l];
    // Tiny floor keeps the reference Sinkhorn solve away from hard zeros.
    const Histogram q((q_mix.array() + 1e-30).matrix(), MassMode::kNormalize);
    double dual = 0.0;
    double primal = 0.0;
    for (int l = 0; l < m; ++l) {
        dual += w[l] * conjugate_value(s.lambda[l], cal.smoothed[l], problem.costs[l],
                                       cal.gamma_l[l]);
        primal += w[l] * reg_ot_cost(cal.smoothed[l], q, problem.costs[l], cal.gamma_l[l],
                                     /*tol=*/1e-6)
                             .value;
    }
    return primal + dual;
}

}  // namespace detail

// Accelerated primal-dual solve.  kFixedN runs exactly the calibrated
// iteration count; kAdaptive stops once consensus_norm(q_avg) <= eps/(2R) and
// the gap surrogate <= eps/2, with the fixed count as a cap.
inline AgdResult agd_solve(const BarycenterProblem& problem, double eps,
                           const GraphLaplacian& lap, AgdMode mode = AgdMode::kFixedN,
                           bool include_radius_log_term = true) {
    const AgdCalibration cal = agd_calibrate(problem, eps, lap, include_radius_log_term);
    const int m = problem.num_measures();
    const Eigen::Index n = problem.support_size();
    AgdState s = AgdState::start(m, n);

    AgdReport rep;
    rep.consensus_threshold = eps / (2.0 * cal.radius);
    rep.gap = std::nullopt;
    rep.consensus_trace.reserve(static_cast<size_t>(cal.n_bound));

    // In adaptive mode the gap evaluation is expensive (m reference Sinkhorn
    // solves), so it only runs once consensus is already met, at most every
    // gap_stride iterations.
    const long gap_stride = std::max<long>(1, cal.n_bound / 64);
    long last_gap_check = -gap_stride;
    bool stopped = false;
    while (s.k < cal.n_bound) {
        agd_iterate(s, cal, problem, lap);
        const double cons = consensus_norm(lap, s.q_avg);
        rep.consensus_trace.push_back(cons);
        if (mode == AgdMode::kAdaptive && cons <= rep.consensus_threshold &&
            s.k - last_gap_check >= gap_stride) {
            last_gap_check = s.k;
            const double gap = detail::agd_gap_surrogate(s, cal, problem, problem.weights);
            rep.gap = gap;
            if (gap <= eps / 2.0) {
                stopped = true;
                break;
            }
        }
    }
    if (mode == AgdMode::kAdaptive && !stopped) {
        // One last check at the cap before declaring failure.
        const double cons = consensus_norm(lap, s.q_avg);
        double final_gap = std::numeric_limits<double>::infinity();
        if (cons <= rep.consensus_threshold) {
            final_gap = detail::agd_gap_surrogate(s, cal, problem, problem.weights);
            rep.gap = final_gap;
        }
        if (final_gap > eps / 2.0) {
            throw CapExceeded("agd_solve: adaptive stop not reached within " +
                              std::to_string(cal.n_bound) + " iterations (consensus " +
                              std::to_string(cons) + ", gap " + std::to_string(final_gap) +
                              ")");
        }
    }

    Vec q_mix = Vec::Zero(n);
    for (int l = 0; l < m; ++l) q_mix += problem.weights[l] * s.q_avg[l];
    rep.iterations = s.k;
    rep.consensus = rep.consensus_trace.empty() ? 0.0 : rep.consensus_trace.back();
    rep.calibration = cal;
    rep.q_blocks = s.q_avg;
    return AgdResult{Histogram(q_mix, MassMode::kNormalize), std::move(rep)};
}

// ---- test-facing full dual objective --------------------------------------
//
// The iteration above never forms sqrt(W).  For gradient and smoothness
// checks the full dual objective in u-coordinates is
//   F(u) = sum_l w_l W*_{gamma(l), p~_l}( [sqrt(W) u]_l / w_l ),
// whose gradient stacks the per-measure conjugate gradients and applies
// sqrt(W) once more.  Its Hessian is bounded by W/gamma, which is the
// Lipschitz certificate the solver's L relies on.

inline std::vector<Vec> apply_dense_block(const Mat& coeff, const std::vector<Vec>& vecs) {
    const int m = static_cast<int>(coeff.rows());
    if (static_cast<int>(vecs.size()) != m) {
        throw DimensionError("apply_dense_block: block count mismatch");
    }
    const Eigen::Index n = vecs[0].size();
    std::vector<Vec> out(m, Vec::Zero(n));
    for (int l = 0; l < m; ++l) {
        for (int j = 0; j < m; ++j) {
            if (coeff(l, j) != 0.0) out[l] += coeff(l, j) * vecs[j];
        }
    }
    return out;
}

inline double agd_dual_objective(const std::vector<Vec>& u, const AgdCalibration& cal,
                                 const BarycenterProblem& problem, const Mat& sqrt_w) {
    const int m = problem.num_measures();
    const std::vector<Vec> lam = apply_dense_block(sqrt_w, u);
    double f = 0.0;
    for (int l = 0; l < m; ++l) {
        f += problem.weights[l] * conjugate_value(lam[l] / problem.weights[l],
                                                  cal.smoothed[l], problem.costs[l],
                                                  cal.gamma_l[l]);
    }
    return f;
}

inline std::vector<Vec> agd_dual_gradient(const std::vector<Vec>& u, const AgdCalibration& cal,
                                          const BarycenterProblem& problem, const Mat& sqrt_w) {
    const int m = problem.num_measures();
    const std::vector<Vec> lam = apply_dense_block(sqrt_w, u);
    std::vector<Vec> grads(m);
    for (int l = 0; l < m; ++l) {
        grads[l] = conjugate_grad(lam[l] / problem.weights[l], cal.smoothed[l],
                                  problem.costs[l], cal.gamma_l[l]);
    }
    return apply_dense_block(sqrt_w, grads);
}

}  // namespace barylab
