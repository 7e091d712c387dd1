#pragma once

// Shared test utilities: random instance generators and slow-but-direct
// oracles that the fast library code is checked against.

#include <cmath>
#include <random>
#include <vector>

#include "barylab/barylab.hpp"

namespace testutil {

using barylab::BarycenterProblem;
using barylab::CostMatrix;
using barylab::Histogram;
using barylab::Mat;
using barylab::Vec;
using barylab::Weights;

// Strictly positive histogram with entries bounded away from zero.
inline Histogram random_histogram(std::mt19937_64& rng, Eigen::Index n, double floor = 0.05) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = floor + unit(rng);
    return Histogram(v, barylab::MassMode::kNormalize);
}

// Symmetric nonnegative cost with zero diagonal and entries in [0, scale].
inline CostMatrix random_cost(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Mat c = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            c(i, j) = scale * (0.05 + 0.95 * unit(rng));
            c(j, i) = c(i, j);
        }
    }
    return CostMatrix(c);
}

inline Weights random_weights(std::mt19937_64& rng, int m) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vec w(m);
    for (int l = 0; l < m; ++l) w[l] = 0.2 + unit(rng);
    w /= w.sum();
    return Weights(w);
}

inline BarycenterProblem random_problem(std::mt19937_64& rng, Eigen::Index n, int m,
                                        bool shared_cost = false, double cost_scale = 1.0,
                                        bool uniform_weights = false) {
    std::vector<Histogram> measures;
    measures.reserve(m);
    for (int l = 0; l < m; ++l) measures.push_back(random_histogram(rng, n));
    Weights w = uniform_weights ? Weights::uniform(m) : random_weights(rng, m);
    if (shared_cost) {
        return BarycenterProblem::shared_cost(std::move(measures), random_cost(rng, n, cost_scale),
                                              std::move(w));
    }
    std::vector<CostMatrix> costs;
    costs.reserve(m);
    for (int l = 0; l < m; ++l) costs.push_back(random_cost(rng, n, cost_scale));
    return BarycenterProblem(std::move(measures), std::move(costs), std::move(w));
}

// Random transport-plan-shaped nonnegative matrix with unit mass.
inline barylab::TransportPlan random_plan(std::mt19937_64& rng, Eigen::Index n) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Mat x(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) x(i, j) = 0.01 + unit(rng);
    x /= x.sum();
    return barylab::TransportPlan(x);
}

// Direct O(n^2) evaluation of ln(K^T e^u) without the library's shifted
// accumulation, used as an independent oracle at moderate magnitudes.
inline Vec direct_log_col_sums(const Mat& log_k, const Vec& u) {
    const Eigen::Index n = log_k.cols();
    Vec out(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < log_k.rows(); ++i) s += std::exp(log_k(i, j) + u[i]);
        out[j] = std::log(s);
    }
    return out;
}

// Dense Kronecker lift of the graph operator: W = Wbar (x) I_n applied to a
// stacked vector, the oracle for the blockwise apply.
inline Vec kronecker_apply(const Mat& wbar, const std::vector<Vec>& blocks) {
    const int m = static_cast<int>(wbar.rows());
    const Eigen::Index n = blocks.front().size();
    Vec stacked = Vec::Zero(m * n);
    for (int l = 0; l < m; ++l) {
        for (int j = 0; j < m; ++j) {
            if (wbar(l, j) == 0.0) continue;
            stacked.segment(l * n, n) += wbar(l, j) * blocks[j];
        }
    }
    return stacked;
}

inline std::vector<Vec> to_blocks(const Vec& stacked, int m) {
    const Eigen::Index n = stacked.size() / m;
    std::vector<Vec> blocks;
    blocks.reserve(m);
    for (int l = 0; l < m; ++l) blocks.push_back(stacked.segment(l * n, n));
    return blocks;
}

// Near-exact optimum of min <C, pi> + gamma * sum pi (ln pi - 1) over plans
// with marginals (p, q), via alternating scalings at near machine tolerance.
inline double reference_reg_ot(const Histogram& p, const Histogram& q, const CostMatrix& c,
                               double gamma) {
    return barylab::reg_ot_cost(p, q, c, gamma, 1e-12, 500000).value;
}

}  // namespace testutil
