#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace barylab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// log(sum_i exp(x_i)) with the usual max shift.  Returns -inf for an input
// whose entries are all -inf (empty mass), never NaN for finite inputs.
inline double log_sum_exp(const Vec& x) {
    const double m = x.maxCoeff();
    if (!std::isfinite(m)) return m;  // all -inf (or a stray +inf propagates)
    return m + std::log((x.array() - m).exp().sum());
}

// Column-wise log-marginal: out_j = log(sum_i exp(u_i + logk_ij)).
// This is log(K^T e^u) for K = exp(logk), computed without forming K.
inline Vec log_col_sums(const Mat& logk, const Vec& u) {
    const Eigen::Index n = logk.cols();
    Vec out(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        out[j] = log_sum_exp(u + logk.col(j));
    }
    return out;
}

// Row-wise log-marginal: out_i = log(sum_j exp(logk_ij + v_j)), i.e. log(K e^v).
inline Vec log_row_sums(const Mat& logk, const Vec& v) {
    const Eigen::Index n = logk.rows();
    Vec out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out[i] = log_sum_exp(logk.row(i).transpose() + v);
    }
    return out;
}

// log(sum_ij exp(u_i + logk_ij + v_j)): log of the total mass of
// diag(e^u) K diag(e^v).
inline double log_total_mass(const Mat& logk, const Vec& u, const Vec& v) {
    return log_sum_exp(log_col_sums(logk, u) + v);
}

}  // namespace barylab
