#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "barylab/errors.hpp"
#include "barylab/logsumexp.hpp"
#include "barylab/types.hpp"

namespace barylab {

using EdgeList = std::vector<std::pair<int, int>>;

// Laplacian of a connected undirected simple graph on m nodes, with its
// spectrum precomputed.  The solver never forms the Kronecker lift
// W = Lap (x) I_n; apply_block acts blockwise instead.
class GraphLaplacian {
  public:
    static GraphLaplacian from_edges(int m, const EdgeList& edges) {
        if (m < 2) throw DomainError("GraphLaplacian: need at least two nodes");
        Mat w = Mat::Zero(m, m);
        std::set<std::pair<int, int>> seen;
        for (auto [a, b] : edges) {
            if (a < 0 || b < 0 || a >= m || b >= m) {
                throw DomainError("GraphLaplacian: edge endpoint out of range");
            }
            if (a == b) throw DomainError("GraphLaplacian: self-loop");
            if (a > b) std::swap(a, b);
            if (!seen.insert({a, b}).second) {
                throw DomainError("GraphLaplacian: duplicate edge");
            }
            w(a, b) = w(b, a) = -1.0;
            w(a, a) += 1.0;
            w(b, b) += 1.0;
        }
        require_connected(m, edges);
        return GraphLaplacian(std::move(w), edges);
    }

    const Mat& mat() const { return w_; }
    int num_nodes() const { return static_cast<int>(w_.rows()); }
    int num_edges() const { return static_cast<int>(edges_.size()); }
    const EdgeList& edges() const { return edges_; }

    const Vec& eigenvalues() const { return eigs_; }
    double lambda_max() const { return lambda_max_; }
    // Smallest eigenvalue above the zero cluster (1e-8 * lambda_max cutoff).
    double lambda_min_plus() const { return lambda_min_plus_; }
    // Condition number of the Laplacian on the complement of ker = span(1).
    double chi() const { return lambda_max_ / lambda_min_plus_; }

    bool has_edge(int a, int b) const {
        return a != b && w_(a, b) != 0.0;
    }

    std::vector<int> neighbors(int node) const {
        std::vector<int> out;
        for (int j = 0; j < num_nodes(); ++j) {
            if (has_edge(node, j)) out.push_back(j);
        }
        return out;
    }

    // Symmetric p.s.d. square root, for tests and diagnostics only.
    Mat sqrt_matrix() const {
        Eigen::SelfAdjointEigenSolver<Mat> es(w_);
        Vec lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
    }

  private:
    GraphLaplacian(Mat w, EdgeList edges) : w_(std::move(w)), edges_(std::move(edges)) {
        Eigen::SelfAdjointEigenSolver<Mat> es(w_);
        eigs_ = es.eigenvalues();
        lambda_max_ = eigs_.maxCoeff();
        if (eigs_.minCoeff() < -1e-10 * std::max(1.0, lambda_max_)) {
            throw NumericalError("GraphLaplacian: negative eigenvalue");
        }
        const double cut = 1e-8 * lambda_max_;
        lambda_min_plus_ = lambda_max_;
        for (Eigen::Index i = 0; i < eigs_.size(); ++i) {
            if (eigs_[i] > cut) {
                lambda_min_plus_ = eigs_[i];
                break;  // eigenvalues are sorted ascending
            }
        }
    }

    static void require_connected(int m, const EdgeList& edges) {
        std::vector<std::vector<int>> adj(m);
        for (auto [a, b] : edges) {
            adj[a].push_back(b);
            adj[b].push_back(a);
        }
        std::vector<char> seen(m, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int count = 1;
        while (!stack.empty()) {
            const int x = stack.back();
            stack.pop_back();
            for (int y : adj[x]) {
                if (!seen[y]) {
                    seen[y] = 1;
                    ++count;
                    stack.push_back(y);
                }
            }
        }
        if (count != m) throw DisconnectedGraph("GraphLaplacian: graph is not connected");
    }

    Mat w_;
    EdgeList edges_;
    Vec eigs_;
    double lambda_max_;
    double lambda_min_plus_;
};

// Leaves 0..m-2 each tied to the hub at index m-1.
inline GraphLaplacian star_graph(int m) {
    EdgeList e;
    for (int i = 0; i + 1 < m; ++i) e.push_back({i, m - 1});
    return GraphLaplacian::from_edges(m, e);
}

inline GraphLaplacian path_graph(int m) {
    EdgeList e;
    for (int i = 0; i + 1 < m; ++i) e.push_back({i, i + 1});
    return GraphLaplacian::from_edges(m, e);
}

inline GraphLaplacian cycle_graph(int m) {
    if (m < 3) throw DomainError("cycle_graph: needs m >= 3");
    EdgeList e;
    for (int i = 0; i < m; ++i) e.push_back({i, (i + 1) % m});
    return GraphLaplacian::from_edges(m, e);
}

inline GraphLaplacian complete_graph(int m) {
    EdgeList e;
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) e.push_back({i, j});
    }
    return GraphLaplacian::from_edges(m, e);
}

// Erdos-Renyi G(m, prob), resampled (bounded) until connected.
inline GraphLaplacian erdos_graph(int m, double prob, unsigned long seed) {
    if (!(prob > 0.0 && prob <= 1.0)) throw DomainError("erdos_graph: prob must be in (0,1]");
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::mt19937_64 rng(seed + static_cast<unsigned long>(attempt));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        EdgeList e;
        for (int i = 0; i < m; ++i) {
            for (int j = i + 1; j < m; ++j) {
                if (unif(rng) < prob) e.push_back({i, j});
            }
        }
        try {
            return GraphLaplacian::from_edges(m, e);
        } catch (const DisconnectedGraph&) {
            continue;
        }
    }
    throw DisconnectedGraph("erdos_graph: no connected sample after 1000 attempts");
}

// Named topology specs: "star", "cycle", "complete", "path", "erdos:<prob>".
inline GraphLaplacian laplacian(const std::string& topology, int m, unsigned long seed = 0) {
    if (topology == "star") return star_graph(m);
    if (topology == "cycle") return cycle_graph(m);
    if (topology == "complete") return complete_graph(m);
    if (topology == "path") return path_graph(m);
    if (topology.rfind("erdos:", 0) == 0) {
        const double prob = std::stod(topology.substr(6));
        return erdos_graph(m, prob, seed);
    }
    throw ParseError("laplacian: unknown topology '" + topology + "'");
}

// Blockwise action of Lap (x) I_n on m stacked n-vectors,
// out_l = sum_j Lap_lj vecs_j, touching only nonzero Laplacian entries.
inline std::vector<Vec> apply_block(const GraphLaplacian& lap, const std::vector<Vec>& vecs) {
    const int m = lap.num_nodes();
    if (static_cast<int>(vecs.size()) != m) {
        throw DimensionError("apply_block: block count != node count");
    }
    const Eigen::Index n = vecs[0].size();
    std::vector<Vec> out(m, Vec::Zero(n));
    for (int l = 0; l < m; ++l) {
        if (vecs[l].size() != n) throw DimensionError("apply_block: ragged blocks");
        for (int j = 0; j < m; ++j) {
            const double w = lap.mat()(l, j);
            if (w != 0.0) out[l] += w * vecs[j];
        }
    }
    return out;
}

// sqrt(q^T [Lap (x) I] q) for the stacked vector q; zero exactly on
// block-wise constant stacks when the graph is connected.
inline double consensus_norm(const GraphLaplacian& lap, const std::vector<Vec>& vecs) {
    const std::vector<Vec> wv = apply_block(lap, vecs);
    double s = 0.0;
    for (size_t l = 0; l < vecs.size(); ++l) s += vecs[l].dot(wv[l]);
    return std::sqrt(std::max(s, 0.0));
}

}  // namespace barylab
