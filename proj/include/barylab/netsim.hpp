#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "barylab/agd.hpp"
#include "barylab/entropic.hpp"
#include "barylab/errors.hpp"
#include "barylab/graph.hpp"
#include "barylab/ibp.hpp"
#include "barylab/types.hpp"

namespace barylab {

// Communication counters for a simulated run.  Every message is n doubles
// (8 bytes each); wall_time buckets are informational and excluded from
// determinism comparisons.
struct RoundMetrics {
    long rounds = 0;
    long vectors_sent = 0;
    long bytes_sent = 0;
    std::map<std::string, double> wall_time;
};

// Record of which agent read which agent's private data; the test hook for
// the locality guarantee.
struct DataAccessAudit {
    std::vector<std::pair<int, int>> reads;  // (owner, accessor)

    bool all_self() const {
        for (const auto& [owner, accessor] : reads) {
            if (owner != accessor) return false;
        }
        return true;
    }
};

// Agent-owned value: reads must present the owner's id.
template <typename T>
class AgentLocal {
  public:
    AgentLocal(int owner, T value, DataAccessAudit* audit)
        : owner_(owner), value_(std::move(value)), audit_(audit) {}

    const T& get(int accessor) const {
        if (audit_) audit_->reads.push_back({owner_, accessor});
        if (accessor != owner_) {
            throw LocalityViolation("agent " + std::to_string(accessor) +
                                    " touched data of agent " + std::to_string(owner_));
        }
        return value_;
    }

  private:
    int owner_;
    T value_;
    DataAccessAudit* audit_;
};

// Bulk-synchronous mail: posts stage messages, deliver() publishes them all at
// the round boundary, reads are restricted to graph neighbors.
class Mailroom {
  public:
    explicit Mailroom(const GraphLaplacian& lap) : lap_(lap) {}

    void post(int from, int to, Vec message) {
        require_edge(from, to, "post");
        staged_[{to, from}] = std::move(message);
    }

    void deliver() {
        inbox_ = std::move(staged_);
        staged_.clear();
    }

    const Vec& read(int reader, int from) const {
        require_edge(reader, from, "read");
        const auto it = inbox_.find({reader, from});
        if (it == inbox_.end()) {
            throw Error("Mailroom: no message from " + std::to_string(from) + " to " +
                        std::to_string(reader) + " this round");
        }
        return it->second;
    }

  private:
    void require_edge(int a, int b, const char* op) const {
        const int m = lap_.num_nodes();
        if (a < 0 || b < 0 || a >= m || b >= m || !lap_.has_edge(a, b)) {
            throw LocalityViolation(std::string("Mailroom::") + op + ": " +
                                    std::to_string(a) + " and " + std::to_string(b) +
                                    " are not neighbors");
        }
    }

    const GraphLaplacian& lap_;
    std::map<std::pair<int, int>, Vec> staged_;
    std::map<std::pair<int, int>, Vec> inbox_;
};

struct NetsimIbpOutcome {
    IbpReport report;
    RoundMetrics metrics;
};

struct NetsimAgdOutcome {
    Histogram q;
    long iterations;
    RoundMetrics metrics;
};

namespace detail {

class PhaseTimer {
  public:
    explicit PhaseTimer(RoundMetrics& metrics) : metrics_(metrics) {}

    template <typename F>
    void timed(const char* phase, F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        const auto t1 = std::chrono::steady_clock::now();
        metrics_.wall_time[phase] += std::chrono::duration<double>(t1 - t0).count();
    }

  private:
    RoundMetrics& metrics_;
};

}  // namespace detail

// Master/slave execution of the alternating dual solver.  Each full iteration
// is one gather (every slave ships its column log-marginal factor to the hub)
// plus one broadcast (the hub ships back the weighted mean), i.e. two metered
// rounds moving m vectors each.  The hub evaluates the stopping criterion from
// the next gather; when it fires, that terminal confirmation gather carries no
// new iteration and is left out of the metrics so that rounds == 2 * full
// iterations exactly.
inline NetsimIbpOutcome run_ibp_centralized(const BarycenterProblem& problem, double gamma,
                                            double eps_prime,
                                            DataAccessAudit* audit = nullptr) {
    if (!(gamma > 0.0) || !(eps_prime > 0.0)) {
        throw DomainError("run_ibp_centralized: gamma and eps' must be positive");
    }
    const int m = problem.num_measures();
    const Eigen::Index n = problem.support_size();
    const int master = m;  // hub of an (m+1)-node star
    const GraphLaplacian star = star_graph(m + 1);
    Mailroom mail(star);
    RoundMetrics metrics;
    detail::PhaseTimer timer(metrics);

    // Per-slave private state.
    std::vector<AgentLocal<Mat>> log_kernels;
    std::vector<AgentLocal<Vec>> log_ps;
    for (int l = 0; l < m; ++l) {
        log_kernels.emplace_back(l, Mat(-problem.costs[l].mat() / gamma), audit);
        if (!problem.measures[l].strictly_positive()) {
            throw DomainError("run_ibp_centralized: measure " + std::to_string(l) +
                              " has a zero entry");
        }
        log_ps.emplace_back(l, Vec(problem.measures[l].vec().array().log()), audit);
    }
    std::vector<Vec> u(m, Vec::Zero(n));
    std::vector<Vec> v(m, Vec::Zero(n));
    std::vector<Vec> col_sums(m);
    timer.timed("compute", [&] {
        for (int l = 0; l < m; ++l) {
            col_sums[l] = log_col_sums(log_kernels[l].get(l), u[l]);
        }
    });

    // Master-side memory of the previous exchange, used to reconstruct each
    // slave's v (same subtraction the slave performs, hence the same doubles).
    std::vector<Vec> master_prev_s;
    Vec master_prev_mean;
    const double r_v = (problem.max_cost() + problem.weighted_cost()) / gamma;
    const double bound_half_steps = 4.0 + 44.0 * r_v / eps_prime;
    const long max_pairs = static_cast<long>(std::ceil(bound_half_steps));

    double crit_value = 0.0;
    Vec qbar_raw;
    long pairs_done = 0;
    for (long pair = 1;; ++pair) {
        // Gather round: slaves -> master.
        timer.timed("deliver", [&] {
            for (int l = 0; l < m; ++l) mail.post(l, master, col_sums[l]);
            mail.deliver();
        });
        std::vector<Vec> s(m);
        for (int l = 0; l < m; ++l) s[l] = mail.read(master, l);

        if (pair >= 2) {
            // Criterion for the state after (pair-1) completed iterations.
            Vec qbar = Vec::Zero(n);
            std::vector<Vec> marg(m);
            for (int l = 0; l < m; ++l) {
                const Vec v_l = master_prev_mean - master_prev_s[l];
                marg[l] = (v_l + s[l]).array().exp();
                qbar += problem.weights[l] * marg[l];
            }
            double crit = 0.0;
            for (int l = 0; l < m; ++l) {
                crit += problem.weights[l] * (marg[l] - qbar).lpNorm<1>();
            }
            if (crit <= eps_prime) {
                crit_value = crit;
                qbar_raw = qbar;
                pairs_done = pair - 1;
                break;
            }
            if (pair - 1 >= max_pairs) {
                throw IterationCapExceeded(
                    "run_ibp_centralized: criterion " + std::to_string(crit) +
                    " > " + std::to_string(eps_prime) + " after twice the guaranteed bound");
            }
        }

        Vec mean = Vec::Zero(n);
        timer.timed("compute", [&] {
            for (int l = 0; l < m; ++l) mean += problem.weights[l] * s[l];
        });
        master_prev_s = std::move(s);
        master_prev_mean = mean;

        // Broadcast round: master -> slaves.
        timer.timed("deliver", [&] {
            for (int l = 0; l < m; ++l) mail.post(master, l, mean);
            mail.deliver();
        });
        metrics.rounds += 2;
        metrics.vectors_sent += 2L * m;
        metrics.bytes_sent += 2L * m * n * 8;

        timer.timed("compute", [&] {
            for (int l = 0; l < m; ++l) {
                const Vec& mean_msg = mail.read(l, master);
                v[l] = mean_msg - col_sums[l];
                u[l] = log_ps[l].get(l) - log_row_sums(log_kernels[l].get(l), v[l]);
                col_sums[l] = log_col_sums(log_kernels[l].get(l), u[l]);
            }
        });
    }

    IbpReport rep{{},
                  Histogram(qbar_raw, MassMode::kNormalize),
                  2 * pairs_done,
                  crit_value,
                  {},
                  r_v,
                  bound_half_steps,
                  gamma,
                  eps_prime};
    rep.plans.reserve(m);
    for (int l = 0; l < m; ++l) {
        rep.plans.push_back(make_plan(DualPotentials(u[l], v[l]),
                                      GibbsKernel::from_log(log_kernels[l].get(l), gamma)));
    }
    return NetsimIbpOutcome{std::move(rep), std::move(metrics)};
}

// Fully decentralized accelerated solve: one gradient-exchange round per
// iteration, every edge carrying one vector in each direction.  Arithmetic
// matches agd_solve term for term (each agent sums neighbor contributions in
// ascending node order, exactly like the blockwise Laplacian apply).
inline NetsimAgdOutcome run_agd_decentralized(const BarycenterProblem& problem, double eps,
                                              const GraphLaplacian& lap,
                                              DataAccessAudit* audit = nullptr) {
    const AgdCalibration cal = agd_calibrate(problem, eps, lap);
    const int m = problem.num_measures();
    const Eigen::Index n = problem.support_size();
    Mailroom mail(lap);
    RoundMetrics metrics;
    detail::PhaseTimer timer(metrics);

    std::vector<AgentLocal<Histogram>> p_smooth;
    std::vector<AgentLocal<CostMatrix>> costs;
    for (int l = 0; l < m; ++l) {
        p_smooth.emplace_back(l, cal.smoothed[l], audit);
        costs.emplace_back(l, problem.costs[l], audit);
    }
    std::vector<Vec> eta(m, Vec::Zero(n));
    std::vector<Vec> zeta(m, Vec::Zero(n));
    std::vector<Vec> lambda(m, Vec::Zero(n));
    std::vector<Vec> q_avg(m, Vec::Zero(n));
    std::vector<Vec> grads(m);
    double a = 0.0;

    const long edges = lap.num_edges();
    for (long k = 0; k < cal.n_bound; ++k) {
        const AlphaStep st = alpha_step(a, cal.lipschitz);
        timer.timed("compute", [&] {
            for (int l = 0; l < m; ++l) {
                lambda[l] = (st.alpha * zeta[l] + a * eta[l]) / st.a_next;
                grads[l] = conjugate_grad(lambda[l], p_smooth[l].get(l), costs[l].get(l),
                                          cal.gamma_l[l]);
            }
        });
        timer.timed("deliver", [&] {
            for (int l = 0; l < m; ++l) {
                for (int j : lap.neighbors(l)) mail.post(l, j, grads[l]);
            }
            mail.deliver();
        });
        metrics.rounds += 1;
        metrics.vectors_sent += 2 * edges;
        metrics.bytes_sent += 2 * edges * n * 8;

        timer.timed("compute", [&] {
            for (int l = 0; l < m; ++l) {
                Vec wsum = Vec::Zero(n);
                for (int j = 0; j < m; ++j) {
                    const double w = lap.mat()(l, j);
                    if (w == 0.0) continue;
                    wsum += w * (j == l ? grads[l] : mail.read(l, j));
                }
                zeta[l] -= (st.alpha / problem.weights[l]) * wsum;
                eta[l] = (st.alpha * zeta[l] + a * eta[l]) / st.a_next;
                q_avg[l] = (st.alpha * grads[l] + a * q_avg[l]) / st.a_next;
            }
        });
        a = st.a_next;
    }

    Vec q_mix = Vec::Zero(n);
    for (int l = 0; l < m; ++l) q_mix += problem.weights[l] * q_avg[l];
    return NetsimAgdOutcome{Histogram(q_mix, MassMode::kNormalize), cal.n_bound,
                            std::move(metrics)};
}

}  // namespace barylab
