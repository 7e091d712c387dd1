#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <sys/stat.h>
#include <vector>

#include <json.hpp>

#include "barylab/agd.hpp"
#include "barylab/errors.hpp"
#include "barylab/graph.hpp"
#include "barylab/ibp.hpp"
#include "barylab/io.hpp"
#include "barylab/netsim.hpp"
#include "barylab/prox.hpp"
#include "barylab/rounding.hpp"
#include "barylab/types.hpp"

namespace barylab {

using Json = nlohmann::ordered_json;

struct ExperimentConfig {
    std::string algo = "ibp";        // ibp | prox-ibp | agd
    double eps = 0.05;
    std::string topology = "star";   // named topology or edge-list file
    std::string data = "gauss-mix";  // csv path, "gauss-mix", or comma-joined .pgm list
    std::string cost_path;           // optional cost-matrix CSV (CSV data only)
    long n = 8;                      // synthetic support size
    int m = 4;                       // synthetic measure count
    std::uint64_t seed = 0;
    std::string out = "report.json";
    double gamma = 0.0;              // prox-ibp regularization override (0 = default 1.0)
    std::string mode = "fixed";      // agd: fixed|adaptive; prox-ibp: fixed|adaptive inner stop
    int outer_iters = 10;            // prox-ibp
    int inner_iters = 100;           // prox-ibp fixed inner budget (full update pairs)
    bool restart = false;            // prox-ibp regularization probe
    bool netsim = false;             // route through the message-passing harness
};

namespace detail {

inline bool file_exists(const std::string& path) {
    struct stat st {};
    return ::stat(path.c_str(), &st) == 0;
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, sep)) out.push_back(tok);
    return out;
}

}  // namespace detail

// Build the problem instance described by the config's data source.
inline BarycenterProblem ingest_problem(const ExperimentConfig& cfg) {
    if (cfg.data == "gauss-mix") {
        auto measures = gauss_mix_instance(cfg.n, cfg.m, cfg.seed);
        return BarycenterProblem::shared_cost(std::move(measures), grid_cost_1d(cfg.n),
                                              Weights::uniform(cfg.m));
    }
    if (detail::ends_with(cfg.data, ".csv")) {
        auto measures = read_histogram_csv(cfg.data);
        const int m = static_cast<int>(measures.size());
        if (m < 2) throw DimensionError("'" + cfg.data + "': need at least 2 histogram rows");
        const Eigen::Index n = measures.front().size();
        CostMatrix cost = cfg.cost_path.empty() ? grid_cost_1d(n) : read_cost_csv(cfg.cost_path);
        return BarycenterProblem::shared_cost(std::move(measures), std::move(cost),
                                              Weights::uniform(m));
    }
    if (cfg.data.find(".pgm") != std::string::npos) {
        const auto paths = detail::split(cfg.data, ',');
        if (paths.size() < 2) throw DimensionError("need at least 2 PGM images");
        std::vector<Histogram> measures;
        Eigen::Index rows = 0, cols = 0;
        for (const auto& path : paths) {
            PgmImage img = read_pgm(path);
            if (measures.empty()) {
                rows = img.rows;
                cols = img.cols;
            } else if (img.rows != rows || img.cols != cols) {
                throw DimensionError("'" + path + "': image dimensions differ from first image");
            }
            // Small floor keeps fully black regions strictly positive.
            const double floor = 1e-9 * std::max(img.pixels.maxCoeff(), 1.0);
            measures.emplace_back(Vec(img.pixels.array() + floor), MassMode::kNormalize);
        }
        return BarycenterProblem::shared_cost(std::move(measures), grid_cost_2d(rows, cols),
                                              Weights::uniform(static_cast<int>(paths.size())));
    }
    throw ParseError("unrecognized data source '" + cfg.data +
                     "' (expected 'gauss-mix', a .csv file, or comma-joined .pgm files)");
}

// Topology string: a named family (star|cycle|complete|path|erdos:<p>) or an
// edge-list file.
inline GraphLaplacian build_topology(const std::string& topology, int m, std::uint64_t seed) {
    if (detail::file_exists(topology)) {
        return GraphLaplacian::from_edges(m, read_edge_list(topology));
    }
    return laplacian(topology, m, seed);
}

// Unregularized objective estimate: for each measure, solve the transport
// problem at a small reference regularization, round the plan to exact
// marginals, and charge the rounded plan against the cost.  The entropic bias
// of the inner solve is at most 2*gamma_ref*ln(n); gamma_ref is raised tenfold
// (up to 3 times) if the reference solve stalls.
struct ObjectiveEvaluation {
    double value = 0.0;
    double gamma_ref = 0.0;
    double bias_bound = 0.0;
};

inline ObjectiveEvaluation evaluate_objective(const BarycenterProblem& problem,
                                              const Histogram& q) {
    const double c_max = problem.max_cost();
    if (!(c_max > 0)) throw DegenerateInput("evaluate_objective: zero cost matrix");
    double gamma_ref = 1e-3 * c_max;
    const double tol = 1e-4;
    for (int attempt = 0;; ++attempt) {
        try {
            double value = 0.0;
            for (int l = 0; l < problem.num_measures(); ++l) {
                RegOtResult r = reg_ot_cost(problem.measures[l], q, problem.costs[l], gamma_ref,
                                            tol, 20000);
                TransportPlan rounded =
                    round_to_feasible(r.plan, problem.measures[l], q);
                value += problem.weights[l] *
                         transport_cost(rounded, problem.costs[l]);
            }
            ObjectiveEvaluation eval;
            eval.value = value;
            eval.gamma_ref = gamma_ref;
            eval.bias_bound =
                2.0 * gamma_ref * std::log(static_cast<double>(problem.support_size()));
            return eval;
        } catch (const NonConvergence&) {
            if (attempt >= 3) throw;
            gamma_ref *= 10.0;
        }
    }
}

// Two-point instances admit a closed-form optimum: with cost [[0,c],[c,0]] the
// transport cost between (a,1-a) and (t,1-t) is c*|a-t|, so the barycenter
// objective is a weighted median problem whose minimum sits at one of the
// input first coordinates.
inline bool has_two_point_closed_form(const BarycenterProblem& problem) {
    if (problem.support_size() != 2) return false;
    for (const auto& c : problem.costs) {
        if (c.mat()(0, 0) != 0.0 || c.mat()(1, 1) != 0.0) return false;
        if (c.mat()(0, 1) <= 0.0) return false;
    }
    return true;
}

inline double closed_form_median_objective(const BarycenterProblem& problem) {
    if (!has_two_point_closed_form(problem)) {
        throw DomainError("closed_form_median_objective: not a two-point instance");
    }
    const int m = problem.num_measures();
    double best = std::numeric_limits<double>::infinity();
    for (int cand = 0; cand < m; ++cand) {
        const double t = problem.measures[cand][0];
        double value = 0.0;
        for (int l = 0; l < m; ++l) {
            value += problem.weights[l] * problem.costs[l].mat()(0, 1) *
                     std::abs(problem.measures[l][0] - t);
        }
        best = std::min(best, value);
    }
    return best;
}

inline std::string trace_path_for(const std::string& out) {
    if (detail::ends_with(out, ".json")) {
        return out.substr(0, out.size() - 5) + "_trace.csv";
    }
    return out + "_trace.csv";
}

namespace detail {

struct SolverRun {
    Histogram q;
    long iterations = 0;
    Json calibration = Json::object();
    std::optional<RoundMetrics> metrics;
    std::string trace_header;
    std::vector<std::string> trace_lines;
};

inline std::string fmt(double x) {
    std::ostringstream ss;
    ss << std::setprecision(17) << x;
    return ss.str();
}

inline SolverRun run_ibp(const ExperimentConfig& cfg, const BarycenterProblem& problem) {
    SolverRun run{Histogram(Vec::Constant(problem.support_size(),
                                          1.0 / static_cast<double>(problem.support_size())))};
    run.trace_header = "half_step,dual_objective";
    if (cfg.netsim) {
        const double n_real = static_cast<double>(problem.support_size());
        const double gamma = cfg.eps / (4.0 * std::log(n_real));
        const double eps_prime = cfg.eps / (4.0 * problem.max_cost());
        NetsimIbpOutcome out = run_ibp_centralized(problem, gamma, eps_prime);
        run.q = out.report.qbar;
        run.iterations = out.report.iterations;
        run.metrics = out.metrics;
        run.calibration["gamma"] = out.report.gamma;
        run.calibration["eps_prime"] = out.report.eps_prime;
        run.calibration["r_v"] = out.report.r_v;
        run.calibration["iteration_bound"] = out.report.iteration_bound;
        return run;
    }
    IbpBarycenter result = barycenter_ibp(problem, cfg.eps);
    run.q = result.report.qbar;
    run.iterations = result.report.iterations;
    run.calibration["gamma"] = result.report.gamma;
    run.calibration["eps_prime"] = result.report.eps_prime;
    run.calibration["r_v"] = result.report.r_v;
    run.calibration["iteration_bound"] = result.report.iteration_bound;
    for (std::size_t i = 0; i < result.report.dual_trace.size(); ++i) {
        run.trace_lines.push_back(std::to_string(i + 1) + "," + fmt(result.report.dual_trace[i]));
    }
    return run;
}

inline SolverRun run_prox(const ExperimentConfig& cfg, const BarycenterProblem& problem) {
    ProxConfig pc;
    pc.gamma = cfg.gamma > 0.0 ? cfg.gamma : 1.0;
    pc.outer_iters = cfg.outer_iters;
    pc.inner_iters = cfg.inner_iters;
    pc.restart = cfg.restart;
    if (cfg.mode == "adaptive") {
        pc.inner_tol = suggested_inner_tol(cfg.eps, problem.support_size(),
                                           problem.num_measures());
    }
    ProxResult result = prox_ibp_solve(problem, pc);
    SolverRun run{result.qbar};
    run.trace_header = "outer,objective,prox_penalty,inner_pairs,inner_criterion";
    long total_pairs = 0;
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
        const auto& rec = result.trace[i];
        total_pairs += rec.inner_pairs;
        run.trace_lines.push_back(std::to_string(i + 1) + "," + fmt(rec.objective) + "," +
                                  fmt(rec.prox_penalty) + "," + std::to_string(rec.inner_pairs) +
                                  "," + fmt(rec.inner_criterion));
    }
    run.iterations = total_pairs;
    run.calibration["gamma"] = result.gamma_used;
    run.calibration["outer_iters"] = cfg.outer_iters;
    if (pc.inner_tol) run.calibration["inner_tol"] = *pc.inner_tol;
    return run;
}

inline SolverRun run_agd(const ExperimentConfig& cfg, const BarycenterProblem& problem,
                         const GraphLaplacian& lap) {
    SolverRun run{Histogram(Vec::Constant(problem.support_size(),
                                          1.0 / static_cast<double>(problem.support_size())))};
    run.trace_header = "iteration,consensus";
    if (cfg.netsim) {
        if (cfg.mode == "adaptive") {
            throw DomainError("netsim agd supports --mode fixed only");
        }
        NetsimAgdOutcome out = run_agd_decentralized(problem, cfg.eps, lap);
        const AgdCalibration cal = agd_calibrate(problem, cfg.eps, lap);
        run.q = out.q;
        run.iterations = out.iterations;
        run.metrics = out.metrics;
        run.calibration["gamma"] = cal.gamma;
        run.calibration["gamma_l"] = std::vector<double>(cal.gamma_l.data(),
                                                         cal.gamma_l.data() + cal.gamma_l.size());
        run.calibration["lipschitz"] = cal.lipschitz;
        run.calibration["radius"] = cal.radius;
        run.calibration["n_bound"] = cal.n_bound;
        run.calibration["chi"] = lap.chi();
        return run;
    }
    const AgdMode mode = cfg.mode == "adaptive" ? AgdMode::kAdaptive : AgdMode::kFixedN;
    AgdResult result = agd_solve(problem, cfg.eps, lap, mode);
    run.q = result.q;
    run.iterations = result.report.iterations;
    run.calibration["gamma"] = result.report.calibration.gamma;
    run.calibration["gamma_l"] =
        std::vector<double>(result.report.calibration.gamma_l.data(),
                            result.report.calibration.gamma_l.data() +
                                result.report.calibration.gamma_l.size());
    run.calibration["lipschitz"] = result.report.calibration.lipschitz;
    run.calibration["radius"] = result.report.calibration.radius;
    run.calibration["n_bound"] = result.report.calibration.n_bound;
    run.calibration["chi"] = lap.chi();
    run.calibration["consensus"] = result.report.consensus;
    run.calibration["consensus_threshold"] = result.report.consensus_threshold;
    for (std::size_t i = 0; i < result.report.consensus_trace.size(); ++i) {
        run.trace_lines.push_back(std::to_string(i + 1) + "," +
                                  fmt(result.report.consensus_trace[i]));
    }
    return run;
}

inline SolverRun dispatch_solver(const ExperimentConfig& cfg, const BarycenterProblem& problem) {
    if (cfg.algo == "ibp") return run_ibp(cfg, problem);
    if (cfg.algo == "prox-ibp") return run_prox(cfg, problem);
    if (cfg.algo == "agd") {
        const GraphLaplacian lap =
            build_topology(cfg.topology, problem.num_measures(), cfg.seed);
        return run_agd(cfg, problem, lap);
    }
    throw ParseError("unknown algorithm '" + cfg.algo + "' (expected ibp|prox-ibp|agd)");
}

inline Json config_json(const ExperimentConfig& cfg) {
    Json j;
    j["algo"] = cfg.algo;
    j["eps"] = cfg.eps;
    j["topology"] = cfg.topology;
    j["data"] = cfg.data;
    j["cost"] = cfg.cost_path;
    j["n"] = cfg.n;
    j["m"] = cfg.m;
    j["seed"] = cfg.seed;
    j["out"] = cfg.out;
    j["gamma"] = cfg.gamma;
    j["mode"] = cfg.mode;
    j["outer_iters"] = cfg.outer_iters;
    j["inner_iters"] = cfg.inner_iters;
    j["restart"] = cfg.restart;
    j["netsim"] = cfg.netsim;
    return j;
}

}  // namespace detail

struct ExperimentOutcome {
    Json report;
    int exit_code = 0;
    std::string trace_csv;
};

// Runs one configured solve and assembles the versioned report.  Input errors
// exit with 2, solver failures with 1; either way the error is serialized into
// the report so the artifact always documents what happened.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
    ExperimentOutcome outcome;
    outcome.trace_csv = trace_path_for(cfg.out);
    Json& report = outcome.report;
    report["schema"] = 1;
    report["config"] = detail::config_json(cfg);
    report["error"] = nullptr;

    std::optional<BarycenterProblem> problem;
    try {
        problem.emplace(ingest_problem(cfg));
    } catch (const Error& e) {
        report["error"] = Json{{"type", "input"}, {"message", e.what()}};
        outcome.exit_code = 2;
        return outcome;
    }

    try {
        detail::SolverRun run = detail::dispatch_solver(cfg, *problem);
        const ObjectiveEvaluation eval = evaluate_objective(*problem, run.q);
        report["barycenter"] =
            std::vector<double>(run.q.vec().data(), run.q.vec().data() + run.q.size());
        report["objective"] = Json{{"value", eval.value},
                                   {"gamma_ref", eval.gamma_ref},
                                   {"bias_bound", eval.bias_bound}};
        report["iterations"] = run.iterations;
        if (run.metrics) {
            report["communication"] = Json{{"rounds", run.metrics->rounds},
                                           {"vectors_sent", run.metrics->vectors_sent},
                                           {"bytes_sent", run.metrics->bytes_sent}};
        } else {
            report["communication"] = nullptr;
        }
        report["calibration"] = run.calibration;
        report["trace_csv"] = outcome.trace_csv;

        std::ofstream trace(outcome.trace_csv);
        if (!trace) throw Error("cannot write trace file '" + outcome.trace_csv + "'");
        trace << run.trace_header << "\n";
        for (const auto& line : run.trace_lines) trace << line << "\n";
    } catch (const ParseError& e) {
        report["error"] = Json{{"type", "input"}, {"message", e.what()}};
        outcome.exit_code = 2;
    } catch (const Error& e) {
        report["error"] = Json{{"type", "solver"}, {"message", e.what()}};
        outcome.exit_code = 1;
    }
    return outcome;
}

struct ScalingRow {
    double eps = 0.0;
    long iterations = 0;
    long rounds = 0;
    double objective = 0.0;
    double objective_gap = 0.0;
};

struct ScalingStudy {
    std::vector<ScalingRow> rows;
    double slope = 0.0;  // d ln(iterations) / d ln(1/eps)
};

// Sweep the accuracy parameter and record iteration/communication cost.
// Rounds follow the harness accounting: the alternating solvers spend two
// rounds per full iteration (gather + broadcast), the accelerated solver one
// exchange per iteration.  The gap column is measured against the two-point
// closed form when available, otherwise against the best objective in the
// sweep.
inline ScalingStudy run_scaling_study(const ExperimentConfig& base,
                                      const std::vector<double>& eps_list) {
    if (eps_list.size() < 4) {
        throw DomainError("run_scaling_study: need at least 4 accuracy points");
    }
    const double lo = *std::min_element(eps_list.begin(), eps_list.end());
    const double hi = *std::max_element(eps_list.begin(), eps_list.end());
    // The canonical sweep {0.2, 0.1, 0.05, 0.025} spans a factor of 8; accept
    // anything at least that wide.
    if (!(hi / lo >= 8.0 * (1.0 - 1e-12))) {
        throw DomainError("run_scaling_study: accuracy points must span at least a factor of 8");
    }
    const BarycenterProblem problem = ingest_problem(base);

    ScalingStudy study;
    for (double eps : eps_list) {
        ExperimentConfig cfg = base;
        cfg.eps = eps;
        detail::SolverRun run = detail::dispatch_solver(cfg, problem);
        const ObjectiveEvaluation eval = evaluate_objective(problem, run.q);
        ScalingRow row;
        row.eps = eps;
        row.iterations = run.iterations;
        if (run.metrics) {
            row.rounds = run.metrics->rounds;
        } else if (cfg.algo == "agd") {
            row.rounds = run.iterations;
        } else {
            // Alternating solvers: each full iteration is one gather plus one
            // broadcast; iterations counts half-steps, so rounds == half-steps.
            row.rounds = run.iterations;
        }
        row.objective = eval.value;
        study.rows.push_back(row);
    }

    double oracle = std::numeric_limits<double>::infinity();
    if (has_two_point_closed_form(problem)) {
        oracle = closed_form_median_objective(problem);
    } else {
        for (const auto& row : study.rows) oracle = std::min(oracle, row.objective);
    }
    for (auto& row : study.rows) row.objective_gap = row.objective - oracle;

    // Least-squares slope of ln(iterations) against ln(1/eps).
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double count = static_cast<double>(study.rows.size());
    for (const auto& row : study.rows) {
        const double x = std::log(1.0 / row.eps);
        const double y = std::log(static_cast<double>(row.iterations));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    study.slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    return study;
}

inline void write_scaling_csv(const ScalingStudy& study, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write scaling CSV '" + path + "'");
    out << "eps,iterations,rounds,objective_gap\n";
    for (const auto& row : study.rows) {
        out << detail::fmt(row.eps) << "," << row.iterations << "," << row.rounds << ","
            << detail::fmt(row.objective_gap) << "\n";
    }
}

}  // namespace barylab
