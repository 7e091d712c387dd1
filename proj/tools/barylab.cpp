#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "barylab/barylab.hpp"

namespace {

void add_config_flags(CLI::App& app, barylab::ExperimentConfig& cfg) {
    app.add_option("--algo", cfg.algo, "Solver: ibp|prox-ibp|agd")
        ->check(CLI::IsMember({"ibp", "prox-ibp", "agd"}));
    app.add_option("--eps", cfg.eps, "Target accuracy in (0,1)");
    app.add_option("--topology", cfg.topology,
                   "Graph: star|cycle|complete|path|erdos:<p> or an edge-list file");
    app.add_option("--data", cfg.data,
                   "Data source: gauss-mix, a histogram CSV, or comma-joined PGM files");
    app.add_option("--cost", cfg.cost_path, "Cost matrix CSV (CSV data sources only)");
    app.add_option("--n", cfg.n, "Synthetic support size");
    app.add_option("--m", cfg.m, "Synthetic measure count");
    app.add_option("--seed", cfg.seed, "Random seed for synthetic data / random graphs");
    app.add_option("--out", cfg.out, "Output report path");
    app.add_option("--gamma", cfg.gamma, "prox-ibp regularization strength (0 = default)");
    app.add_option("--mode", cfg.mode, "fixed|adaptive (agd stopping / prox-ibp inner stop)")
        ->check(CLI::IsMember({"fixed", "adaptive"}));
    app.add_option("--outer-iters", cfg.outer_iters, "prox-ibp outer iterations");
    app.add_option("--inner-iters", cfg.inner_iters, "prox-ibp inner update pairs per outer");
    app.add_flag("--restart", cfg.restart, "prox-ibp: probe for a safe regularization first");
    app.add_flag("--netsim", cfg.netsim, "Run through the message-passing harness");
}

int write_json(const barylab::Json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        std::cerr << "error: cannot write '" << path << "'\n";
        return 2;
    }
    out << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wasserstein barycenter solvers with communication accounting"};
    app.require_subcommand(1);

    barylab::ExperimentConfig cfg;
    std::string eps_list_arg = "0.2,0.1,0.05,0.025";

    CLI::App* solve = app.add_subcommand("solve", "Run one solver and emit a JSON report");
    add_config_flags(*solve, cfg);

    CLI::App* scale = app.add_subcommand("scale", "Accuracy sweep with a log-log slope");
    add_config_flags(*scale, cfg);
    scale->add_option("--eps-list", eps_list_arg, "Comma-separated accuracy points");

    std::string spectra_topology = "star";
    int spectra_m = 4;
    std::uint64_t spectra_seed = 0;
    std::string spectra_out;
    CLI::App* spectra = app.add_subcommand("spectra", "Report graph spectral constants");
    spectra->add_option("--topology", spectra_topology, "Graph family or edge-list file");
    spectra->add_option("--m", spectra_m, "Number of nodes");
    spectra->add_option("--seed", spectra_seed, "Seed for random graphs");
    spectra->add_option("--out", spectra_out, "Optional JSON output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) {
            barylab::ExperimentOutcome outcome = barylab::run_experiment(cfg);
            const int write_rc = write_json(outcome.report, cfg.out);
            if (write_rc != 0) return write_rc;
            if (!outcome.report["error"].is_null()) {
                std::cerr << "error: " << outcome.report["error"]["message"].get<std::string>()
                          << "\n";
            } else {
                std::cout << "objective " << outcome.report["objective"]["value"].get<double>()
                          << "\n"
                          << "iterations " << outcome.report["iterations"].get<long>() << "\n";
            }
            std::cout << "report " << cfg.out << "\n";
            return outcome.exit_code;
        }
        if (scale->parsed()) {
            std::vector<double> eps_list;
            for (const auto& tok : barylab::detail::split(eps_list_arg, ',')) {
                eps_list.push_back(barylab::detail::parse_real(tok, 1, 1));
            }
            if (cfg.out == "report.json") cfg.out = "scaling.csv";
            barylab::ScalingStudy study = barylab::run_scaling_study(cfg, eps_list);
            barylab::write_scaling_csv(study, cfg.out);
            std::cout << "slope " << study.slope << "\n"
                      << "table " << cfg.out << "\n";
            return 0;
        }
        if (spectra->parsed()) {
            barylab::GraphLaplacian lap =
                barylab::build_topology(spectra_topology, spectra_m, spectra_seed);
            barylab::Json j;
            j["schema"] = 1;
            j["topology"] = spectra_topology;
            j["m"] = spectra_m;
            j["edges"] = lap.num_edges();
            j["lambda_max"] = lap.lambda_max();
            j["lambda_min_plus"] = lap.lambda_min_plus();
            j["chi"] = lap.chi();
            j["eigenvalues"] = std::vector<double>(lap.eigenvalues().data(),
                                                   lap.eigenvalues().data() +
                                                       lap.eigenvalues().size());
            std::cout << j.dump(2) << "\n";
            if (!spectra_out.empty()) return write_json(j, spectra_out);
            return 0;
        }
    } catch (const barylab::ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const barylab::DimensionError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const barylab::DomainError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const barylab::Error& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
