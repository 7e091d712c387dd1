// KL-proximal outer loop: kernel accumulation, reduction to the plain
// alternating solver, descent, warm starts, and the gamma-restart probe.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "helpers.hpp"

using namespace barylab;

namespace {

BarycenterProblem median_problem() {
    auto two = [](double a) {
        Vec v(2);
        v << a, 1.0 - a;
        return Histogram(v);
    };
    Mat c(2, 2);
    c << 0.0, 1.0, 1.0, 0.0;
    return BarycenterProblem::shared_cost({two(0.2), two(0.5), two(0.9)}, CostMatrix(c),
                                          Weights::uniform(3));
}

BarycenterProblem scaled_costs(const BarycenterProblem& prob, double factor) {
    std::vector<CostMatrix> costs;
    costs.reserve(prob.num_measures());
    for (const CostMatrix& c : prob.costs) costs.emplace_back(Mat(factor * c.mat()));
    return BarycenterProblem(prob.measures, std::move(costs), prob.weights);
}

}  // namespace

TEST_CASE("prox kernel accumulates log plan minus cost", "[prox]") {
    std::mt19937_64 rng(3);
    const CostMatrix c = testutil::random_cost(rng, 4);
    const double gamma = 0.5;

    SECTION("the k=0 initialization doubles the cost term") {
        const TransportPlan pi0(Mat((-c.mat() / gamma).array().exp()));
        const GibbsKernel k = prox_kernel(pi0, c, gamma);
        CHECK((k.log() + 2.0 * c.mat() / gamma).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("zero cost returns the plan's log") {
        const TransportPlan pi = testutil::random_plan(rng, 4);
        const GibbsKernel k = prox_kernel(pi, CostMatrix(Mat::Zero(4, 4)), gamma);
        CHECK((k.log() - pi.mat().array().log().matrix()).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("random instance matches the product oracle") {
        const TransportPlan pi = testutil::random_plan(rng, 4);
        const GibbsKernel k = prox_kernel(pi, c, gamma);
        const Mat oracle =
            (pi.mat().array() * (-c.mat() / gamma).array().exp()).log().matrix();
        CHECK(((k.log() - oracle).cwiseAbs().array() / oracle.cwiseAbs().maxCoeff())
                  .maxCoeff() < 1e-12);
    }
    SECTION("zero plan entries are rejected") {
        Mat z = Mat::Constant(4, 4, 1.0 / 16.0);
        z(1, 2) = 0.0;
        CHECK_THROWS_AS(prox_kernel(TransportPlan(z), c, gamma), DomainError);
    }
}

TEST_CASE("inner tolerance recipe", "[prox]") {
    CHECK(suggested_inner_tol(0.1, 4, 3) ==
          Catch::Approx(0.01 / (3.0 * 64.0)).margin(1e-18));
    CHECK(suggested_inner_tol(0.1, 4, 3, 2.5) ==
          Catch::Approx(2.5 * 0.01 / (3.0 * 64.0)).margin(1e-18));
    CHECK_THROWS_AS(suggested_inner_tol(0.0, 4, 3), DomainError);
}

TEST_CASE("one outer step reduces to the doubled-kernel alternating run", "[prox]") {
    std::mt19937_64 rng(7);
    const BarycenterProblem prob = testutil::random_problem(rng, 4, 3);
    const double gamma = 0.6;
    ProxConfig cfg;
    cfg.gamma = gamma;
    cfg.outer_iters = 1;
    cfg.inner_iters = 25;
    const ProxResult prox = prox_ibp_solve(prob, cfg);

    // Direct run over kernels exp(-2C/gamma), same number of pairs.
    std::vector<GibbsKernel> kernels;
    for (int l = 0; l < 3; ++l) {
        kernels.push_back(GibbsKernel::from_log(-2.0 * prob.costs[l].mat() / gamma, gamma));
    }
    IbpState s = IbpState::start(std::move(kernels), prob.weights);
    const IbpRunResult run =
        ibp_run(s, prob.measures, log_histograms(prob.measures), 0.0, 25);
    const Histogram q_direct(run.qbar, MassMode::kNormalize);

    CHECK((prox.qbar.vec() - q_direct.vec()).cwiseAbs().maxCoeff() < 1e-13);
    REQUIRE(prox.trace.size() == 1);
    CHECK(prox.trace[0].inner_pairs == 25);
    for (int l = 0; l < 3; ++l) {
        const TransportPlan direct_plan =
            make_plan(DualPotentials(s.u[l], s.v[l]), s.kernels[l]);
        CHECK((prox.plans[l].mat() - direct_plan.mat()).cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("outer loop anneals identical measures onto their common marginal", "[prox]") {
    std::mt19937_64 rng(11);
    const Histogram p = testutil::random_histogram(rng, 4);
    const BarycenterProblem prob = BarycenterProblem::shared_cost(
        {p, p, p}, testutil::random_cost(rng, 4), Weights::uniform(3));
    // Each outer step sharpens the effective regularization (gamma/(k+1) after
    // k steps), so the reported marginal is entropy-smeared early on and
    // converges to p as outer iterations accumulate.
    double prev = std::numeric_limits<double>::infinity();
    for (int outers : {1, 4, 16, 32}) {
        ProxConfig cfg;
        cfg.gamma = 0.4;
        cfg.outer_iters = outers;
        cfg.inner_tol = 1e-8;
        const ProxResult res = prox_ibp_solve(prob, cfg);
        const double dev = (res.qbar.vec() - p.vec()).cwiseAbs().sum();
        CHECK(dev < 0.6 * prev);
        prev = dev;
        for (const ProxOuterRecord& rec : res.trace) CHECK(rec.inner_criterion <= 1e-8);
    }
    CHECK(prev < 1e-3);  // observed 8.9e-5 at 32 outers
}

TEST_CASE("large-gamma prox run still reaches the median optimum", "[prox]") {
    const BarycenterProblem prob = median_problem();
    ProxConfig cfg;
    cfg.gamma = 0.5;  // far above the eps/(4 ln 2) calibration
    cfg.outer_iters = 30;
    cfg.inner_iters = 200;
    const ProxResult res = prox_ibp_solve(prob, cfg);
    double objective = 0.0;
    for (int l = 0; l < 3; ++l) {
        objective += prob.weights[l] * std::abs(prob.measures[l][0] - res.qbar[0]);
    }
    CHECK(objective <= 0.7 / 3.0 + 0.05);
    CHECK(res.qbar[0] == Catch::Approx(0.5).margin(0.05));
    CHECK(res.gamma_used == 0.5);
}

TEST_CASE("outer objective plus prox penalty descends", "[prox]") {
    std::mt19937_64 rng(13);
    const BarycenterProblem prob = testutil::random_problem(rng, 4, 3);
    ProxConfig cfg;
    cfg.gamma = 0.5;
    cfg.outer_iters = 10;
    cfg.inner_iters = 200;
    const ProxResult res = prox_ibp_solve(prob, cfg);
    REQUIRE(res.trace.size() == 10);
    for (size_t k = 1; k < res.trace.size(); ++k) {
        // Prox-point descent: the new objective plus the KL step cost cannot
        // exceed the previous objective (up to inner inexactness).
        CHECK(res.trace[k].objective + res.trace[k].prox_penalty <=
              res.trace[k - 1].objective + 1e-6);
    }
}

TEST_CASE("warm starts beat cold starts on most seeded instances", "[prox]") {
    int warm_wins = 0;
    const int trials = 10;
    for (int trial = 0; trial < trials; ++trial) {
        std::mt19937_64 rng(100 + trial);
        const BarycenterProblem prob = testutil::random_problem(rng, 6, 3);
        ProxConfig cfg;
        cfg.gamma = 0.3;
        cfg.outer_iters = 4;
        cfg.inner_tol = 1e-4;
        cfg.warm_start = true;
        const ProxResult warm = prox_ibp_solve(prob, cfg);
        cfg.warm_start = false;
        const ProxResult cold = prox_ibp_solve(prob, cfg);
        long warm_pairs = 0;
        long cold_pairs = 0;
        // The first outer step is identical either way; compare the rest.
        for (size_t k = 1; k < warm.trace.size(); ++k) {
            warm_pairs += warm.trace[k].inner_pairs;
            cold_pairs += cold.trace[k].inner_pairs;
        }
        if (warm_pairs < cold_pairs) ++warm_wins;
    }
    CHECK(warm_wins >= (trials * 8) / 10);
}

TEST_CASE("gamma restart probe", "[prox]") {
    const BarycenterProblem prob = median_problem();

    SECTION("returns a gamma in (0, gamma0] and a monotone trace") {
        const ProbeResult probe = gamma_restart_probe(prob, 1e-3);
        CHECK(probe.gamma > 0.0);
        CHECK(probe.gamma <= 4.0 * prob.max_cost());
        REQUIRE(probe.trace.size() >= 2);
        for (size_t i = 1; i < probe.trace.size(); ++i) {
            CHECK(probe.trace[i].first == Catch::Approx(probe.trace[i - 1].first / 2.0)
                                              .margin(1e-15));
            // Inner effort can only grow as gamma shrinks.
            CHECK(probe.trace[i].second >= probe.trace[i - 1].second);
        }
    }
    SECTION("identical measures never blow up: falls back to gamma0") {
        std::mt19937_64 rng(17);
        const Histogram p = testutil::random_histogram(rng, 3);
        const BarycenterProblem same = BarycenterProblem::shared_cost(
            {p, p}, testutil::random_cost(rng, 3), Weights::uniform(2));
        const ProbeResult probe = gamma_restart_probe(same, 1e-4);
        CHECK(probe.gamma == 4.0 * same.max_cost());
        CHECK(probe.trace.size() == 21);  // full halving budget spent
    }
    SECTION("scaling the costs rescales the returned gamma, never its ratio") {
        const ProbeResult base = gamma_restart_probe(prob, 1e-3);
        const ProbeResult doubled = gamma_restart_probe(scaled_costs(prob, 2.0), 1e-3);
        // Exact equivariance: the probe sees identical kernels step for step,
        // so gamma / ||C||_inf is unchanged (in particular it never grows).
        CHECK(doubled.gamma == 2.0 * base.gamma);
        REQUIRE(doubled.trace.size() == base.trace.size());
        for (size_t i = 0; i < base.trace.size(); ++i) {
            CHECK(doubled.trace[i].second == base.trace[i].second);
        }
    }
    SECTION("input validation") {
        CHECK_THROWS_AS(gamma_restart_probe(prob, 0.0), DomainError);
        std::mt19937_64 rng(19);
        const BarycenterProblem zero_cost = BarycenterProblem::shared_cost(
            {testutil::random_histogram(rng, 3), testutil::random_histogram(rng, 3)},
            CostMatrix(Mat::Zero(3, 3)), Weights::uniform(2));
        CHECK_THROWS_AS(gamma_restart_probe(zero_cost, 1e-3), DegenerateInput);
    }
}

TEST_CASE("restart flag routes through the probe before solving", "[prox]") {
    const BarycenterProblem prob = median_problem();
    ProxConfig cfg;
    cfg.gamma = 4.0;  // probe start
    cfg.outer_iters = 5;
    cfg.inner_tol = 1e-3;
    cfg.restart = true;
    const ProxResult res = prox_ibp_solve(prob, cfg);
    const ProbeResult probe = gamma_restart_probe(prob, 1e-3, 4.0);
    CHECK(res.gamma_used == probe.gamma);
    CHECK(res.qbar[0] == Catch::Approx(0.5).margin(0.1));
}
