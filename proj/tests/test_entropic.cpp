// Entropic OT primitives: Gibbs kernels, dual potentials, the smoothed
// conjugate and its gradient, and the two-marginal regularized solver.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "helpers.hpp"

using namespace barylab;

namespace {

Mat mat2(double a, double b, double c, double d) {
    Mat m(2, 2);
    m << a, b, c, d;
    return m;
}

Histogram hist2(double a, double b) {
    Vec v(2);
    v << a, b;
    return Histogram(v, MassMode::kNormalize);
}

}  // namespace

TEST_CASE("gibbs kernel construction", "[entropic]") {
    const CostMatrix c(mat2(0, 1, 1, 0));
    const GibbsKernel k = GibbsKernel::from_cost(c, 0.5);
    CHECK(k.log()(0, 1) == Catch::Approx(-2.0).margin(1e-15));
    CHECK(k.log()(0, 0) == 0.0);
    CHECK(k.gamma() == 0.5);
    CHECK_THROWS_AS(GibbsKernel::from_cost(c, 0.0), DomainError);
    CHECK_THROWS_AS(GibbsKernel::from_cost(c, -1.0), DomainError);
    // Log entries must describe a kernel no larger than one.
    Mat bad = Mat::Zero(2, 2);
    bad(0, 0) = 0.5;
    CHECK_THROWS_AS(GibbsKernel::from_log(bad, 1.0), DomainError);
    CHECK_THROWS_AS(GibbsKernel::from_log(Mat::Zero(2, 3), 1.0), DimensionError);
}

TEST_CASE("make_plan scales the kernel by the potentials", "[entropic]") {
    std::mt19937_64 rng(5);
    const CostMatrix c = testutil::random_cost(rng, 4);
    const GibbsKernel k = GibbsKernel::from_cost(c, 0.3);

    SECTION("zero potentials reproduce the kernel") {
        const TransportPlan plan = make_plan(DualPotentials::zero(4), k);
        const Mat expect = (-c.mat() / 0.3).array().exp();
        CHECK((plan.mat() - expect).cwiseAbs().maxCoeff() < 1e-15);
    }
    SECTION("matches the diagonal-product oracle") {
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        Vec u(4), v(4);
        for (int i = 0; i < 4; ++i) {
            u[i] = unit(rng);
            v[i] = unit(rng);
        }
        const TransportPlan plan = make_plan(DualPotentials(u, v), k);
        const Mat oracle = u.array().exp().matrix().asDiagonal() *
                           Mat(k.log().array().exp()) *
                           v.array().exp().matrix().asDiagonal();
        CHECK(((plan.mat() - oracle).cwiseAbs().array() /
               oracle.cwiseAbs().maxCoeff())
                  .maxCoeff() < 1e-12);
    }
    SECTION("gauge shift u+s, v-s leaves the plan unchanged") {
        Vec u = Vec::LinSpaced(4, -0.5, 0.7);
        Vec v = Vec::LinSpaced(4, 0.2, -0.9);
        const TransportPlan base = make_plan(DualPotentials(u, v), k);
        const double s = 3.25;
        const TransportPlan shifted =
            make_plan(DualPotentials(u.array() + s, v.array() - s), k);
        CHECK((base.mat() - shifted.mat()).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("exponent overflow is flagged, not silently inf") {
        const Vec huge = Vec::Constant(4, 400.0);
        CHECK_THROWS_AS(make_plan(DualPotentials(huge, huge), k), NumericalError);
    }
}

TEST_CASE("conjugate value closed forms and convexity", "[entropic]") {
    const CostMatrix zero_cost(Mat::Zero(3, 3));
    const Histogram p = Histogram(Vec::Constant(3, 1.0 / 3.0), MassMode::kNormalize);
    // At u = 0, C = 0: gamma * sum_j p_j (ln(3) + ln p_j) = gamma * sum p ln(3p) = 0
    // for uniform p.
    CHECK(conjugate_value(Vec::Zero(3), p, zero_cost, 0.7) ==
          Catch::Approx(0.0).margin(1e-14));

    std::mt19937_64 rng(17);
    const CostMatrix c = testutil::random_cost(rng, 3);
    const Histogram q = testutil::random_histogram(rng, 3);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
        Vec a(3), b(3);
        for (int i = 0; i < 3; ++i) {
            a[i] = unit(rng);
            b[i] = unit(rng);
        }
        // Midpoint convexity of the smoothed conjugate.
        const double mid = conjugate_value(0.5 * (a + b), q, c, 0.4);
        const double bound = 0.5 * conjugate_value(a, q, c, 0.4) +
                             0.5 * conjugate_value(b, q, c, 0.4);
        CHECK(mid <= bound + 1e-12);
    }
}

TEST_CASE("conjugate gradient lives on the simplex", "[entropic]") {
    const CostMatrix zero_cost(Mat::Zero(4, 4));
    const Histogram uniform(Vec::Constant(4, 0.25), MassMode::kNormalize);
    // C = 0, u = 0: every column softmax is uniform, so the mix is uniform.
    const Vec g0 = conjugate_grad(Vec::Zero(4), uniform, zero_cost, 0.2);
    CHECK((g0 - Vec::Constant(4, 0.25)).cwiseAbs().maxCoeff() < 1e-14);

    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
        const CostMatrix c = testutil::random_cost(rng, 5);
        const Histogram p = testutil::random_histogram(rng, 5);
        Vec u(5);
        for (int i = 0; i < 5; ++i) u[i] = unit(rng);
        const Vec g = conjugate_grad(u, p, c, 0.3);
        CHECK(g.minCoeff() >= 0.0);
        CHECK(g.sum() == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("conjugate gradient saturates under a dominant potential", "[entropic]") {
    std::mt19937_64 rng(37);
    const CostMatrix c = testutil::random_cost(rng, 4);
    const Histogram p = testutil::random_histogram(rng, 4);
    const double gamma = 0.25;
    Vec u = Vec::Zero(4);
    u[1] = 50.0 * gamma * c.max_abs();
    const Vec g = conjugate_grad(u, p, c, gamma);
    CHECK(g[1] >= 1.0 - 1e-6);

    // Direct softmax-mixture oracle at moderate magnitudes.
    Vec mild = Vec::LinSpaced(4, -0.3, 0.6);
    const Vec lib = conjugate_grad(mild, p, c, gamma);
    Vec oracle = Vec::Zero(4);
    for (int j = 0; j < 4; ++j) {
        Vec z = ((mild - c.mat().col(j)) / gamma).array().exp();
        oracle += p[j] * z / z.sum();
    }
    CHECK((lib - oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("conjugate gradient matches central finite differences", "[entropic]") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    const double gamma = 0.4;
    for (Eigen::Index n : {3, 5, 10}) {
        const CostMatrix c = testutil::random_cost(rng, n);
        const Histogram p = testutil::random_histogram(rng, n);
        for (int rep = 0; rep < 7; ++rep) {  // ~20 points across the three sizes
            Vec u(n);
            for (Eigen::Index i = 0; i < n; ++i) u[i] = unit(rng);
            const Vec g = conjugate_grad(u, p, c, gamma);
            const double h = 1e-6;
            Vec fd(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                Vec up = u, dn = u;
                up[i] += h;
                dn[i] -= h;
                fd[i] = (conjugate_value(up, p, c, gamma) -
                         conjugate_value(dn, p, c, gamma)) /
                        (2.0 * h);
            }
            CHECK((g - fd).norm() / std::max(1.0, g.norm()) < 1e-6);
        }
    }
}

TEST_CASE("conjugate gradient is 1/gamma Lipschitz per measure", "[entropic]") {
    std::mt19937_64 rng(53);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double gamma = 0.3;
    const CostMatrix c = testutil::random_cost(rng, 6);
    const Histogram p = testutil::random_histogram(rng, 6);
    for (int rep = 0; rep < 20; ++rep) {
        Vec a(6), b(6);
        for (int i = 0; i < 6; ++i) {
            a[i] = unit(rng);
            b[i] = unit(rng);
        }
        const double lhs = (conjugate_grad(a, p, c, gamma) -
                            conjugate_grad(b, p, c, gamma))
                               .norm();
        CHECK(lhs <= (a - b).norm() / gamma + 1e-12);
    }
}

TEST_CASE("regularized OT solves simple two-point problems", "[entropic]") {
    const CostMatrix c(mat2(0, 1, 1, 0));
    SECTION("equal marginals cost almost nothing") {
        const Histogram p = hist2(0.5, 0.5);
        const RegOtResult res = reg_ot_cost(p, p, c, 1e-2, 1e-8);
        CHECK(std::abs(res.value) <= 0.05);
        // Plan marginals meet the returned tolerance.
        CHECK((res.plan.row_marginal() - p.vec()).cwiseAbs().sum() < 1e-7);
    }
    SECTION("swapping nearly-point masses costs about 1") {
        const Histogram p = hist2(1.0 - 1e-6, 1e-6);
        const Histogram q = hist2(1e-6, 1.0 - 1e-6);
        const RegOtResult res = reg_ot_cost(p, q, c, 1e-2, 1e-8);
        CHECK(res.value == Catch::Approx(1.0).margin(0.05));
    }
    SECTION("regularization bias is bounded by the entropy range") {
        std::mt19937_64 rng(61);
        for (int rep = 0; rep < 5; ++rep) {
            const Histogram p = testutil::random_histogram(rng, 2);
            const Histogram q = testutil::random_histogram(rng, 2);
            const double gamma = 0.05;
            const double reg = reg_ot_cost(p, q, c, gamma, 1e-10).value;
            const double lp = std::abs(p[0] - q[0]);  // exact unregularized optimum
            // Entropy of a unit-mass 2x2 plan lies in [-(2 ln 2 + 1), -1].
            CHECK(reg >= lp - gamma * (2.0 * std::log(2.0) + 1.0) - 1e-6);
            CHECK(reg <= lp - gamma + 1e-6);
        }
    }
}

TEST_CASE("regularized OT reports non-convergence at a tiny cap", "[entropic]") {
    std::mt19937_64 rng(67);
    const CostMatrix c = testutil::random_cost(rng, 6);
    const Histogram p = testutil::random_histogram(rng, 6);
    const Histogram q = testutil::random_histogram(rng, 6);
    CHECK_THROWS_AS(reg_ot_cost(p, q, c, 1e-3, 1e-12, 2), NonConvergence);
    CHECK_THROWS_AS(reg_ot_cost(p, q, c, 1e-3, 0.0), DomainError);  // tol must be > 0
    // A sane budget converges and the iteration count is reported.
    const RegOtResult res = reg_ot_cost(p, q, c, 0.1, 1e-8);
    CHECK(res.iterations > 0);
    CHECK((res.plan.row_marginal() - p.vec()).cwiseAbs().sum() <= 1e-8);
}

TEST_CASE("regularized OT value matches the near-exact reference", "[entropic]") {
    std::mt19937_64 rng(71);
    const CostMatrix c = testutil::random_cost(rng, 4);
    const Histogram p = testutil::random_histogram(rng, 4);
    const Histogram q = testutil::random_histogram(rng, 4);
    const double gamma = 0.2;
    const double coarse = reg_ot_cost(p, q, c, gamma, 1e-6).value;
    const double fine = testutil::reference_reg_ot(p, q, c, gamma);
    CHECK(coarse == Catch::Approx(fine).margin(1e-5));
}
