#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "dmfteb/replica.hpp"

using namespace dmfteb;

namespace {

Vec v(std::initializer_list<double> xs) {
    Vec out(static_cast<Eigen::Index>(xs.size()));
    int i = 0;
    for (double x : xs) out[i++] = x;
    return out;
}

const double kGolden = (std::sqrt(5.0) - 1.0) / 2.0;

ReplicaContext gaussian_ctx(double alpha_star) {
    ReplicaContext c;
    c.prior = gaussian_location(1.0);
    c.truth = {gaussian_location(1.0), v({alpha_star})};
    return c;
}

ReplicaContext figure1_ctx(double delta) {
    ReplicaContext c;
    c.prior = mixture_means({0.5, 0.5}, {1.0, 4.0});
    c.truth = {c.prior, v({-1, 1})};
    c.delta = delta;
    c.sigma2 = delta * 0.25;
    c.s2 = 0.25;
    return c;
}

}  // namespace

TEST(Replica, MatchedGaussianFixedPoint) {
    auto t0 = std::chrono::steady_clock::now();
    Prior g{gaussian_location(1.0), v({0})};
    RsFixedPoint fp = solve_rs_fixed_point(g, g, 1.0, 1.0);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ASSERT_TRUE(fp.converged);
    EXPECT_NEAR(fp.mse, kGolden, 1e-8);
    EXPECT_NEAR(fp.mse_star, kGolden, 1e-8);
    EXPECT_NEAR(fp.omega, kGolden, 1e-8);
    EXPECT_NEAR(fp.omega_star, kGolden, 1e-8);
    EXPECT_NEAR(fp.ymse, 1 - kGolden, 1e-8);
    EXPECT_NEAR(fp.ymse_star, 1 - kGolden, 1e-8);
    EXPECT_LT(secs, 1.0);
    EXPECT_NEAR(fp.omega * (1.0 + fp.mse), 1.0, 1e-12);
    EXPECT_TRUE(fp.monotone_after_5);
}

TEST(Replica, PriorDominatedLimit) {
    Prior g{gaussian_location(1.0), v({0})};
    RsFixedPoint fp = solve_rs_fixed_point(g, g, 1.0, 1e6);
    ASSERT_TRUE(fp.converged);
    EXPECT_NEAR(fp.mse, 1.0, 1e-5);
    EXPECT_NEAR(fp.omega, 1e-6, 1e-10);
}

TEST(Replica, NonConvergenceReported) {
    Prior g{gaussian_location(1.0), v({0})};
    RsOptions o;
    o.max_iter = 2;
    RsFixedPoint fp = solve_rs_fixed_point(g, g, 1.0, 1.0, o);
    EXPECT_FALSE(fp.converged);
    EXPECT_GT(fp.residual, o.tol);
}

TEST(Replica, FreeEnergyGaussianDifference) {
    ReplicaContext c = gaussian_ctx(0.0);
    double f0 = free_energy(v({0.0}), c);
    double f1 = free_energy(v({1.0}), c);
    double w = kGolden;
    EXPECT_NEAR(f1 - f0, 1.0 / (2 * (1.0 + 1.0 / w)), 1e-9);
    EXPECT_NEAR(f1 - f0, 0.190983, 1e-6);
    Vec g = free_energy_gradient(v({1.0}), c);
    EXPECT_NEAR(g[0], w / (1.0 + w), 1e-9);
    EXPECT_NEAR(g[0], 0.381966, 1e-6);
    EXPECT_NEAR(free_energy_gradient(v({0.0}), c)[0], 0.0, 1e-10);
    ReplicaContext shifted = gaussian_ctx(2.5);
    EXPECT_NEAR(free_energy(v({3.5}), shifted), f1, 1e-9);
}

TEST(Replica, WellSpecifiedIsMinimum) {
    ReplicaContext c = figure1_ctx(1.0);
    double fs = free_energy(v({-1, 1}), c);
    for (double a = -1.6; a <= -0.4; a += 0.3)
        for (double b = 0.4; b <= 1.6; b += 0.3) EXPECT_GE(free_energy(v({a, b}), c), fs - 1e-10);
    EXPECT_LT(free_energy_gradient(v({-1, 1}), c).norm(), 1e-8);
}

TEST(Replica, GradientMatchesFiniteDifference) {
    std::vector<std::pair<ReplicaContext, Vec>> cases = {
        {figure1_ctx(1.0), v({-0.6, 1.3})},
        {figure1_ctx(4.0), v({0.8, -0.9})},
        {figure1_ctx(0.5), v({-1.2, 0.2})},
    };
    ReplicaContext w;
    w.prior = mixture_weights({0, 0, 0}, {25, 1, 0.04});
    w.truth = {w.prior, v({std::log(0.6), std::log(0.2), std::log(0.2)})};
    w.delta = 2.0;
    w.sigma2 = 2.0 * 0.04;
    cases.push_back({w, v({0.3, -0.2, -0.4})});
    for (auto& [c, a] : cases) {
        Vec g = free_energy_gradient(a, c);
        for (int i = 0; i < a.size(); ++i) {
            double h = 1e-4;
            Vec p = a, m = a;
            p[i] += h;
            m[i] -= h;
            double fd = (free_energy(p, c) - free_energy(m, c)) / (2 * h);
            EXPECT_NEAR(g[i], fd, 1e-3 * std::max(1e-2, std::abs(fd))) << "component " << i;
        }
    }
}

TEST(Replica, AtStability) {
    ReplicaContext c = gaussian_ctx(0.0);
    EXPECT_NEAR(at_stability(v({0.0}), c), 1 - std::pow(kGolden / (1 + kGolden), 2), 1e-10);
    EXPECT_NEAR(at_stability(v({0.0}), c), 0.8541, 1e-4);
    ReplicaContext big = gaussian_ctx(0.0);
    big.delta = 1e4;
    big.sigma2 = 1e4 * 0.25;
    EXPECT_GT(at_stability(v({0.0}), big), 0.999);
    for (double d : {1.0, 2.0, 4.0}) EXPECT_GE(at_stability(v({-1, 1}), figure1_ctx(d)), 0.0);
}

TEST(Replica, PopulationG) {
    PriorSpec g = gaussian_location(1.0);
    Prior t{g, v({0.5})};
    double s2 = 0.3;
    ObjectiveValue a = population_nll_G(v({0.5}), s2, g, t);
    ObjectiveValue b = population_nll_G(v({1.5}), s2, g, t);
    EXPECT_NEAR(a.grad[0], 0.0, 1e-12);
    EXPECT_NEAR(b.value - a.value, 1.0 / (2 * (1.0 + s2)), 1e-12);

    PriorSpec wm = mixture_weights({0, 0, 0}, {25, 1, 0.04});
    Prior wt{wm, v({std::log(0.6), std::log(0.2), std::log(0.2)})};
    EXPECT_LT(population_nll_G(wt.alpha, 0.04, wm, wt).grad.norm(), 1e-10);
    // convex in the weights themselves: second differences along sum-zero directions in p are positive
    auto G = [&](const Vec& p) { return population_nll_G(p.array().log().matrix(), 0.04, wm, wt).value; };
    Vec e1 = v({1, -1, 0}) / std::sqrt(2.0), e2 = v({1, 1, -2}) / std::sqrt(6.0);
    for (double x = -0.2; x <= 0.2; x += 0.1)
        for (double y = -0.1; y <= 0.1; y += 0.05) {
            Vec p0 = v({0.6, 0.2, 0.2}) + x * e1 + y * e2;
            double h = 1e-3;
            for (const Vec& d : {e1, e2, Vec((e1 + e2) / std::sqrt(2.0))})
                EXPECT_GT((G(p0 + h * d) - 2 * G(p0) + G(p0 - h * d)) / (h * h), 0.0);
        }
}

TEST(Replica, WeightGaugeInvariance) {
    ReplicaContext c;
    c.prior = mixture_weights({0, 0, 0}, {25, 1, 0.04});
    c.truth = {c.prior, v({std::log(0.6), std::log(0.2), std::log(0.2)})};
    c.delta = 2.0;
    c.sigma2 = 0.08;
    Vec a = v({0.3, -0.2, -0.4});
    PointEval e0 = evaluate_point(a, c);
    PointEval e1 = evaluate_point(a + Vec::Constant(3, 1.7), c);
    EXPECT_NEAR(e0.F, e1.F, 1e-10);
    EXPECT_LT((e0.grad - e1.grad).norm(), 1e-10);
    EXPECT_NEAR(e0.grad.sum(), 0.0, 1e-12);
}

TEST(Replica, MatchedModelsNishimori) {
    for (double d : {0.5, 1.0, 4.0}) {
        ReplicaContext c = figure1_ctx(d);
        RsFixedPoint fp = solve_rs_fixed_point({c.prior, v({-1, 1})}, c.truth, c.delta, c.sigma2);
        ASSERT_TRUE(fp.converged);
        EXPECT_LE(std::abs(fp.mse - fp.mse_star), 1e-9);
        EXPECT_LE(std::abs(fp.ymse - fp.ymse_star), 1e-9);
        EXPECT_NEAR(fp.omega * (c.sigma2 + fp.mse), c.delta, 1e-10);
        EXPECT_NEAR(fp.omega_star * (c.sigma2 + fp.mse_star), c.delta, 1e-10);
    }
}

TEST(Replica, CriticalPointsGaussian) {
    ReplicaContext c = gaussian_ctx(0.5);
    CriticalSearchResult r = find_critical_points(Objective::F_plus_R, {v({-3}), v({0}), v({3})}, c);
    ASSERT_EQ(r.points.size(), 1u);
    EXPECT_NEAR(r.points[0].alpha[0], 0.5, 1e-5);
    EXPECT_TRUE(r.failed_inits.empty());
}

TEST(Replica, CriticalPointsFigure1) {
    ReplicaContext c = figure1_ctx(1.0);
    CriticalSearchResult r = find_critical_points(Objective::F_plus_R, {v({-1.1, 0.9}), v({1.0, -1.0})}, c);
    ASSERT_EQ(r.points.size(), 2u);
    const CriticalPoint& good = (r.points[0].alpha - v({-1, 1})).norm() < 0.1 ? r.points[0] : r.points[1];
    const CriticalPoint& other = &good == &r.points[0] ? r.points[1] : r.points[0];
    EXPECT_LT((good.alpha - v({-1, 1})).norm(), 1e-4);
    EXPECT_LT(good.objective, other.objective);
}

TEST(Replica, CriticalPointsWeightMixtureG) {
    ReplicaContext c;
    c.prior = mixture_weights({0, 0, 0}, {25, 1, 0.04});
    c.truth = {c.prior, v({std::log(0.6), std::log(0.2), std::log(0.2)})};
    c.s2 = 0.04;
    c.delta = 1.0;
    c.sigma2 = 0.04;
    c.reg.radius = 5.0;
    Vec center = c.truth.alpha - Vec::Constant(3, c.truth.alpha.mean());
    CriticalSearchResult r = find_critical_points(
        Objective::G_plus_R, {v({0, 0, 0}), v({1, -0.5, -0.5}), v({-1, 2, -1})}, c);
    ASSERT_EQ(r.points.size(), 1u);
    Vec found = r.points[0].alpha - Vec::Constant(3, r.points[0].alpha.mean());
    EXPECT_LT((found - center).norm(), 1e-4);
}

TEST(Replica, LandscapeBowlAroundTruth) {
    ReplicaContext c = figure1_ctx(1.0);
    LandscapeGrid g;
    g.origin = v({-1, 1});
    g.u1 = v({1, 0});
    g.u2 = v({0, 1});
    g.a1 = {-0.2, 0.2, 3};
    g.a2 = {-0.2, 0.2, 3};
    auto rows = landscape_scan(Objective::F_plus_R, g, c);
    ASSERT_EQ(rows.size(), 9u);
    std::size_t best = 0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        EXPECT_TRUE(rows[k].converged);
        if (rows[k].value < rows[best].value) best = k;
    }
    EXPECT_EQ(best, 4u);
    g.a1.count = 1;
    g.a2.count = 1;
    EXPECT_EQ(landscape_scan(Objective::F_plus_R, g, c).size(), 1u);
}

// reference values from tests/oracles/rs_mixture_oracle.py (2-D Gauss-Legendre, 300 and 600 nodes agree)
TEST(Replica, MixtureMatchesIndependentQuadrature) {
    ReplicaContext c = figure1_ctx(1.0);
    struct Ref {
        Vec a;
        double mse, mse_star, omega, omega_star, F, at;
    };
    std::vector<Ref> refs = {
        {v({-1, 1}), 0.462291963207, 0.462291963207, 1.403918690164, 1.403918690164, 1.501273543741, 0.525416365848},
        {v({-0.5, 1.5}), 0.527747267676, 0.538409735295, 1.285764722759, 1.268376017232, 1.558599102666,
         0.497876592189},
    };
    for (const Ref& r : refs) {
        PointEval e = evaluate_point(r.a, c);
        EXPECT_NEAR(e.fp.mse, r.mse, 1e-9);
        EXPECT_NEAR(e.fp.mse_star, r.mse_star, 1e-9);
        EXPECT_NEAR(e.fp.omega, r.omega, 1e-9);
        EXPECT_NEAR(e.fp.omega_star, r.omega_star, 1e-9);
        EXPECT_NEAR(e.F, r.F, 1e-9);
        EXPECT_NEAR(e.at, r.at, 1e-9);
    }
}
