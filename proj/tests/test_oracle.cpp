#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dmfteb/gaussian_oracle.hpp"

using namespace dmfteb;

namespace {

Vec zero1() { return Vec::Zero(1); }

RsFixedPoint rs_gaussian(double lambda, double mstar, double delta, double sigma2) {
    return solve_rs_fixed_point({gaussian_location(lambda), zero1()}, {gaussian_location(1.0 / mstar), zero1()}, delta,
                                sigma2);
}

}  // namespace

TEST(Oracle, MpMassAndTrace) {
    for (double d : {0.25, 0.5, 1.0, 2.0, 4.0})
        for (double s2 : {1.0, 0.5, 2.0}) {
            MpMeasure m = mp_measure(d, s2);
            EXPECT_NEAR(m.mass(), 1.0, 1e-10) << d;
            EXPECT_NEAR(m.moment(1), d / s2, 1e-8) << d;
            // second moment of X^T X / d-normalized Wishart: delta + delta^2
            EXPECT_NEAR(m.moment(2), (d + d * d) / (s2 * s2), 1e-8) << d;
            for (double w : m.w) EXPECT_GE(w, 0.0);
        }
    MpMeasure h = mp_measure(0.5, 1.0);
    EXPECT_DOUBLE_EQ(h.atom, 0.5);
    EXPECT_NEAR(h.mass() - h.atom, 0.5, 1e-12);
    EXPECT_EQ(mp_measure(2.0, 1.0).atom, 0.0);
}

TEST(Oracle, MpMatchesSampledSpectrum) {
    Rng rng = make_stream(11, stream::check, 0);
    std::normal_distribution<double> nd;
    for (auto [n, d] : {std::pair{2000, 1000}, std::pair{1000, 2000}}) {
        Mat X(n, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) X(i, j) = nd(rng) / std::sqrt(double(d));
        // nonzero spectrum of X^T X from the smaller Gram matrix
        Mat G = n >= d ? Mat(X.transpose() * X) : Mat(X * X.transpose());
        Eigen::SelfAdjointEigenSolver<Mat> es(G, Eigen::EigenvaluesOnly);
        Vec ev = es.eigenvalues();
        MpMeasure m = mp_measure(double(n) / d, 1.0);
        double zeros = d - ev.size(), sup = 0;
        for (int k = 0; k < ev.size(); ++k) {
            EXPECT_GT(ev[k], 1e-3);
            double F = mp_cdf(m, ev[k]);
            sup = std::max({sup, std::abs(F - (zeros + k) / d), std::abs(F - (zeros + k + 1) / d)});
        }
        EXPECT_NEAR(zeros / d, m.atom, 1e-12);
        EXPECT_LT(sup, 0.01) << n << "x" << d;
    }
}

TEST(Oracle, DoublingNodesStable) {
    OracleMoments mom{0.7, 1.3};
    MpMeasure a = mp_measure(1.0, 1.0), b = mp_measure(1.0, 1.0, 800);
    MpMeasure c = mp_measure(0.5, 0.5), d = mp_measure(0.5, 0.5, 800);
    for (auto [t, s] : {std::pair{0.0, 0.0}, std::pair{0.3, 0.1}, std::pair{2.0, 1.5}, std::pair{5.0, 0.0}}) {
        for (auto [p, q] : {std::pair{&a, &b}, std::pair{&c, &d}}) {
            OracleValues x = oracle_kernels(t, s, 1.0, *p, mom), y = oracle_kernels(t, s, 1.0, *q, mom);
            EXPECT_NEAR(x.C_theta, y.C_theta, 1e-8);
            EXPECT_NEAR(x.C_theta_star, y.C_theta_star, 1e-8);
            EXPECT_NEAR(x.R_theta, y.R_theta, 1e-8);
            EXPECT_NEAR(x.C_eta, y.C_eta, 1e-8);
            EXPECT_NEAR(x.R_eta, y.R_eta, 1e-8);
        }
    }
}

TEST(Oracle, BoundaryValues) {
    MpMeasure m = mp_measure(1.0, 1.0);
    OracleMoments mom{0.8, 1.0};
    for (double t : {0.0, 1.0, 3.7}) EXPECT_NEAR(oracle_kernels(t, t, 1.0, m, mom).R_theta, 1.0, 1e-12);
    EXPECT_NEAR(oracle_kernels(0, 0, 1.0, m, mom).C_theta, 0.8, 1e-12);
    EXPECT_NEAR(oracle_kernels(0, 0, 1.0, m, mom).C_theta_star, 0.0, 1e-15);
    // long-time overlap against a 2000-node rule
    double ref = oracle_kernels(60, 60, 1.0, mp_measure(1.0, 1.0, 2000), mom).C_theta_star;
    double lim = 0;
    for (size_t k = 0; k < m.x.size(); ++k) lim += m.w[k] * m.x[k] / (1 + m.x[k]);
    EXPECT_NEAR(oracle_kernels(60, 60, 1.0, m, mom).C_theta_star, ref, 1e-8);
    EXPECT_NEAR(ref, lim, 1e-8);
}

TEST(Oracle, TranslationDecay) {
    MpMeasure m = mp_measure(1.0, 1.0);
    OracleMoments mom{2.0, 1.0};
    double prev = INFINITY;
    for (double s : {1.0, 2.0, 3.0, 4.0}) {
        double d = std::abs(oracle_kernels(s + 1.5, s, 1.0, m, mom).C_theta -
                            oracle_kernels(s + 2.5, s + 1.0, 1.0, m, mom).C_theta);
        EXPECT_LT(d, 10 * std::exp(-s));
        EXPECT_LT(d, prev);
        prev = d;
    }
}

TEST(Oracle, DiscreteGridIdentities) {
    for (double s2 : {1.0, 0.5}) {
        KernelSet k = oracle_on_grid(80, 0.02, 1.5, s2, 1.3, {1.2, 0.9}, OracleMode::discrete);
        KernelReport r = validate_kernels(k);
        EXPECT_TRUE(r.step_identities_apply);
        EXPECT_LT(r.r_theta_boundary, 1e-12);
        EXPECT_LT(r.r_eta_first, 1e-12);
        EXPECT_LT(r.r_eta_star_sum, 1e-12);
        EXPECT_LT(r.r_eta_star_recursion, 1e-12);
        // the eta-side linear algebra maps the discrete theta kernels onto the discrete eta kernels
        EXPECT_LT(r.eta_recompute, 1e-10);
        EXPECT_TRUE(r.identities_ok());
        EXPECT_GT(r.min_eig_C_theta, 0.0);
        EXPECT_GT(r.min_eig_C_eta, 0.0);
    }
}

TEST(Oracle, ContinuousGridStructure) {
    KernelSet a = oracle_on_grid(200, 0.04, 1.0, 1.0, 1.0, {1.0, 1.0});
    KernelSet b = oracle_on_grid(400, 0.02, 1.0, 1.0, 1.0, {1.0, 1.0});
    KernelReport ra = validate_kernels(a), rb = validate_kernels(b);
    EXPECT_FALSE(ra.step_identities_apply);
    EXPECT_TRUE(ra.identities_ok());
    EXPECT_EQ(ra.causality_violations, 0);
    EXPECT_LT(rb.fdt_residual, 2e-3);
    EXPECT_LT(rb.fdt_residual, 0.6 * ra.fdt_residual);
    // halving gamma only rescales the responses
    for (int i : {10, 57, 200})
        for (int j : {0, 9, 33}) {
            if (j >= i) continue;
            EXPECT_NEAR(b.R_theta(2 * i, 2 * j) / a.R_theta(i, j), 0.5, 1e-6);
            EXPECT_NEAR(b.R_eta(2 * i, 2 * j) / a.R_eta(i, j), 0.5, 1e-6);
            EXPECT_NEAR(b.C_theta(2 * i, 2 * j), a.C_theta(i, j), 1e-12);
            EXPECT_NEAR(b.C_eta(2 * i, 2 * j), a.C_eta(i, j), 1e-12);
        }
}

TEST(Oracle, DiscreteConvergesToContinuous) {
    double prev = INFINITY;
    for (double g : {0.08, 0.04, 0.02}) {
        int n = static_cast<int>(std::lround(2.0 / g));
        KernelSet c = oracle_on_grid(n, g, 1.0, 1.0, 1.0, {1.0, 1.0});
        KernelSet d = oracle_on_grid(n, g, 1.0, 1.0, 1.0, {1.0, 1.0}, OracleMode::discrete);
        double e = std::abs(c.C_theta(n, n) - d.C_theta(n, n));
        EXPECT_LT(e, prev * 0.6);
        prev = e;
    }
}

TEST(Oracle, YmseIdentityMatchesReplica) {
    struct Case {
        double lambda, mstar, delta, sigma2, m0;
    };
    for (Case c : {Case{1, 1, 1, 1, 1}, Case{2, 1.5, 2, 0.5, 0.7}, Case{0.5, 1, 0.5, 1, 3}}) {
        KernelSet k = oracle_on_grid(400, 0.25, c.delta, c.sigma2, c.lambda, {c.m0, c.mstar}, OracleMode::continuous, 200);
        Equilibrium e = extract_equilibrium(k, 0.25);
        RsFixedPoint fp = rs_gaussian(c.lambda, c.mstar, c.delta, c.sigma2);
        EXPECT_NEAR(e.mse, fp.mse, 1e-6);
        EXPECT_NEAR(e.mse_star, fp.mse_star, 1e-6);
        EXPECT_NEAR(e.omega, fp.omega, 1e-6);
        EXPECT_NEAR(e.omega_star, fp.omega_star, 1e-6);
        EXPECT_NEAR(e.ymse, fp.ymse, 1e-6);
        EXPECT_NEAR(e.ymse_star, fp.ymse_star, 1e-6);
        EXPECT_NEAR(e.ymse_omega, fp.ymse, 1e-6);
    }
    KernelSet k = oracle_on_grid(400, 0.25, 1, 1, 1, {1, 1}, OracleMode::continuous, 200);
    double lim = 0;
    MpMeasure m = mp_measure(1, 1, 200);
    for (size_t q = 0; q < m.x.size(); ++q) lim += m.w[q] * (m.x[q] * m.x[q] + m.x[q]) / std::pow(1 + m.x[q], 2);
    EXPECT_NEAR(extract_equilibrium(k).c_tti_inf, lim, 1e-8);
}

TEST(Kernels, EquilibriumEdgeCases) {
    KernelSet k = KernelSet::zeros(40, 0.1, 1, 1, 1);
    k.C_theta.setConstant(0.7);
    EXPECT_DOUBLE_EQ(extract_equilibrium(k).mse, 0.0);
    EXPECT_THROW(extract_equilibrium(k, 0.02), ConfigError);
    EXPECT_THROW(extract_equilibrium(k, 0.7), ConfigError);
}

TEST(Kernels, ValidateReportsInjectedDefects) {
    KernelSet k = oracle_on_grid(20, 0.05, 1, 1, 1, {1, 1}, OracleMode::discrete, 64);
    k.C_theta(3, 5) += 1e-3;
    k.R_theta(0, 1) = 0.2;
    KernelReport r = validate_kernels(k);
    EXPECT_NEAR(r.symmetry_C_theta, 1e-3, 1e-12);
    EXPECT_EQ(r.causality_violations, 1);
    EXPECT_FALSE(r.identities_ok());
}
