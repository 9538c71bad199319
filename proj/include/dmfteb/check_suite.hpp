#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dmft.hpp"
#include "gaussian_oracle.hpp"
#include "io.hpp"
#include "kernels.hpp"
#include "langevin.hpp"
#include "prior.hpp"
#include "replica.hpp"
#include "scalar_channel.hpp"

namespace dmfteb {

enum class CheckKind { structural, statistical };

struct CheckResult {
    std::string name;
    CheckKind kind = CheckKind::structural;
    double value = 0, threshold = 0;  // pass iff value <= threshold
    bool passed = false;
    std::string detail;
    double seconds = 0;
};

struct CheckReport {
    std::vector<CheckResult> checks;
    double seconds = 0;

    int failures() const {
        int f = 0;
        for (const CheckResult& c : checks) f += !c.passed;
        return f;
    }
    bool ok() const { return failures() == 0; }
};

namespace checks {

inline Vec v(std::initializer_list<double> xs) {
    Vec out(static_cast<Eigen::Index>(xs.size()));
    int i = 0;
    for (double x : xs) out[i++] = x;
    return out;
}

inline PriorSpec logcosh_table() {
    std::vector<double> lg;
    for (int k = 0; k <= 320; ++k) {
        double x = -8.0 + 0.05 * k;
        lg.push_back(-0.5 * x * x - std::log(std::cosh(x)));
    }
    return generic_tabulated(-8.0, 0.05, lg);
}

inline std::vector<Prior> families() {
    return {{gaussian_location(1.3), v({0.2})},
            {mixture_means({0.5, 0.5}, {1, 4}), v({-1, 1})},
            {mixture_weights({0, 0, 0}, {25, 1, 0.04}), v({std::log(0.6), std::log(0.2), std::log(0.2)})},
            {logcosh_table(), v({0.5})}};
}

inline double rel(double a, double ref) { return std::abs(a - ref) / std::max(1.0, std::abs(ref)); }

inline CheckResult prior_derivatives() {
    double worst = 0;
    std::string where;
    for (const Prior& p : families()) {
        const PriorSpec& s = p.spec;
        for (double th : {-2.3, -0.4, 0.0, 0.7, 1.9}) {
            const double h = 1e-5;
            std::vector<double> g(static_cast<std::size_t>(s.dim()));
            PriorLocal l = PriorModel(s, p.alpha).eval(th, g.data());
            double fd1 = (log_density(th + h, p.alpha, s) - log_density(th - h, p.alpha, s)) / (2 * h);
            double fd2 = (score(th + h, p.alpha, s) - score(th - h, p.alpha, s)) / (2 * h);
            auto upd = [&](double e, const std::string& w) {
                if (e > worst) {
                    worst = e;
                    where = variant_name(s.variant) + " " + w + " at theta=" + num(th);
                }
            };
            upd(rel(l.score, fd1), "score");
            upd(rel(l.curvature, fd2), "curvature");
            for (int i = 0; i < s.dim(); ++i) {
                Vec ap = p.alpha, am = p.alpha;
                ap[i] += h;
                am[i] -= h;
                upd(rel(g[static_cast<std::size_t>(i)], (log_density(th, ap, s) - log_density(th, am, s)) / (2 * h)),
                    "alpha_gradient");
            }
        }
    }
    return {"prior.derivatives_vs_finite_differences", CheckKind::structural, worst, 1e-6, false, where};
}

inline CheckResult weight_gradient_sum() {
    Prior p = families()[2];
    double worst = 0;
    std::vector<double> g(3);
    for (double th : {-5.0, -0.3, 0.0, 0.2, 4.0, 12.0}) {
        PriorModel(p.spec, p.alpha).eval(th, g.data());
        worst = std::max(worst, std::abs(g[0] + g[1] + g[2]));
    }
    return {"prior.weight_gradient_sums_to_zero", CheckKind::structural, worst, 1e-14, false, ""};
}

inline CheckResult prior_normalization() {
    double worst = 0;
    for (const Prior& p : families()) {
        PriorModel m(p.spec, p.alpha);
        double h = 1e-3, z = 0;
        for (double th = -40; th <= 40; th += h) z += std::exp(m.log_density(th)) * h;
        worst = std::max(worst, std::abs(z - 1));
    }
    return {"prior.normalization", CheckKind::structural, worst, 1e-6, false, ""};
}

inline CheckResult convexity_at_infinity() {
    double worst = -INFINITY;
    for (const Prior& p : families()) {
        PriorModel m(p.spec, p.alpha);
        for (double th = 25; th <= 60; th += 0.5) {
            worst = std::max(worst, m.eval(th).curvature);
            worst = std::max(worst, m.eval(-th).curvature);
        }
    }
    return {"prior.curvature_negative_for_large_theta", CheckKind::structural, worst, -1e-3, false,
            "max curvature over |theta| in [25,60]"};
}

inline CheckResult regularizer_gradient() {
    RegularizerSpec r{3.0, true};
    double worst = regularizer(v({1, 1}), r).value + regularizer(v({1, 1}), r).gradient.norm();
    for (Vec a : {v({2.5, 2.0}), v({0.6, -3.3}), v({5, 1}), v({-2, -2.5})}) {
        RegularizerValue c = regularizer(a, r);
        for (int i = 0; i < 2; ++i) {
            Vec p = a, m = a;
            p[i] += 1e-6;
            m[i] -= 1e-6;
            worst = std::max(worst, std::abs(c.gradient[i] - (regularizer(p, r).value - regularizer(m, r).value) / 2e-6));
        }
    }
    return {"prior.regularizer_gradient", CheckKind::structural, worst, 1e-6, false, ""};
}

inline CheckResult posterior_vs_brute_force() {
    double worst = 0;
    for (const Prior& p : families())
        for (double y : {-2.5, 0.0, 0.9})
            for (double w : {0.3, 2.0}) {
                PosteriorStats a = ScalarPosterior(p.spec, p.alpha, w).at(y);
                PriorModel m(p.spec, p.alpha);
                double h = 2e-3, z = 0, s1 = 0, s2 = 0;
                for (double th = -30; th <= 30; th += h) {
                    double d = std::exp(m.log_density(th) - 0.5 * w * (y - th) * (y - th)) * h;
                    z += d;
                    s1 += d * th;
                    s2 += d * th * th;
                }
                double mean = s1 / z, var = s2 / z - mean * mean;
                worst = std::max({worst, std::abs(a.mean - mean), std::abs(a.variance - var)});
            }
    return {"channel.posterior_moments_vs_grid", CheckKind::structural, worst, 1e-8, false, ""};
}

inline CheckResult nishimori() {
    double worst = 0;
    for (const Prior& p : families()) {
        ChannelStats s = channel_stats({p, 1.7, p, 1.7}, QuadratureRule{});
        worst = std::max(worst, std::abs(s.mse - s.mse_star));
    }
    return {"channel.matched_mse_equals_mse_star", CheckKind::structural, worst, 1e-8, false, ""};
}

inline CheckResult rs_conjugate() {
    Prior g{gaussian_location(1.0), v({0})};
    RsFixedPoint fp = solve_rs_fixed_point(g, g, 1.0, 1.0);
    double gold = (std::sqrt(5.0) - 1) / 2;
    double e = std::max({std::abs(fp.mse - gold), std::abs(fp.mse_star - gold), std::abs(fp.omega - gold),
                         std::abs(fp.omega_star - gold)});
    return {"replica.conjugate_fixed_point", CheckKind::structural, e, 1e-8, false,
            "mse=" + num(fp.mse) + " omega=" + num(fp.omega)};
}

// ymse from (omega, omega*) against the residual kernels of the exact Gaussian dynamics.
inline CheckResult ymse_identity() {
    double worst = 0;
    struct Case {
        double lambda, mstar, delta, sigma2;
    };
    for (Case c : {Case{1, 1, 1, 1}, Case{2, 1.5, 2, 0.5}}) {
        KernelSet k = oracle_on_grid(200, 0.5, c.delta, c.sigma2, c.lambda, {1.0, c.mstar}, OracleMode::continuous, 200);
        Equilibrium e = extract_equilibrium(k, 0.25);
        worst = std::max({worst, std::abs(e.ymse - e.ymse_omega), std::abs(e.ymse_star - e.ymse_star_omega)});
    }
    return {"replica.ymse_identity", CheckKind::structural, worst, 1e-6, false,
            "eta-kernel ymse vs omega formula"};
}

inline CheckResult free_energy_gradient() {
    ReplicaContext c;
    c.prior = mixture_means({0.5, 0.5}, {1.0, 4.0});
    c.truth = {c.prior, v({-1, 1})};
    c.delta = 2.0;
    c.sigma2 = 0.5;
    Vec a = v({-0.8, 0.9});
    PointEval e = evaluate_point(a, c);
    double worst = 0;
    for (int i = 0; i < 2; ++i) {
        Vec p = a, m = a;
        p[i] += 1e-4;
        m[i] -= 1e-4;
        double fd = (free_energy(p, c) - free_energy(m, c)) / 2e-4;
        worst = std::max(worst, std::abs(e.grad[i] - fd) / std::max(std::abs(fd), 1e-2));
    }
    return {"replica.free_energy_gradient", CheckKind::structural, worst, 1e-3, false, ""};
}

inline CheckResult mp_trace() {
    double worst = 0;
    for (double d : {0.5, 1.0, 2.0}) {
        MpMeasure m = mp_measure(d, 0.7);
        worst = std::max({worst, std::abs(m.mass() - 1), std::abs(m.moment(1) - d / 0.7),
                          std::abs(m.moment(2) - (d + d * d) / 0.49)});
    }
    return {"oracle.mp_mass_and_trace", CheckKind::structural, worst, 1e-8, false, ""};
}

inline DmftConfig small_dmft(bool mixture) {
    DmftConfig c;
    c.T = 1.0;
    c.gamma = 0.05;
    c.M = 4000;
    c.seed = 7;
    if (mixture) {
        c.prior = mixture_means({0.5, 0.5}, {1.0, 4.0});
        c.alpha0 = v({-0.5, 0.8});
        c.truth = {c.prior, v({-1, 1})};
        c.sigma2 = 0.5;
        c.delta = 2.0;
        c.adapt = true;
    }
    return c;
}

inline std::vector<CheckResult> dmft_checks() {
    std::vector<CheckResult> out;
    double worst_id = 0, min_eig = INFINITY;
    int jitter = 0;
    for (bool mix : {false, true}) {
        DmftRun r = solve_dmft_forward(small_dmft(mix));
        KernelReport rep = validate_kernels(r.kernels);
        worst_id = std::max({worst_id, rep.symmetry_C_theta, rep.symmetry_C_eta, rep.r_theta_boundary,
                             rep.r_eta_first, rep.r_eta_star_sum, static_cast<double>(rep.causality_violations)});
        min_eig = std::min({min_eig, rep.min_eig_C_theta, r.kernels.min_schur});
        jitter += rep.jitter_events;
    }
    out.push_back({"dmft.exact_identities", CheckKind::structural, worst_id, 1e-12, false,
                   "R(i+1,i)=gamma, R_eta(1,0), R_eta(i,*) sum, symmetry, causality"});
    out.push_back({"dmft.kernel_psd", CheckKind::structural, -min_eig, 1e-8, false,
                   "minus the smaller of min eig C_theta and min Schur complement of C_eta before jitter; jitter events " +
                       std::to_string(jitter)});
    DmftConfig c = small_dmft(false);
    DmftRun r = solve_dmft_forward(c);
    KernelSet o = oracle_solution_on_grid(c, 1.0, OracleMode::discrete, 200);
    const KernelSet& k = r.kernels;
    double z = 0;
    for (int i = 1; i <= k.N; ++i) {
        for (int j = 0; j <= i; ++j) z = std::max(z, std::abs(k.C_theta(i, j) - o.C_theta(i, j)) / k.C_theta_se(i, j));
        z = std::max(z, std::abs(k.C_theta_star[i] - o.C_theta_star[i]) / k.C_theta_star_se[i]);
    }
    out.push_back({"dmft.gaussian_vs_oracle_z", CheckKind::statistical, z, 4.0, false, "max |z| over C_theta entries"});
    double rmax = 0;
    for (int i = 1; i <= k.N; ++i)
        for (int j = 0; j < i; ++j) rmax = std::max(rmax, std::abs(k.R_theta(i, j) - o.R_theta(i, j)));
    out.push_back({"dmft.gaussian_response_exact", CheckKind::structural, rmax, 1e-12, false, ""});
    return out;
}

inline std::vector<CheckResult> langevin_checks() {
    std::vector<CheckResult> out;
    InstanceSpec s;
    s.n = s.d = 300;
    s.seed = 5;
    Instance in = generate_instance(s);
    ChainConfig c;
    c.T = 1.0;
    c.gamma = 0.02;
    c.seed = 3;
    c.checkpoints = {0.0, 1.0};
    TrajectoryRecord a = run_chains(in, c)[0], b = run_chains(in, c)[0];
    double diff = 0;
    for (std::size_t i = 0; i < a.err.size(); ++i) diff = std::max(diff, std::abs(a.err[i] - b.err[i]));
    out.push_back({"langevin.replay_bit_identical", CheckKind::structural, diff, 0.0, false, ""});
    EmpiricalKernels e = empirical_kernels(a, in);
    MpMeasure mu = mp_measure(in.delta(), in.sigma2(), 200);
    int N = c.step_of(1.0);
    OracleValues ov = oracle_kernels_discrete(N, N, c.gamma, 1.0, mu, {1.0, 1.0});
    double z = std::abs(e.C_theta(1, 1) - ov.C_theta) / e.C_theta_se(1, 1);
    out.push_back({"langevin.C_theta_vs_oracle_z", CheckKind::statistical, z, 4.0, false,
                   "C_theta(1,1)=" + num(e.C_theta(1, 1)) + " oracle " + num(ov.C_theta)});
    return out;
}

}  // namespace checks

inline CheckReport run_check_suite() {
    auto t0 = std::chrono::steady_clock::now();
    CheckReport rep;
    using Fn = std::function<std::vector<CheckResult>()>;
    auto one = [](CheckResult (*f)()) { return Fn([f] { return std::vector<CheckResult>{f()}; }); };
    std::vector<std::pair<std::string, Fn>> jobs = {
        {"prior.derivatives_vs_finite_differences", one(checks::prior_derivatives)},
        {"prior.weight_gradient_sums_to_zero", one(checks::weight_gradient_sum)},
        {"prior.normalization", one(checks::prior_normalization)},
        {"prior.curvature_negative_for_large_theta", one(checks::convexity_at_infinity)},
        {"prior.regularizer_gradient", one(checks::regularizer_gradient)},
        {"channel.posterior_moments_vs_grid", one(checks::posterior_vs_brute_force)},
        {"channel.matched_mse_equals_mse_star", one(checks::nishimori)},
        {"replica.conjugate_fixed_point", one(checks::rs_conjugate)},
        {"replica.ymse_identity", one(checks::ymse_identity)},
        {"replica.free_energy_gradient", one(checks::free_energy_gradient)},
        {"oracle.mp_mass_and_trace", one(checks::mp_trace)},
        {"dmft", Fn(checks::dmft_checks)},
        {"langevin", Fn(checks::langevin_checks)},
    };
    for (auto& [name, fn] : jobs) {
        auto s = std::chrono::steady_clock::now();
        std::vector<CheckResult> rs;
        try {
            rs = fn();
        } catch (const std::exception& e) {
            rs = {{name, CheckKind::structural, NAN, 0, false, std::string("threw: ") + e.what()}};
        }
        double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - s).count();
        for (CheckResult& r : rs) {
            r.passed = r.passed || r.value <= r.threshold;
            r.seconds = dt / rs.size();
            rep.checks.push_back(r);
        }
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

inline Json to_json(const CheckReport& r) {
    Json a = Json::array();
    for (const CheckResult& c : r.checks)
        a.push_back({{"name", c.name},
                     {"kind", c.kind == CheckKind::structural ? "structural" : "statistical"},
                     {"value", c.value},
                     {"threshold", c.threshold},
                     {"passed", c.passed},
                     {"detail", c.detail},
                     {"seconds", c.seconds}});
    return Json{{"checks", a}, {"failures", r.failures()}, {"seconds", r.seconds}};
}

}  // namespace dmfteb
