#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "dmfteb/check_suite.hpp"
#include "dmfteb/config.hpp"

using namespace dmfteb;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Config preset(const std::string& name, const std::vector<std::string>& sets = {}) {
    return config_from_json(Json{{"preset", name}}, sets);
}

const double kGolden = (std::sqrt(5.0) - 1.0) / 2.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

Outcome rs_conjugate() {
    auto t0 = Clock::now();
    Config c = preset("gaussian-oracle");
    ReplicaContext ctx = replica_context(c);
    RsFixedPoint fp = solve_rs_fixed_point(prior_at(c, "model"), ctx.truth, ctx.delta, ctx.sigma2, ctx.rs, ctx.rule);
    double secs = since(t0);
    double e = std::max({std::abs(fp.mse - kGolden), std::abs(fp.mse_star - kGolden), std::abs(fp.omega - fp.omega_star)});
    return {fp.converged && e <= 1e-8 && secs < 1.0,
            fmt("mse %.12f mse* %.12f |omega-omega*| %.1e, max err %.1e, %.3f s", fp.mse, fp.mse_star,
                std::abs(fp.omega - fp.omega_star), e, secs)};
}

Outcome dmft_vs_oracle() {
    Config c = preset("gaussian-oracle");
    DmftConfig d = dmft_config(c);
    DmftRun run = solve_dmft_forward(d);
    const KernelSet& k = run.kernels;
    KernelSet cont = oracle_solution_on_grid(d, 1.0, OracleMode::continuous);
    KernelSet disc = oracle_solution_on_grid(d, 1.0, OracleMode::discrete);
    double zc = 0, zs = 0, zr = 0, r_cont = 0;
    for (int i = 0; i <= k.N; ++i) {
        zc = std::max(zc, std::abs(k.C_theta(i, i) - cont.C_theta(i, i)) / k.C_theta_se(i, i));
        if (k.C_theta_star_se[i] > 0) zs = std::max(zs, std::abs(k.C_theta_star[i] - cont.C_theta_star[i]) / k.C_theta_star_se[i]);
        for (int j = 0; j < i; ++j) {
            zr = std::max(zr, std::abs(k.R_theta(i, j) - disc.R_theta(i, j)) / (k.R_theta_se(i, j) + 1e-12));
            r_cont = std::max(r_cont, std::abs(k.R_theta(i, j) - cont.R_theta(i, j)));
        }
    }
    KernelReport rep = validate_kernels(k);
    bool ok = zc <= 4 && zs <= 4 && zr <= 4 && rep.identities_ok(1e-12) && run.seconds <= 600;
    return {ok, fmt("max z C(t,t) %.2f, C(t,*) %.2f, R %.2f (discrete-step form; continuous gap %.1e); identities "
                    "R(i+1,i) %.1e R_eta(i,*) %.1e R_eta(1,0) %.1e; %.1f s",
                    zc, zs, zr, r_cont, rep.r_theta_boundary, rep.r_eta_star_sum, rep.r_eta_first, run.seconds)};
}

Outcome equilibrium_closure() {
    Config c = preset("gaussian-oracle", {"dmft.T=8"});
    DmftRun run = solve_dmft_forward(dmft_config(c));
    double w = dmft_window(c);
    Equilibrium e = extract_equilibrium(run.kernels, w);
    EquilibriumSe se = equilibrium_stderr(run, w);
    ReplicaContext ctx = replica_context(c);
    RsFixedPoint fp = solve_rs_fixed_point(prior_at(c, "model"), ctx.truth, ctx.delta, ctx.sigma2, ctx.rs, ctx.rule);
    double tol = std::max(4 * se.mse, 0.02 * fp.mse);
    double yrel = std::abs(e.ymse_omega - fp.ymse) / fp.ymse;
    bool ok = std::abs(e.mse - fp.mse) <= tol && yrel <= 0.03;
    return {ok, fmt("mse %.5f vs RS %.5f (|diff| %.5f, tol %.5f, se %.5f); ymse %.5f vs %.5f (%.2f%%)", e.mse, fp.mse,
                    std::abs(e.mse - fp.mse), tol, se.mse, e.ymse_omega, fp.ymse, 100 * yrel)};
}

Outcome simulation_vs_theory() {
    auto t0 = Clock::now();
    Config c = preset("gaussian-oracle", {"simulate.T=40", "simulate.chains=4", "simulate.checkpoints=[]"});
    InstanceSpec is = instance_spec(c);
    ChainConfig cc = chain_config(c);
    Instance in = generate_instance(is);
    std::vector<TrajectoryRecord> recs = run_chains(in, cc);
    PosteriorSummary p = posterior_summaries(recs, in, cc.burn_in);
    double secs = since(t0);
    bool ok = std::abs(p.err_avg - 2 * kGolden) <= 0.06 && std::abs(p.MSE_star - kGolden) <= 0.05 && secs <= 300;
    return {ok, fmt("n=d=%d, %d chains: err %.4f (target 1.236 +- 0.06), MSE* %.4f (target 0.618 +- 0.05); %.1f s",
                    in.d(), cc.chains, p.err_avg, p.MSE_star, secs)};
}

Outcome adaptive_example1() {
    double worst_final = 0, worst_sup = 0;
    std::string per;
    for (int seed = 1; seed <= 5; ++seed) {
        Config c = preset("example1", {"global.seed=" + std::to_string(seed)});
        ChainConfig cc = chain_config(c);
        Instance in = generate_instance(instance_spec(c));
        TrajectoryRecord r = run_chains(in, cc)[0];
        DmftRun run = solve_dmft_forward(dmft_config(c));
        const Mat& a = run.kernels.alpha_traj;
        if (a.rows() != r.alpha.rows()) throw NumericError("simulator and solver grids differ");
        double fin = std::abs(r.alpha(r.alpha.rows() - 1, 0) - 1.0);
        double sup = (a.col(0) - r.alpha.col(0)).cwiseAbs().maxCoeff();
        worst_final = std::max(worst_final, fin);
        worst_sup = std::max(worst_sup, sup);
        per += fmt("%s seed %d |a^T-1| %.3f sup %.3f", seed == 1 ? "" : ";", seed, fin, sup);
    }
    bool ok = worst_final < 0.05 && worst_sup < 0.05;
    return {ok, fmt("max |alpha^T - 1| %.3f (< 0.05), max sup-norm DMFT vs simulator %.3f (< 0.05) [%s]", worst_final,
                    worst_sup, per.c_str())};
}

Outcome landscape_figure1() {
    Config c = preset("figure1");
    ReplicaContext ctx = replica_context(c);
    CriticalSearchResult r = find_critical_points(landscape_objective(c), critical_inits(c), ctx, critical_options(c));
    if (r.points.size() != 2) return {false, fmt("%zu critical point(s) found", r.points.size())};
    Vec truth = prior_at(c, "truth").alpha;
    const CriticalPoint* star = &r.points[0];
    const CriticalPoint* other = &r.points[1];
    if ((other->alpha - truth).norm() < (star->alpha - truth).norm()) std::swap(star, other);
    double F1 = free_energy(star->alpha, ctx), F2 = free_energy(other->alpha, ctx);
    bool distinct = (star->alpha - other->alpha).norm() > critical_options(c).dedup_radius;
    bool ok = distinct && F1 < F2 && star->at >= 0 && other->at >= 0;
    return {ok, fmt("alpha* (%.4f, %.4f) F %.5f AT %.3f; alpha' (%.4f, %.4f) F %.5f AT %.3f", star->alpha[0],
                    star->alpha[1], F1, star->at, other->alpha[0], other->alpha[1], F2, other->at)};
}

Outcome check_suite() {
    auto t0 = Clock::now();
    std::string cmd = std::string(DMFTEB_CLI_PATH) + " check > /dev/null 2>&1";
    int st = std::system(cmd.c_str());
    double secs = since(t0);
    int code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    CheckReport r = run_check_suite();
    return {code == 0 && r.ok() && secs <= 30,
            fmt("%zu checks, %d failure(s); `check` exit %d in %.2f s", r.checks.size(), r.failures(), code, secs)};
}

Outcome response_estimator() {
    Config c = preset("gaussian-oracle", {"simulate.response.enabled=true"});
    ResponseConfig rc = response_config(c);
    ChainConfig cc = chain_config(c);
    Instance in = generate_instance(instance_spec(c));
    ResponseEstimate e = response_trace_estimate(in, cc.prior, cc.alpha0, rc);
    double tau = rc.t - rc.s, lambda = c.get<double>("oracle.lambda");
    MpMeasure mu = mp_measure(in.delta(), in.sigma2());
    double ref = 0;
    for (std::size_t q = 0; q < mu.x.size(); ++q) ref += mu.w[q] * std::exp(-(lambda + mu.x[q]) * tau);
    double z = std::abs(e.estimate - ref) / e.std_err;
    return {z <= 3 && rc.probes == 64 && in.d() == 1000,
            fmt("tau %.2f, gamma %.3g, %d probes: estimate %.5f +- %.5f vs oracle %.5f (%.2f s.e.)", tau, rc.gamma,
                rc.probes, e.estimate, e.std_err, ref, z)};
}

}  // namespace

int main() {
    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"RS conjugate fixed point", rs_conjugate},
        {"DMFT vs Gaussian oracle", dmft_vs_oracle},
        {"equilibrium closure", equilibrium_closure},
        {"simulation vs theory", simulation_vs_theory},
        {"adaptive learning, example 1", adaptive_example1},
        {"landscape, figure 1", landscape_figure1},
        {"check suite", check_suite},
        {"response estimator", response_estimator},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        auto t0 = Clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s criterion %zu (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str(), since(t0));
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
