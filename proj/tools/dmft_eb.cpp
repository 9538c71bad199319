#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "dmfteb/check_suite.hpp"
#include "dmfteb/config.hpp"
#include "dmfteb/dmft.hpp"
#include "dmfteb/gaussian_oracle.hpp"
#include "dmfteb/io.hpp"
#include "dmfteb/langevin.hpp"
#include "dmfteb/replica.hpp"

using namespace dmfteb;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool print_config = false;
};

void add_common(CLI::App* sub, Common& c, bool config_required) {
    auto* opt = sub->add_option("--config", c.config, "JSON config file");
    if (config_required) opt->required();
    sub->add_option("--set", c.sets, "override a config key, e.g. --set dmft.M=5000")->allow_extra_args(false);
    sub->add_option("--out", c.out, "output directory (overrides global.out)");
    sub->add_option("--seed", c.seed, "seed (overrides global.seed)");
    sub->add_flag("--print-config", c.print_config, "print the resolved config and exit");
}

Config load(const Common& c) {
    std::vector<std::string> sets = c.sets;
    if (!c.out.empty()) sets.push_back("global.out=" + Json(c.out).dump());
    if (c.seed) sets.push_back("global.seed=" + std::to_string(*c.seed));
    Config cfg = parse_config(c.config, sets);
#ifdef _OPENMP
    if (cfg.threads() > 0) omp_set_num_threads(cfg.threads());
#endif
    return cfg;
}

Json summary_head(const std::string& command, const Config& cfg) {
    return Json{{"command", command}, {"build_stamp", build_stamp()}, {"seed", cfg.seed()}, {"config", cfg.tree}};
}

fs::path prepare_out(const Config& cfg) {
    fs::path out = cfg.out();
    ensure_dir(out);
    write_text(out / "config.json", echo_config(cfg));
    return out;
}

int cmd_rs(const Config& cfg) {
    Prior model = prior_at(cfg, "model");
    ReplicaContext ctx = replica_context(cfg);
    RsFixedPoint fp = solve_rs_fixed_point(model, ctx.truth, ctx.delta, ctx.sigma2, ctx.rs, ctx.rule);
    fs::path out = prepare_out(cfg);
    Json s = summary_head("rs-solve", cfg);
    s["alpha"] = to_json(model.alpha);
    s["rs"] = to_json(fp);
    write_json(out / "summary.json", s);
    std::printf("mse %.10g  mse* %.10g  omega %.10g  omega* %.10g  ymse %.10g  ymse* %.10g  (%s after %d iterations)\n",
                fp.mse, fp.mse_star, fp.omega, fp.omega_star, fp.ymse, fp.ymse_star,
                fp.converged ? "converged" : "NOT converged", fp.iterations);
    return fp.converged ? 0 : 1;
}

int cmd_landscape(const Config& cfg) {
    ReplicaContext ctx = replica_context(cfg);
    Objective obj = landscape_objective(cfg);
    LandscapeGrid grid = landscape_grid(cfg);
    std::vector<LandscapeRow> rows = landscape_scan(obj, grid, ctx);
    CriticalSearchResult crit = find_critical_points(obj, critical_inits(cfg), ctx, critical_options(cfg));
    fs::path out = prepare_out(cfg);
    write_landscape(out, rows, grid, objective_name(obj));
    write_json(out / "critical_points.json", critical_points_json(crit));
    int conv = 0;
    for (const LandscapeRow& r : rows) conv += r.converged;
    Json s = summary_head("landscape", cfg);
    s["cells"] = rows.size();
    s["converged_cells"] = conv;
    s["critical_points"] = critical_points_json(crit);
    s["failed_inits"] = crit.failed_inits;
    s["messages"] = crit.messages;
    write_json(out / "summary.json", s);
    std::printf("%d/%zu cells converged; %zu critical point(s)\n", conv, rows.size(), crit.points.size());
    for (const CriticalPoint& p : crit.points)
        std::printf("  alpha %s  objective %.10g  |grad| %.2e  AT %.6g\n", to_json(p.alpha).dump().c_str(), p.objective,
                    p.grad_norm, p.at);
    for (const std::string& m : crit.messages) std::printf("  note: %s\n", m.c_str());
    return 0;
}

void kernel_summary(Json& s, const KernelSet& k, double window) {
    s["convention"] = convention_name(k.convention);
    s["N"] = k.N;
    s["gamma"] = k.gamma;
    s["validation"] = to_json(validate_kernels(k));
    try {
        s["equilibrium"] = to_json(extract_equilibrium(k, window));
    } catch (const std::exception& e) {
        s["equilibrium"] = Json{{"error", e.what()}};
    }
    s["jitter"] = jitter_json(k);
    s["warnings"] = k.warnings;
}

int cmd_dmft(const Config& cfg) {
    DmftConfig d = dmft_config(cfg);
    DmftRun run = solve_dmft_forward(d);
    fs::path out = prepare_out(cfg);
    write_kernels(out, run.kernels);
    Json s = summary_head("dmft", cfg);
    double w = dmft_window(cfg);
    kernel_summary(s, run.kernels, w);
    EquilibriumSe se = equilibrium_stderr(run, w);
    s["equilibrium_stderr"] = {{"mse", se.mse}, {"mse_star", se.mse_star}};
    s["seconds"] = run.seconds;
    write_json(out / "summary.json", s);
    KernelReport r = validate_kernels(run.kernels);
    std::printf("N=%d M=%d in %.2f s; identities %s; %zu warning(s)\n", run.kernels.N, run.M, run.seconds,
                r.identities_ok() ? "ok" : "VIOLATED", run.kernels.warnings.size());
    for (const std::string& m : run.kernels.warnings) std::printf("  warning: %s\n", m.c_str());
    return 0;
}

int cmd_oracle(const Config& cfg) {
    DmftConfig d = dmft_config(cfg);
    if (cfg.is_null("oracle.lambda")) throw ConfigError("oracle.lambda is required for a non-Gaussian model");
    KernelSet k = oracle_solution_on_grid(d, cfg.get<double>("oracle.lambda"), oracle_mode(cfg),
                                          cfg.get<int>("oracle.n_mp"));
    fs::path out = prepare_out(cfg);
    write_kernels(out, k);
    Json s = summary_head("oracle", cfg);
    kernel_summary(s, k, dmft_window(cfg));
    write_json(out / "summary.json", s);
    std::printf("oracle kernels on %d steps (%s convention) written to %s\n", k.N, convention_name(k.convention).c_str(),
                out.string().c_str());
    return 0;
}

Json summary_json(const PosteriorSummary& p) {
    return Json{{"MSE", p.MSE},         {"MSE_star", p.MSE_star}, {"YMSE", p.YMSE}, {"YMSE_star", p.YMSE_star},
                {"err_avg", p.err_avg}, {"window", p.window},     {"chains", p.chains}};
}

int cmd_simulate(const Config& cfg) {
    InstanceSpec is = instance_spec(cfg);
    ChainConfig cc = chain_config(cfg);
    Instance in = generate_instance(is);
    std::vector<TrajectoryRecord> recs = run_chains(in, cc);
    fs::path out = prepare_out(cfg);
    write_trajectories(out, recs);
    Json s = summary_head("simulate", cfg);
    s["instance"] = {{"n", in.n()}, {"d", in.d()}, {"delta", in.delta()}, {"op_norm", in.op_norm}, {"warnings", in.warnings}};
    PosteriorSummary pooled = posterior_summaries(recs, in, cc.burn_in);
    s["posterior"] = summary_json(pooled);
    Json chains = Json::array();
    for (const TrajectoryRecord& r : recs) {
        Json c{{"chain", r.chain},
               {"final_alpha", to_json(Vec(r.alpha.row(r.alpha.rows() - 1).transpose()))},
               {"final_err", r.err.back()},
               {"warnings", r.warnings}};
        c["posterior"] = summary_json(posterior_summaries(r, cc.burn_in));
        chains.push_back(c);
    }
    s["chains"] = chains;
    Vec alpha_T = recs[0].alpha.row(recs[0].alpha.rows() - 1).transpose();
    try {
        ReplicaContext ctx = replica_context(cfg);
        ctx.delta = in.delta();
        RsFixedPoint fp = solve_rs_fixed_point({cc.prior, alpha_T}, ctx.truth, ctx.delta, ctx.sigma2, ctx.rs, ctx.rule);
        s["prediction"] = to_json(fp);
        s["prediction"]["err"] = fp.mse + fp.mse_star;
    } catch (const std::exception& e) {
        s["prediction"] = Json{{"error", e.what()}};
    }
    if (!cc.checkpoints.empty()) {
        EmpiricalKernels ek = empirical_kernels(recs[0], in);
        write_empirical_kernels(out / "kernels_empirical.csv", ek);
    }
    if (response_enabled(cfg)) {
        ResponseEstimate r = response_trace_estimate(in, cc.prior, cc.alpha0, response_config(cfg));
        s["response"] = {{"estimate", r.estimate},
                         {"stderr", r.std_err},
                         {"half_eps_estimate", r.half_eps_estimate},
                         {"nonlinearity", r.nonlinearity},
                         {"nonlinear_warning", r.nonlinear_warning},
                         {"step_s", r.step_s},
                         {"step_t", r.step_t}};
        std::printf("response trace %.6g +- %.2g\n", r.estimate, r.std_err);
    }
    write_json(out / "summary.json", s);
    std::printf("MSE %.6g  MSE* %.6g  YMSE %.6g  YMSE* %.6g  window err %.6g  alpha^T %s\n", pooled.MSE,
                pooled.MSE_star, pooled.YMSE, pooled.YMSE_star, pooled.err_avg, to_json(alpha_T).dump().c_str());
    return 0;
}

int cmd_compare(const std::string& a, const std::string& b, double floor, double threshold, const std::string& out) {
    CompareReport r = compare_kernel_dirs(a, b, floor);
    Json files = Json::array();
    for (const FileDiff& f : r.files) {
        std::printf("%-18s rows %6d  max |diff| %.3e  max normalized %.3f at (%s)\n", f.file.c_str(), f.rows, f.max_abs,
                    f.max_norm, f.where.c_str());
        files.push_back({{"file", f.file}, {"rows", f.rows}, {"max_abs", f.max_abs}, {"max_normalized", f.max_norm},
                         {"where", f.where}});
    }
    bool ok = r.max_norm <= threshold;
    std::printf("max normalized difference %.3f (threshold %.3g): %s\n", r.max_norm, threshold, ok ? "ok" : "EXCEEDED");
    if (!out.empty()) {
        ensure_dir(out);
        write_json(fs::path(out) / "compare.json", Json{{"a", a},
                                                        {"b", b},
                                                        {"floor", floor},
                                                        {"threshold", threshold},
                                                        {"max_normalized", r.max_norm},
                                                        {"files", files},
                                                        {"build_stamp", build_stamp()}});
    }
    return ok ? 0 : 1;
}

int cmd_check(const std::string& out) {
    CheckReport r = run_check_suite();
    for (const CheckResult& c : r.checks)
        std::printf("%-4s %-46s %-11s value %-12.4g threshold %-10.3g %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                    c.kind == CheckKind::structural ? "structural" : "statistical", c.value, c.threshold,
                    c.detail.c_str());
    std::printf("%zu checks, %d failure(s), %.1f s\n", r.checks.size(), r.failures(), r.seconds);
    if (!out.empty()) {
        ensure_dir(out);
        Json j = to_json(r);
        j["build_stamp"] = build_stamp();
        write_json(fs::path(out) / "check.json", j);
    }
    return r.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Empirical-Bayes Langevin dynamics: DMFT solver, simulator, replica fixed points"};
    app.require_subcommand(1);
    std::string version = std::string("dmft-eb ") + build_stamp();
    app.set_version_flag("--version", version);

    Common rs, land, dm, orc, sim;
    add_common(app.add_subcommand("rs-solve", "solve the replica-symmetric fixed point at the model alpha"), rs, true);
    add_common(app.add_subcommand("landscape", "scan the free-energy landscape and search critical points"), land, true);
    add_common(app.add_subcommand("dmft", "solve the discretized DMFT system by Monte Carlo"), dm, true);
    add_common(app.add_subcommand("oracle", "tabulate the closed-form Gaussian-prior kernels"), orc, true);
    add_common(app.add_subcommand("simulate", "simulate Langevin dynamics on a sampled instance"), sim, true);

    auto* cmp = app.add_subcommand("compare", "compare two kernel directories");
    std::string dir_a, dir_b, cmp_out;
    double floor = 1e-9, threshold = 4.0;
    cmp->add_option("a", dir_a, "first kernel directory")->required();
    cmp->add_option("b", dir_b, "second kernel directory")->required();
    cmp->add_option("--floor", floor, "absolute floor added to the summed standard errors");
    cmp->add_option("--threshold", threshold, "exit 1 when the max normalized difference exceeds this");
    cmp->add_option("--out", cmp_out, "write compare.json here");

    auto* chk = app.add_subcommand("check", "run the invariant suite");
    std::string chk_out;
    chk->add_option("--out", chk_out, "write check.json here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << "\n" << app.help();
        return 2;
    }

    struct Entry {
        const char* name;
        Common* common;
        int (*run)(const Config&);
    };
    const Entry entries[] = {{"rs-solve", &rs, cmd_rs},   {"landscape", &land, cmd_landscape}, {"dmft", &dm, cmd_dmft},
                             {"oracle", &orc, cmd_oracle}, {"simulate", &sim, cmd_simulate}};
    try {
        for (const Entry& e : entries) {
            if (!app.got_subcommand(e.name)) continue;
            Config cfg = load(*e.common);
            if (e.common->print_config) {
                std::cout << echo_config(cfg);
                return 0;
            }
            return e.run(cfg);
        }
        if (app.got_subcommand("compare")) return cmd_compare(dir_a, dir_b, floor, threshold, cmp_out);
        if (app.got_subcommand("check")) return cmd_check(chk_out);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << app.help();
    return 2;
}
