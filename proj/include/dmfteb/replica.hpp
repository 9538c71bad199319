#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prior.hpp"
#include "scalar_channel.hpp"

namespace dmfteb {

struct RsOptions {
    double damping = 0.5;
    double tol = 1e-10;
    int max_iter = 500;
    std::optional<std::pair<double, double>> init;  // (mse, mse*) override

    void validate() const {
        if (!(damping > 0 && damping <= 1)) throw ConfigError("rs.damping must lie in (0,1]");
        if (!(tol > 0)) throw ConfigError("rs.tol must be positive");
        if (max_iter < 1) throw ConfigError("rs.max_iter must be >= 1");
    }
};

struct RsFixedPoint {
    double mse = 0, mse_star = 0, omega = 0, omega_star = 0;
    double ymse = 0, ymse_star = 0;
    int iterations = 0;
    double residual = 0;
    bool converged = false;
    bool monotone_after_5 = true;
    std::vector<double> residual_history;
};

struct YmsePair {
    double ymse, ymse_star;
};

// Building with DMFTEB_MUTATE_YMSE_SIGN flips one sign below; the check suite must catch it.
#ifdef DMFTEB_MUTATE_YMSE_SIGN
constexpr double kYmseSign = 1.0;
#else
constexpr double kYmseSign = -1.0;
#endif

inline YmsePair ymse_from_omega(double omega, double omega_star, double delta, double sigma2) {
    double ymse = sigma2 * (1.0 + kYmseSign * omega * sigma2 / delta);
    double ymse_star = sigma2 + (omega * sigma2 * sigma2 / delta) * (omega / omega_star - 2.0);
    return {ymse, ymse_star};
}

inline RsFixedPoint solve_rs_fixed_point(const Prior& model, const Prior& truth, double delta, double sigma2,
                                         const RsOptions& opt = {}, const QuadratureRule& rule = {}) {
    opt.validate();
    rule.validate();
    if (!(delta > 0) || !(sigma2 > 0)) throw ConfigError("delta and sigma2 must be positive");
    double mse, mse_star;
    if (opt.init) {
        mse = opt.init->first;
        mse_star = opt.init->second;
    } else {
        PriorModel g(model.spec, model.alpha), gs(truth.spec, truth.alpha);
        double m = g.mean();
        mse = g.variance();
        mse_star = gs.variance() + (gs.mean() - m) * (gs.mean() - m);
    }
    if (rule.self_check) {
        RsStep a = rs_residual(mse, mse_star, model, truth, delta, sigma2, rule);
        RsStep b = rs_residual(mse, mse_star, model, truth, delta, sigma2, rule.doubled());
        double diff = std::max(std::abs(a.mse - b.mse), std::abs(a.mse_star - b.mse_star));
        if (diff > rule.self_check_tol)
            throw QuadratureError("quadrature self-check failed: doubling the order moves (mse, mse*) by " +
                                  std::to_string(diff) + " > " + std::to_string(rule.self_check_tol) +
                                  " at omega=" + std::to_string(a.omega) + ", omega*=" +
                                  std::to_string(a.omega_star));
    }
    RsFixedPoint fp;
    for (int it = 1; it <= opt.max_iter; ++it) {
        RsStep s = rs_residual(mse, mse_star, model, truth, delta, sigma2, rule);
        if (s.mse < 0 || s.mse_star < 0 || !std::isfinite(s.mse) || !std::isfinite(s.mse_star))
            throw NumericError("RS iteration " + std::to_string(it) + " produced mse=" + std::to_string(s.mse) +
                               ", mse*=" + std::to_string(s.mse_star));
        double res = std::max(std::abs(s.mse - mse), std::abs(s.mse_star - mse_star));
        fp.residual_history.push_back(res);
        if (it > 6 && res > fp.residual_history[it - 2]) fp.monotone_after_5 = false;
        fp.iterations = it;
        fp.residual = res;
        if (res <= opt.tol) {
            mse = s.mse;
            mse_star = s.mse_star;
            fp.converged = true;
            break;
        }
        mse += opt.damping * (s.mse - mse);
        mse_star += opt.damping * (s.mse_star - mse_star);
    }
    fp.mse = mse;
    fp.mse_star = mse_star;
    fp.omega = delta / (sigma2 + mse);
    fp.omega_star = delta / (sigma2 + mse_star);
    YmsePair y = ymse_from_omega(fp.omega, fp.omega_star, delta, sigma2);
    fp.ymse = y.ymse;
    fp.ymse_star = y.ymse_star;
    return fp;
}

struct ReplicaContext {
    PriorSpec prior;
    Prior truth;
    double delta = 1.0;
    double sigma2 = 1.0;
    QuadratureRule rule;
    RsOptions rs;
    RegularizerSpec reg;
    double s2 = 0.0;  // noise level of the large-delta objective G
};

inline double free_energy_value(double neg_log_marginal, double omega, double omega_star, double delta,
                                double sigma2) {
    double r = omega / omega_star;
    return neg_log_marginal - 0.5 * (delta + std::log(2.0 * M_PI / omega) - delta * std::log(2.0 * M_PI * delta / omega) +
                                     (1.0 - delta) * r + omega * sigma2 * (r - 2.0));
}

struct PointEval {
    double F = 0;
    Vec grad;
    double at = 0;
    RsFixedPoint fp;
};

inline PointEval evaluate_point(const Vec& alpha, const ReplicaContext& ctx) {
    Prior model{ctx.prior, alpha};
    PointEval e;
    e.fp = solve_rs_fixed_point(model, ctx.truth, ctx.delta, ctx.sigma2, ctx.rs, ctx.rule);
    if (!e.fp.converged)
        throw NumericError("RS fixed point did not converge at alpha (residual " + std::to_string(e.fp.residual) + ")");
    ChannelStats s = channel_stats({model, e.fp.omega, ctx.truth, e.fp.omega_star}, ctx.rule, true);
    e.F = free_energy_value(s.neg_log_marginal, e.fp.omega, e.fp.omega_star, ctx.delta, ctx.sigma2);
    e.grad = -s.alpha_grad;
    e.at = 1.0 - e.fp.omega * e.fp.omega / ctx.delta * s.var_sq;
    return e;
}

inline double free_energy(const Vec& alpha, const ReplicaContext& ctx) { return evaluate_point(alpha, ctx).F; }
inline Vec free_energy_gradient(const Vec& alpha, const ReplicaContext& ctx) { return evaluate_point(alpha, ctx).grad; }
inline double at_stability(const Vec& alpha, const ReplicaContext& ctx) { return evaluate_point(alpha, ctx).at; }

struct ObjectiveValue {
    double value = 0;
    Vec grad;
};

inline ObjectiveValue population_nll_G(const Vec& alpha, double s2, const PriorSpec& prior, const Prior& truth,
                                       const QuadratureRule& rule = {}) {
    if (!(s2 > 0)) throw ConfigError("s2 must be positive");
    double w = 1.0 / s2;
    ChannelStats s = channel_stats({Prior{prior, alpha}, w, truth, w}, rule, true);
    return {s.neg_log_marginal, -s.alpha_grad};
}

enum class Objective { F_plus_R, G_plus_R };

inline std::string objective_name(Objective o) { return o == Objective::F_plus_R ? "F_plus_R" : "G_plus_R"; }

inline Objective parse_objective(const std::string& s) {
    if (s == "F_plus_R" || s == "F") return Objective::F_plus_R;
    if (s == "G_plus_R" || s == "G") return Objective::G_plus_R;
    throw ConfigError("unknown objective '" + s + "' (expected F_plus_R or G_plus_R)");
}

inline ObjectiveValue objective_value(Objective obj, const Vec& alpha, const ReplicaContext& ctx) {
    ObjectiveValue o;
    if (obj == Objective::F_plus_R) {
        PointEval e = evaluate_point(alpha, ctx);
        o = {e.F, e.grad};
    } else {
        o = population_nll_G(alpha, ctx.s2, ctx.prior, ctx.truth, ctx.rule);
    }
    RegularizerValue r = regularizer(alpha, ctx.reg);
    o.value += r.value;
    o.grad += r.gradient;
    return o;
}

struct CriticalPoint {
    Vec alpha;
    double grad_norm = 0;
    double objective = 0;
    double at = 0;
    int basin = 0;
    int init_index = 0;
};

struct CriticalSearchOptions {
    double step = 1.0;
    double grad_tol = 1e-6;
    double dedup_radius = 0.05;
    int max_steps = 2000;
};

struct CriticalSearchResult {
    std::vector<CriticalPoint> points;
    std::vector<int> failed_inits;
    std::vector<std::string> messages;
};

// Gradient descent with Armijo backtracking from each init, then deduplication.
inline CriticalSearchResult find_critical_points(Objective obj, const std::vector<Vec>& inits, const ReplicaContext& ctx,
                                                 const CriticalSearchOptions& opt = {}) {
    CriticalSearchResult res;
    std::vector<std::optional<CriticalPoint>> found(inits.size());
    std::vector<std::string> notes(inits.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = 0; k < inits.size(); ++k) {
        try {
            if (ctx.reg.enabled && inits[k].norm() > ctx.reg.radius + 1.0)
                throw ConfigError("init outside radius D+1");
            Vec a = inits[k];
            ObjectiveValue cur = objective_value(obj, a, ctx);
            double eta = opt.step;
            bool ok = false;
            for (int it = 0; it < opt.max_steps; ++it) {
                double gn = cur.grad.norm();
                if (gn <= opt.grad_tol) {
                    ok = true;
                    break;
                }
                bool accepted = false;
                for (int bt = 0; bt < 60; ++bt) {
                    Vec trial = a - eta * cur.grad;
                    try {
                        ObjectiveValue nv = objective_value(obj, trial, ctx);
                        if (nv.value <= cur.value - 1e-4 * eta * gn * gn) {
                            a = trial;
                            cur = nv;
                            accepted = true;
                            break;
                        }
                    } catch (const NumericError&) {
                    }
                    eta *= 0.5;
                }
                if (!accepted) break;
                eta = std::min(2.0 * eta, opt.step);
            }
            if (!ok) {
                notes[k] = "init " + std::to_string(k) + " did not reach grad_tol (|grad|=" +
                           std::to_string(cur.grad.norm()) + ")";
                continue;
            }
            CriticalPoint cp;
            cp.alpha = a;
            cp.grad_norm = cur.grad.norm();
            cp.objective = cur.value;
            cp.at = evaluate_point(a, ctx).at;
            cp.init_index = static_cast<int>(k);
            found[k] = cp;
        } catch (const std::exception& e) {
            notes[k] = "init " + std::to_string(k) + " failed: " + e.what();
        }
    }
    for (std::size_t k = 0; k < inits.size(); ++k) {
        if (!found[k]) {
            res.failed_inits.push_back(static_cast<int>(k));
            res.messages.push_back(notes[k]);
            continue;
        }
        bool dup = false;
        for (const CriticalPoint& p : res.points)
            if ((p.alpha - found[k]->alpha).norm() < opt.dedup_radius) dup = true;
        if (dup) continue;
        found[k]->basin = static_cast<int>(res.points.size());
        res.points.push_back(*found[k]);
    }
    return res;
}

struct Axis {
    double min = -1, max = 1;
    int count = 3;
    double at(int i) const { return count == 1 ? min : min + (max - min) * i / (count - 1); }
};

struct LandscapeGrid {
    Vec origin;
    Vec u1, u2;
    Axis a1, a2;
    int max_cells = 40000;
};

struct LandscapeRow {
    double a1, a2, value, at;
    bool converged;
};

inline std::vector<LandscapeRow> landscape_scan(Objective obj, const LandscapeGrid& grid, const ReplicaContext& ctx) {
    if (grid.a1.count < 1 || grid.a2.count < 1) throw ConfigError("landscape axes need at least one point");
    long cells = static_cast<long>(grid.a1.count) * grid.a2.count;
    if (cells > grid.max_cells)
        throw ConfigError("landscape grid has " + std::to_string(cells) + " cells, cap is " +
                          std::to_string(grid.max_cells));
    if (grid.origin.size() != ctx.prior.dim() || grid.u1.size() != ctx.prior.dim() || grid.u2.size() != ctx.prior.dim())
        throw ConfigError("landscape origin/directions must match the prior dimension");
    std::vector<LandscapeRow> rows(static_cast<std::size_t>(cells));
#pragma omp parallel for schedule(dynamic)
    for (long c = 0; c < cells; ++c) {
        int i = static_cast<int>(c / grid.a2.count), j = static_cast<int>(c % grid.a2.count);
        double x = grid.a1.at(i), y = grid.a2.at(j);
        Vec a = grid.origin + x * grid.u1 + y * grid.u2;
        LandscapeRow r{x, y, NAN, NAN, false};
        try {
            RegularizerValue reg = regularizer(a, ctx.reg);
            if (obj == Objective::F_plus_R) {
                PointEval e = evaluate_point(a, ctx);
                r.value = e.F + reg.value;
                r.at = e.at;
                r.converged = true;
            } else {
                r.value = population_nll_G(a, ctx.s2, ctx.prior, ctx.truth, ctx.rule).value + reg.value;
                r.converged = true;
                r.at = evaluate_point(a, ctx).at;
            }
        } catch (const std::exception&) {
            r.converged = false;
        }
        rows[static_cast<std::size_t>(c)] = r;
    }
    return rows;
}

}  // namespace dmfteb
