#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "prior.hpp"
#include "quadrature.hpp"

namespace dmfteb {

struct QuadratureRule {
    int n_gh = 61;            // Gauss-Hermite order per Gaussian component
    int grid_nodes = 2001;    // theta-grid for tabulated priors
    double grid_range = 12.0; // half-width in prior standard deviations
    int y_nodes = 801;        // outer y-grid when the true prior is tabulated
    bool self_check = true;
    double self_check_tol = 1e-7;

    QuadratureRule doubled() const {
        QuadratureRule r = *this;
        r.n_gh = 2 * n_gh;
        r.grid_nodes = 2 * grid_nodes - 1;
        r.y_nodes = 2 * y_nodes - 1;
        return r;
    }

    void validate() const {
        if (n_gh < 1) throw ConfigError("quadrature.n_gh must be >= 1");
        if (grid_nodes < 11) throw ConfigError("quadrature.grid_nodes must be >= 11");
        if (y_nodes < 11) throw ConfigError("quadrature.y_nodes must be >= 11");
        if (!(grid_range > 0)) throw ConfigError("quadrature.grid_range must be positive");
    }
};

struct ChannelParams {
    Prior model;
    double omega = 1.0;
    Prior truth;
    double omega_star = 1.0;
};

struct PosteriorMoments {
    double mean = 0, variance = 0;
};

struct PosteriorStats {
    double mean = 0, variance = 0, log_marginal = 0;
};

// Posterior of theta given y = theta + N(0, 1/omega) under prior g(., alpha).
class ScalarPosterior {
public:
    ScalarPosterior(const PriorSpec& spec, const Vec& alpha, double omega, const QuadratureRule& rule = {})
        : model_(spec, alpha), omega_(omega) {
        if (!(omega > 0) || !std::isfinite(omega)) throw NumericError("channel precision must be positive");
        if (!spec.is_mixture_like()) build_grid(rule);
    }

    const PriorModel& prior() const { return model_; }
    double omega() const { return omega_; }

    // grad receives d/dalpha log P(y) = <d/dalpha log g> when non-null.
    PosteriorStats at(double y, double* grad = nullptr) const {
        return model_.spec().is_mixture_like() ? mixture_at(y, grad) : grid_at(y, grad);
    }

private:
    PosteriorStats mixture_at(double y, double* grad) const {
        const Components& c = model_.mixture();
        std::array<double, kMaxComponents> lp, m, v, s2;
        double mx = -INFINITY;
        for (int i = 0; i < c.k; ++i) {
            s2[i] = 1.0 / c.prec[i] + 1.0 / omega_;
            double d = y - c.center[i];
            lp[i] = c.logw[i] - 0.5 * (kLog2Pi + std::log(s2[i])) - 0.5 * d * d / s2[i];
            mx = std::max(mx, lp[i]);
            v[i] = 1.0 / (c.prec[i] + omega_);
            m[i] = (c.prec[i] * c.center[i] + omega_ * y) * v[i];
        }
        double z = 0.0;
        for (int i = 0; i < c.k; ++i) {
            lp[i] = std::exp(lp[i] - mx);
            z += lp[i];
        }
        PosteriorStats out;
        out.log_marginal = mx + std::log(z);
        double mean = 0.0;
        for (int i = 0; i < c.k; ++i) {
            lp[i] /= z;
            mean += lp[i] * m[i];
        }
        double var = 0.0;
        for (int i = 0; i < c.k; ++i) {
            double d = m[i] - mean;
            var += lp[i] * (v[i] + d * d);
        }
        out.mean = mean;
        out.variance = var;
        if (grad) {
            switch (model_.spec().variant) {
                case PriorVariant::mixture_weights:
                    for (int i = 0; i < c.k; ++i) grad[i] = lp[i] - std::exp(c.logw[i]);
                    break;
                default:
                    for (int i = 0; i < c.k; ++i) grad[i] = lp[i] * (y - c.center[i]) / s2[i];
            }
        }
        return out;
    }

    void build_grid(const QuadratureRule& rule) {
        double m = model_.mean(), sd = std::sqrt(model_.variance());
        NodeSet g = trapezoid_rule(rule.grid_nodes, m - rule.grid_range * sd, m + rule.grid_range * sd);
        theta_ = g.x;
        base_.resize(theta_.size());
        dalpha_.resize(theta_.size());
        double lnorm = 0.5 * (std::log(omega_) - kLog2Pi);
        for (std::size_t k = 0; k < theta_.size(); ++k) {
            PriorLocal p = model_.eval(theta_[k]);
            base_[k] = p.log_g + std::log(g.w[k]) + lnorm;
            dalpha_[k] = -p.score;
        }
    }

    PosteriorStats grid_at(double y, double* grad) const {
        const std::size_t n = theta_.size();
        std::vector<double> lw(n);
        double mx = -INFINITY;
        for (std::size_t k = 0; k < n; ++k) {
            double d = y - theta_[k];
            lw[k] = base_[k] - 0.5 * omega_ * d * d;
            mx = std::max(mx, lw[k]);
        }
        double z = 0.0, s1 = 0.0, sg = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double p = std::exp(lw[k] - mx);
            lw[k] = p;
            z += p;
            s1 += p * theta_[k];
            sg += p * dalpha_[k];
        }
        PosteriorStats out;
        out.log_marginal = mx + std::log(z);
        out.mean = s1 / z;
        double var = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double d = theta_[k] - out.mean;
            var += lw[k] * d * d;
        }
        out.variance = var / z;
        if (!(out.variance > 0) || !std::isfinite(out.log_marginal))
            throw QuadratureError("tabulated posterior degenerate at y=" + std::to_string(y) +
                                  " (variance " + std::to_string(out.variance) + ", omega " +
                                  std::to_string(omega_) + "); widen quadrature.grid_range or add nodes");
        if (grad) grad[0] = sg / z;
        return out;
    }

    PriorModel model_;
    double omega_;
    std::vector<double> theta_, base_, dalpha_;
};

inline PosteriorMoments posterior_moments(double y, const Prior& prior, double omega, const QuadratureRule& rule = {}) {
    PosteriorStats s = ScalarPosterior(prior.spec, prior.alpha, omega, rule).at(y);
    return {s.mean, s.variance};
}

inline double marginal_log_density(double y, const Prior& prior, double omega, const QuadratureRule& rule = {}) {
    return ScalarPosterior(prior.spec, prior.alpha, omega, rule).at(y).log_marginal;
}

// Outer law of y under the true channel, with E[theta* | y] and E[theta*^2 | y].
struct OuterNode {
    double weight, y, e1, e2;
};

// Smallest length scale on which the posterior under (spec, alpha, omega) varies with y.
inline double feature_scale(const PriorModel& m, double omega) {
    if (!m.spec().is_mixture_like()) return 1.0 / std::sqrt(omega + m.growth_constant());
    const Components& c = m.mixture();
    double f = INFINITY;
    for (int i = 0; i < c.k; ++i) f = std::min(f, std::sqrt(1.0 / c.prec[i] + 1.0 / omega));
    return f;
}

// Normal-weighted rule in the standardized variable for one outer component of spread `spread`.
// Gauss-Hermite of order n_gh when the component is resolved at that order, otherwise an
// equally spaced normal-weighted trapezoid fine enough for the feature scale.
inline NodeSet component_rule(const QuadratureRule& rule, double spread, double feature) {
    double ratio = 2.0 * spread / feature;
    if (ratio <= 1.0) return standard_normal_rule(rule.n_gh);
    int n = static_cast<int>(std::ceil(rule.n_gh * ratio)) | 1;
    n = std::min(n, 40001);
    const double L = 10.0;
    NodeSet t = trapezoid_rule(n, -L, L);
    double tot = 0.0;
    for (int k = 0; k < n; ++k) {
        t.w[k] *= std::exp(-0.5 * t.x[k] * t.x[k]) / std::sqrt(2.0 * M_PI);
        tot += t.w[k];
    }
    for (double& w : t.w) w /= tot;
    return t;
}

inline std::vector<OuterNode> outer_nodes(const Prior& truth, double omega_star, const QuadratureRule& rule,
                                          double feature = INFINITY) {
    std::vector<OuterNode> out;
    if (truth.spec.is_mixture_like()) {
        PriorModel tm(truth.spec, truth.alpha);
        const Components& c = tm.mixture();
        feature = std::min(feature, feature_scale(tm, omega_star));
        for (int j = 0; j < c.k; ++j) {
            double pj = std::exp(c.logw[j]);
            double sd = std::sqrt(1.0 / c.prec[j] + 1.0 / omega_star);
            double v = 1.0 / (c.prec[j] + omega_star);
            NodeSet gh = component_rule(rule, sd, feature);
            for (std::size_t k = 0; k < gh.x.size(); ++k) {
                double y = c.center[j] + sd * gh.x[k];
                double e1 = (c.prec[j] * c.center[j] + omega_star * y) * v;
                out.push_back({pj * gh.w[k], y, e1, e1 * e1 + v});
            }
        }
        return out;
    }
    ScalarPosterior post(truth.spec, truth.alpha, omega_star, rule);
    double m = post.prior().mean();
    double sd = std::sqrt(post.prior().variance() + 1.0 / omega_star);
    NodeSet g = trapezoid_rule(rule.y_nodes, m - rule.grid_range * sd, m + rule.grid_range * sd);
    out.reserve(g.x.size());
    double total = 0.0;
    for (std::size_t k = 0; k < g.x.size(); ++k) {
        PosteriorStats s = post.at(g.x[k]);
        double w = g.w[k] * std::exp(s.log_marginal);
        total += w;
        out.push_back({w, g.x[k], s.mean, s.mean * s.mean + s.variance});
    }
    if (std::abs(total - 1.0) > 1e-6)
        throw QuadratureError("outer y-grid captures mass " + std::to_string(total) +
                              "; widen quadrature.grid_range or add quadrature.y_nodes");
    return out;
}

enum class ChannelKind { mse, mse_star, var_sq, alpha_grad, neg_log_marginal };

struct ChannelStats {
    double mse = 0, mse_star = 0, var_sq = 0, neg_log_marginal = 0;
    Vec alpha_grad;
};

inline ChannelStats channel_stats(const ChannelParams& p, const QuadratureRule& rule, bool want_grad = true) {
    ScalarPosterior post(p.model.spec, p.model.alpha, p.omega, rule);
    std::vector<OuterNode> nodes = outer_nodes(p.truth, p.omega_star, rule, feature_scale(post.prior(), p.omega));
    ChannelStats s;
    const int K = static_cast<int>(p.model.alpha.size());
    s.alpha_grad = Vec::Zero(K);
    std::array<double, kMaxComponents> g{};
    for (const OuterNode& n : nodes) {
        PosteriorStats ps = post.at(n.y, want_grad ? g.data() : nullptr);
        s.mse += n.weight * ps.variance;
        s.mse_star += n.weight * (n.e2 - 2.0 * n.e1 * ps.mean + ps.mean * ps.mean);
        s.var_sq += n.weight * ps.variance * ps.variance;
        s.neg_log_marginal -= n.weight * ps.log_marginal;
        if (want_grad)
            for (int i = 0; i < K; ++i) s.alpha_grad[i] += n.weight * g[i];
    }
    if (!std::isfinite(s.mse) || !std::isfinite(s.mse_star) || !std::isfinite(s.neg_log_marginal))
        throw QuadratureError("channel expectation is not finite (omega " + std::to_string(p.omega) +
                              ", omega* " + std::to_string(p.omega_star) + ")");
    return s;
}

inline Vec channel_expectation(ChannelKind kind, const ChannelParams& p, const QuadratureRule& rule = {}) {
    ChannelStats s = channel_stats(p, rule, kind == ChannelKind::alpha_grad);
    auto scalar = [](double v) { return Vec::Constant(1, v); };
    switch (kind) {
        case ChannelKind::mse: return scalar(s.mse);
        case ChannelKind::mse_star: return scalar(s.mse_star);
        case ChannelKind::var_sq: return scalar(s.var_sq);
        case ChannelKind::alpha_grad: return s.alpha_grad;
        case ChannelKind::neg_log_marginal: return scalar(s.neg_log_marginal);
    }
    return {};
}

struct RsStep {
    double mse, mse_star, omega, omega_star;
};

inline RsStep rs_residual(double mse, double mse_star, const Prior& model, const Prior& truth, double delta,
                          double sigma2, const QuadratureRule& rule = {}) {
    if (!(delta > 0) || !(sigma2 > 0)) throw ConfigError("delta and sigma2 must be positive");
    if (mse < 0 || mse_star < 0) throw NumericError("rs_residual called with negative mse");
    RsStep r;
    r.omega = delta / (sigma2 + mse);
    r.omega_star = delta / (sigma2 + mse_star);
    ChannelStats s = channel_stats({model, r.omega, truth, r.omega_star}, rule, false);
    r.mse = s.mse;
    r.mse_star = s.mse_star;
    return r;
}

}  // namespace dmfteb
