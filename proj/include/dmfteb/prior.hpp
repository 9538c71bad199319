#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include "errors.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace dmfteb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr int kMaxComponents = 64;
constexpr double kLog2Pi = 1.8378770664093453;

enum class PriorVariant { gaussian_location, mixture_means, mixture_weights, generic_tabulated };

inline std::string variant_name(PriorVariant v) {
    switch (v) {
        case PriorVariant::gaussian_location: return "gaussian-location";
        case PriorVariant::mixture_means: return "mixture-means";
        case PriorVariant::mixture_weights: return "mixture-weights";
        case PriorVariant::generic_tabulated: return "generic-tabulated";
    }
    return "?";
}

inline PriorVariant parse_variant(const std::string& s) {
    if (s == "gaussian-location") return PriorVariant::gaussian_location;
    if (s == "mixture-means") return PriorVariant::mixture_means;
    if (s == "mixture-weights") return PriorVariant::mixture_weights;
    if (s == "generic-tabulated") return PriorVariant::generic_tabulated;
    throw ConfigError("unknown prior variant '" + s + "'");
}

// Log-density tabulated on a uniform grid, cubic B-spline inside, quadratic tails outside.
// Normalized so that exp(log_density) integrates to 1.
class TabulatedShape {
public:
    TabulatedShape(double theta0, double step, std::vector<double> log_g, double min_curvature = 1e-2)
        : theta0_(theta0), step_(step), raw_(std::move(log_g)) {
        if (raw_.size() < 5) throw ConfigError("generic-tabulated prior needs at least 5 grid values");
        if (!(step_ > 0)) throw ConfigError("generic-tabulated grid step must be positive");
        for (double v : raw_)
            if (!std::isfinite(v)) throw ConfigError("generic-tabulated log density must be finite on the grid");
        spline_ = std::make_shared<boost::math::interpolators::cardinal_cubic_b_spline<double>>(
            raw_.begin(), raw_.end(), theta0_, step_);
        lo_ = theta0_;
        hi_ = theta0_ + step_ * static_cast<double>(raw_.size() - 1);
        left_ = {lo_, (*spline_)(lo_), spline_->prime(lo_), std::max(-spline_->double_prime(lo_), min_curvature)};
        right_ = {hi_, (*spline_)(hi_), spline_->prime(hi_), std::max(-spline_->double_prime(hi_), min_curvature)};
        normalize();
    }

    double log_density(double x) const { return raw(x) - log_z_; }
    double d1(double x) const {
        if (x < lo_) return left_.slope - left_.curv * (x - lo_);
        if (x > hi_) return right_.slope - right_.curv * (x - hi_);
        return spline_->prime(x);
    }
    double d2(double x) const {
        if (x < lo_) return -left_.curv;
        if (x > hi_) return -right_.curv;
        return spline_->double_prime(x);
    }

    double mean() const { return mean_; }
    double variance() const { return var_; }
    double theta0() const { return theta0_; }
    double step() const { return step_; }
    const std::vector<double>& values() const { return raw_; }
    double tail_curvature() const { return std::min(left_.curv, right_.curv); }
    double max_abs_curvature() const { return max_curv_; }

    double quantile(double u) const {
        auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
        if (it == cdf_.begin()) return fine_.front();
        if (it == cdf_.end()) return fine_.back();
        std::size_t k = static_cast<std::size_t>(it - cdf_.begin());
        double c0 = cdf_[k - 1], c1 = cdf_[k];
        double f = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
        return fine_[k - 1] + f * (fine_[k] - fine_[k - 1]);
    }

private:
    struct Tail {
        double x, value, slope, curv;
    };

    double raw(double x) const {
        if (x < lo_) {
            double u = x - lo_;
            return left_.value + left_.slope * u - 0.5 * left_.curv * u * u;
        }
        if (x > hi_) {
            double u = x - hi_;
            return right_.value + right_.slope * u - 0.5 * right_.curv * u * u;
        }
        return (*spline_)(x);
    }

    void normalize() {
        double ext_l = std::max(0.0, -left_.slope) / left_.curv + 14.0 / std::sqrt(left_.curv);
        double ext_r = std::max(0.0, right_.slope) / right_.curv + 14.0 / std::sqrt(right_.curv);
        const int n = 40001;
        NodeSet g = trapezoid_rule(n, lo_ - ext_l, hi_ + ext_r);
        std::vector<double> lv(n);
        for (int k = 0; k < n; ++k) lv[k] = raw(g.x[k]) + std::log(g.w[k]);
        log_z_ = log_sum_exp(lv.data(), lv.size());
        fine_ = g.x;
        cdf_.resize(n);
        double acc = 0.0, m1 = 0.0, m2 = 0.0;
        for (int k = 0; k < n; ++k) {
            double p = std::exp(lv[k] - log_z_);
            acc += p;
            cdf_[k] = acc;
            m1 += p * g.x[k];
            m2 += p * g.x[k] * g.x[k];
        }
        mean_ = m1;
        var_ = m2 - m1 * m1;
        max_curv_ = 0.0;
        for (int k = 0; k < n; k += 10) max_curv_ = std::max(max_curv_, std::abs(d2(g.x[k])));
    }

    double theta0_, step_;
    std::vector<double> raw_;
    std::shared_ptr<boost::math::interpolators::cardinal_cubic_b_spline<double>> spline_;
    double lo_ = 0, hi_ = 0;
    Tail left_{}, right_{};
    double log_z_ = 0, mean_ = 0, var_ = 1, max_curv_ = 0;
    std::vector<double> fine_, cdf_;
};

struct PriorSpec {
    PriorVariant variant = PriorVariant::gaussian_location;
    double precision = 1.0;           // gaussian-location
    std::vector<double> weights;      // mixture-means
    std::vector<double> means;        // mixture-weights
    std::vector<double> precisions;   // both mixtures
    std::shared_ptr<const TabulatedShape> table;  // generic-tabulated

    int dim() const {
        switch (variant) {
            case PriorVariant::mixture_means: return static_cast<int>(weights.size());
            case PriorVariant::mixture_weights: return static_cast<int>(means.size());
            default: return 1;
        }
    }

    void validate() const {
        switch (variant) {
            case PriorVariant::gaussian_location:
                if (!(precision > 0) || !std::isfinite(precision))
                    throw ConfigError("gaussian-location precision must be positive");
                break;
            case PriorVariant::mixture_means: {
                if (weights.empty()) throw ConfigError("mixture-means needs at least one component");
                if (weights.size() != precisions.size())
                    throw ConfigError("mixture-means: weights and precisions differ in length");
                double s = 0.0;
                for (double p : weights) {
                    if (!(p > 0)) throw ConfigError("mixture weights must be strictly positive");
                    s += p;
                }
                if (std::abs(s - 1.0) > 1e-12) throw ConfigError("mixture weights must sum to 1");
                break;
            }
            case PriorVariant::mixture_weights:
                if (means.empty()) throw ConfigError("mixture-weights needs at least one component");
                if (means.size() != precisions.size())
                    throw ConfigError("mixture-weights: means and precisions differ in length");
                break;
            case PriorVariant::generic_tabulated:
                if (!table) throw ConfigError("generic-tabulated prior has no table");
                break;
        }
        if (variant == PriorVariant::mixture_means || variant == PriorVariant::mixture_weights) {
            if (static_cast<int>(precisions.size()) > kMaxComponents)
                throw ConfigError("too many mixture components");
            for (double w : precisions)
                if (!(w > 0) || !std::isfinite(w)) throw ConfigError("mixture precisions must be positive");
        }
    }

    bool is_mixture_like() const { return variant != PriorVariant::generic_tabulated; }
};

struct Prior {
    PriorSpec spec;
    Vec alpha;
};

inline PriorSpec gaussian_location(double precision) {
    PriorSpec s;
    s.variant = PriorVariant::gaussian_location;
    s.precision = precision;
    return s;
}

inline PriorSpec mixture_means(std::vector<double> weights, std::vector<double> precisions) {
    PriorSpec s;
    s.variant = PriorVariant::mixture_means;
    s.weights = std::move(weights);
    s.precisions = std::move(precisions);
    return s;
}

inline PriorSpec mixture_weights(std::vector<double> means, std::vector<double> precisions) {
    PriorSpec s;
    s.variant = PriorVariant::mixture_weights;
    s.means = std::move(means);
    s.precisions = std::move(precisions);
    return s;
}

inline PriorSpec generic_tabulated(double theta0, double step, std::vector<double> log_g) {
    PriorSpec s;
    s.variant = PriorVariant::generic_tabulated;
    s.table = std::make_shared<TabulatedShape>(theta0, step, std::move(log_g));
    return s;
}

// Gaussian mixture view (log weight, center, precision) of the non-tabulated families.
struct Components {
    int k = 0;
    std::array<double, kMaxComponents> logw{}, center{}, prec{};
};

inline void check_alpha(const PriorSpec& spec, const Vec& alpha) {
    if (alpha.size() != spec.dim())
        throw ConfigError("alpha has dimension " + std::to_string(alpha.size()) + ", prior " +
                          variant_name(spec.variant) + " expects " + std::to_string(spec.dim()));
}

inline Components components(const PriorSpec& spec, const Vec& alpha) {
    Components c;
    switch (spec.variant) {
        case PriorVariant::gaussian_location:
            c.k = 1;
            c.logw[0] = 0.0;
            c.center[0] = alpha[0];
            c.prec[0] = spec.precision;
            break;
        case PriorVariant::mixture_means:
            c.k = spec.dim();
            for (int i = 0; i < c.k; ++i) {
                c.logw[i] = std::log(spec.weights[i]);
                c.center[i] = alpha[i];
                c.prec[i] = spec.precisions[i];
            }
            break;
        case PriorVariant::mixture_weights: {
            c.k = spec.dim();
            double lse = log_sum_exp(alpha.data(), static_cast<std::size_t>(c.k));
            for (int i = 0; i < c.k; ++i) {
                c.logw[i] = alpha[i] - lse;
                c.center[i] = spec.means[i];
                c.prec[i] = spec.precisions[i];
            }
            break;
        }
        case PriorVariant::generic_tabulated:
            throw ConfigError("generic-tabulated prior has no mixture representation");
    }
    return c;
}

struct PriorLocal {
    double log_g = 0, score = 0, curvature = 0;
};

// Prior with fixed alpha; per-theta evaluations share one pass over the components.
class PriorModel {
public:
    PriorModel(const PriorSpec& spec, const Vec& alpha) : spec_(spec), alpha_(alpha) {
        spec.validate();
        check_alpha(spec, alpha);
        if (spec.is_mixture_like()) comps_ = components(spec, alpha);
    }

    int dim() const { return static_cast<int>(alpha_.size()); }
    const PriorSpec& spec() const { return spec_; }
    const Vec& alpha() const { return alpha_; }

    // grad (length dim) receives d/dalpha log g when non-null.
    PriorLocal eval(double theta, double* grad = nullptr) const {
        PriorLocal out;
        if (spec_.variant == PriorVariant::generic_tabulated) {
            const TabulatedShape& t = *spec_.table;
            double x = theta - alpha_[0];
            out.log_g = t.log_density(x);
            out.score = t.d1(x);
            out.curvature = t.d2(x);
            if (grad) grad[0] = -out.score;
            return out;
        }
        const Components& c = comps_;
        std::array<double, kMaxComponents> lp, s;
        double m = -INFINITY;
        for (int i = 0; i < c.k; ++i) {
            double d = theta - c.center[i];
            lp[i] = c.logw[i] + 0.5 * (std::log(c.prec[i]) - kLog2Pi) - 0.5 * c.prec[i] * d * d;
            s[i] = -c.prec[i] * d;
            m = std::max(m, lp[i]);
        }
        double z = 0.0;
        for (int i = 0; i < c.k; ++i) {
            lp[i] = std::exp(lp[i] - m);
            z += lp[i];
        }
        out.log_g = m + std::log(z);
        double s1 = 0.0, s2 = 0.0, pw = 0.0;
        for (int i = 0; i < c.k; ++i) {
            double pi = lp[i] / z;
            lp[i] = pi;
            s1 += pi * s[i];
            s2 += pi * s[i] * s[i];
            pw += pi * c.prec[i];
        }
        out.score = s1;
        out.curvature = std::max(0.0, s2 - s1 * s1) - pw;
        if (grad) {
            switch (spec_.variant) {
                case PriorVariant::gaussian_location:
                case PriorVariant::mixture_means:
                    for (int i = 0; i < c.k; ++i) grad[i] = -s[i] * lp[i];
                    break;
                case PriorVariant::mixture_weights:
                    for (int i = 0; i < c.k; ++i) grad[i] = lp[i] - std::exp(c.logw[i]);
                    break;
                default: break;
            }
        }
        return out;
    }

    double log_density(double theta) const { return eval(theta).log_g; }
    double score(double theta) const { return eval(theta).score; }
    double score_derivative(double theta) const { return eval(theta).curvature; }
    Vec alpha_gradient(double theta) const {
        Vec g(dim());
        eval(theta, g.data());
        return g;
    }

    double mean() const {
        if (spec_.variant == PriorVariant::generic_tabulated) return spec_.table->mean() + alpha_[0];
        double m = 0.0;
        for (int i = 0; i < comps_.k; ++i) m += std::exp(comps_.logw[i]) * comps_.center[i];
        return m;
    }
    double second_moment() const {
        if (spec_.variant == PriorVariant::generic_tabulated) {
            double m = mean();
            return spec_.table->variance() + m * m;
        }
        double m2 = 0.0;
        for (int i = 0; i < comps_.k; ++i)
            m2 += std::exp(comps_.logw[i]) * (comps_.center[i] * comps_.center[i] + 1.0 / comps_.prec[i]);
        return m2;
    }
    double variance() const {
        double m = mean();
        return second_moment() - m * m;
    }

    // Limit of the curvature as |theta| grows.
    double curvature_at_infinity() const {
        if (spec_.variant == PriorVariant::generic_tabulated) return -spec_.table->tail_curvature();
        double w = INFINITY;
        for (int i = 0; i < comps_.k; ++i) w = std::min(w, comps_.prec[i]);
        return -w;
    }

    // Linear-growth constant of the alpha-gradient, used for the sanity radius 2(|alpha0| + C T).
    double growth_constant() const {
        switch (spec_.variant) {
            case PriorVariant::mixture_weights: return 2.0;
            case PriorVariant::generic_tabulated: return std::max(1.0, spec_.table->max_abs_curvature());
            default: {
                double w = 0.0;
                for (int i = 0; i < comps_.k; ++i) w = std::max(w, comps_.prec[i]);
                return w;
            }
        }
    }

    const Components& mixture() const { return comps_; }

private:
    PriorSpec spec_;
    Vec alpha_;
    Components comps_;
};

inline double log_density(double theta, const Vec& alpha, const PriorSpec& spec) {
    return PriorModel(spec, alpha).log_density(theta);
}
inline double score(double theta, const Vec& alpha, const PriorSpec& spec) {
    return PriorModel(spec, alpha).score(theta);
}
inline double score_derivative(double theta, const Vec& alpha, const PriorSpec& spec) {
    return PriorModel(spec, alpha).score_derivative(theta);
}
inline Vec alpha_gradient(double theta, const Vec& alpha, const PriorSpec& spec) {
    return PriorModel(spec, alpha).alpha_gradient(theta);
}

inline std::vector<double> sample_prior(const PriorSpec& spec, const Vec& alpha, std::size_t count, Rng& rng) {
    PriorModel model(spec, alpha);
    std::vector<double> out(count);
    if (count == 0) return out;
    if (spec.variant == PriorVariant::generic_tabulated) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& v : out) v = spec.table->quantile(u(rng)) + alpha[0];
        return out;
    }
    const Components& c = model.mixture();
    std::normal_distribution<double> normal(0.0, 1.0);
    if (c.k == 1) {
        double sd = 1.0 / std::sqrt(c.prec[0]);
        for (auto& v : out) v = c.center[0] + sd * normal(rng);
        return out;
    }
    std::vector<double> p(c.k);
    for (int i = 0; i < c.k; ++i) p[i] = std::exp(c.logw[i]);
    std::discrete_distribution<int> pick(p.begin(), p.end());
    for (auto& v : out) {
        int k = pick(rng);
        v = c.center[k] + normal(rng) / std::sqrt(c.prec[k]);
    }
    return out;
}

struct RegularizerSpec {
    double radius = 3.0;
    bool enabled = true;
};

// Ramp in u = x - D: zero for u <= 0, 5u^4 - 6u^5 + 2u^6 on [0,1], then the tangent line 2u - 1.
// r'' = 60 u^2 (1-u)^2 on [0,1], so r is C^3 across both joints.
inline double ramp(double x, double radius) {
    double u = x - radius;
    if (u <= 0) return 0.0;
    if (u < 1) return u * u * u * u * (5.0 - 6.0 * u + 2.0 * u * u);
    return 2.0 * u - 1.0;
}

inline double ramp_prime(double x, double radius) {
    double u = x - radius;
    if (u <= 0) return 0.0;
    if (u < 1) return u * u * u * (20.0 - 30.0 * u + 12.0 * u * u);
    return 2.0;
}

inline double ramp_second(double x, double radius) {
    double u = x - radius;
    if (u <= 0 || u >= 1) return 0.0;
    return 60.0 * u * u * (1.0 - u) * (1.0 - u);
}

struct RegularizerValue {
    double value = 0;
    Vec gradient;
};

inline RegularizerValue regularizer(const Vec& alpha, const RegularizerSpec& spec) {
    if (!(spec.radius > 0)) throw ConfigError("regularizer radius must be positive");
    RegularizerValue r;
    r.gradient = Vec::Zero(alpha.size());
    if (!spec.enabled) return r;
    double x = alpha.norm();
    r.value = ramp(x, spec.radius);
    if (x > spec.radius) r.gradient = ramp_prime(x, spec.radius) * alpha / x;
    return r;
}

}  // namespace dmfteb
