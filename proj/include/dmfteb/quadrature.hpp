#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <gsl/gsl_integration.h>

#include "errors.hpp"

namespace dmfteb {

struct NodeSet {
    std::vector<double> x;
    std::vector<double> w;
};

namespace detail {
inline NodeSet gsl_fixed(const gsl_integration_fixed_type* type, int n, double a, double b) {
    gsl_integration_fixed_workspace* ws = gsl_integration_fixed_alloc(type, static_cast<size_t>(n), a, b, 0.0, 0.0);
    if (!ws) throw QuadratureError("gsl_integration_fixed_alloc failed for n=" + std::to_string(n));
    NodeSet out;
    const double* xs = gsl_integration_fixed_nodes(ws);
    const double* ws_ = gsl_integration_fixed_weights(ws);
    out.x.assign(xs, xs + n);
    out.w.assign(ws_, ws_ + n);
    gsl_integration_fixed_free(ws);
    return out;
}
}  // namespace detail

// Nodes t and weights for E f(Z), Z ~ N(0,1): sum w_k f(t_k).
inline NodeSet standard_normal_rule(int n) {
    if (n < 1) throw QuadratureError("Gauss-Hermite order must be >= 1");
    if (n == 1) return {{0.0}, {1.0}};
    NodeSet r = detail::gsl_fixed(gsl_integration_fixed_hermite, n, 0.0, 1.0);
    const double s = std::sqrt(2.0);
    const double norm = 1.0 / std::sqrt(M_PI);
    for (int k = 0; k < n; ++k) {
        r.x[k] *= s;
        r.w[k] *= norm;
    }
    return r;
}

inline NodeSet legendre_rule(int n, double a, double b) {
    if (n < 1) throw QuadratureError("Gauss-Legendre order must be >= 1");
    return detail::gsl_fixed(gsl_integration_fixed_legendre, n, a, b);
}

// Uniform trapezoid grid on [a,b].
inline NodeSet trapezoid_rule(int n, double a, double b) {
    if (n < 2) throw QuadratureError("trapezoid grid needs at least 2 nodes");
    NodeSet r;
    r.x.resize(n);
    r.w.assign(n, (b - a) / (n - 1));
    for (int k = 0; k < n; ++k) r.x[k] = a + (b - a) * k / (n - 1);
    r.w.front() *= 0.5;
    r.w.back() *= 0.5;
    return r;
}

inline double log_sum_exp(const double* v, std::size_t n) {
    double m = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

}  // namespace dmfteb
