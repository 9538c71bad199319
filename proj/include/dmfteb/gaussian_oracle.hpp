#pragma once

#include <cmath>
#include <vector>

#include "kernels.hpp"
#include "quadrature.hpp"

namespace dmfteb {

// Limiting spectrum of X^T X / sigma^2 for X n x d with iid N(0, 1/d) entries, delta = n/d.
struct MpMeasure {
    double delta = 1, sigma2 = 1;
    double lo = 0, hi = 0;  // bulk edges after scaling
    double atom = 0;
    int n_mp = 0;
    std::vector<double> x, w;  // atom first (if any), then bulk nodes

    double mass() const {
        double s = 0;
        for (double v : w) s += v;
        return s;
    }
    double moment(int k) const {
        double s = 0;
        for (size_t i = 0; i < x.size(); ++i) s += w[i] * std::pow(x[i], k);
        return s;
    }
};

namespace detail {
// c + h sin(phi) without cancellation near the lower edge a = c - h
inline double mp_point(double a, double c, double h, double phi) {
    double sn = std::sin(phi);
    if (sn >= 0) return c + h * sn;
    double cs = std::cos(phi);
    return a + h * cs * cs / (1 - sn);
}
}  // namespace detail

inline MpMeasure mp_measure(double delta, double sigma2, int n_mp = 400) {
    if (!(delta > 0) || !(sigma2 > 0)) throw ConfigError("mp_measure needs delta, sigma2 > 0");
    if (n_mp < 8) throw ConfigError("mp_measure needs n_mp >= 8");
    MpMeasure m;
    m.delta = delta;
    m.sigma2 = sigma2;
    m.n_mp = n_mp;
    double a = std::pow(1 - std::sqrt(delta), 2), b = std::pow(1 + std::sqrt(delta), 2);
    m.lo = a / sigma2;
    m.hi = b / sigma2;
    m.atom = std::max(0.0, 1 - delta);
    if (m.atom > 0) {
        m.x.push_back(0.0);
        m.w.push_back(m.atom);
    }
    // x = c + h sin(phi): sqrt((b-x)(x-a)) dx = h^2 cos^2(phi) dphi
    double c = 0.5 * (a + b), h = 0.5 * (b - a);
    NodeSet g = legendre_rule(n_mp, -M_PI / 2, M_PI / 2);
    for (int k = 0; k < n_mp; ++k) {
        double cs = std::cos(g.x[k]);
        double x = detail::mp_point(a, c, h, g.x[k]);
        m.x.push_back(x / sigma2);
        m.w.push_back(g.w[k] * h * h * cs * cs / (2 * M_PI * x));
    }
    return m;
}

// CDF of the measure at x (post-scaling).
inline double mp_cdf(const MpMeasure& m, double x, int n = 200) {
    double xs = x * m.sigma2;
    double a = m.lo * m.sigma2, b = m.hi * m.sigma2;
    if (xs < 0) return 0.0;
    if (xs <= a) return m.atom;
    if (xs >= b) return 1.0;
    double c = 0.5 * (a + b), h = 0.5 * (b - a);
    NodeSet g = legendre_rule(n, -M_PI / 2, std::asin(std::clamp((xs - c) / h, -1.0, 1.0)));
    double s = m.atom;
    for (int k = 0; k < n; ++k) {
        double cs = std::cos(g.x[k]);
        s += g.w[k] * h * h * cs * cs / (2 * M_PI * detail::mp_point(a, c, h, g.x[k]));
    }
    return s;
}

struct OracleMoments {
    double m0 = 1;     // E (theta^0)^2
    double mstar = 1;  // E (theta^*)^2
};

// C_eta and R_eta in the normalization (1/n)(delta/sigma^2)(X theta - y).(X theta - y).
struct OracleValues {
    double C_theta = 0, C_theta_star = 0, R_theta = 0, C_eta = 0, R_eta = 0;
};

inline OracleValues oracle_kernels(double t, double s, double lambda, const MpMeasure& mu, OracleMoments mom) {
    if (t < s) std::swap(t, s);
    OracleValues o;
    for (size_t k = 0; k < mu.x.size(); ++k) {
        double x = mu.x[k], w = mu.w[k], a = lambda + x;
        double et = std::exp(-a * t), es = std::exp(-a * s), ets = et * es, ed = std::exp(-a * (t - s));
        double ft = 1 - et, fs = 1 - es;
        o.C_theta += w * (mom.m0 * ets + (mom.mstar * x * x + x) / (a * a) * ft * fs + (ed - ets) / a);
        o.C_theta_star += w * mom.mstar * x / a * ft;
        o.R_theta += w * ed;
        o.C_eta += w * (mom.m0 * x * ets + (mom.mstar * x + 1) * (x / a * ft - 1) * (x / a * fs - 1) +
                        (mu.delta - 1) + x * (ed - ets) / a);
        o.R_eta += w * x * ed;
    }
    return o;
}

// Exact kernels of the Euler chain theta^{i+1} = (1 - gamma a) theta^i + ... at grid indices i >= j;
// R values are one-step responses (R_theta(j+1,j) = gamma).
inline OracleValues oracle_kernels_discrete(int i, int j, double gamma, double lambda, const MpMeasure& mu,
                                            OracleMoments mom) {
    if (i < j) std::swap(i, j);
    OracleValues o;
    for (size_t k = 0; k < mu.x.size(); ++k) {
        double x = mu.x[k], w = mu.w[k], a = lambda + x, rho = 1 - gamma * a;
        double pi = std::pow(rho, i), pj = std::pow(rho, j), pd = std::pow(rho, i - j);
        double noise = pd * (1 - pj * pj) / (a * (1 - 0.5 * gamma * a));
        double fi = 1 - pi, fj = 1 - pj;
        o.C_theta += w * (mom.m0 * pi * pj + (mom.mstar * x * x + x) / (a * a) * fi * fj + noise);
        o.C_theta_star += w * mom.mstar * x / a * fi;
        o.C_eta += w * (mom.m0 * x * pi * pj + (mom.mstar * x + 1) * (x / a * fi - 1) * (x / a * fj - 1) +
                        (mu.delta - 1) + x * noise);
        if (i > j) {
            double pr = std::pow(rho, i - j - 1);
            o.R_theta += w * gamma * pr;
            o.R_eta += w * gamma * x * pr;
        }
    }
    return o;
}

enum class OracleMode { continuous, discrete };

// Tabulates the oracle on t_i = i gamma in the solver's conventions: C_eta, R_eta scaled by 1/sigma^2,
// responses carry the gamma factor.
inline KernelSet oracle_on_grid(int N, double gamma, double delta, double sigma2, double lambda, OracleMoments mom,
                                OracleMode mode = OracleMode::continuous, int n_mp = 400) {
    MpMeasure mu = mp_measure(delta, sigma2, n_mp);
    KernelSet k = KernelSet::zeros(N, gamma, delta, sigma2, 1);
    k.convention = mode == OracleMode::continuous ? ResponseConvention::continuous_times_gamma
                                                  : ResponseConvention::discrete_step;
    k.C_star_star = mom.mstar;
    int nq = static_cast<int>(mu.x.size());
    // P(q, m) = e^{-a_q gamma m} or rho_q^m for m = 0..2N
    Mat P(nq, 2 * N + 2);
    for (int q = 0; q < nq; ++q) {
        double a = lambda + mu.x[q], base = mode == OracleMode::continuous ? std::exp(-a * gamma) : 1 - gamma * a;
        P(q, 0) = 1;
        for (int m = 1; m < P.cols(); ++m) P(q, m) = P(q, m - 1) * base;
    }
    for (int i = 0; i <= N; ++i)
        for (int j = 0; j <= i; ++j) {
            double ct = 0, ce = 0, cs = 0, rt = 0, re = 0;
            for (int q = 0; q < nq; ++q) {
                double x = mu.x[q], w = mu.w[q], a = lambda + x;
                double pi = P(q, i), pj = P(q, j), pd = P(q, i - j);
                double nf = mode == OracleMode::continuous ? a : a * (1 - 0.5 * gamma * a);
                double noise = pd * (1 - pj * pj) / nf;
                double fi = 1 - pi, fj = 1 - pj;
                ct += w * (mom.m0 * pi * pj + (mom.mstar * x * x + x) / (a * a) * fi * fj + noise);
                ce += w * (mom.m0 * x * pi * pj + (mom.mstar * x + 1) * (x / a * fi - 1) * (x / a * fj - 1) +
                           (delta - 1) + x * noise);
                if (j == 0) cs += w * mom.mstar * x / a * fi;
                if (j < i) {
                    double pr = mode == OracleMode::continuous ? pd : P(q, i - j - 1);
                    rt += w * pr;
                    re += w * x * pr;
                }
            }
            k.C_theta(i, j) = k.C_theta(j, i) = ct;
            k.C_eta(i, j) = k.C_eta(j, i) = ce / sigma2;
            if (j == 0) k.C_theta_star[i] = cs;
            if (j < i) {
                k.R_theta(i, j) = gamma * rt;
                k.R_eta(i, j) = gamma * re / sigma2;
            }
        }
    for (int i = 0; i <= N; ++i) k.R_eta_star[i] = -k.R_eta.row(i).head(i).sum();
    k.R_eta_star_rec = eta_star_recursion(k);
    return k;
}

}  // namespace dmfteb
