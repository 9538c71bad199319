#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "replica.hpp"

namespace dmfteb {

// discrete_step: R(i,j) is the one-step response of the discretized process (R(i+1,i) = gamma).
// continuous_times_gamma: R(i,j) = gamma * R_cont(t_i, t_j), a tabulated continuous-time kernel.
enum class ResponseConvention { discrete_step, continuous_times_gamma };

inline std::string convention_name(ResponseConvention c) {
    return c == ResponseConvention::discrete_step ? "discrete_step" : "continuous_times_gamma";
}

struct JitterEvent {
    int step;
    double schur;
    double added;
};

struct KernelSet {
    int N = 0;
    double gamma = 0, delta = 1, sigma2 = 1;
    Mat C_theta, C_theta_se;
    Vec C_theta_star, C_theta_star_se;
    double C_star_star = 0;
    Mat R_theta, R_theta_se;  // R_theta(i,j), j < i
    Mat C_eta, R_eta;         // R_eta(i,j), j < i, carries the gamma factor like R_theta
    Mat C_eta_se, R_eta_se;
    Vec R_eta_star, R_eta_star_rec;
    Mat alpha_traj;
    std::vector<int> interpolated_sources;
    ResponseConvention convention = ResponseConvention::discrete_step;
    std::vector<JitterEvent> jitter;
    std::vector<std::string> warnings;
    double min_schur = std::numeric_limits<double>::infinity();

    static KernelSet zeros(int N, double gamma, double delta, double sigma2, int K) {
        KernelSet k;
        k.N = N;
        k.gamma = gamma;
        k.delta = delta;
        k.sigma2 = sigma2;
        int n = N + 1;
        k.C_theta = k.C_theta_se = k.R_theta = k.R_theta_se = k.C_eta = k.R_eta = k.C_eta_se = k.R_eta_se = Mat::Zero(n, n);
        k.C_theta_star = k.C_theta_star_se = k.R_eta_star = k.R_eta_star_rec = Vec::Zero(n);
        k.alpha_traj = Mat::Zero(n, K);
        return k;
    }

    double time(int i) const { return i * gamma; }
};

// R_eta(i,*) from the recursion for d eta / d w*, used as an independent cross-check of -sum_j R_eta(i,j).
inline Vec eta_star_recursion(const KernelSet& k) {
    Vec r = Vec::Zero(k.N + 1), out = Vec::Zero(k.N + 1);
    for (int i = 1; i <= k.N; ++i) {
        double acc = 0;
        for (int l = 0; l < i; ++l) acc += k.R_theta(i, l) * (r[l] + 1.0);
        r[i] = -acc / k.sigma2;
        out[i] = k.delta / k.sigma2 * r[i];
    }
    return out;
}

// C_eta and R_eta recomputed from the theta-side kernels by dense triangular solves.
struct EtaRecompute {
    Mat C_eta, R_eta;
};

inline EtaRecompute eta_from_theta_dense(const KernelSet& k) {
    int n = k.N + 1;
    Mat S(n, n), T = Mat::Identity(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            S(a, b) = k.C_theta(a, b) - k.C_theta_star[a] - k.C_theta_star[b] + k.C_star_star + k.sigma2;
    for (int a = 0; a < n; ++a)
        for (int l = 0; l < a; ++l) T(a, l) = k.R_theta(a, l) / k.sigma2;
    auto L = T.triangularView<Eigen::UnitLower>();
    Mat V = L.solve(Mat::Identity(n, n));
    EtaRecompute out;
    out.C_eta = k.delta / (k.sigma2 * k.sigma2) * (V * S * V.transpose());
    out.R_eta = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < i; ++j) out.R_eta(i, j) = -k.delta / k.sigma2 * V(i, j);
    return out;
}

struct KernelReport {
    double symmetry_C_theta = 0, symmetry_C_eta = 0;
    double min_eig_C_theta = 0, min_eig_C_eta = 0;
    int causality_violations = 0;
    bool step_identities_apply = true;
    double r_theta_boundary = 0;   // max |R_theta(i+1,i) - gamma|
    double r_eta_first = 0;        // |R_eta(1,0) - delta gamma / sigma^4|
    double r_eta_star_sum = 0;     // max |R_eta(i,*) + sum_j R_eta(i,j)|
    double r_eta_star_recursion = 0;
    double eta_recompute = 0;      // max |C_eta - dense re-solve|, |R_eta - dense re-solve|
    double tti_drift = 0;
    double fdt_residual = 0;
    int jitter_events = 0;

    bool identities_ok(double tol = 1e-12) const {
        bool ok = symmetry_C_theta <= tol && symmetry_C_eta <= tol && causality_violations == 0 && r_eta_star_sum <= tol;
        if (step_identities_apply)
            ok = ok && r_theta_boundary <= tol && r_eta_first <= tol && r_eta_star_recursion <= 1e-10 &&
                 eta_recompute <= 1e-10;
        return ok;
    }
};

inline double min_eigenvalue(const Mat& A) {
    Mat S = 0.5 * (A + A.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline KernelReport validate_kernels(const KernelSet& k, double tail = 0.25) {
    KernelReport r;
    int n = k.N + 1;
    r.symmetry_C_theta = (k.C_theta - k.C_theta.transpose()).cwiseAbs().maxCoeff();
    r.symmetry_C_eta = (k.C_eta - k.C_eta.transpose()).cwiseAbs().maxCoeff();
    r.min_eig_C_theta = min_eigenvalue(k.C_theta);
    r.min_eig_C_eta = min_eigenvalue(k.C_eta);
    for (int i = 0; i < k.R_theta.rows(); ++i)
        for (int j = i; j < k.R_theta.cols(); ++j) {
            if (k.R_theta(i, j) != 0.0) ++r.causality_violations;
            if (k.R_eta(i, j) != 0.0) ++r.causality_violations;
        }
    r.step_identities_apply = k.convention == ResponseConvention::discrete_step;
    for (int i = 0; i + 1 < n; ++i) r.r_theta_boundary = std::max(r.r_theta_boundary, std::abs(k.R_theta(i + 1, i) - k.gamma));
    if (n > 1) r.r_eta_first = std::abs(k.R_eta(1, 0) - k.delta * k.gamma / (k.sigma2 * k.sigma2));
    Vec rec = eta_star_recursion(k);
    for (int i = 0; i < n; ++i) {
        double s = k.R_eta.row(i).head(i).sum();
        r.r_eta_star_sum = std::max(r.r_eta_star_sum, std::abs(k.R_eta_star[i] + s));
        r.r_eta_star_recursion = std::max(r.r_eta_star_recursion, std::abs(k.R_eta_star[i] - rec[i]));
    }
    EtaRecompute e = eta_from_theta_dense(k);
    r.eta_recompute = std::max((e.C_eta - k.C_eta).cwiseAbs().maxCoeff(), (e.R_eta - k.R_eta).cwiseAbs().maxCoeff());

    int W = std::max(2, static_cast<int>(std::lround(tail * k.N)));
    int lo = k.N - W;
    for (int lag = 0; lag <= W / 2; ++lag) {
        double mn = INFINITY, mx = -INFINITY;
        for (int i = lo; i + lag <= k.N; ++i) {
            double c = k.C_theta(i, i + lag);
            mn = std::min(mn, c);
            mx = std::max(mx, c);
        }
        r.tti_drift = std::max(r.tti_drift, mx - mn);
    }
    // r(tau) = -dc/dtau on the last row, central differences in the lag
    for (int lag = 1; lag < W / 2; ++lag) {
        double resp = k.R_theta(k.N, k.N - lag) / k.gamma;
        double dc = (k.C_theta(k.N, k.N - lag - 1) - k.C_theta(k.N, k.N - lag + 1)) / (2 * k.gamma);
        r.fdt_residual = std::max(r.fdt_residual, std::abs(resp + dc));
    }
    r.jitter_events = static_cast<int>(k.jitter.size());
    return r;
}

struct Equilibrium {
    double c_tti_0 = 0, c_tti_inf = 0, c_star = 0;
    double c_eta_0 = 0, c_eta_inf = 0;
    double mse = 0, mse_star = 0;
    double ymse = 0, ymse_star = 0;  // from the eta kernels
    double omega = 0, omega_star = 0;
    double ymse_omega = 0, ymse_star_omega = 0;  // from (omega, omega*)
    int window_points = 0, lag_points = 0;
};

// Tail averages over the last window of the grid; c(inf) from C(T, s) with s in [T window, 2 T window].
inline Equilibrium extract_equilibrium(const KernelSet& k, double window = 0.25) {
    if (!(window > 0 && window <= 0.5)) throw ConfigError("equilibrium window must lie in (0, 0.5]");
    int W = static_cast<int>(std::lround(window * k.N));
    int s0 = W, s1 = std::min(k.N, static_cast<int>(std::lround(2 * window * k.N)));
    Equilibrium e;
    e.window_points = W + 1;
    e.lag_points = s1 - s0 + 1;
    if (e.window_points < 3 || e.lag_points < 3)
        throw ConfigError("equilibrium window covers fewer than 3 grid points (N=" + std::to_string(k.N) + ")");
    for (int i = k.N - W; i <= k.N; ++i) {
        e.c_tti_0 += k.C_theta(i, i);
        e.c_star += k.C_theta_star[i];
        e.c_eta_0 += k.C_eta(i, i);
    }
    e.c_tti_0 /= e.window_points;
    e.c_star /= e.window_points;
    e.c_eta_0 /= e.window_points;
    for (int s = s0; s <= s1; ++s) {
        e.c_tti_inf += k.C_theta(k.N, s);
        e.c_eta_inf += k.C_eta(k.N, s);
    }
    e.c_tti_inf /= e.lag_points;
    e.c_eta_inf /= e.lag_points;
    e.mse = e.c_tti_0 - e.c_tti_inf;
    e.mse_star = k.C_star_star - 2 * e.c_star + e.c_tti_inf;
    double q = k.sigma2 * k.sigma2 / k.delta;
    e.ymse = q * (e.c_eta_0 - e.c_eta_inf);
    e.ymse_star = q * (2 * e.c_eta_0 - e.c_eta_inf) - k.sigma2;
    e.omega = k.delta / (k.sigma2 + e.mse);
    e.omega_star = k.delta / (k.sigma2 + e.mse_star);
    YmsePair y = ymse_from_omega(e.omega, e.omega_star, k.delta, k.sigma2);
    e.ymse_omega = y.ymse;
    e.ymse_star_omega = y.ymse_star;
    return e;
}

}  // namespace dmfteb
