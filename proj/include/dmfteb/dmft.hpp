#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gaussian_oracle.hpp"
#include "kernels.hpp"
#include "prior.hpp"
#include "rng.hpp"

namespace dmfteb {

struct DmftConfig {
    double T = 5.0, gamma = 0.02;
    int M = 20000;
    double delta = 1.0, sigma2 = 1.0;
    PriorSpec prior = gaussian_location(1.0);
    Vec alpha0 = Vec::Zero(1);
    Prior truth{gaussian_location(1.0), Vec::Zero(1)};
    Prior init{gaussian_location(1.0), Vec::Zero(1)};
    bool adapt = false;
    RegularizerSpec reg;
    std::uint64_t seed = 1;
    double eps_psd = 1e-10;
    int response_stride = 1;
    int response_replicas = 1000;  // 0 tracks every replica
    bool response_float = false;
    int chunk = 256;

    int N() const { return static_cast<int>(std::lround(T / gamma)); }
    int tracked_replicas() const { return response_replicas <= 0 ? M : std::min(M, response_replicas); }

    void validate() const {
        if (!(gamma > 0)) throw ConfigError("dmft.gamma must be positive");
        if (!(T > 0) || N() < 1) throw ConfigError("dmft.T must give at least one step");
        if (M < 2) throw ConfigError("dmft.M must be >= 2");
        if (!(delta > 0) || !(sigma2 > 0)) throw ConfigError("delta and sigma2 must be positive");
        if (!(eps_psd >= 0)) throw ConfigError("dmft.eps_psd must be >= 0");
        if (response_stride < 1) throw ConfigError("dmft.response_stride must be >= 1");
        if (response_replicas == 1 || (response_replicas > 0 && response_replicas < 2))
            throw ConfigError("dmft.response_replicas must be 0 or >= 2");
        if (chunk < 1) throw ConfigError("dmft.chunk must be >= 1");
        PriorModel(prior, alpha0);
        PriorModel(truth.spec, truth.alpha);
        PriorModel(init.spec, init.alpha);
    }
};

// Incremental state of the eta-side linear algebra: V = T^{-1} (unit lower), W = V Sigma_v.
struct EtaWorkspace {
    Mat V, W;
    Vec rstar;
    explicit EtaWorkspace(int N = 0) : V(Mat::Zero(N + 1, N + 1)), W(Mat::Zero(N + 1, N + 1)), rstar(Vec::Zero(N + 1)) {}
};

inline double sigma_v(const KernelSet& k, int a, int b) {
    return k.C_theta(a, b) - k.C_theta_star[a] - k.C_theta_star[b] + k.C_star_star + k.sigma2;
}

// Row i of C_eta, R_eta, R_eta_star from theta-side rows 0..i.
inline void eta_update_row(KernelSet& k, EtaWorkspace& ws, int i) {
    Mat& V = ws.V;
    const double is2 = 1.0 / k.sigma2;
    V(i, i) = 1.0;
    for (int j = i - 1; j >= 0; --j) {
        double acc = k.R_theta(i, j) * is2;
        for (int l = j + 1; l < i; ++l) acc += k.R_theta(i, l) * is2 * V(l, j);
        V(i, j) = -acc;
    }
    for (int b = 0; b <= i; ++b) {
        double acc = 0;
        for (int a = 0; a <= i; ++a) acc += V(i, a) * sigma_v(k, a, b);
        ws.W(i, b) = acc;
    }
    const double sc = k.delta * is2 * is2;
    for (int j = 0; j <= i; ++j) {
        double acc = 0;
        for (int b = 0; b <= j; ++b) acc += ws.W(i, b) * V(j, b);
        k.C_eta(i, j) = k.C_eta(j, i) = sc * acc;
    }
    double sum = 0;
    for (int j = 0; j < i; ++j) {
        k.R_eta(i, j) = -k.delta * is2 * V(i, j);
        sum += k.R_eta(i, j);
    }
    k.R_eta_star[i] = -sum;
    if (i > 0) {
        double acc = 0;
        for (int l = 0; l < i; ++l) acc += k.R_theta(i, l) * (ws.rstar[l] + 1.0);
        ws.rstar[i] = -acc * is2;
    }
    k.R_eta_star_rec[i] = k.delta * is2 * ws.rstar[i];
}

// Extends the lower factor L of C_eta by row i; returns the jitter added (0 if none).
inline double cholesky_extend_row(Mat& L, KernelSet& k, int i, double eps_psd) {
    for (int c = 0; c < i; ++c) {
        double acc = k.C_eta(i, c);
        for (int m = 0; m < c; ++m) acc -= L(i, m) * L(c, m);
        L(i, c) = L(c, c) > 0 ? acc / L(c, c) : 0.0;
    }
    double schur = k.C_eta(i, i);
    for (int m = 0; m < i; ++m) schur -= L(i, m) * L(i, m);
    double scale = 0;
    for (int m = 0; m <= i; ++m) scale += k.C_eta(m, m);
    double eps = eps_psd * scale / (i + 1);
    k.min_schur = std::min(k.min_schur, schur);
    double added = 0;
    if (schur < 0) {
        if (schur < -100 * eps)
            throw NumericError("C_eta factorization failed at step " + std::to_string(i) + ": Schur complement " +
                               std::to_string(schur) + " below -100 eps_psd");
        added = eps - schur;
        k.jitter.push_back({i, schur, added});
        schur = eps;
    }
    L(i, i) = std::sqrt(schur);
    return added;
}

template <class S>
struct ReplicaEnsemble {
    int M = 0, Mr = 0, N = 0, chunk = 256, nchunks = 0;
    std::vector<double> theta, tstar, z, u, curv;  // theta, z: [time * M + replica]
    std::vector<int> slot;                          // source time -> response slot or -1
    std::vector<int> sources;
    std::vector<std::vector<S>> resp;  // slot -> r_theta(l, s) at [(l - s - 1) * Mr + replica]
    std::vector<Rng> rng;
    Mat L;

    int begin(int c) const { return c * chunk; }
    int end(int c) const { return std::min(M, (c + 1) * chunk); }
};

struct DmftRun {
    KernelSet kernels;
    std::vector<double> theta;  // [time * M + replica]
    std::vector<double> theta_star;
    int M = 0;
    double seconds = 0;
};

namespace detail {

inline void parallel_chunks(int nchunks, const std::function<void(int)>& f) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < nchunks; ++c) f(c);
}

template <class S>
void init_ensemble(ReplicaEnsemble<S>& e, const DmftConfig& cfg) {
    e.M = cfg.M;
    e.Mr = cfg.tracked_replicas();
    e.N = cfg.N();
    e.chunk = cfg.chunk;
    e.nchunks = (e.M + e.chunk - 1) / e.chunk;
    e.theta.assign(static_cast<size_t>(e.N + 1) * e.M, 0.0);
    e.z.assign(static_cast<size_t>(e.N) * e.M, 0.0);
    e.tstar.assign(e.M, 0.0);
    e.u.assign(e.M, 0.0);
    e.curv.assign(e.M, 0.0);
    e.slot.assign(e.N + 1, -1);
    for (int s = 0; s < e.N; s += cfg.response_stride) {
        e.slot[s] = static_cast<int>(e.sources.size());
        e.sources.push_back(s);
    }
    e.resp.resize(e.sources.size());
    e.L = Mat::Zero(e.N + 1, e.N + 1);
    e.rng.clear();
    for (int c = 0; c < e.nchunks; ++c) e.rng.push_back(make_stream(cfg.seed, stream::dmft_step, c));
    for (int c = 0; c < e.nchunks; ++c) {
        Rng r = make_stream(cfg.seed, stream::dmft_init, c);
        int b = e.begin(c), n = e.end(c) - b;
        std::vector<double> ts = sample_prior(cfg.truth.spec, cfg.truth.alpha, n, r);
        std::vector<double> t0 = sample_prior(cfg.init.spec, cfg.init.alpha, n, r);
        for (int q = 0; q < n; ++q) {
            e.tstar[b + q] = ts[q];
            e.theta[b + q] = t0[q];
        }
    }
}

struct Moments {
    double mean = 0, se = 0;
};

// Deterministic chunked mean and standard error of f(r) over replicas [0, n).
template <class F>
Moments chunked_mean(int n, int chunk, F f) {
    int nc = (n + chunk - 1) / chunk;
    std::vector<double> s1(nc, 0.0), s2(nc, 0.0);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < nc; ++c) {
        double a = 0, b = 0;
        for (int r = c * chunk; r < std::min(n, (c + 1) * chunk); ++r) {
            double v = f(r);
            a += v;
            b += v * v;
        }
        s1[c] = a;
        s2[c] = b;
    }
    double a = 0, b = 0;
    for (int c = 0; c < nc; ++c) {
        a += s1[c];
        b += s2[c];
    }
    Moments m;
    m.mean = a / n;
    double var = std::max(0.0, (b / n - m.mean * m.mean) * n / (n - 1.0));
    m.se = std::sqrt(var / n);
    return m;
}

template <class S>
void reduce_row(KernelSet& k, const ReplicaEnsemble<S>& e, int i) {
    const double* ti = &e.theta[static_cast<size_t>(i) * e.M];
    for (int j = 0; j <= i; ++j) {
        const double* tj = &e.theta[static_cast<size_t>(j) * e.M];
        Moments m = chunked_mean(e.M, e.chunk, [&](int r) { return ti[r] * tj[r]; });
        k.C_theta(i, j) = k.C_theta(j, i) = m.mean;
        k.C_theta_se(i, j) = k.C_theta_se(j, i) = m.se;
    }
    Moments ms = chunked_mean(e.M, e.chunk, [&](int r) { return ti[r] * e.tstar[r]; });
    k.C_theta_star[i] = ms.mean;
    k.C_theta_star_se[i] = ms.se;
    if (i == 0) return;
    for (int s : e.sources) {
        if (s >= i - 1) break;
        const S* h = &e.resp[e.slot[s]][static_cast<size_t>(i - s - 1) * e.Mr];
        Moments m = chunked_mean(e.Mr, e.chunk, [&](int r) { return static_cast<double>(h[r]); });
        k.R_theta(i, s) = m.mean;
        k.R_theta_se(i, s) = m.se;
    }
    k.R_theta(i, i - 1) = k.gamma;
    k.R_theta_se(i, i - 1) = 0.0;
    // untracked sources: linear interpolation in s between tracked neighbours (or the exact s = i-1 value)
    for (int s = 0; s < i - 1; ++s) {
        if (e.slot[s] >= 0) continue;
        int s0 = s, s1 = s;
        while (e.slot[s0] < 0) --s0;
        while (s1 < i - 1 && e.slot[s1] < 0) ++s1;
        double w = double(s - s0) / (s1 - s0);
        k.R_theta(i, s) = (1 - w) * k.R_theta(i, s0) + w * k.R_theta(i, s1);
        k.R_theta_se(i, s) = (1 - w) * k.R_theta_se(i, s0) + w * k.R_theta_se(i, s1);
    }
}

// Replica spread of C_eta with the response (hence V) held fixed: C_eta(i,j) averages
// sc (V u)_i (V u)_j over replicas, u_a = theta^a - theta^*.  R_eta error to first order in R_theta.
inline void eta_stderr(KernelSet& k, const Mat& V, const std::vector<double>& theta, const std::vector<double>& tstar,
                       int M) {
    int n = k.N + 1;
    Mat U(M, n);
    for (int a = 0; a < n; ++a)
        for (int r = 0; r < M; ++r) U(r, a) = theta[static_cast<size_t>(a) * M + r] - tstar[r];
    Mat W = U * V.transpose();
    Mat S1 = W.transpose() * W;
    Mat W2 = W.cwiseProduct(W);
    Mat S2 = W2.transpose() * W2;
    const double sc = k.delta / (k.sigma2 * k.sigma2);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) {
            double m = S1(i, j) / M;
            double var = std::max(0.0, (S2(i, j) / M - m * m) * M / (M - 1.0));
            k.C_eta_se(i, j) = k.C_eta_se(j, i) = sc * std::sqrt(var / M);
            if (j < i) k.R_eta_se(i, j) = sc * k.R_theta_se(i, j);
        }
}

}  // namespace detail

// Draws z_i per replica and sets u^{t_i} = sum_k L(i,k) z_k after extending the factor of C_eta.
template <class S>
void conditional_noise_sample(ReplicaEnsemble<S>& e, KernelSet& k, int i, double eps_psd) {
    cholesky_extend_row(e.L, k, i, eps_psd);
    detail::parallel_chunks(e.nchunks, [&](int c) {
        std::normal_distribution<double> nd;
        int b = e.begin(c), n = e.end(c);
        double* zi = &e.z[static_cast<size_t>(i) * e.M];
        for (int r = b; r < n; ++r) zi[r] = nd(e.rng[c]);
        for (int r = b; r < n; ++r) e.u[r] = 0.0;
        for (int m = 0; m <= i; ++m) {
            double l = e.L(i, m);
            if (l == 0.0) continue;
            const double* zm = &e.z[static_cast<size_t>(m) * e.M];
            for (int r = b; r < n; ++r) e.u[r] += l * zm[r];
        }
    });
}

// theta^{i+1} and r_theta(i+1, s) per replica; returns the replica mean of d/dalpha log g(theta^i, alpha^i).
template <class S>
Vec advance_replicas(ReplicaEnsemble<S>& e, const KernelSet& k, const PriorModel& g, int i, bool want_grad) {
    const int K = g.dim();
    const double gam = k.gamma, drift = gam * k.delta / k.sigma2, noise = std::sqrt(2 * gam);
    const double rstar = k.R_eta_star[i];
    std::vector<double> gpart(static_cast<size_t>(e.nchunks) * K, 0.0);
    std::vector<int> bad(e.nchunks, -1);
    detail::parallel_chunks(e.nchunks, [&](int c) {
        std::normal_distribution<double> nd;
        int b = e.begin(c), n = e.end(c);
        const double* ti = &e.theta[static_cast<size_t>(i) * e.M];
        double* tn = &e.theta[static_cast<size_t>(i + 1) * e.M];
        std::vector<double> mem(n - b, 0.0), gr(K);
        for (int l = 0; l < i; ++l) {
            double w = k.R_eta(i, l);
            const double* tl = &e.theta[static_cast<size_t>(l) * e.M];
            for (int r = b; r < n; ++r) mem[r - b] += w * tl[r];
        }
        for (int r = b; r < n; ++r) {
            PriorLocal p = g.eval(ti[r], want_grad ? gr.data() : nullptr);
            if (want_grad)
                for (int q = 0; q < K; ++q) gpart[static_cast<size_t>(c) * K + q] += gr[q];
            e.curv[r] = p.curvature;
            double th = ti[r];
            tn[r] = th - drift * (th - e.tstar[r]) + gam * p.score + gam * (mem[r - b] + rstar * e.tstar[r]) +
                    gam * e.u[r] + noise * nd(e.rng[c]);
            if (!std::isfinite(tn[r]) && bad[c] < 0) bad[c] = r;
        }
        // responses on the tracked replicas of this chunk
        int rb = b, rn = std::min(n, e.Mr);
        if (rb >= rn) return;
        for (int s : e.sources) {
            if (s > i) break;
            S* h = e.resp[e.slot[s]].data();
            S* out = h + static_cast<size_t>(i - s) * e.Mr;
            if (s == i) {
                for (int r = rb; r < rn; ++r) out[r] = static_cast<S>(gam);
                continue;
            }
            const S* cur = h + static_cast<size_t>(i - s - 1) * e.Mr;
            for (int r = rb; r < rn; ++r) out[r] = static_cast<S>((1 - drift + gam * e.curv[r]) * cur[r]);
            for (int l = s + 1; l < i; ++l) {
                double w = gam * k.R_eta(i, l);
                const S* hl = h + static_cast<size_t>(l - s - 1) * e.Mr;
                for (int r = rb; r < rn; ++r) out[r] += static_cast<S>(w * hl[r]);
            }
        }
    });
    for (int c = 0; c < e.nchunks; ++c)
        if (bad[c] >= 0)
            throw NumericError("non-finite theta at step " + std::to_string(i + 1) + ", replica " + std::to_string(bad[c]));
    Vec grad = Vec::Zero(K);
    if (want_grad) {
        for (int c = 0; c < e.nchunks; ++c)
            for (int q = 0; q < K; ++q) grad[q] += gpart[static_cast<size_t>(c) * K + q];
        grad /= e.M;
    }
    return grad;
}

namespace detail {

template <class S>
DmftRun solve_impl(const DmftConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    ReplicaEnsemble<S> e;
    init_ensemble(e, cfg);
    const int N = e.N, K = static_cast<int>(cfg.alpha0.size());
    DmftRun run;
    KernelSet& k = run.kernels;
    k = KernelSet::zeros(N, cfg.gamma, cfg.delta, cfg.sigma2, K);
    k.C_star_star = PriorModel(cfg.truth.spec, cfg.truth.alpha).second_moment();
    for (int s = 0; s < N; ++s)
        if (e.slot[s] < 0 && s < N - 1) k.interpolated_sources.push_back(s);
    for (size_t q = 0; q < e.sources.size(); ++q)
        e.resp[q].assign(static_cast<size_t>(N - e.sources[q]) * e.Mr, S(0));
    EtaWorkspace ws(N);
    Vec alpha = cfg.alpha0;
    k.alpha_traj.row(0) = alpha.transpose();
    double bound = 2 * (alpha.norm() + PriorModel(cfg.prior, alpha).growth_constant() * cfg.T);
    bool warned = false;
    reduce_row(k, e, 0);
    for (int i = 0; i < N; ++i) {
        eta_update_row(k, ws, i);
        conditional_noise_sample(e, k, i, cfg.eps_psd);
        PriorModel g(cfg.prior, alpha);
        Vec grad = advance_replicas(e, k, g, i, cfg.adapt);
        reduce_row(k, e, i + 1);
        if (cfg.adapt) {
            alpha += cfg.gamma * (grad - regularizer(alpha, cfg.reg).gradient);
            if (!warned && alpha.norm() > bound) {
                k.warnings.push_back("alpha left the sanity radius " + std::to_string(bound) + " at step " +
                                     std::to_string(i + 1));
                warned = true;
            }
        }
        k.alpha_traj.row(i + 1) = alpha.transpose();
    }
    eta_update_row(k, ws, N);
    eta_stderr(k, ws.V, e.theta, e.tstar, e.M);
    for (const JitterEvent& j : k.jitter)
        k.warnings.push_back("C_eta jitter " + std::to_string(j.added) + " at step " + std::to_string(j.step));
    run.theta = std::move(e.theta);
    run.theta_star = std::move(e.tstar);
    run.M = e.M;
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return run;
}

}  // namespace detail

inline DmftRun solve_dmft_forward(const DmftConfig& cfg) {
    cfg.validate();
    return cfg.response_float ? detail::solve_impl<float>(cfg) : detail::solve_impl<double>(cfg);
}

// Standard errors of the extracted mse and mse*, from per-replica versions of the window averages.
struct EquilibriumSe {
    double mse = 0, mse_star = 0;
};

inline EquilibriumSe equilibrium_stderr(const DmftRun& run, double window = 0.25) {
    const KernelSet& k = run.kernels;
    int N = k.N, M = run.M;
    int W = static_cast<int>(std::lround(window * N));
    int s0 = W, s1 = std::min(N, static_cast<int>(std::lround(2 * window * N)));
    auto th = [&](int i, int r) { return run.theta[static_cast<size_t>(i) * M + r]; };
    auto per = [&](int r, bool star) {
        double c0 = 0, cs = 0, ci = 0;
        for (int i = N - W; i <= N; ++i) {
            c0 += th(i, r) * th(i, r);
            cs += th(i, r) * run.theta_star[r];
        }
        for (int s = s0; s <= s1; ++s) ci += th(N, r) * th(s, r);
        c0 /= W + 1;
        cs /= W + 1;
        ci /= s1 - s0 + 1;
        return star ? ci - 2 * cs : c0 - ci;
    };
    EquilibriumSe out;
    out.mse = detail::chunked_mean(M, 256, [&](int r) { return per(r, false); }).se;
    out.mse_star = detail::chunked_mean(M, 256, [&](int r) { return per(r, true); }).se;
    return out;
}

// Gaussian-prior oracle tabulated on the solver grid of cfg.
inline KernelSet oracle_solution_on_grid(const DmftConfig& cfg, double lambda, OracleMode mode = OracleMode::continuous,
                                         int n_mp = 400) {
    cfg.validate();
    if (cfg.prior.variant != PriorVariant::gaussian_location || cfg.adapt)
        throw ConfigError("the oracle needs a fixed Gaussian prior");
    if (cfg.alpha0[0] != 0.0) throw ConfigError("the oracle needs a zero-mean model prior");
    if (std::abs(cfg.prior.precision - lambda) > 1e-12 * lambda)
        throw ConfigError("oracle precision does not match the configured prior");
    OracleMoments mom{PriorModel(cfg.init.spec, cfg.init.alpha).second_moment(),
                      PriorModel(cfg.truth.spec, cfg.truth.alpha).second_moment()};
    KernelSet k = oracle_on_grid(cfg.N(), cfg.gamma, cfg.delta, cfg.sigma2, lambda, mom, mode, n_mp);
    k.alpha_traj = Mat::Constant(cfg.N() + 1, 1, cfg.alpha0[0]);
    return k;
}

}  // namespace dmfteb
