#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "prior.hpp"
#include "replica.hpp"
#include "rng.hpp"
#include "scalar_channel.hpp"

namespace dmfteb {

enum class DesignLaw { gaussian, rademacher };

inline std::string design_name(DesignLaw l) { return l == DesignLaw::gaussian ? "gaussian" : "rademacher"; }
inline DesignLaw parse_design(const std::string& s) {
    if (s == "gaussian") return DesignLaw::gaussian;
    if (s == "rademacher") return DesignLaw::rademacher;
    throw ConfigError("unknown design law '" + s + "' (gaussian|rademacher)");
}

struct InstanceSpec {
    int n = 1000, d = 1000;
    double sigma2 = 1.0;
    Prior truth{gaussian_location(1.0), Vec::Zero(1)};
    DesignLaw design = DesignLaw::gaussian;
    bool noiseless = false;
    std::uint64_t seed = 1;
    double memory_cap_gb = 2.0;

    double delta() const { return double(n) / d; }
    void validate() const {
        if (n < 1 || d < 1) throw ConfigError("simulate.n and simulate.d must be >= 1");
        if (!(sigma2 > 0)) throw ConfigError("sigma2 must be positive");
        double bytes = 8.0 * (double(n) * d + 3.0 * n + 3.0 * d);
        if (bytes > memory_cap_gb * 1073741824.0)
            throw ConfigError("instance " + std::to_string(n) + "x" + std::to_string(d) + " needs " +
                              std::to_string(bytes / 1073741824.0) + " GiB, above simulate.memory_cap_gb");
        PriorModel(truth.spec, truth.alpha);
    }
};

struct Instance {
    InstanceSpec spec;
    Mat X;
    Vec theta_star, eps, y, signal;  // signal = X theta*
    double op_norm = 0;
    std::vector<std::string> warnings;

    int n() const { return spec.n; }
    int d() const { return spec.d; }
    double delta() const { return spec.delta(); }
    double sigma2() const { return spec.sigma2; }
};

// Largest singular value by power iteration on X^T X (a lower bound that converges from below).
inline double operator_norm(const Mat& X, int iters = 300) {
    Vec v = Vec::Ones(X.cols()) / std::sqrt(double(X.cols()));
    Rng rng = make_stream(0, stream::check, 7);
    std::normal_distribution<double> nd;
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] += 0.1 * nd(rng) / std::sqrt(double(X.cols()));
    double lam = 0;
    for (int it = 0; it < iters; ++it) {
        Vec w = X.transpose() * (X * v);
        lam = w.norm();
        if (lam == 0) return 0.0;
        v = w / lam;
    }
    return std::sqrt(lam);
}

inline Instance generate_instance(const InstanceSpec& spec) {
    spec.validate();
    Instance in;
    in.spec = spec;
    const int n = spec.n, d = spec.d;
    in.X.resize(n, d);
    const double sc = 1.0 / std::sqrt(double(d));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        Rng rng = make_stream(spec.seed, stream::instance, static_cast<std::uint64_t>(i));
        if (spec.design == DesignLaw::gaussian) {
            std::normal_distribution<double> nd;
            for (int j = 0; j < d; ++j) in.X(i, j) = nd(rng) * sc;
        } else {
            std::bernoulli_distribution b(0.5);
            for (int j = 0; j < d; ++j) in.X(i, j) = b(rng) ? sc : -sc;
        }
    }
    Rng rt = make_stream(spec.seed, stream::instance, static_cast<std::uint64_t>(n) + 1);
    std::vector<double> ts = sample_prior(spec.truth.spec, spec.truth.alpha, d, rt);
    in.theta_star = Eigen::Map<Vec>(ts.data(), d);
    in.eps = Vec::Zero(n);
    if (!spec.noiseless) {
        Rng re = make_stream(spec.seed, stream::instance, static_cast<std::uint64_t>(n) + 2);
        std::normal_distribution<double> nd(0.0, std::sqrt(spec.sigma2));
        for (int i = 0; i < n; ++i) in.eps[i] = nd(re);
    }
    in.signal = in.X * in.theta_star;
    in.y = in.signal + in.eps;
    in.op_norm = operator_norm(in.X);
    double edge = 1 + std::sqrt(spec.delta()) + 0.2;
    if (in.op_norm > edge)
        in.warnings.push_back("||X||_op = " + std::to_string(in.op_norm) + " exceeds the Bai-Yin scale " +
                              std::to_string(edge));
    return in;
}

struct ChainConfig {
    PriorSpec prior = gaussian_location(1.0);
    Vec alpha0 = Vec::Zero(1);
    bool adapt = false;
    RegularizerSpec reg;
    double gamma = 0.02, T = 40.0;
    Prior init{gaussian_location(1.0), Vec::Zero(1)};
    std::uint64_t seed = 1;
    int chains = 1;
    std::vector<double> checkpoints;
    double burn_in = 0.5;
    bool diffusion = true, prior_drift = true;  // test toggles

    int N() const { return static_cast<int>(std::lround(T / gamma)); }
    int step_of(double t) const { return static_cast<int>(std::lround(t / gamma)); }
    int window_start() const { return static_cast<int>(std::ceil(burn_in * N() - 1e-9)); }

    void validate() const {
        if (!(gamma > 0)) throw ConfigError("simulate.gamma must be positive");
        if (!(T > 0) || N() < 1) throw ConfigError("simulate.T must give at least one step");
        if (chains < 1) throw ConfigError("simulate.chains must be >= 1");
        if (!(burn_in >= 0 && burn_in < 1)) throw ConfigError("simulate.burn_in must lie in [0,1)");
        for (double t : checkpoints) {
            if (t < 0 || step_of(t) > N()) throw ConfigError("checkpoint " + std::to_string(t) + " outside [0, T]");
            if (std::abs(step_of(t) * gamma - t) > 1e-9 * std::max(1.0, t))
                throw ConfigError("checkpoint " + std::to_string(t) + " is not on the step grid");
        }
        PriorModel(prior, alpha0);
        PriorModel(init.spec, init.alpha);
    }
};

struct TrajectoryRecord {
    ChainConfig config;
    int chain = 0, n = 0, d = 0;
    double delta = 1, sigma2 = 1;
    std::uint64_t instance_seed = 0;
    std::vector<double> time, err, sq, overlap, resid;  // (1/d)|theta-theta*|^2, (1/d)|theta|^2, (1/d)theta.theta*, (1/n)|X theta-y|^2
    Mat alpha;                                          // (N+1) x K
    std::vector<int> checkpoint_steps;
    std::vector<Vec> theta_snap, resid_snap;
    int window_start = 0, window_count = 0;
    Vec theta_bar;
    double mse_star_bar = 0, resid_bar = 0, ymse_star_bar = 0;  // evaluated at theta_bar
    std::vector<std::string> warnings;
};

namespace detail {

inline double max_curvature(const PriorModel& g) {
    if (!g.spec().is_mixture_like()) return g.spec().table->max_abs_curvature();
    double w = 0;
    for (int i = 0; i < g.mixture().k; ++i) w = std::max(w, g.mixture().prec[i]);
    return w;
}

inline void fill_noise(Mat& Z, std::uint64_t seed, std::uint64_t chain0, int step) {
    for (Eigen::Index c = 0; c < Z.cols(); ++c) {
        Rng rng = make_stream(seed, stream::chain_noise, ((chain0 + c) << 40) + static_cast<std::uint64_t>(step));
        std::normal_distribution<double> nd;
        for (Eigen::Index j = 0; j < Z.rows(); ++j) Z(j, c) = nd(rng);
    }
}

// Drift of the prior part for every coordinate of every column; grad (K x C) gets the coordinate mean of
// d/dalpha log g when requested.
inline void prior_terms(const Mat& Theta, const std::vector<PriorModel>& g, Mat& S, Mat* grad) {
    const int d = static_cast<int>(Theta.rows()), C = static_cast<int>(Theta.cols());
    const int K = g[0].dim();
    Mat G;
    if (grad) G.resize(K, static_cast<Eigen::Index>(d) * C);
#pragma omp parallel for schedule(static) collapse(2)
    for (int c = 0; c < C; ++c)
        for (int j = 0; j < d; ++j) {
            double* gp = grad ? G.col(static_cast<Eigen::Index>(c) * d + j).data() : nullptr;
            S(j, c) = g[c].eval(Theta(j, c), gp).score;
        }
    if (grad) {
        grad->setZero(K, C);
        for (int c = 0; c < C; ++c) {
            for (int j = 0; j < d; ++j) grad->col(c) += G.col(static_cast<Eigen::Index>(c) * d + j);
            grad->col(c) /= d;
        }
    }
}

}  // namespace detail

// One Euler-Maruyama step for all columns at once (S holds the prior drift at Theta).
inline void euler_step(Mat& Theta, const Instance& in, const Mat& R, const Mat& S, const Mat* Z, double gamma,
                       bool prior_drift) {
    Mat G = in.X.transpose() * R;
    Theta.noalias() += gamma * (-(1.0 / in.sigma2()) * G);
    if (prior_drift) Theta += gamma * S;
    if (Z) Theta += std::sqrt(2 * gamma) * *Z;
}

inline std::vector<TrajectoryRecord> run_chains(const Instance& in, const ChainConfig& cfg) {
    cfg.validate();
    const int N = cfg.N(), d = in.d(), n = in.n(), C = cfg.chains, K = static_cast<int>(cfg.alpha0.size());
    std::vector<TrajectoryRecord> rec(C);
    std::vector<int> cps;
    for (double t : cfg.checkpoints) cps.push_back(cfg.step_of(t));
    std::sort(cps.begin(), cps.end());
    cps.erase(std::unique(cps.begin(), cps.end()), cps.end());
    const int w0 = cfg.window_start();
    for (int c = 0; c < C; ++c) {
        TrajectoryRecord& r = rec[c];
        r.config = cfg;
        r.chain = c;
        r.n = n;
        r.d = d;
        r.delta = in.delta();
        r.sigma2 = in.sigma2();
        r.instance_seed = in.spec.seed;
        for (auto* v : {&r.time, &r.err, &r.sq, &r.overlap, &r.resid}) v->assign(N + 1, 0.0);
        r.alpha.resize(N + 1, K);
        r.checkpoint_steps = cps;
        r.window_start = w0;
        r.window_count = N - w0 + 1;
        r.theta_bar = Vec::Zero(d);
    }

    Mat Theta(d, C);
    for (int c = 0; c < C; ++c) {
        Rng rng = make_stream(cfg.seed, stream::chain_init, static_cast<std::uint64_t>(c));
        std::vector<double> t0 = sample_prior(cfg.init.spec, cfg.init.alpha, d, rng);
        Theta.col(c) = Eigen::Map<Vec>(t0.data(), d);
    }
    Mat alpha = cfg.alpha0.replicate(1, C);
    std::vector<PriorModel> g;
    for (int c = 0; c < C; ++c) g.emplace_back(cfg.prior, cfg.alpha0);

    double stab = cfg.gamma * (in.op_norm * in.op_norm / in.sigma2() + detail::max_curvature(g[0]));
    std::vector<std::string> warn;
    if (stab >= 1) warn.push_back("step size may be unstable: gamma (||X||^2/sigma2 + max curvature) = " + std::to_string(stab));
    const double bound = 2 * (cfg.alpha0.norm() + g[0].growth_constant() * cfg.T);
    std::vector<bool> warned(C, false);

    Mat R(n, C), S(d, C), Z(d, C), grad;
    for (int i = 0; i <= N; ++i) {
        R.noalias() = in.X * Theta;
        R.colwise() -= in.y;
        for (int c = 0; c < C; ++c) {
            TrajectoryRecord& r = rec[c];
            auto th = Theta.col(c);
            r.time[i] = i * cfg.gamma;
            r.err[i] = (th - in.theta_star).squaredNorm() / d;
            r.sq[i] = th.squaredNorm() / d;
            r.overlap[i] = th.dot(in.theta_star) / d;
            r.resid[i] = R.col(c).squaredNorm() / n;
            r.alpha.row(i) = alpha.col(c).transpose();
            if (!std::isfinite(r.err[i]) || !std::isfinite(r.resid[i]))
                throw NumericError("Langevin chain " + std::to_string(c) + " diverged at step " + std::to_string(i));
            if (std::binary_search(cps.begin(), cps.end(), i)) {
                r.theta_snap.push_back(th);
                r.resid_snap.push_back(R.col(c));
            }
            if (i >= w0) r.theta_bar += th;
        }
        if (i == N) break;
        for (int c = 0; c < C; ++c) g[c] = PriorModel(cfg.prior, alpha.col(c));
        detail::prior_terms(Theta, g, S, cfg.adapt ? &grad : nullptr);
        if (cfg.diffusion) detail::fill_noise(Z, cfg.seed, 0, i);
        euler_step(Theta, in, R, S, cfg.diffusion ? &Z : nullptr, cfg.gamma, cfg.prior_drift);
        if (cfg.adapt) {
            for (int c = 0; c < C; ++c) {
                alpha.col(c) += cfg.gamma * (grad.col(c) - regularizer(alpha.col(c), cfg.reg).gradient);
                if (!warned[c] && alpha.col(c).norm() > bound) {
                    warned[c] = true;
                    rec[c].warnings.push_back("alpha left the sanity radius " + std::to_string(bound) + " at step " +
                                              std::to_string(i + 1));
                }
            }
        }
    }
    for (TrajectoryRecord& r : rec) {
        r.warnings.insert(r.warnings.begin(), warn.begin(), warn.end());
        r.theta_bar /= r.window_count;
        Vec xb = in.X * r.theta_bar;
        r.mse_star_bar = (r.theta_bar - in.theta_star).squaredNorm() / d;
        r.resid_bar = (xb - in.y).squaredNorm() / n;
        r.ymse_star_bar = (xb - in.signal).squaredNorm() / n;
    }
    return rec;
}

inline TrajectoryRecord run_fixed_prior(const Instance& in, const PriorSpec& prior, const Vec& alpha, double gamma,
                                        double T, const Prior& init, std::uint64_t seed, ChainConfig base = {}) {
    base.prior = prior;
    base.alpha0 = alpha;
    base.adapt = false;
    base.gamma = gamma;
    base.T = T;
    base.init = init;
    base.seed = seed;
    base.chains = 1;
    return run_chains(in, base)[0];
}

inline TrajectoryRecord run_adaptive(const Instance& in, const PriorSpec& prior, const RegularizerSpec& reg,
                                     double gamma, double T, const Vec& alpha0, const Prior& init, std::uint64_t seed,
                                     ChainConfig base = {}) {
    base.prior = prior;
    base.alpha0 = alpha0;
    base.adapt = true;
    base.reg = reg;
    base.gamma = gamma;
    base.T = T;
    base.init = init;
    base.seed = seed;
    base.chains = 1;
    return run_chains(in, base)[0];
}

struct PosteriorSummary {
    double MSE = 0, MSE_star = 0, YMSE = 0, YMSE_star = 0;
    double err_avg = 0;  // window average of (1/d)|theta - theta*|^2
    int window = 0, chains = 0;
};

namespace detail {
inline double window_mean(const std::vector<double>& v, int from) {
    double s = 0;
    for (std::size_t i = from; i < v.size(); ++i) s += v[i];
    return s / (v.size() - from);
}
inline void check_window(const TrajectoryRecord& r, double burn_in) {
    if (std::abs(burn_in - r.config.burn_in) > 1e-12)
        throw ConfigError("record accumulated its posterior mean from burn_in " + std::to_string(r.config.burn_in) +
                          ", not " + std::to_string(burn_in));
    if (r.window_count < 10)
        throw ConfigError("posterior window has " + std::to_string(r.window_count) + " steps; need >= 10");
}
}  // namespace detail

// Posterior means are post-burn-in time averages; the variance terms use
// mean_t |v_t - vbar|^2 = mean_t |v_t - c|^2 - |vbar - c|^2.
inline PosteriorSummary posterior_summaries(const TrajectoryRecord& r, double burn_in) {
    detail::check_window(r, burn_in);
    PosteriorSummary s;
    s.window = r.window_count;
    s.chains = 1;
    s.err_avg = detail::window_mean(r.err, r.window_start);
    s.MSE_star = r.mse_star_bar;
    s.MSE = s.err_avg - s.MSE_star;
    s.YMSE = detail::window_mean(r.resid, r.window_start) - r.resid_bar;
    s.YMSE_star = r.ymse_star_bar;
    return s;
}

// Pools chains: the posterior mean is the average of the per-chain window means.
inline PosteriorSummary posterior_summaries(const std::vector<TrajectoryRecord>& rs, const Instance& in, double burn_in) {
    if (rs.empty()) throw ConfigError("no chains to summarize");
    Vec tb = Vec::Zero(in.d());
    double err = 0, res = 0;
    for (const TrajectoryRecord& r : rs) {
        detail::check_window(r, burn_in);
        tb += r.theta_bar;
        err += detail::window_mean(r.err, r.window_start);
        res += detail::window_mean(r.resid, r.window_start);
    }
    const double C = double(rs.size());
    tb /= C;
    Vec xb = in.X * tb;
    PosteriorSummary s;
    s.window = rs[0].window_count;
    s.chains = static_cast<int>(rs.size());
    s.err_avg = err / C;
    s.MSE_star = (tb - in.theta_star).squaredNorm() / in.d();
    s.MSE = s.err_avg - s.MSE_star;
    s.YMSE = res / C - (xb - in.y).squaredNorm() / in.n();
    s.YMSE_star = (xb - in.signal).squaredNorm() / in.n();
    return s;
}

struct EmpiricalKernels {
    std::vector<int> steps;
    std::vector<double> times;
    Mat C_theta, C_theta_se, C_eta, C_eta_se;
    Vec C_theta_star, C_theta_star_se;
};

namespace detail {
// Mean of a .* b and its standard error over coordinates.
inline std::pair<double, double> coord_mean(const Vec& a, const Vec& b) {
    const Eigen::Index m = a.size();
    Eigen::ArrayXd p = a.array() * b.array();
    double mu = p.mean();
    double var = m > 1 ? (p - mu).square().sum() / (m - 1) : 0.0;
    return {mu, std::sqrt(var / m)};
}
}  // namespace detail

// Kernel estimates at the requested checkpoint times (all checkpoints when empty).
inline EmpiricalKernels empirical_kernels(const TrajectoryRecord& r, const Instance& in, std::vector<double> times = {}) {
    std::vector<int> idx;
    if (times.empty())
        for (std::size_t q = 0; q < r.checkpoint_steps.size(); ++q) idx.push_back(static_cast<int>(q));
    for (double t : times) {
        int st = r.config.step_of(t);
        auto it = std::find(r.checkpoint_steps.begin(), r.checkpoint_steps.end(), st);
        if (it == r.checkpoint_steps.end()) throw ConfigError("time " + std::to_string(t) + " was not checkpointed");
        idx.push_back(static_cast<int>(it - r.checkpoint_steps.begin()));
    }
    if (idx.empty()) throw ConfigError("record has no checkpoints");
    const int m = static_cast<int>(idx.size());
    EmpiricalKernels e;
    for (int q : idx) {
        e.steps.push_back(r.checkpoint_steps[q]);
        e.times.push_back(r.checkpoint_steps[q] * r.config.gamma);
    }
    e.C_theta = e.C_theta_se = e.C_eta = e.C_eta_se = Mat::Zero(m, m);
    e.C_theta_star = e.C_theta_star_se = Vec::Zero(m);
    const double sc = r.delta / (r.sigma2 * r.sigma2);
    for (int a = 0; a < m; ++a) {
        auto [cs, css] = detail::coord_mean(r.theta_snap[idx[a]], in.theta_star);
        e.C_theta_star[a] = cs;
        e.C_theta_star_se[a] = css;
        for (int b = 0; b <= a; ++b) {
            auto [ct, cts] = detail::coord_mean(r.theta_snap[idx[a]], r.theta_snap[idx[b]]);
            auto [ce, ces] = detail::coord_mean(r.resid_snap[idx[a]], r.resid_snap[idx[b]]);
            e.C_theta(a, b) = e.C_theta(b, a) = ct;
            e.C_theta_se(a, b) = e.C_theta_se(b, a) = cts;
            e.C_eta(a, b) = e.C_eta(b, a) = sc * ce;
            e.C_eta_se(a, b) = e.C_eta_se(b, a) = sc * ces;
        }
    }
    return e;
}

struct ResponseConfig {
    double gamma = 0.002;
    double s = 1.0, t = 1.5;
    double eps = 1e-3;
    int probes = 64;
    int batch = 32;
    std::uint64_t seed = 1;
    Prior init{gaussian_location(1.0), Vec::Zero(1)};
    bool check_half = true;
    std::vector<Vec> probes_override;  // used instead of random signs when non-empty

    void validate() const {
        if (!(gamma > 0)) throw ConfigError("response.gamma must be positive");
        if (!(s >= 0) || !(t > s)) throw ConfigError("response needs t > s >= 0");
        if (std::lround(t / gamma) <= std::lround(s / gamma)) throw ConfigError("response lag below one step");
        if (!(eps > 0)) throw ConfigError("response.eps must be positive");
        if (probes < 2 && probes_override.empty()) throw ConfigError("response.probes must be >= 2");
        if (batch < 1) throw ConfigError("response.batch must be >= 1");
    }
};

struct ResponseEstimate {
    double estimate = 0, std_err = 0;
    double half_eps_estimate = NAN;
    double nonlinearity = 0;  // |full - half| / |full|
    bool nonlinear_warning = false;
    std::vector<double> per_probe;
    int step_s = 0, step_t = 0;
};

// Hutchinson estimate of (1/d) Tr R_theta(t, s): coupled runs with common noise, the perturbation eps v
// entering as a one-step impulse of height 1/gamma on [s, s + gamma).
inline ResponseEstimate response_trace_estimate(const Instance& in, const PriorSpec& prior, const Vec& alpha,
                                                const ResponseConfig& cfg) {
    cfg.validate();
    const int d = in.d(), is = static_cast<int>(std::lround(cfg.s / cfg.gamma)),
              it = static_cast<int>(std::lround(cfg.t / cfg.gamma));
    std::vector<PriorModel> g1{PriorModel(prior, alpha)};
    Rng rng = make_stream(cfg.seed, stream::chain_init, 0);
    std::vector<double> t0 = sample_prior(cfg.init.spec, cfg.init.alpha, d, rng);
    Mat base = Eigen::Map<Vec>(t0.data(), d);
    Mat R, S(d, 1), Z(d, 1);
    for (int i = 0; i <= is; ++i) {
        R.noalias() = in.X * base;
        R.colwise() -= in.y;
        detail::prior_terms(base, g1, S, nullptr);
        detail::fill_noise(Z, cfg.seed, 0, i);
        euler_step(base, in, R, S, &Z, cfg.gamma, true);
    }
    // base now holds theta at step is + 1
    std::vector<Vec> probes = cfg.probes_override;
    for (const Vec& v : probes)
        if (v.size() != d) throw ConfigError("probe length differs from d");
    for (int p = 0; probes.size() < static_cast<std::size_t>(cfg.probes) && cfg.probes_override.empty(); ++p) {
        Rng pr = make_stream(cfg.seed, stream::probe, static_cast<std::uint64_t>(p));
        std::bernoulli_distribution b(0.5);
        Vec v(d);
        for (int j = 0; j < d; ++j) v[j] = b(pr) ? 1.0 : -1.0;
        probes.push_back(v);
    }
    const int P = static_cast<int>(probes.size());
    ResponseEstimate out;
    out.step_s = is;
    out.step_t = it;
    out.per_probe.assign(P, 0.0);
    std::vector<double> half(P, 0.0);
    const int reps = cfg.check_half ? 2 : 1;
    for (int p0 = 0; p0 < P; p0 += cfg.batch) {
        const int B = std::min(cfg.batch, P - p0), C = 1 + reps * B;
        Mat Th = base.replicate(1, C);
        for (int b = 0; b < B; ++b) {
            Th.col(1 + b) += cfg.eps * probes[p0 + b];
            if (reps == 2) Th.col(1 + B + b) += 0.5 * cfg.eps * probes[p0 + b];
        }
        std::vector<PriorModel> g(C, g1[0]);
        Mat Sc(d, C), Zc(d, C);
        for (int i = is + 1; i < it; ++i) {
            R.noalias() = in.X * Th;
            R.colwise() -= in.y;
            detail::prior_terms(Th, g, Sc, nullptr);
            detail::fill_noise(Z, cfg.seed, 0, i);
            Zc = Z.replicate(1, C);
            euler_step(Th, in, R, Sc, &Zc, cfg.gamma, true);
        }
        if (!Th.allFinite()) throw NumericError("response trajectories diverged");
        for (int b = 0; b < B; ++b) {
            const Vec& v = probes[p0 + b];
            out.per_probe[p0 + b] = v.dot(Th.col(1 + b) - Th.col(0)) / (d * cfg.eps);
            if (reps == 2) half[p0 + b] = v.dot(Th.col(1 + B + b) - Th.col(0)) / (d * 0.5 * cfg.eps);
        }
    }
    double m = 0, mh = 0;
    for (int p = 0; p < P; ++p) {
        m += out.per_probe[p];
        mh += half[p];
    }
    m /= P;
    double var = 0;
    for (double e : out.per_probe) var += (e - m) * (e - m);
    out.estimate = m;
    out.std_err = P > 1 ? std::sqrt(var / (P - 1) / P) : NAN;
    if (cfg.check_half) {
        out.half_eps_estimate = mh / P;
        out.nonlinearity = std::abs(m - out.half_eps_estimate) / std::max(std::abs(m), 1e-300);
        out.nonlinear_warning = out.nonlinearity > 0.2;
    }
    return out;
}

// 1-D quadratic Wasserstein distance between two empirical measures with uniform weights.
inline double wasserstein2_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ConfigError("wasserstein2_1d needs non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = double(a.size()), nb = double(b.size());
    std::size_t i = 0, j = 0;
    double u = 0, s = 0;
    while (i < a.size() && j < b.size()) {
        double ua = (i + 1) / na, ub = (j + 1) / nb, nx = std::min(ua, ub);
        double d = a[i] - b[j];
        s += (nx - u) * d * d;
        u = nx;
        if (ua <= nx) ++i;
        if (ub <= nx) ++j;
    }
    return std::sqrt(s);
}

struct JointMoments {
    double star = 0, theta = 0, star2 = 0, theta2 = 0, cross = 0;
};

// Weaker surrogate for the joint W2 to the scalar-channel law: joint first and second moments plus
// the marginal 1-D W2 distances.
struct LawComparison {
    JointMoments empirical, reference;
    double max_moment_gap = 0;
    double w2_star = 0, w2_theta = NAN;
};

inline JointMoments joint_moments(const Vec& theta_star, const Vec& theta) {
    JointMoments m;
    const double d = double(theta.size());
    m.star = theta_star.mean();
    m.theta = theta.mean();
    m.star2 = theta_star.squaredNorm() / d;
    m.theta2 = theta.squaredNorm() / d;
    m.cross = theta_star.dot(theta) / d;
    return m;
}

// Reference pairs (theta*, theta): theta* ~ g*, y = theta* + N(0, 1/omega*), theta ~ posterior under (g, omega).
inline LawComparison compare_coordinate_law(const Vec& theta_star, const Vec& theta, const Prior& model,
                                            const Prior& truth, double omega, double omega_star, int n_ref,
                                            std::uint64_t seed) {
    if (n_ref < 10) throw ConfigError("compare_coordinate_law needs n_ref >= 10");
    LawComparison out;
    out.empirical = joint_moments(theta_star, theta);
    Rng rng = make_stream(seed, stream::check, 0x77);
    std::vector<double> ts = sample_prior(truth.spec, truth.alpha, n_ref, rng);
    ScalarPosterior post(model.spec, model.alpha, omega);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud;
    const bool sample = model.spec.is_mixture_like();
    std::vector<double> th(sample ? n_ref : 0);
    JointMoments& r = out.reference;
    for (int q = 0; q < n_ref; ++q) {
        double y = ts[q] + nd(rng) / std::sqrt(omega_star);
        PosteriorStats st = post.at(y);
        r.star += ts[q];
        r.star2 += ts[q] * ts[q];
        r.theta += st.mean;
        r.theta2 += st.variance + st.mean * st.mean;
        r.cross += ts[q] * st.mean;
        if (sample) {
            // posterior of a Gaussian mixture is a Gaussian mixture
            const Components& c = post.prior().mixture();
            std::vector<double> lw(c.k), mu(c.k), sd(c.k);
            double mx = -INFINITY;
            for (int k = 0; k < c.k; ++k) {
                double s2 = 1.0 / c.prec[k] + 1.0 / omega, dd = y - c.center[k];
                lw[k] = c.logw[k] - 0.5 * std::log(s2) - 0.5 * dd * dd / s2;
                mx = std::max(mx, lw[k]);
                double v = 1.0 / (c.prec[k] + omega);
                mu[k] = (c.prec[k] * c.center[k] + omega * y) * v;
                sd[k] = std::sqrt(v);
            }
            double z = 0;
            for (double& w : lw) z += (w = std::exp(w - mx));
            double u = ud(rng) * z;
            int k = 0;
            while (k + 1 < c.k && u > lw[k]) u -= lw[k++];
            th[q] = mu[k] + sd[k] * nd(rng);
        }
    }
    for (double* v : {&r.star, &r.theta, &r.star2, &r.theta2, &r.cross}) *v /= n_ref;
    const JointMoments& e = out.empirical;
    out.max_moment_gap = std::max({std::abs(e.star - r.star), std::abs(e.theta - r.theta), std::abs(e.star2 - r.star2),
                                   std::abs(e.theta2 - r.theta2), std::abs(e.cross - r.cross)});
    out.w2_star = wasserstein2_1d(std::vector<double>(theta_star.data(), theta_star.data() + theta_star.size()), ts);
    if (sample) out.w2_theta = wasserstein2_1d(std::vector<double>(theta.data(), theta.data() + theta.size()), th);
    return out;
}

}  // namespace dmfteb
