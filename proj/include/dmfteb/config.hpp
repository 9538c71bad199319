#pragma once

#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "dmft.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "langevin.hpp"
#include "replica.hpp"

namespace dmfteb {

namespace cfgdetail {

inline Json prior_defaults(const std::string& variant) {
    if (variant == "gaussian-location") return Json{{"variant", variant}, {"precision", 1.0}, {"alpha", nullptr}};
    if (variant == "mixture-means")
        return Json{{"variant", variant}, {"weights", {0.5, 0.5}}, {"precisions", {1.0, 1.0}}, {"alpha", nullptr}};
    if (variant == "mixture-weights")
        return Json{{"variant", variant}, {"means", {0.0, 0.0}}, {"precisions", {1.0, 4.0}}, {"alpha", nullptr}};
    if (variant == "generic-tabulated")
        return Json{{"variant", variant}, {"shape", "logcosh"}, {"theta0", -8.0}, {"step", 0.05},
                    {"count", 321},       {"log_g", Json::array()}, {"alpha", nullptr}};
    throw ConfigError("unknown prior variant '" + variant +
                      "' (expected gaussian-location, mixture-means, mixture-weights or generic-tabulated)");
}

inline bool is_prior_path(const std::string& p) { return p == "model" || p == "truth" || p == "init"; }

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline void merge_prior(Json& base, const Json& over, const std::string& path) {
    if (!over.is_object()) throw ConfigError(path + ": expected a prior object");
    if (over.contains("variant")) {
        if (!over["variant"].is_string()) throw ConfigError(path + ".variant: expected a string");
        std::string v = over["variant"].get<std::string>();
        if (!base.is_object() || base.value("variant", "") != v) base = prior_defaults(v);
    }
    for (auto it = over.begin(); it != over.end(); ++it) {
        if (!base.contains(it.key()))
            throw ConfigError("unknown key " + join(path, it.key()) + " for prior variant " +
                              base["variant"].get<std::string>());
        base[it.key()] = it.value();
    }
}

inline void merge(Json& base, const Json& over, const std::string& path) {
    if (!over.is_object()) throw ConfigError((path.empty() ? std::string("config") : path) + ": expected an object");
    for (auto it = over.begin(); it != over.end(); ++it) {
        std::string p = join(path, it.key());
        if (!base.contains(it.key())) throw ConfigError("unknown key " + p);
        Json& b = base[it.key()];
        if (is_prior_path(p))
            merge_prior(b, it.value(), p);
        else if (b.is_object())
            merge(b, it.value(), p);
        else
            b = it.value();
    }
}

inline void set_dotted(Json& tree, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    Json value = Json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    Json* node = &tree;
    std::size_t start = 0;
    while (true) {
        auto dot = key.find('.', start);
        std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("--set key '" + key + "' has an empty component");
        if (!node->is_object()) *node = Json::object();
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

}  // namespace cfgdetail

inline Json default_config() {
    Json axis = {{"min", -1.0}, {"max", 1.0}, {"count", 21}};
    return Json{
        {"preset", nullptr},
        {"global", {{"seed", 1}, {"out", "out"}, {"threads", 0}}},
        {"problem", {{"delta", 1.0}, {"sigma2", 1.0}, {"s", nullptr}}},
        {"model", cfgdetail::prior_defaults("gaussian-location")},
        {"truth", cfgdetail::prior_defaults("gaussian-location")},
        {"init", {{"variant", "gaussian-location"}, {"precision", 1.0}, {"alpha", {0.0}}}},
        {"regularizer", {{"enabled", true}, {"radius", 3.0}}},
        {"quadrature",
         {{"n_gh", 61}, {"grid_nodes", 2001}, {"grid_range", 12.0}, {"y_nodes", 801}, {"self_check", true},
          {"self_check_tol", 1e-7}}},
        {"rs", {{"damping", 0.5}, {"tol", 1e-10}, {"max_iter", 500}, {"init", nullptr}}},
        {"landscape",
         {{"objective", "F_plus_R"},
          {"s2", nullptr},
          {"origin", nullptr},
          {"u1", nullptr},
          {"u2", nullptr},
          {"a1", axis},
          {"a2", axis},
          {"max_cells", 40000},
          {"critical",
           {{"inits", nullptr}, {"step", 1.0}, {"grad_tol", 1e-6}, {"dedup_radius", 0.05}, {"max_steps", 2000}}}}},
        {"dmft",
         {{"T", 5.0},
          {"gamma", 0.02},
          {"M", 20000},
          {"adapt", false},
          {"eps_psd", 1e-10},
          {"response_stride", 1},
          {"response_replicas", 1000},
          {"response_float", false},
          {"chunk", 256},
          {"window", 0.25}}},
        {"oracle", {{"lambda", nullptr}, {"mode", "discrete"}, {"n_mp", 400}}},
        {"simulate",
         {{"n", nullptr},
          {"d", 1000},
          {"design", "gaussian"},
          {"noiseless", false},
          {"memory_cap_gb", 2.0},
          {"instance_seed", nullptr},
          {"gamma", 0.02},
          {"T", 40.0},
          {"adapt", false},
          {"chains", 1},
          {"checkpoints", Json::array()},
          {"burn_in", 0.5},
          {"response",
           {{"enabled", false},
            {"gamma", 0.002},
            {"s", 1.0},
            {"t", 1.5},
            {"eps", 1e-3},
            {"probes", 64},
            {"batch", 32},
            {"check_half", true}}}}},
        {"compare", {{"floor", 1e-9}, {"threshold", 4.0}}}};
}

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> n{"example1", "example2", "figure1", "figure2", "gaussian-oracle"};
    return n;
}

inline Json preset_overlay(const std::string& name) {
    const double r2 = 1.0 / std::sqrt(2.0), r6 = 1.0 / std::sqrt(6.0);
    if (name == "example1" || name == "example2") {
        Json prior = name == "example1" ? Json{{"variant", "gaussian-location"}, {"precision", 1.0}}
                                        : Json{{"variant", "generic-tabulated"}, {"shape", "logcosh"}};
        Json model = prior, truth = prior;
        model["alpha"] = {0.0};
        truth["alpha"] = {1.0};
        return Json{{"problem", {{"delta", 1.0}, {"sigma2", 1.0}}},
                    {"model", model},
                    {"truth", truth},
                    {"regularizer", {{"enabled", false}}},
                    {"landscape",
                     {{"u1", {1.0}},
                      {"u2", {0.0}},
                      {"origin", {0.0}},
                      {"a1", {{"min", -1.0}, {"max", 3.0}, {"count", 41}}},
                      {"a2", {{"min", 0.0}, {"max", 0.0}, {"count", 1}}},
                      {"critical", {{"inits", {{-2.0}, {0.0}, {3.0}}}}}}},
                    {"dmft",
                     {{"T", 40.0}, {"gamma", 0.05}, {"M", 10000}, {"adapt", true}, {"response_replicas", 200},
                      {"response_float", true}}},
                    {"simulate", {{"T", 40.0}, {"gamma", 0.05}, {"adapt", true}}}};
    }
    if (name == "figure1")
        return Json{{"problem", {{"delta", 4.0}, {"s", 0.5}}},
                    {"model", {{"variant", "mixture-means"}, {"weights", {0.5, 0.5}}, {"precisions", {1.0, 4.0}},
                               {"alpha", {0.5, -0.5}}}},
                    {"truth", {{"variant", "mixture-means"}, {"weights", {0.5, 0.5}}, {"precisions", {1.0, 4.0}},
                               {"alpha", {-1.0, 1.0}}}},
                    {"regularizer", {{"enabled", true}, {"radius", 3.0}}},
                    {"landscape",
                     {{"origin", {0.0, 0.0}},
                      {"u1", {1.0, 0.0}},
                      {"u2", {0.0, 1.0}},
                      {"a1", {{"min", -2.0}, {"max", 2.0}, {"count", 41}}},
                      {"a2", {{"min", -2.0}, {"max", 2.0}, {"count", 41}}},
                      {"critical", {{"inits", {{-1.1, 0.9}, {1.0, -1.0}}}}}}},
                    {"dmft", {{"T", 10.0}, {"M", 10000}, {"adapt", true}, {"response_replicas", 200}}},
                    {"simulate", {{"T", 20.0}, {"gamma", 0.02}, {"adapt", true}}}};
    if (name == "figure2") {
        Json star = {std::log(0.6), std::log(0.2), std::log(0.2)};
        double m = (star[0].get<double>() + star[1].get<double>() + star[2].get<double>()) / 3;
        Json centered = {star[0].get<double>() - m, star[1].get<double>() - m, star[2].get<double>() - m};
        return Json{{"problem", {{"delta", 1.0}, {"s", 0.2}}},
                    {"model", {{"variant", "mixture-weights"}, {"means", {0.0, 0.0, 0.0}},
                               {"precisions", {25.0, 1.0, 0.04}}, {"alpha", {0.0, 0.0, 0.0}}}},
                    {"truth", {{"variant", "mixture-weights"}, {"means", {0.0, 0.0, 0.0}},
                               {"precisions", {25.0, 1.0, 0.04}}, {"alpha", star}}},
                    {"regularizer", {{"enabled", true}, {"radius", 3.0}}},
                    {"landscape",
                     {{"origin", centered},
                      {"u1", {r2, -r2, 0.0}},
                      {"u2", {r6, r6, -2 * r6}},
                      {"a1", {{"min", -2.0}, {"max", 2.0}, {"count", 31}}},
                      {"a2", {{"min", -2.0}, {"max", 2.0}, {"count", 31}}},
                      {"critical", {{"inits", {{0.0, 0.0, 0.0}, {1.0, -0.5, -0.5}, {-1.0, 2.0, -1.0}}}}}}},
                    {"dmft", {{"T", 2.5}, {"gamma", 0.005}, {"M", 5000}, {"adapt", true}, {"response_replicas", 200},
                              {"response_float", true}}},
                    {"simulate", {{"T", 10.0}, {"gamma", 0.005}, {"adapt", true}}}};
    }
    if (name == "gaussian-oracle")
        return Json{{"problem", {{"delta", 1.0}, {"sigma2", 1.0}}},
                    {"model", {{"variant", "gaussian-location"}, {"precision", 1.0}, {"alpha", {0.0}}}},
                    {"truth", {{"variant", "gaussian-location"}, {"precision", 1.0}, {"alpha", {0.0}}}},
                    {"regularizer", {{"enabled", false}}},
                    {"dmft", {{"T", 5.0}, {"gamma", 0.02}, {"M", 20000}, {"adapt", false}}},
                    {"oracle", {{"lambda", 1.0}, {"mode", "discrete"}}},
                    {"simulate", {{"T", 40.0}, {"gamma", 0.02}, {"checkpoints", {0.0, 0.5, 1.0, 2.0}}}}};
    std::string all;
    for (const std::string& n : preset_names()) all += (all.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (available: " + all + ")");
}

struct Config {
    Json tree;

    template <class T>
    T get(const std::string& path) const {
        const Json* node = &tree;
        std::size_t start = 0;
        while (true) {
            auto dot = path.find('.', start);
            std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (!node->is_object() || !node->contains(part)) throw ConfigError("missing key " + path);
            node = &(*node)[part];
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        try {
            return node->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("key " + path + " has the wrong type (" + node->dump() + ")");
        }
    }
    bool is_null(const std::string& path) const { return at(path).is_null(); }
    const Json& at(const std::string& path) const {
        const Json* node = &tree;
        std::size_t start = 0;
        while (true) {
            auto dot = path.find('.', start);
            node = &node->at(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
            if (dot == std::string::npos) return *node;
            start = dot + 1;
        }
    }

    std::uint64_t seed() const { return get<std::uint64_t>("global.seed"); }
    std::string out() const { return get<std::string>("global.out"); }
    int threads() const { return get<int>("global.threads"); }
    double delta() const { return get<double>("problem.delta"); }
    double sigma2() const { return get<double>("problem.sigma2"); }
};

namespace cfgdetail {

inline Vec vec_of(const Config& c, const std::string& path) {
    std::vector<double> v = c.get<std::vector<double>>(path);
    return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline PriorSpec spec_at(const Config& c, const std::string& p) {
    std::string v = c.get<std::string>(p + ".variant");
    PriorSpec s;
    if (v == "gaussian-location")
        s = gaussian_location(c.get<double>(p + ".precision"));
    else if (v == "mixture-means")
        s = mixture_means(c.get<std::vector<double>>(p + ".weights"), c.get<std::vector<double>>(p + ".precisions"));
    else if (v == "mixture-weights")
        s = mixture_weights(c.get<std::vector<double>>(p + ".means"), c.get<std::vector<double>>(p + ".precisions"));
    else {
        std::string shape = c.get<std::string>(p + ".shape");
        double t0 = c.get<double>(p + ".theta0"), h = c.get<double>(p + ".step");
        std::vector<double> lg;
        if (shape == "table") {
            lg = c.get<std::vector<double>>(p + ".log_g");
        } else if (shape == "logcosh") {
            int n = c.get<int>(p + ".count");
            if (n < 5) throw ConfigError(p + ".count must be >= 5");
            for (int k = 0; k < n; ++k) {
                double x = t0 + h * k;
                lg.push_back(-0.5 * x * x - std::log(std::cosh(x)));
            }
        } else {
            throw ConfigError(p + ".shape must be 'logcosh' or 'table'");
        }
        try {
            s = generic_tabulated(t0, h, lg);
        } catch (const ConfigError& e) {
            throw ConfigError(p + ": " + e.what());
        }
    }
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(p + ": " + e.what());
    }
    return s;
}

inline void check_positive(const Config& c, const std::string& path) {
    double x = c.get<double>(path);
    if (!(x > 0) || !std::isfinite(x)) throw ConfigError(path + " must be positive");
}

}  // namespace cfgdetail

inline Prior prior_at(const Config& c, const std::string& path) {
    PriorSpec s = cfgdetail::spec_at(c, path);
    Vec a = cfgdetail::vec_of(c, path + ".alpha");
    if (a.size() != s.dim())
        throw ConfigError(path + ".alpha has " + std::to_string(a.size()) + " entries, the prior needs " +
                          std::to_string(s.dim()));
    return {s, a};
}

// Fills derived keys so that the echoed tree lists every value used.
inline void resolve(Config& c) {
    Json& t = c.tree;
    for (const char* p : {"model", "truth", "init"}) {
        PriorSpec s = cfgdetail::spec_at(c, p);
        if (t[p]["alpha"].is_null()) t[p]["alpha"] = std::vector<double>(static_cast<std::size_t>(s.dim()), 0.0);
    }
    cfgdetail::check_positive(c, "problem.delta");
    if (!t["problem"]["s"].is_null()) {
        double s = c.get<double>("problem.s");
        if (!(s > 0)) throw ConfigError("problem.s must be positive");
        t["problem"]["sigma2"] = c.delta() * s * s;
    }
    cfgdetail::check_positive(c, "problem.sigma2");
    Json& L = t["landscape"];
    int K = prior_at(c, "model").spec.dim();
    if (L["s2"].is_null()) L["s2"] = c.sigma2() / c.delta();
    if (L["origin"].is_null()) L["origin"] = t["model"]["alpha"];
    for (int q = 0; q < 2; ++q) {
        const char* key = q == 0 ? "u1" : "u2";
        if (!L[key].is_null()) continue;
        std::vector<double> u(static_cast<std::size_t>(K), 0.0);
        if (q < K) u[static_cast<std::size_t>(q)] = 1.0;
        L[key] = u;
    }
    if (L["critical"]["inits"].is_null()) L["critical"]["inits"] = Json::array({t["model"]["alpha"]});
    Json& S = t["simulate"];
    if (S["n"].is_null()) S["n"] = static_cast<int>(std::lround(c.delta() * c.get<int>("simulate.d")));
    if (S["instance_seed"].is_null()) S["instance_seed"] = t["global"]["seed"];
    if (t["oracle"]["lambda"].is_null() && t["model"]["variant"] == "gaussian-location")
        t["oracle"]["lambda"] = t["model"]["precision"];
}

// Typed extraction of every block, so that type errors surface at parse time with their key path.
inline void validate_config(const Config& c);

inline Config config_from_json(const Json& user, const std::vector<std::string>& sets = {}) {
    Json u = user.is_null() ? Json::object() : user;
    if (!u.is_object()) throw ConfigError("config must be a JSON object");
    for (const std::string& s : sets) cfgdetail::set_dotted(u, s);
    if (u.empty() || (!u.contains("preset") && !(u.contains("model") && u.contains("truth"))))
        throw ConfigError(
            "config is missing required keys: give \"preset\" (one of example1, example2, figure1, figure2, "
            "gaussian-oracle) or both \"model\" and \"truth\" prior objects, each with \"variant\"");
    Config c{default_config()};
    if (u.contains("preset") && !u["preset"].is_null()) {
        if (!u["preset"].is_string()) throw ConfigError("preset: expected a string");
        cfgdetail::merge(c.tree, preset_overlay(u["preset"].get<std::string>()), "");
        c.tree["preset"] = u["preset"];
    }
    cfgdetail::merge(c.tree, u, "");
    resolve(c);
    validate_config(c);
    return c;
}

inline Config parse_config_text(const std::string& text, const std::string& origin,
                                 const std::vector<std::string>& sets = {}) {
    Json j = Json::object();
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
        try {
            j = Json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(origin + ": invalid JSON: " + e.what());
        }
    }
    try {
        return config_from_json(j, sets);
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

inline Config parse_config(const std::filesystem::path& path, const std::vector<std::string>& sets = {}) {
    std::string text;
    try {
        text = read_text(path);
    } catch (const IoError& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    return parse_config_text(text, path.string(), sets);
}

inline std::string echo_config(const Config& c) { return c.tree.dump(2) + "\n"; }

// ---- typed views ----

inline RegularizerSpec regularizer_spec(const Config& c) {
    RegularizerSpec r;
    r.enabled = c.get<bool>("regularizer.enabled");
    r.radius = c.get<double>("regularizer.radius");
    if (!(r.radius > 0)) throw ConfigError("regularizer.radius must be positive");
    return r;
}

inline QuadratureRule quadrature_rule(const Config& c) {
    QuadratureRule q;
    q.n_gh = c.get<int>("quadrature.n_gh");
    q.grid_nodes = c.get<int>("quadrature.grid_nodes");
    q.grid_range = c.get<double>("quadrature.grid_range");
    q.y_nodes = c.get<int>("quadrature.y_nodes");
    q.self_check = c.get<bool>("quadrature.self_check");
    q.self_check_tol = c.get<double>("quadrature.self_check_tol");
    if (q.n_gh < 1 || q.grid_nodes < 3 || q.y_nodes < 3 || !(q.grid_range > 0))
        throw ConfigError("quadrature: n_gh >= 1, grid_nodes >= 3, y_nodes >= 3 and grid_range > 0 required");
    return q;
}

inline RsOptions rs_options(const Config& c) {
    RsOptions o;
    o.damping = c.get<double>("rs.damping");
    o.tol = c.get<double>("rs.tol");
    o.max_iter = c.get<int>("rs.max_iter");
    if (!c.is_null("rs.init")) {
        std::vector<double> v = c.get<std::vector<double>>("rs.init");
        if (v.size() != 2) throw ConfigError("rs.init must be [mse, mse_star]");
        o.init = std::make_pair(v[0], v[1]);
    }
    o.validate();
    return o;
}

inline ReplicaContext replica_context(const Config& c) {
    ReplicaContext r;
    r.prior = prior_at(c, "model").spec;
    r.truth = prior_at(c, "truth");
    r.delta = c.delta();
    r.sigma2 = c.sigma2();
    r.rule = quadrature_rule(c);
    r.rs = rs_options(c);
    r.reg = regularizer_spec(c);
    r.s2 = c.get<double>("landscape.s2");
    return r;
}

inline Objective landscape_objective(const Config& c) {
    try {
        return parse_objective(c.get<std::string>("landscape.objective"));
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("landscape.objective: ") + e.what());
    }
}

inline LandscapeGrid landscape_grid(const Config& c) {
    LandscapeGrid g;
    g.origin = cfgdetail::vec_of(c, "landscape.origin");
    g.u1 = cfgdetail::vec_of(c, "landscape.u1");
    g.u2 = cfgdetail::vec_of(c, "landscape.u2");
    for (int q = 0; q < 2; ++q) {
        std::string p = q == 0 ? "landscape.a1" : "landscape.a2";
        Axis a{c.get<double>(p + ".min"), c.get<double>(p + ".max"), c.get<int>(p + ".count")};
        if (a.count < 1) throw ConfigError(p + ".count must be >= 1");
        (q == 0 ? g.a1 : g.a2) = a;
    }
    g.max_cells = c.get<int>("landscape.max_cells");
    return g;
}

inline std::vector<Vec> critical_inits(const Config& c) {
    std::vector<Vec> out;
    for (const auto& v : c.get<std::vector<std::vector<double>>>("landscape.critical.inits"))
        out.push_back(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
    return out;
}

inline CriticalSearchOptions critical_options(const Config& c) {
    CriticalSearchOptions o;
    o.step = c.get<double>("landscape.critical.step");
    o.grad_tol = c.get<double>("landscape.critical.grad_tol");
    o.dedup_radius = c.get<double>("landscape.critical.dedup_radius");
    o.max_steps = c.get<int>("landscape.critical.max_steps");
    return o;
}

inline DmftConfig dmft_config(const Config& c) {
    DmftConfig d;
    d.T = c.get<double>("dmft.T");
    d.gamma = c.get<double>("dmft.gamma");
    d.M = c.get<int>("dmft.M");
    d.delta = c.delta();
    d.sigma2 = c.sigma2();
    Prior m = prior_at(c, "model");
    d.prior = m.spec;
    d.alpha0 = m.alpha;
    d.truth = prior_at(c, "truth");
    d.init = prior_at(c, "init");
    d.adapt = c.get<bool>("dmft.adapt");
    d.reg = regularizer_spec(c);
    d.seed = c.seed();
    d.eps_psd = c.get<double>("dmft.eps_psd");
    d.response_stride = c.get<int>("dmft.response_stride");
    d.response_replicas = c.get<int>("dmft.response_replicas");
    d.response_float = c.get<bool>("dmft.response_float");
    d.chunk = c.get<int>("dmft.chunk");
    return d;
}

inline double dmft_window(const Config& c) { return c.get<double>("dmft.window"); }

inline OracleMode oracle_mode(const Config& c) {
    std::string m = c.get<std::string>("oracle.mode");
    if (m == "discrete") return OracleMode::discrete;
    if (m == "continuous") return OracleMode::continuous;
    throw ConfigError("oracle.mode must be 'discrete' or 'continuous'");
}

inline InstanceSpec instance_spec(const Config& c) {
    InstanceSpec s;
    s.n = c.get<int>("simulate.n");
    s.d = c.get<int>("simulate.d");
    s.sigma2 = c.sigma2();
    s.truth = prior_at(c, "truth");
    try {
        s.design = parse_design(c.get<std::string>("simulate.design"));
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("simulate.design: ") + e.what());
    }
    s.noiseless = c.get<bool>("simulate.noiseless");
    s.seed = c.get<std::uint64_t>("simulate.instance_seed");
    s.memory_cap_gb = c.get<double>("simulate.memory_cap_gb");
    return s;
}

inline ChainConfig chain_config(const Config& c) {
    ChainConfig k;
    Prior m = prior_at(c, "model");
    k.prior = m.spec;
    k.alpha0 = m.alpha;
    k.adapt = c.get<bool>("simulate.adapt");
    k.reg = regularizer_spec(c);
    k.gamma = c.get<double>("simulate.gamma");
    k.T = c.get<double>("simulate.T");
    k.init = prior_at(c, "init");
    k.seed = c.seed();
    k.chains = c.get<int>("simulate.chains");
    k.checkpoints = c.get<std::vector<double>>("simulate.checkpoints");
    k.burn_in = c.get<double>("simulate.burn_in");
    return k;
}

inline bool response_enabled(const Config& c) { return c.get<bool>("simulate.response.enabled"); }

inline ResponseConfig response_config(const Config& c) {
    ResponseConfig r;
    r.gamma = c.get<double>("simulate.response.gamma");
    r.s = c.get<double>("simulate.response.s");
    r.t = c.get<double>("simulate.response.t");
    r.eps = c.get<double>("simulate.response.eps");
    r.probes = c.get<int>("simulate.response.probes");
    r.batch = c.get<int>("simulate.response.batch");
    r.check_half = c.get<bool>("simulate.response.check_half");
    r.seed = c.seed();
    r.init = prior_at(c, "init");
    return r;
}

inline void validate_config(const Config& c) {
    c.seed();
    c.out();
    if (c.threads() < 0) throw ConfigError("global.threads must be >= 0");
    if (!c.is_null("preset")) c.get<std::string>("preset");
    prior_at(c, "model");
    prior_at(c, "truth");
    prior_at(c, "init");
    replica_context(c);
    landscape_objective(c);
    landscape_grid(c);
    critical_inits(c);
    critical_options(c);
    DmftConfig d = dmft_config(c);
    try {
        d.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("dmft: ") + e.what());
    }
    double w = dmft_window(c);
    if (!(w > 0 && w <= 0.5)) throw ConfigError("dmft.window must lie in (0, 0.5]");
    oracle_mode(c);
    if (!c.is_null("oracle.lambda")) cfgdetail::check_positive(c, "oracle.lambda");
    if (c.get<int>("oracle.n_mp") < 2) throw ConfigError("oracle.n_mp must be >= 2");
    InstanceSpec s = instance_spec(c);
    if (s.n < 1 || s.d < 1) throw ConfigError("simulate.n and simulate.d must be >= 1");
    chain_config(c).validate();
    response_enabled(c);
    response_config(c);
    cfgdetail::check_positive(c, "compare.floor");
    cfgdetail::check_positive(c, "compare.threshold");
}

}  // namespace dmfteb
