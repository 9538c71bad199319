#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "kernels.hpp"
#include "langevin.hpp"
#include "replica.hpp"

#ifndef DMFTEB_BUILD_STAMP
#define DMFTEB_BUILD_STAMP "unknown"
#endif

namespace dmfteb {

using Json = nlohmann::ordered_json;

inline std::string build_stamp() { return DMFTEB_BUILD_STAMP; }

// Shortest text that reads back to the same double.
inline std::string num(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    for (int p = 15; p <= 17; ++p) {
        std::snprintf(buf, sizeof buf, "%.*g", p, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw IoError("cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << text;
    f.close();
    if (!f) throw IoError("write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : cols_(header.size()) { row_strings(header); }

    template <class... A>
    void row(const A&... xs) {
        std::vector<std::string> v{cell(xs)...};
        row_strings(v);
    }
    void row_values(const std::vector<double>& xs, const std::string& lead = "") {
        std::vector<std::string> v;
        if (!lead.empty()) v.push_back(lead);
        for (double x : xs) v.push_back(num(x));
        row_strings(v);
    }
    const std::string& str() const { return out_; }
    void save(const std::filesystem::path& p) const { write_text(p, out_); }

private:
    static std::string cell(double x) { return num(x); }
    static std::string cell(int x) { return std::to_string(x); }
    static std::string cell(long x) { return std::to_string(x); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }

    void row_strings(const std::vector<std::string>& v) {
        if (v.size() != cols_) throw IoError("csv row has " + std::to_string(v.size()) + " cells, header has " +
                                             std::to_string(cols_));
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) out_ += ',';
            out_ += v[i];
        }
        out_ += '\n';
    }
    std::size_t cols_;
    std::string out_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::istringstream in(read_text(path));
    CsvTable t;
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> out;
        std::stringstream ss(l);
        std::string c;
        while (std::getline(ss, c, ',')) out.push_back(c);
        return out;
    };
    if (!std::getline(in, line)) throw IoError(path.string() + " is empty");
    t.header = split(line);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells = split(line);
        if (cells.size() != t.header.size())
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(t.header.size()) + " cells");
        std::vector<double> r;
        for (const std::string& c : cells) {
            char* end = nullptr;
            double x = std::strtod(c.c_str(), &end);
            if (end == c.c_str()) throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + c + "'");
            r.push_back(x);
        }
        t.rows.push_back(std::move(r));
    }
    return t;
}

// ---- KernelSet ----

inline const std::vector<std::string>& kernel_files() {
    static const std::vector<std::string> f{"C_theta.csv", "C_theta_star.csv", "R_theta.csv",
                                            "C_eta.csv",   "R_eta.csv",        "R_eta_star.csv"};
    return f;
}

inline void write_kernels(const std::filesystem::path& dir, const KernelSet& k) {
    ensure_dir(dir);
    const int n = k.N + 1;
    auto pairs = [&](const Mat& v, const Mat& se, bool strict, const std::string& name) {
        CsvWriter w({"i", "j", "value", "stderr"});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < (strict ? i : i + 1); ++j) w.row(i, j, v(i, j), se.size() ? se(i, j) : 0.0);
        w.save(dir / name);
    };
    auto single = [&](const Vec& v, const Vec& se, const std::string& name) {
        CsvWriter w({"i", "value", "stderr"});
        for (int i = 0; i < n; ++i) w.row(i, v[i], se.size() ? se[i] : 0.0);
        w.save(dir / name);
    };
    pairs(k.C_theta, k.C_theta_se, false, "C_theta.csv");
    single(k.C_theta_star, k.C_theta_star_se, "C_theta_star.csv");
    pairs(k.R_theta, k.R_theta_se, true, "R_theta.csv");
    pairs(k.C_eta, k.C_eta_se, false, "C_eta.csv");
    pairs(k.R_eta, k.R_eta_se, true, "R_eta.csv");
    single(k.R_eta_star, Vec(), "R_eta_star.csv");
    std::vector<std::string> h{"t"};
    for (Eigen::Index q = 0; q < k.alpha_traj.cols(); ++q) h.push_back("alpha_" + std::to_string(q + 1));
    CsvWriter a(h);
    for (int i = 0; i < k.alpha_traj.rows(); ++i) {
        std::vector<double> r{k.time(i)};
        for (Eigen::Index q = 0; q < k.alpha_traj.cols(); ++q) r.push_back(k.alpha_traj(i, q));
        a.row_values(r);
    }
    a.save(dir / "alpha_traj.csv");
}

inline Json to_json(const KernelReport& r) {
    return Json{{"symmetry_C_theta", r.symmetry_C_theta},
                {"symmetry_C_eta", r.symmetry_C_eta},
                {"min_eig_C_theta", r.min_eig_C_theta},
                {"min_eig_C_eta", r.min_eig_C_eta},
                {"causality_violations", r.causality_violations},
                {"step_identities_apply", r.step_identities_apply},
                {"r_theta_boundary", r.r_theta_boundary},
                {"r_eta_first", r.r_eta_first},
                {"r_eta_star_sum", r.r_eta_star_sum},
                {"r_eta_star_recursion", r.r_eta_star_recursion},
                {"eta_recompute", r.eta_recompute},
                {"tti_drift", r.tti_drift},
                {"fdt_residual", r.fdt_residual},
                {"jitter_events", r.jitter_events},
                {"identities_ok", r.identities_ok()}};
}

inline Json to_json(const Equilibrium& e) {
    return Json{{"mse", e.mse},
                {"mse_star", e.mse_star},
                {"omega", e.omega},
                {"omega_star", e.omega_star},
                {"ymse", e.ymse},
                {"ymse_star", e.ymse_star},
                {"ymse_omega", e.ymse_omega},
                {"ymse_star_omega", e.ymse_star_omega},
                {"c_tti_0", e.c_tti_0},
                {"c_tti_inf", e.c_tti_inf},
                {"c_star", e.c_star},
                {"c_eta_0", e.c_eta_0},
                {"c_eta_inf", e.c_eta_inf},
                {"window_points", e.window_points},
                {"lag_points", e.lag_points}};
}

inline Json to_json(const RsFixedPoint& fp) {
    return Json{{"mse", fp.mse},
                {"mse_star", fp.mse_star},
                {"omega", fp.omega},
                {"omega_star", fp.omega_star},
                {"ymse", fp.ymse},
                {"ymse_star", fp.ymse_star},
                {"iterations", fp.iterations},
                {"residual", fp.residual},
                {"converged", fp.converged},
                {"monotone_after_5", fp.monotone_after_5}};
}

inline Json to_json(const Vec& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Json jitter_json(const KernelSet& k) {
    Json a = Json::array();
    for (const JitterEvent& j : k.jitter) a.push_back({{"step", j.step}, {"schur", j.schur}, {"added", j.added}});
    return a;
}

// ---- landscape ----

inline void write_landscape(const std::filesystem::path& dir, const std::vector<LandscapeRow>& rows,
                            const LandscapeGrid& grid, const std::string& objective) {
    ensure_dir(dir);
    CsvWriter w({"alpha1", "alpha2", "F", "AT", "converged"});
    for (const LandscapeRow& r : rows) w.row(r.a1, r.a2, r.value, r.at, r.converged ? 1 : 0);
    w.save(dir / "landscape.csv");
    double fmin = INFINITY;
    for (const LandscapeRow& r : rows)
        if (r.converged) fmin = std::min(fmin, r.value);
    std::ostringstream p;
    p << "# " << objective << " over alpha = origin + alpha1 u1 + alpha2 u2\n"
      << "# origin " << to_json(grid.origin).dump() << "  u1 " << to_json(grid.u1).dump() << "  u2 "
      << to_json(grid.u2).dump() << "\n"
      << "set datafile separator ','\n"
      << "set key off\nset xlabel 'alpha1'\nset ylabel 'alpha2'\n"
      << "set view map\nset pm3d map\nset dgrid3d " << grid.a1.count << "," << grid.a2.count << "\n"
      << "fmin = " << num(std::isfinite(fmin) ? fmin : 0.0) << "\n"
      << "set title 'log(F - min F + 1e-3)'\n"
      << "splot 'landscape.csv' skip 1 using 1:2:($5 > 0 ? log($3 - fmin + 1e-3) : NaN) with pm3d\n";
    write_text(dir / "landscape.plt", p.str());
}

inline Json critical_points_json(const CriticalSearchResult& r) {
    Json a = Json::array();
    for (const CriticalPoint& c : r.points)
        a.push_back({{"alpha", to_json(c.alpha)},
                     {"objective", c.objective},
                     {"grad_norm", c.grad_norm},
                     {"AT", c.at},
                     {"basin", c.basin},
                     {"init_index", c.init_index}});
    return a;
}

// ---- trajectories ----

inline void write_trajectories(const std::filesystem::path& dir, const std::vector<TrajectoryRecord>& recs) {
    ensure_dir(dir);
    CsvWriter t({"chain", "step", "t", "err", "sq", "overlap", "resid"});
    for (const TrajectoryRecord& r : recs)
        for (std::size_t i = 0; i < r.time.size(); ++i)
            t.row(r.chain, static_cast<int>(i), r.time[i], r.err[i], r.sq[i], r.overlap[i], r.resid[i]);
    t.save(dir / "trajectory.csv");
    const Eigen::Index K = recs.empty() ? 0 : recs[0].alpha.cols();
    std::vector<std::string> h{"chain", "step", "t"};
    for (Eigen::Index q = 0; q < K; ++q) h.push_back("alpha_" + std::to_string(q + 1));
    CsvWriter a(h);
    for (const TrajectoryRecord& r : recs)
        for (Eigen::Index i = 0; i < r.alpha.rows(); ++i) {
            std::vector<double> row{static_cast<double>(i), r.time[static_cast<std::size_t>(i)]};
            for (Eigen::Index q = 0; q < K; ++q) row.push_back(r.alpha(i, q));
            a.row_values(row, std::to_string(r.chain));
        }
    a.save(dir / "alpha_hat.csv");
    std::ostringstream p;
    p << "set datafile separator ','\nset key top right\nset xlabel 't'\n"
      << "set multiplot layout 2,1\n"
      << "set ylabel '(1/d)|theta - theta*|^2'\n"
      << "plot for [c=0:" << (recs.empty() ? 0 : static_cast<int>(recs.size()) - 1)
      << "] 'trajectory.csv' skip 1 using ($1 == c ? $3 : NaN):4 with lines title sprintf('chain %d', c)\n"
      << "set ylabel 'alpha'\n"
      << "plot for [q=1:" << K << "] 'alpha_hat.csv' skip 1 using 3:(column(3 + q)) with lines title sprintf('alpha_%d', q)\n"
      << "unset multiplot\n";
    write_text(dir / "trajectory.plt", p.str());
}

inline void write_empirical_kernels(const std::filesystem::path& path, const EmpiricalKernels& e) {
    CsvWriter w({"kernel", "t", "s", "value", "stderr"});
    const std::size_t m = e.times.size();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j <= i; ++j)
            w.row(std::string("C_theta"), e.times[i], e.times[j], e.C_theta(i, j), e.C_theta_se(i, j));
    for (std::size_t i = 0; i < m; ++i) w.row(std::string("C_theta_star"), e.times[i], NAN, e.C_theta_star[i], e.C_theta_star_se[i]);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j <= i; ++j)
            w.row(std::string("C_eta"), e.times[i], e.times[j], e.C_eta(i, j), e.C_eta_se(i, j));
    w.save(path);
}

// ---- compare ----

struct FileDiff {
    std::string file;
    int rows = 0;
    double max_norm = 0, max_abs = 0;
    std::string where;
};

struct CompareReport {
    std::vector<FileDiff> files;
    double max_norm = 0;
};

inline CompareReport compare_kernel_dirs(const std::filesystem::path& a, const std::filesystem::path& b,
                                         double floor = 1e-9) {
    if (!(floor > 0)) throw ConfigError("compare floor must be positive");
    CompareReport rep;
    for (const std::string& f : kernel_files()) {
        bool ea = std::filesystem::exists(a / f), eb = std::filesystem::exists(b / f);
        if (!ea && !eb) continue;
        if (!ea || !eb) throw IoError("kernel file " + f + " missing in " + (ea ? b : a).string());
        CsvTable ta = read_csv(a / f), tb = read_csv(b / f);
        int va = ta.column("value"), sa = ta.column("stderr"), vb = tb.column("value"), sb = tb.column("stderr");
        if (va < 0 || sa < 0 || vb < 0 || sb < 0) throw IoError(f + " lacks value/stderr columns");
        std::size_t keys = static_cast<std::size_t>(va);  // leading index columns
        std::map<std::vector<double>, std::pair<double, double>> mb;
        for (const auto& r : tb.rows) mb[std::vector<double>(r.begin(), r.begin() + keys)] = {r[vb], r[sb]};
        FileDiff d;
        d.file = f;
        for (const auto& r : ta.rows) {
            std::vector<double> key(r.begin(), r.begin() + keys);
            auto it = mb.find(key);
            if (it == mb.end()) continue;
            double diff = std::abs(r[va] - it->second.first);
            double z = diff / (r[sa] + it->second.second + floor);
            ++d.rows;
            d.max_abs = std::max(d.max_abs, diff);
            if (z > d.max_norm || d.where.empty()) {
                d.max_norm = std::max(d.max_norm, z);
                d.where.clear();
                for (std::size_t q = 0; q < keys; ++q)
                    d.where += (q ? "," : "") + std::to_string(static_cast<long>(key[q]));
            }
        }
        if (d.rows == 0) throw IoError(f + ": no common (i,j) entries between " + a.string() + " and " + b.string());
        rep.max_norm = std::max(rep.max_norm, d.max_norm);
        rep.files.push_back(d);
    }
    if (rep.files.empty()) throw IoError("no kernel files found in " + a.string() + " or " + b.string());
    return rep;
}

}  // namespace dmfteb
