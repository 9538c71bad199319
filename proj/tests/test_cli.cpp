#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "dmfteb/check_suite.hpp"
#include "dmfteb/config.hpp"
#include "dmfteb/io.hpp"

using namespace dmfteb;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("dmfteb_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(DMFTEB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

Config preset(const std::string& name, const std::vector<std::string>& sets = {}) {
    return config_from_json(Json{{"preset", name}}, sets);
}

}  // namespace

TEST(Config, Example1Preset) {
    Config c = preset("example1");
    EXPECT_DOUBLE_EQ(c.delta(), 1.0);
    EXPECT_DOUBLE_EQ(c.sigma2(), 1.0);
    Prior m = prior_at(c, "model"), t = prior_at(c, "truth");
    EXPECT_EQ(m.spec.variant, PriorVariant::gaussian_location);
    EXPECT_DOUBLE_EQ(m.spec.precision, 1.0);
    EXPECT_DOUBLE_EQ(t.alpha[0], 1.0);
    EXPECT_TRUE(dmft_config(c).adapt);
    EXPECT_FALSE(regularizer_spec(c).enabled);
}

TEST(Config, AllPresetsParse) {
    for (const std::string& n : preset_names()) {
        Config c = preset(n);
        EXPECT_EQ(c.get<std::string>("preset"), n);
        EXPECT_NO_THROW(dmft_config(c).validate()) << n;
        EXPECT_NO_THROW(chain_config(c).validate()) << n;
    }
    Config f1 = preset("figure1");
    EXPECT_DOUBLE_EQ(f1.delta(), 4.0);
    EXPECT_DOUBLE_EQ(f1.sigma2(), 1.0);
    EXPECT_EQ(prior_at(f1, "model").spec.variant, PriorVariant::mixture_means);
    Config f2 = preset("figure2");
    EXPECT_NEAR(f2.sigma2(), 0.04, 1e-15);
    Prior t2 = prior_at(f2, "truth");
    EXPECT_NEAR(std::exp(t2.alpha[0]) / (std::exp(t2.alpha[0]) + std::exp(t2.alpha[1]) + std::exp(t2.alpha[2])), 0.6,
                1e-14);
    EXPECT_EQ(prior_at(preset("example2"), "model").spec.variant, PriorVariant::generic_tabulated);
    EXPECT_THROW(preset("figure9"), ConfigError);
}

TEST(Config, NoiseScaleFollowsDelta) {
    Config c = preset("figure1", {"problem.delta=0.25"});
    EXPECT_DOUBLE_EQ(c.sigma2(), 0.25 * 0.25);
    EXPECT_DOUBLE_EQ(c.get<double>("landscape.s2"), 0.25);
}

TEST(Config, EmptyInputListsRequiredKeys) {
    for (const std::string& text : {std::string(""), std::string("  \n"), std::string("{}")}) {
        try {
            parse_config_text(text, "c.json");
            FAIL() << "accepted an empty config";
        } catch (const ConfigError& e) {
            std::string m = e.what();
            EXPECT_NE(m.find("preset"), std::string::npos);
            EXPECT_NE(m.find("model"), std::string::npos);
            EXPECT_NE(m.find("truth"), std::string::npos);
            EXPECT_NE(m.find("c.json"), std::string::npos);
        }
    }
}

TEST(Config, UnknownKeysRejectedWithPath) {
    auto msg = [](const Json& j) {
        try {
            config_from_json(j);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(msg({{"preset", "example1"}, {"dmft", {{"MM", 3}}}}).find("dmft.MM"), std::string::npos);
    EXPECT_NE(msg({{"preset", "example1"}, {"extra", 1}}).find("extra"), std::string::npos);
    EXPECT_NE(msg({{"preset", "example1"}, {"model", {{"weights", {1.0}}}}}).find("model.weights"), std::string::npos);
    EXPECT_NE(msg({{"preset", "example1"}, {"dmft", {{"M", "many"}}}}).find("dmft.M"), std::string::npos);
    EXPECT_NE(msg({{"preset", "example1"}, {"dmft", {{"gamma", -1}}}}).find("gamma"), std::string::npos);
    EXPECT_NE(msg({{"model", {{"variant", "mixture-means"}, {"weights", {0.5, 0.4}}, {"precisions", {1, 1}}}},
                   {"truth", {{"variant", "gaussian-location"}}}})
                  .find("model"),
              std::string::npos);
    EXPECT_NE(msg({{"model", {{"variant", "laplace"}}}, {"truth", {{"variant", "gaussian-location"}}}}).find("laplace"),
              std::string::npos);
}

TEST(Config, RoundTripIsIdempotent) {
    for (const std::string& n : preset_names()) {
        Config a = preset(n, {"dmft.M=777", "global.seed=9"});
        std::string e1 = echo_config(a);
        Config b = parse_config_text(e1, "echo");
        EXPECT_EQ(e1, echo_config(b)) << n;
        EXPECT_EQ(b.get<int>("dmft.M"), 777);
        EXPECT_EQ(b.seed(), 9u);
    }
    Config explicit_cfg = config_from_json(
        {{"model", {{"variant", "mixture-weights"}, {"means", {0, 1}}, {"precisions", {1, 2}}}},
         {"truth", {{"variant", "mixture-weights"}, {"means", {0, 1}}, {"precisions", {1, 2}}, {"alpha", {0.3, -0.3}}}}});
    EXPECT_EQ(echo_config(explicit_cfg), echo_config(parse_config_text(echo_config(explicit_cfg), "echo")));
    EXPECT_EQ(prior_at(explicit_cfg, "model").alpha.size(), 2);
}

TEST(Config, DottedSetCreatesTypedValues) {
    Config c = preset("gaussian-oracle", {"dmft.response_float=true", "global.out=somewhere", "simulate.design=rademacher",
                                          "landscape.critical.inits=[[0.5]]"});
    EXPECT_TRUE(dmft_config(c).response_float);
    EXPECT_EQ(c.out(), "somewhere");
    EXPECT_EQ(instance_spec(c).design, DesignLaw::rademacher);
    EXPECT_DOUBLE_EQ(critical_inits(c)[0][0], 0.5);
    EXPECT_THROW(preset("example1", {"noequals"}), ConfigError);
    EXPECT_THROW(preset("example1", {"dmft..M=3"}), ConfigError);
}

TEST(Config, MissingFileNamesPath) {
    try {
        parse_config("/nonexistent/dir/c.json");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/c.json"), std::string::npos);
    }
}

TEST(Io, NumberTextRoundTrips) {
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, 1e-17, 0.618033988749895})
        EXPECT_EQ(std::strtod(num(x).c_str(), nullptr), x);
    EXPECT_EQ(num(0.5), "0.5");
    EXPECT_EQ(num(NAN), "nan");
}

TEST(Io, KernelFilesAreByteIdenticalAndComparable) {
    KernelSet k = oracle_on_grid(10, 0.1, 1.0, 1.0, 1.0, {1.0, 1.0}, OracleMode::discrete, 50);
    fs::path a = scratch("ka"), b = scratch("kb");
    write_kernels(a, k);
    write_kernels(b, k);
    for (const std::string& f : kernel_files()) EXPECT_EQ(read_text(a / f), read_text(b / f)) << f;
    EXPECT_EQ(read_text(a / "alpha_traj.csv").substr(0, 10), "t,alpha_1\n");
    CsvTable t = read_csv(a / "C_theta.csv");
    ASSERT_EQ(t.header, (std::vector<std::string>{"i", "j", "value", "stderr"}));
    EXPECT_EQ(t.rows.size(), 66u);
    EXPECT_EQ(read_csv(a / "R_theta.csv").rows.size(), 55u);
    CompareReport same = compare_kernel_dirs(a, b);
    EXPECT_EQ(same.max_norm, 0.0);
    KernelSet k2 = k;
    k2.C_theta(4, 2) += 0.01;
    k2.C_theta(2, 4) += 0.01;
    k2.C_theta_se(4, 2) = k2.C_theta_se(2, 4) = 0.001;
    write_kernels(b, k2);
    CompareReport r = compare_kernel_dirs(a, b, 1e-9);
    EXPECT_NEAR(r.max_norm, 10.0, 1e-4);
    EXPECT_EQ(r.files[0].where, "4,2");
}

TEST(Io, ErrorsNamePath) {
    fs::path f = scratch("err") / "plain";
    write_text(f, "x");
    try {
        write_text(f / "child.csv", "y");
        FAIL();
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("child.csv"), std::string::npos);
    }
    try {
        ensure_dir(f / "sub");
        FAIL();
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("sub"), std::string::npos);
    }
    try {
        compare_kernel_dirs(scratch("empty1"), scratch("empty2"));
        FAIL();
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("empty1"), std::string::npos);
    }
}

TEST(Io, LandscapeAndTrajectoryOutputs) {
    fs::path d = scratch("land");
    LandscapeGrid g;
    g.origin = Vec::Zero(2);
    g.u1 = Vec::Unit(2, 0);
    g.u2 = Vec::Unit(2, 1);
    g.a1 = {0, 1, 2};
    g.a2 = {0, 1, 2};
    std::vector<LandscapeRow> rows{{0, 0, 1.5, 0.2, true}, {0, 1, 2.5, 0.1, true}, {1, 0, NAN, NAN, false},
                                   {1, 1, 0.5, 0.3, true}};
    write_landscape(d, rows, g, "F_plus_R");
    EXPECT_EQ(read_text(d / "landscape.csv"),
              "alpha1,alpha2,F,AT,converged\n0,0,1.5,0.2,1\n0,1,2.5,0.1,1\n1,0,nan,nan,0\n1,1,0.5,0.3,1\n");
    EXPECT_NE(read_text(d / "landscape.plt").find("landscape.csv"), std::string::npos);
    TrajectoryRecord r;
    r.time = {0, 0.1};
    r.err = {1, 0.5};
    r.sq = {1, 1};
    r.overlap = {0, 0.2};
    r.resid = {2, 1};
    r.alpha = Mat::Zero(2, 2);
    write_trajectories(d, {r});
    EXPECT_EQ(read_csv(d / "trajectory.csv").rows.size(), 2u);
    EXPECT_EQ(read_csv(d / "alpha_hat.csv").header.back(), "alpha_2");
    EXPECT_TRUE(fs::exists(d / "trajectory.plt"));
}

TEST(CheckSuite, CleanBuildPassesWithinBudget) {
    CheckReport r = run_check_suite();
    for (const CheckResult& c : r.checks) EXPECT_TRUE(c.passed) << c.name << " value " << c.value << " " << c.detail;
    EXPECT_LT(r.seconds, 30.0);
    int statistical = 0;
    for (const CheckResult& c : r.checks)
        if (c.kind == CheckKind::statistical) {
            ++statistical;
            EXPECT_DOUBLE_EQ(c.threshold, 4.0);
        }
    EXPECT_GE(statistical, 2);
    EXPECT_EQ(to_json(r)["failures"], 0);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("dmft"), 2);
    EXPECT_EQ(run_cli("--help"), 0);
    fs::path d = scratch("cli");
    write_text(d / "empty.json", "");
    EXPECT_EQ(run_cli("rs-solve --config " + (d / "empty.json").string()), 2);
    write_text(d / "e1.json", R"({"preset": "example1"})");
    EXPECT_EQ(run_cli("rs-solve --config " + (d / "e1.json").string() + " --set rs.nope=1"), 2);
    EXPECT_EQ(run_cli("rs-solve --config " + (d / "e1.json").string() + " --out " + (d / "rs").string()), 0);
    Json s = Json::parse(read_text(d / "rs" / "summary.json"));
    EXPECT_EQ(s["build_stamp"], build_stamp());
    EXPECT_EQ(s["config"]["preset"], "example1");
    EXPECT_NEAR(s["rs"]["mse"].get<double>(), (std::sqrt(5.0) - 1) / 2, 1e-8);
    EXPECT_TRUE(fs::exists(d / "rs" / "config.json"));
    EXPECT_EQ(run_cli("check"), 0);
}

TEST(Cli, DmftOracleCompareAndRerun) {
    fs::path d = scratch("pipeline");
    write_text(d / "g.json", R"({"preset": "gaussian-oracle", "dmft": {"T": 1.0, "M": 4000}})");
    std::string cfg = " --config " + (d / "g.json").string();
    ASSERT_EQ(run_cli("dmft" + cfg + " --out " + (d / "a").string()), 0);
    ASSERT_EQ(run_cli("dmft" + cfg + " --out " + (d / "b").string()), 0);
    ASSERT_EQ(run_cli("oracle" + cfg + " --out " + (d / "o").string()), 0);
    for (const std::string& f : kernel_files()) EXPECT_EQ(read_text(d / "a" / f), read_text(d / "b" / f)) << f;
    EXPECT_EQ(run_cli("compare " + (d / "a").string() + " " + (d / "o").string() + " --out " + (d / "cmp").string()), 0);
    Json c = Json::parse(read_text(d / "cmp" / "compare.json"));
    EXPECT_LE(c["max_normalized"].get<double>(), 4.0);
    EXPECT_EQ(run_cli("compare " + (d / "a").string() + " " + (d / "o").string() + " --threshold 1e-6"), 1);
    EXPECT_EQ(run_cli("dmft" + cfg + " --seed 2 --out " + (d / "c").string()), 0);
    EXPECT_NE(read_text(d / "a" / "C_theta.csv"), read_text(d / "c" / "C_theta.csv"));
    Json s = Json::parse(read_text(d / "c" / "summary.json"));
    EXPECT_EQ(s["seed"], 2);
    EXPECT_TRUE(s["validation"]["identities_ok"].get<bool>());
    EXPECT_EQ(Json::parse(read_text(d / "o" / "summary.json"))["convention"], "discrete_step");
}

TEST(Cli, LandscapeAndSimulateOutputs) {
    fs::path d = scratch("outputs");
    write_text(d / "f.json", R"({"preset": "figure1", "landscape": {"a1": {"count": 5}, "a2": {"count": 4}}})");
    ASSERT_EQ(run_cli("landscape --config " + (d / "f.json").string() + " --out " + (d / "l").string()), 0);
    EXPECT_EQ(read_csv(d / "l" / "landscape.csv").rows.size(), 20u);
    EXPECT_TRUE(fs::exists(d / "l" / "landscape.plt"));
    EXPECT_EQ(Json::parse(read_text(d / "l" / "critical_points.json")).size(), 2u);
    write_text(d / "s.json",
               R"({"preset": "gaussian-oracle", "simulate": {"d": 200, "T": 2.0, "checkpoints": [0, 1]}})");
    std::string cfg = " --config " + (d / "s.json").string();
    ASSERT_EQ(run_cli("simulate" + cfg + " --out " + (d / "s1").string()), 0);
    ASSERT_EQ(run_cli("simulate" + cfg + " --out " + (d / "s2").string()), 0);
    for (const char* f : {"trajectory.csv", "alpha_hat.csv", "kernels_empirical.csv"})
        EXPECT_EQ(read_text(d / "s1" / f), read_text(d / "s2" / f)) << f;
    EXPECT_TRUE(fs::exists(d / "s1" / "trajectory.plt"));
    Json s = Json::parse(read_text(d / "s1" / "summary.json"));
    EXPECT_EQ(s["instance"]["n"], 200);
    EXPECT_TRUE(s.contains("posterior"));
}

TEST(Config, ShippedConfigsParse) {
    int seen = 0;
    for (const auto& e : fs::directory_iterator(DMFTEB_CONFIG_DIR)) {
        if (e.path().extension() != ".json") continue;
        ++seen;
        Config c = parse_config(e.path());
        EXPECT_NO_THROW(validate_config(c)) << e.path();
        EXPECT_EQ(echo_config(c), echo_config(parse_config_text(echo_config(c), "echo"))) << e.path();
    }
    EXPECT_GE(seen, 6);
}
