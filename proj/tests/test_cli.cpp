#include <gtest/gtest.h>

#include "spikeglm/cli.hpp"
#include "spikeglm/io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace spikeglm;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = run_command(args, out, err);
    return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path()
               / ("spikeglm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string write(const std::string& name, const std::string& content) const
    {
        std::ofstream(dir_ / name) << content;
        return (dir_ / name).string();
    }

    std::string single_config() const
    {
        return write("single.json", R"({"model": "single", "tau_k": 8, "tau_h": 4,
            "simulation": {"num_bins": 5000, "seed": 3, "rate_hz": 40}})");
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrors)
{
    EXPECT_EQ(run({}).code, kExitUsage);
    EXPECT_EQ(run({"frobnicate", "--config", "x.json"}).code, kExitUsage);
    EXPECT_EQ(run({"fit"}).code, kExitUsage);
    EXPECT_EQ(run({"fit", "--config", (dir_ / "missing.json").string()}).code, kExitUsage);
    const auto bad = write("bad.json", R"({"model": "single", "colour": 3})");
    const auto r = run({"fit", "--config", bad});
    EXPECT_EQ(r.code, kExitUsage);
    EXPECT_NE(r.err.find("colour"), std::string::npos);
    EXPECT_EQ(run({"fit", "--config", single_config(), "--model", "quad"}).code, kExitUsage);
    EXPECT_EQ(run({"--help"}).code, kExitSuccess);
}

TEST_F(Cli, CheckGradPasses)
{
    const auto r = run({"check-grad", "--config", single_config()});
    EXPECT_EQ(r.code, kExitSuccess) << r.err;
    const auto at = r.out.find("max relative error: ");
    ASSERT_NE(at, std::string::npos);
    EXPECT_LT(std::stod(r.out.substr(at + 20)), 1e-6);
}

TEST_F(Cli, SimulateThenFitFromFiles)
{
    const auto cfg = single_config();
    const auto out_dir = (dir_ / "sim").string();
    ASSERT_EQ(run({"simulate", "--config", cfg, "--out", out_dir}).code, kExitSuccess);
    ASSERT_TRUE(fs::exists(dir_ / "sim" / "stimulus.txt"));
    ASSERT_TRUE(fs::exists(dir_ / "sim" / "spikes.txt"));
    ASSERT_TRUE(fs::exists(dir_ / "sim" / "truth.json"));

    const auto from_files = write("files.json", R"({"model": "single", "tau_k": 8, "tau_h": 4,
        "paths": {"stimulus": "sim/stimulus.txt", "spikes": ["sim/spikes.txt"], "report": "report.json"}})");
    const auto r = run({"fit", "--config", from_files});
    EXPECT_EQ(r.code, kExitSuccess) << r.err;
    const auto report = load_json(dir_ / "report.json");
    EXPECT_EQ(report["converged"], true);

    // Fitting the simulated data directly gives the same report parameters.
    const auto direct = run({"fit", "--config", cfg, "--out", (dir_ / "direct.json").string()});
    EXPECT_EQ(direct.code, kExitSuccess);
    EXPECT_EQ(load_json(dir_ / "direct.json")["params"], report["params"]);
}

TEST_F(Cli, SeedOverrideChangesData)
{
    const auto cfg = single_config();
    run({"simulate", "--config", cfg, "--out", (dir_ / "a").string()});
    run({"simulate", "--config", cfg, "--out", (dir_ / "b").string(), "--seed", "4"});
    EXPECT_FALSE(load_spike_train(dir_ / "a" / "spikes.txt") == load_spike_train(dir_ / "b" / "spikes.txt"));
}

TEST_F(Cli, OutputIsByteIdentical)
{
    const auto cfg = single_config();
    const auto a = run({"recover", "--config", cfg});
    const auto b = run({"recover", "--config", cfg});
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(a.code, b.code);
    run({"fit", "--config", cfg, "--out", (dir_ / "r1.json").string()});
    run({"fit", "--config", cfg, "--out", (dir_ / "r2.json").string()});
    std::ifstream f1(dir_ / "r1.json"), f2(dir_ / "r2.json");
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    EXPECT_EQ(s1.str(), s2.str());
}

TEST_F(Cli, DataErrors)
{
    write("spikes.txt", "delta=0.001\n0\n1\n-1\n");
    write("stim.txt", "delta=0.001\nlocations=1\n0.5\n0.1\n-0.2\n");
    const auto cfg = write("cfg.json", R"({"model": "single", "tau_k": 1, "tau_h": 1,
        "paths": {"stimulus": "stim.txt", "spikes": ["spikes.txt"]}})");
    const auto r = run({"fit", "--config", cfg});
    EXPECT_EQ(r.code, kExitData);
    EXPECT_NE(r.err.find("line 4"), std::string::npos);

    write("silent.txt", "delta=0.001\n0\n0\n0\n");
    const auto silent = write("silent.json", R"({"model": "single", "tau_k": 1, "tau_h": 1,
        "paths": {"stimulus": "stim.txt", "spikes": ["silent.txt"]}})");
    EXPECT_EQ(run({"fit", "--config", silent}).code, kExitData);

    const auto missing = write("missing.json", R"({"model": "single",
        "paths": {"stimulus": "nope.txt", "spikes": ["spikes.txt"]}})");
    EXPECT_EQ(run({"fit", "--config", missing}).code, kExitData);
}

TEST_F(Cli, NonConvergenceExitCode)
{
    const auto cfg = write("cap.json", R"({"model": "single", "tau_k": 8, "tau_h": 4, "fit": {"max_iters": 1},
        "simulation": {"num_bins": 5000, "seed": 3, "rate_hz": 40}})");
    const auto r = run({"fit", "--config", cfg, "--out", (dir_ / "r.json").string()});
    EXPECT_EQ(r.code, kExitNotConverged);
    const auto report = load_json(dir_ / "r.json");
    EXPECT_EQ(report["converged"], false);
    EXPECT_TRUE(report.contains("diagnostic"));
}

TEST_F(Cli, RecoverFailureExitCode)
{
    const auto cfg = write("strict.json", R"({"model": "single", "tau_k": 8, "tau_h": 4,
        "simulation": {"num_bins": 5000, "seed": 3, "rate_hz": 40}, "recover": {"min_correlation": 1.5}})");
    const auto r = run({"recover", "--config", cfg});
    EXPECT_EQ(r.code, kExitNotConverged);
    EXPECT_NE(r.out.find("recovery FAILED"), std::string::npos);
}

TEST_F(Cli, NetworkAndSeparableSmoke)
{
    const auto net = write("net.json", R"({"model": "network", "tau_k": 4, "tau_h": 3,
        "simulation": {"num_bins": 20000, "num_neurons": 2, "rate_hz": 40, "coupling": 1.0}})");
    auto r = run({"simulate", "--config", net, "--out", (dir_ / "net").string()});
    EXPECT_EQ(r.code, kExitSuccess);
    EXPECT_TRUE(fs::exists(dir_ / "net" / "spikes_1.txt"));
    r = run({"fit", "--config", net, "--out", (dir_ / "net.json.out").string()});
    EXPECT_EQ(r.code, kExitSuccess) << r.err;
    EXPECT_EQ(load_json(dir_ / "net.json.out")["neurons"].size(), 2u);

    const auto sep = write("sep.json", R"({"model": "separable", "tau_k": 4, "tau_h": 2,
        "simulation": {"num_bins": 20000, "num_locations": 3, "rate_hz": 40}})");
    r = run({"fit", "--config", sep, "--out", (dir_ / "sep.out").string()});
    EXPECT_EQ(r.code, kExitSuccess) << r.err;
    EXPECT_EQ(load_json(dir_ / "sep.out")["filter"].size(), 3u);
    EXPECT_EQ(run({"check-grad", "--config", sep}).code, kExitSuccess);
}
