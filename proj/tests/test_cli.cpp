#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(REPBC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("repbc_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const char* kTiny = R"({"env": {"duplication": 1}, "data": {"N": 6, "M": 60},
  "repr": {"k": 3, "d": 16, "steps": 10, "batch_size": 8}, "bc": {"steps": 10, "hidden_units": 4},
  "methods": ["vanilla", "fourier"], "replications": 1})";

}  // namespace

TEST(Cli, ConfigErrorsExitOne) {
    const auto dir = scratch("bad");
    write_file(dir / "bad.json", R"({"repr": {"k": 0}})");
    EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string() + " --out " + dir.string()), 1);
    EXPECT_EQ(run_cli("run --config " + (dir / "missing.json").string()), 1);
    write_file(dir / "broken.json", "{not json");
    EXPECT_EQ(run_cli("gen-env --config " + (dir / "broken.json").string()), 1);
    EXPECT_EQ(run_cli("no-such-command"), 1);
    EXPECT_EQ(run_cli("figures --figure fig9 --out " + dir.string()), 1);
}

TEST(Cli, FailedAssertionExitsTwo) {
    // A handful of steps cannot give fourier a 0.1 gain over vanilla.
    const auto dir = scratch("assert");
    write_file(dir / "tiny.json", kTiny);
    EXPECT_EQ(run_cli("run --config " + (dir / "tiny.json").string() + " --out " + dir.string() + " --assert"), 2);
    EXPECT_TRUE(fs::exists(dir / "results.csv"));
    EXPECT_TRUE(fs::exists(dir / "run_metadata.json"));
    EXPECT_FALSE(fs::is_empty(dir / "bound_reports"));
}

TEST(Cli, PipelineSubcommands) {
    const auto dir = scratch("pipeline");
    write_file(dir / "tiny.json", kTiny);
    const std::string common = " --config " + (dir / "tiny.json").string() + " --out " + dir.string() + " --seed 5";
    EXPECT_EQ(run_cli("gen-env" + common), 0);
    EXPECT_EQ(run_cli("gen-data" + common), 0);
    EXPECT_EQ(run_cli("train-repr --method fourier" + common), 0);
    EXPECT_EQ(run_cli("train-bc --method fourier" + common), 0);
    EXPECT_TRUE(fs::exists(dir / "env.json"));
    EXPECT_TRUE(fs::exists(dir / "offline.csv"));
    EXPECT_TRUE(fs::exists(dir / "demos.json"));
    EXPECT_TRUE(fs::exists(dir / "representation_fourier.json"));
    EXPECT_TRUE(fs::exists(dir / "policy_fourier.json"));
    EXPECT_TRUE(fs::exists(dir / "bc_log_fourier.csv"));
    EXPECT_EQ(run_cli("run" + common), 0);
    EXPECT_EQ(run_cli("figures --results " + (dir / "results.csv").string() + " --figure fig2 --out " + dir.string()), 0);
    EXPECT_TRUE(fs::exists(dir / "figures" / "fig2.csv"));
}

TEST(Cli, CounterexampleAssertPasses) {
    const auto dir = scratch("ce");
    write_file(dir / "ce.json", R"({"env": {"type": "counterexample"}})");
    EXPECT_EQ(run_cli("run --assert --config " + (dir / "ce.json").string() + " --out " + dir.string()), 0);
    EXPECT_TRUE(fs::exists(dir / "bound_reports" / "counterexample.json"));
}
