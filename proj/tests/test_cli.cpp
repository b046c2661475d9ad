#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_support.hpp"

namespace fs = std::filesystem;

namespace {

const char* kCli = AUTOOD_CLI_PATH;

int run_cli(const std::string& args, const fs::path& capture) {
    std::string cmd = std::string(kCli) + " " + args + " > " + capture.string() + " 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void write_tiny_config(const fs::path& path, const fs::path& out_dir, int seed) {
    std::ofstream os(path);
    os << R"({
  "dataset": {"family": "blobs", "n": 240, "shape": [1, 10, 10], "seed": 5},
  "layers_n": 1, "epochs": 2, "children_per_step": 2, "candidates_m": 2, "top_k": 1,
  "sil_batch": 1, "child_budget_steps": 4, "child_batch": 8, "hidden": 10, "embed": 8,
  "eval_max_samples": 24, "baseline_decay": 0.5, "seed": )"
       << seed << R"(, "out_dir": ")" << out_dir.string() << R"("})" << "\n";
}

}  // namespace

TEST_CASE("cli: unknown flags and missing subcommands exit with 2") {
    auto dir = testsup::scratch_dir("cli_usage");
    CHECK(run_cli("", dir / "o1.txt") == 2);
    CHECK(run_cli("search --no-such-flag", dir / "o2.txt") == 2);
    CHECK(slurp(dir / "o2.txt").find("--no-such-flag") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("cli: search twice with one seed produces identical logs" *
          doctest::timeout(600)) {
    auto dir = testsup::scratch_dir("cli_det");
    write_tiny_config(dir / "c.json", dir / "out_a", 7);
    REQUIRE(run_cli("search --config " + (dir / "c.json").string(), dir / "a.txt") == 0);
    REQUIRE(run_cli("search --config " + (dir / "c.json").string() + " --out " +
                        (dir / "out_b").string(),
                    dir / "b.txt") == 0);
    std::string log_a = slurp(dir / "out_a" / "searchlog.jsonl");
    std::string log_b = slurp(dir / "out_b" / "searchlog.jsonl");
    CHECK(log_a == log_b);
    CHECK(!log_a.empty());

    // artifacts and the config echo exist
    CHECK(fs::exists(dir / "out_a" / "summary.csv"));
    CHECK(fs::exists(dir / "out_a" / "top5.json"));
    CHECK(fs::exists(dir / "out_a" / "config.json"));
    CHECK(fs::exists(dir / "out_a" / "checkpoints" / "store.aodt"));
    CHECK(fs::exists(dir / "out_a" / "checkpoints" / "controller.aodt"));
    fs::remove_all(dir);
}

TEST_CASE("cli: report emits one aggregate row per 20 epochs" * doctest::timeout(120)) {
    auto dir = testsup::scratch_dir("cli_report");
    fs::create_directories(dir / "out");
    {
        // synthetic 40-epoch log
        std::ofstream os(dir / "out" / "searchlog.jsonl");
        for (int epoch = 0; epoch < 40; ++epoch) {
            os << R"({"step":)" << epoch << R"(,"epoch":)" << epoch
               << R"(,"phase":"random","actions":[0,0,0,0,0,0,0,0],"raw_reward":0.5,)"
               << R"("kl_bonus":0.0,"shaped_reward":0.5,"baseline":0.0,)"
               << R"("buffer_event":"none","child_train_loss":1.0,"child_train_steps":4})"
               << "\n";
        }
    }
    REQUIRE(run_cli("report --log " + (dir / "out").string(), dir / "r.txt") == 0);
    std::string summary = slurp(dir / "out" / "summary.csv");
    int rows = static_cast<int>(std::count(summary.begin(), summary.end(), '\n')) - 1;
    CHECK(rows == 2);
    CHECK(slurp(dir / "r.txt").find("rank,reward") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("cli: train-one builds and trains the published MNIST architecture" *
          doctest::timeout(600)) {
    auto dir = testsup::scratch_dir("cli_trainone");
    // 3-layer published spec; 16x16 inputs survive its pooling schedule
    {
        std::ofstream os(dir / "spec.json");
        os << R"({
  "hypothesis": "reconstruction", "distance": "l1",
  "layers": [
    {"out_channels": 32, "conv_kernel": 5, "pool_type": "average", "pool_kernel": 1,
     "norm": "none", "activation": "relu"},
    {"out_channels": 8, "conv_kernel": 3, "pool_type": "average", "pool_kernel": 1,
     "norm": "none", "activation": "elu"},
    {"out_channels": 8, "conv_kernel": 7, "pool_type": "average", "pool_kernel": 5,
     "norm": "none", "activation": "relu6"}
  ]})" << "\n";
    }
    {
        std::ofstream os(dir / "c.json");
        os << R"({
  "dataset": {"family": "blobs", "n": 120, "shape": [1, 16, 16], "seed": 3},
  "layers_n": 3, "child_budget_steps": 2, "child_batch": 8, "seed": 5,
  "out_dir": ")" << (dir / "out").string() << R"("})" << "\n";
    }
    REQUIRE(run_cli("train-one --config " + (dir / "c.json").string() + " --spec " +
                        (dir / "spec.json").string(),
                    dir / "t.txt") == 0);
    CHECK(fs::exists(dir / "out" / "model" / "spec.json"));
    CHECK(fs::exists(dir / "out" / "model" / "weights.aodt"));

    // and evaluate reads the checkpoint back
    REQUIRE(run_cli("evaluate --config " + (dir / "c.json").string() + " --checkpoint " +
                        (dir / "out" / "model").string() + " --split test",
                    dir / "e.txt") == 0);
    CHECK(slurp(dir / "e.txt").find("auroc") != std::string::npos);
    CHECK(fs::exists(dir / "out" / "metrics_test.csv"));
    fs::remove_all(dir);
}

TEST_CASE("cli: nothing is written outside the output directory" * doctest::timeout(300)) {
    auto dir = testsup::scratch_dir("cli_isolation");
    auto cwd = fs::current_path();
    fs::create_directories(dir / "work");
    fs::current_path(dir / "work");
    write_tiny_config(dir / "c.json", dir / "out", 3);
    REQUIRE(run_cli("search --config " + (dir / "c.json").string(), dir / "s.txt") == 0);
    // the working directory stays untouched
    CHECK(fs::is_empty(dir / "work"));
    fs::current_path(cwd);
    fs::remove_all(dir);
}

TEST_CASE("cli: AUTOOD_OUT overrides the configured output directory" *
          doctest::timeout(300)) {
    auto dir = testsup::scratch_dir("cli_env");
    write_tiny_config(dir / "c.json", dir / "ignored", 3);
    setenv("AUTOOD_OUT", (dir / "env_out").string().c_str(), 1);
    int rc = run_cli("search --config " + (dir / "c.json").string(), dir / "s.txt");
    unsetenv("AUTOOD_OUT");
    REQUIRE(rc == 0);
    CHECK(fs::exists(dir / "env_out" / "searchlog.jsonl"));
    CHECK_FALSE(fs::exists(dir / "ignored"));
    fs::remove_all(dir);
}
