#include "doctest.h"

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;  // stdout and stderr
};

// Runs the CLI from `cwd` and captures its combined output.
Result run(const std::string& args, const fs::path& cwd, const std::string& env = "") {
  const std::string cmd = "cd '" + cwd.string() + "' && " + env + " '" FEI_CLI_PATH "' " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fei_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A config small enough to train in well under a second.
fs::path write_tiny_config(const fs::path& dir, const std::string& kind = "fei") {
  const auto path = dir / "tiny.toml";
  std::ofstream(path) << "[data]\nsize = 16\ntrain_ids = \"1-2\"\ntest_ids = \"3-4\"\n"
                      << "[physics]\nangles = 6\nscale = 0.3\n"
                      << "[model]\narch = \"small_cnn\"\nwidth = 4\nzero_last = true\n"
                      << "[trainer]\nkind = \"" << kind << "\"\n"
                      << "[optim]\nepochs = 2\n"
                      << "[output]\ndir = \"out\"\nrun_id = \"r\"\n";
  return path;
}

std::vector<std::string> listing(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

TEST_CASE("cli: train writes a complete run directory and nothing else") {
  const auto dir = scratch("train");
  write_tiny_config(dir);
  const auto r = run("train -c tiny.toml --override optim.epochs=1", dir);
  INFO(r.output);
  REQUIRE(r.code == 0);
  CHECK(listing(dir) == std::vector<std::string>{"out", "tiny.toml"});
  const auto run_dir = dir / "out" / "r";
  for (const char* f : {"config.snapshot", "metrics.csv", "timing.csv", "checkpoint.ckpt",
                        "summary.csv", "curves_iter.png", "curves_time.png"}) {
    CHECK_MESSAGE(fs::exists(run_dir / f), f);
  }
  std::ifstream snap(run_dir / "config.snapshot");
  std::stringstream ss;
  ss << snap.rdbuf();
  CHECK(ss.str().find("epochs = 1\n") != std::string::npos);
  CHECK(r.output.find("fbp test") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cli: error exit codes") {
  const auto dir = scratch("errors");
  write_tiny_config(dir);
  {
    const auto r = run("train -c /no/such/config.toml", dir);
    CHECK(r.code != 0);
    CHECK(r.output.find("/no/such/config.toml") != std::string::npos);
  }
  {
    const auto r = run("train -c tiny.toml -o nag.beta=2", dir);
    CHECK(r.code == 2);
    CHECK(r.output.find("nag.beta") != std::string::npos);
  }
  {
    const auto r = run("train -c tiny.toml -o no.such.key=1", dir);
    CHECK(r.code == 2);
  }
  {
    const auto r = run("frobnicate", dir);
    CHECK(r.code == 2);
  }
  {
    const auto r = run("train -c tiny.toml -o nag.eta=50 -o nag.J=400", dir);
    CHECK(r.code == 3);
    CHECK(r.output.find("diverged") != std::string::npos);
  }
  {
    const auto r = run("train -c tiny.toml -o trainer.kind=pnp_fei -o denoiser.name=cnn_pretrained "
                       "-o denoiser.weights_path=/no/weights.ckpt", dir);
    CHECK(r.code == 2);
    CHECK(r.output.find("/no/weights.ckpt") != std::string::npos);
  }
  {
    const auto r = run("benchmark -c tiny.toml --suite ei", dir);
    CHECK(r.code == 2);
  }
  fs::remove_all(dir);
}

TEST_CASE("cli: eval on a different angle count and the FBP baseline") {
  const auto dir = scratch("eval");
  write_tiny_config(dir);
  REQUIRE(run("train -c tiny.toml", dir).code == 0);
  const auto r40 = run("eval --run out/r -o physics.angles=40 --save", dir);
  INFO(r40.output);
  CHECK(r40.code == 0);
  CHECK(r40.output.find("fei test") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "r" / "eval_test.csv"));
  const auto fbp = run("eval -c tiny.toml --fbp --split train", dir);
  CHECK(fbp.code == 0);
  CHECK(fbp.output.find("fbp train") != std::string::npos);
  const auto mismatch = run("eval --run out/r -o data.size=32", dir);
  CHECK(mismatch.code == 2);
  CHECK(run("eval -c tiny.toml", dir).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("cli: resume and output root") {
  const auto dir = scratch("resume");
  write_tiny_config(dir);
  const auto root = scratch("root");
  const auto r = run("train -c tiny.toml", dir, "FEI_OUTPUT_ROOT='" + root.string() + "'");
  INFO(r.output);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(root / "out" / "r" / "metrics.csv"));
  CHECK_FALSE(fs::exists(dir / "out"));
  const auto again = run("train -c tiny.toml -o optim.epochs=3 --resume", dir,
                         "FEI_OUTPUT_ROOT='" + root.string() + "'");
  // a different epoch count changes the config hash, so the checkpoint is refused
  CHECK(again.code == 2);
  fs::remove_all(dir);
  fs::remove_all(root);
}

TEST_CASE("cli: benchmark report") {
  const auto dir = scratch("bench");
  write_tiny_config(dir);
  const auto r = run("benchmark -c tiny.toml --suite ei,fei --name cmp", dir);
  INFO(r.output);
  REQUIRE(r.code == 0);
  for (const char* f : {"benchmark.csv", "report.txt", "curves_iter.png", "curves_time.png"}) {
    CHECK_MESSAGE(fs::exists(dir / "out" / "cmp" / f), f);
  }
  CHECK(fs::exists(dir / "out" / "cmp" / "ei" / "metrics.csv"));
  CHECK(fs::exists(dir / "out" / "cmp" / "fei" / "metrics.csv"));
  CHECK(r.output.find("speedup") != std::string::npos);
  fs::remove_all(dir);
}
