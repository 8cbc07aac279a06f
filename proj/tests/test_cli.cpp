#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "unloadrl/peq_qnet.hpp"
#include "unloadrl/workbench.hpp"

using namespace unloadrl;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "unloadrl_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Ran {
  int code = -1;
  std::string out;
};

Ran run(const std::string& args) {
  const auto log = scratch() / "last_output.txt";
  const std::string cmd = std::string("\"") + UNLOADRL_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Ran r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("gen writes the container and a manifest") {
  const auto dir = scratch() / "gen";
  const auto r = run("gen --seed 3 --out " + dir.string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("items ") != std::string::npos);
  const auto table = read_csv_file(dir / "container.csv");
  CHECK(table.rows.size() >= 800);
  CHECK(table.rows.size() <= 1000);
  const auto m = read_manifest(dir / "manifest.json");
  CHECK(m.command == "gen");
  CHECK(m.seed == 3);
  CHECK_FALSE(m.finished.empty());
}

TEST_CASE("obs and plot") {
  const auto dir = scratch() / "obs";
  REQUIRE(run("obs --seed 2 --picks 5 --out " + dir.string()).code == 0);
  const auto table = read_csv_file(dir / "observation.csv");
  CHECK(table.rows.size() == 128);
  const auto svg = dir / "scatter.svg";
  REQUIRE(run("plot " + (dir / "observation.csv").string() + " --kind scatter --out " + svg.string()).code == 0);
  CHECK(slurp(svg).find("<svg") != std::string::npos);
  // Wrong schema for a curve plot.
  CHECK(run("plot " + (dir / "observation.csv").string() + " --kind loss").code == kExitValidation);
}

TEST_CASE("eval of the oracle baseline") {
  const auto dir = scratch() / "eval_oracle";
  const auto r = run("eval --baseline oracle --episodes 1 --out " + dir.string());
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "eval_oracle.csv") == "episode,successes,failures,msr\n0,500,0,1\n");
  CHECK(slurp(dir / "attempts_oracle.csv") == "attempts,count\n1,500\n");
}

TEST_CASE("unmasked eval of a low-z network exits with the livelock code") {
  auto p = QNetworkParams::zeros(1);
  p.theta1 = {0.0, 0.0, -1.0};
  p.xi1 = {1.0};
  p.theta2 = {1.0, 0.0, 0.0, 0.0};
  const auto ckpt = scratch() / "low_z.txt";
  {
    std::ofstream out(ckpt);
    save_checkpoint(out, p, 128);
  }
  const auto r = run("eval --checkpoint " + ckpt.string() + " --unmasked --episodes 1 --out " +
                     (scratch() / "eval_live").string());
  CHECK(r.code == kExitLivelock);
  CHECK(r.out.find("livelock") != std::string::npos);
  const auto masked = run("eval --checkpoint " + ckpt.string() + " --episodes 1 --out " +
                          (scratch() / "eval_masked").string());
  CHECK(masked.code == 0);
}

TEST_CASE("gradcheck passes") {
  const auto r = run("gradcheck --pairs 2 --n-features 4 --items 16");
  CHECK(r.code == 0);
}

TEST_CASE("small training run writes its artifacts") {
  const auto dir = scratch() / "train";
  const auto r = run("train --env_kind tuning --tuning_pool_containers 1 --n_features 4 --total_steps 20 "
                     "--env_count 4 --batch_size 16 --log_interval 5 --checkpoint_interval 10 --workers 1 --out " +
                     dir.string());
  REQUIRE(r.code == 0);
  for (const char* f : {"manifest.json", "config.txt", "curves.csv", "checkpoint.txt"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / f));
  }
  CHECK(fs::exists(dir / "checkpoints" / "step_000000010.txt"));
  CHECK(read_csv_file(dir / "curves.csv").rows.size() == 4);
  const auto m = read_manifest(dir / "manifest.json");
  CHECK(m.config.at("total_steps") == "20");
  CHECK(m.config.at("n_features") == "4");
}

TEST_CASE("exit codes for bad input") {
  CHECK(run("train --no-such-flag 1").code == kExitValidation);
  CHECK(run("train --batch_size 0 --out " + (scratch() / "bad").string()).code == kExitValidation);
  CHECK(run("train --config /nonexistent/run.cfg").code == kExitIo);
  CHECK(run("plot /nonexistent/curves.csv").code == kExitIo);
  CHECK(run("eval --baseline nope").code == kExitValidation);
  CHECK(run("--version").code == 0);
}
