#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "unloadrl/errors.hpp"
#include "unloadrl/workbench.hpp"

using namespace unloadrl;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("unloadrl_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("exit codes by error kind") {
  CHECK(exit_code_for(ConfigError("x")) == kExitValidation);
  CHECK(exit_code_for(ShapeMismatch("x")) == kExitValidation);
  CHECK(exit_code_for(SchemaMismatch("x")) == kExitValidation);
  CHECK(exit_code_for(GenerationFailure("x")) == kExitGeneration);
  CHECK(exit_code_for(TooFewItems("x")) == kExitGeneration);
  CHECK(exit_code_for(IoError("x")) == kExitIo);
  CHECK(exit_code_for(std::runtime_error("x")) == kExitOther);
}

TEST_CASE("config text parsing") {
  const auto m = parse_config_text("# comment\nlearning_rate = 0.01\n\n  seed=3   # trailing\n");
  CHECK(m.size() == 2);
  CHECK(m.at("learning_rate") == "0.01");
  CHECK(m.at("seed") == "3");
  CHECK_THROWS_AS(parse_config_text("seed 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("seed = 1\nseed = 2\n"), ConfigError);
  CHECK_THROWS_AS(load_config_file("/nonexistent/run.cfg"), IoError);
}

TEST_CASE("apply and resolve config") {
  RunConfig rc;
  apply_config(rc, {{"learning_rate", "0.1"}, {"batch_size", "32"}, {"loss_kind", "mse"},
                    {"optimizer", "sgd"}, {"mask_during_training", "true"}, {"env_kind", "tuning"},
                    {"n_features", "8"}, {"fe_enabled", "false"}});
  CHECK(rc.train.learning_rate == 0.1);
  CHECK(rc.train.batch_size == 32);
  CHECK(rc.train.loss_kind == LossKind::MSE);
  CHECK(rc.train.optimizer == OptimizerKind::SGD);
  CHECK(rc.train.mask_during_training);
  CHECK(rc.env_kind == EnvKind::Tuning);
  CHECK(rc.network.n_features == 8);
  CHECK_FALSE(rc.env.viewer.fe_enabled);
  CHECK_FALSE(rc.tuning.fe_enabled);

  // Resolve and re-apply round-trips every value exactly.
  rc.train.learning_rate = 0.1 + 0.2;
  rc.tuning.jitter = 1.0 / 3.0;
  const auto resolved = resolved_config(rc);
  CHECK(resolved.size() == config_keys().size());
  RunConfig back;
  apply_config(back, resolved);
  CHECK(resolved_config(back) == resolved);
  CHECK(back.train.learning_rate == rc.train.learning_rate);
  CHECK(back.tuning.jitter == rc.tuning.jitter);

  std::ostringstream text;
  write_config(text, rc);
  CHECK(parse_config_text(text.str()) == resolved);
}

TEST_CASE("config errors name the key") {
  RunConfig rc;
  const auto message = [&](const ConfigMap& m) {
    try {
      apply_config(rc, m);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message({{"no_such_key", "1"}}).find("no_such_key") != std::string::npos);
  CHECK(message({{"batch_size", "abc"}}).find("batch_size") != std::string::npos);
  CHECK(message({{"batch_size", "99999999999999"}}).find("batch_size") != std::string::npos);
  CHECK(message({{"learning_rate", "1.0x"}}).find("learning_rate") != std::string::npos);
  CHECK(message({{"loss_kind", "huber"}}).find("loss_kind") != std::string::npos);
  CHECK(message({{"mask_during_training", "maybe"}}).find("mask_during_training") != std::string::npos);
  for (const auto& key : config_keys()) CHECK_FALSE(config_help(key).empty());
}

TEST_CASE("format_double is shortest round-trip") {
  CHECK(format_double(0.001) == "0.001");
  CHECK(format_double(0.1 + 0.2) == "0.30000000000000004");
  CHECK(format_double(200000) == "2e+05");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("manifest round trip") {
  const auto dir = scratch_dir("manifest");
  RunManifest m;
  m.command = "train";
  m.config = {{"seed", "4"}, {"learning_rate", "0.001"}};
  m.seed = 4;
  m.version = std::string(version_string());
  m.output_dir = dir.string();
  m.started = utc_timestamp();
  write_manifest(dir / "manifest.json", m);
  const auto back = read_manifest(dir / "manifest.json");
  CHECK(back.command == m.command);
  CHECK(back.config == m.config);
  CHECK(back.seed == 4);
  CHECK(back.version == m.version);
  CHECK(back.started == m.started);
  CHECK(back.finished.empty());

  std::ofstream(dir / "bad.json") << "{not json";
  CHECK_THROWS_AS(read_manifest(dir / "bad.json"), IoError);
  CHECK_THROWS_AS(read_manifest(dir / "missing.json"), IoError);
  CHECK(m.started.size() == 20);
  CHECK(m.started.back() == 'Z');
}

TEST_CASE("run directories are fresh") {
  const auto dir = scratch_dir("runs");
  const auto a = make_run_dir(dir, "train", 7);
  const auto b = make_run_dir(dir, "train", 7);
  CHECK(a != b);
  CHECK(fs::is_directory(a));
  CHECK(a.filename() == "train-seed7-001");
  CHECK(b.filename() == "train-seed7-002");
}

TEST_CASE("csv reader") {
  std::istringstream in("step,batch_loss\n1,nan\n2,\n3,0.5\n");
  const auto t = read_csv(in);
  CHECK(t.header == std::vector<std::string>{"step", "batch_loss"});
  REQUIRE(t.rows.size() == 3);
  CHECK(std::isnan(t.rows[0][1]));
  CHECK(std::isnan(t.rows[1][1]));
  CHECK(t.rows[2][1] == 0.5);
  CHECK(t.column("batch_loss") == 1);
  CHECK(t.column("msr") == -1);
  std::istringstream ragged("a,b\n1\n");
  CHECK_THROWS_AS(read_csv(ragged), SchemaMismatch);
  std::istringstream text("a\nhello\n");
  CHECK_THROWS_AS(read_csv(text), SchemaMismatch);
  CHECK_THROWS_AS(read_csv_file("/nonexistent.csv"), IoError);
}

TEST_CASE("svg plots") {
  std::istringstream in("step,epsilon,batch_loss,mean_reward_window,msr_window\n1,1,nan,-1,0\n2,0.5,0.3,0,0.5\n3,0,0.1,0.8,0.9\n");
  const auto curves = read_csv(in);
  for (auto kind : {PlotKind::Loss, PlotKind::Msr, PlotKind::Reward}) {
    std::ostringstream out;
    plot_svg(out, curves, kind, "run");
    CHECK(out.str().find("<svg") != std::string::npos);
    CHECK(out.str().find("polyline") != std::string::npos);
    CHECK(out.str().find("</svg>") != std::string::npos);
  }
  std::ostringstream out;
  CHECK_THROWS_AS(plot_svg(out, curves, PlotKind::Scatter, "x"), SchemaMismatch);
  std::istringstream obs("row,item_id,x,y,z\n0,5,0.1,0.2,0.3\n1,6,0.4,0.5,0.6\n");
  CHECK_NOTHROW(plot_svg(out, read_csv(obs), PlotKind::Scatter, "obs"));
  CHECK(parse_plot_kind("msr") == PlotKind::Msr);
  CHECK_THROWS_AS(parse_plot_kind("pie"), ConfigError);
}

TEST_CASE("tuning run settings") {
  const auto rc = tuning_run_config(1e-3, 64, 100, 5, true);
  CHECK(rc.env_kind == EnvKind::Tuning);
  CHECK(rc.train.learning_rate == 1e-3);
  CHECK(rc.train.batch_size == 64);
  CHECK(rc.train.total_steps == 100);
  CHECK(rc.train.seed == 5);
  CHECK_NOTHROW(rc.validate());
}

TEST_CASE("gradient check suite catches a corrupted gradient") {
  const auto rep = gradcheck_suite(2, 1, 4, 16);
  REQUIRE(rep.errors.size() == 2);
  CHECK(rep.max_error < 1e-4);
  CHECK(rep.corrupted_error > 1e-3);
}
