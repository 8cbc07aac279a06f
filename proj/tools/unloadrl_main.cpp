#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "CLI11.hpp"
#include "unloadrl/container_model.hpp"
#include "unloadrl/env_suite.hpp"
#include "unloadrl/errors.hpp"
#include "unloadrl/observation.hpp"
#include "unloadrl/peq_qnet.hpp"
#include "unloadrl/pick_physics.hpp"
#include "unloadrl/workbench.hpp"

namespace fs = std::filesystem;
using namespace unloadrl;

namespace {

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  return out;
}

void close_output(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) throw IoError("write failed: " + path.string());
}

fs::path run_dir(const std::string& out, const std::string& command, std::uint64_t seed) {
  if (out.empty()) return make_run_dir(output_root(), command, seed);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out + ": " + ec.message());
  return out;
}

RunManifest start_manifest(const std::string& command, ConfigMap config, std::uint64_t seed, const fs::path& dir) {
  RunManifest m;
  m.command = command;
  m.config = std::move(config);
  m.seed = seed;
  m.version = std::string(version_string());
  m.output_dir = dir.string();
  m.started = utc_timestamp();
  return m;
}

void finish_manifest(RunManifest& m, const fs::path& dir) {
  m.finished = utc_timestamp();
  write_manifest(dir / "manifest.json", m);
}

std::shared_ptr<const SubstackCatalog> catalog() {
  static const auto cat = std::make_shared<const SubstackCatalog>(build_substack_catalog());
  return cat;
}

// ---- gen / obs

struct GenArgs {
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  RunConfig defaults;
  const ContainerState state = generate_container(defaults.env.spec, *catalog(), a.seed);
  const fs::path dir = run_dir(a.out, "gen", a.seed);
  ConfigMap cfg = resolved_config(defaults);
  cfg["seed"] = std::to_string(a.seed);
  RunManifest m = start_manifest("gen", cfg, a.seed, dir);
  {
    const auto path = dir / "container.csv";
    auto out = open_output(path);
    write_container_csv(out, state);
    close_output(out, path);
  }
  const auto graph = build_support_graph(state);
  const auto pickable = pickable_set(state, graph, defaults.env.physics);
  const auto visible = select_visible(state, defaults.env.viewer);
  int visible_pickable = 0;
  for (int id : visible) {
    if (std::binary_search(pickable.begin(), pickable.end(), id)) ++visible_pickable;
  }
  const int count = state.live_count();
  std::printf("items %d pickable %zu pickable_fraction %.4f observed_pickable %d/%zu\n", count, pickable.size(),
              static_cast<double>(pickable.size()) / count, visible_pickable, visible.size());
  finish_manifest(m, dir);
  return kExitOk;
}

struct ObsArgs {
  std::uint64_t seed = 0;
  int picks = 0;
  std::string out;
};

int cmd_obs(const ObsArgs& a) {
  if (a.picks < 0) throw ConfigError("picks: must be >= 0");
  RunConfig defaults;
  UnloadEnv env(defaults.env, catalog());
  env.reset(a.seed);
  // Unload by uniformly random successful picks to show later stages.
  Rng rng = derive_rng(a.seed, 1);
  for (int i = 0; i < a.picks && !env.done(); ++i) {
    const auto rows = env.pickable_rows();
    if (rows.empty()) break;
    std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
    env.step(rows[pick(rng)]);
  }
  const fs::path dir = run_dir(a.out, "obs", a.seed);
  ConfigMap cfg = resolved_config(defaults);
  cfg["seed"] = std::to_string(a.seed);
  cfg["picks"] = std::to_string(a.picks);
  RunManifest m = start_manifest("obs", cfg, a.seed, dir);
  const auto path = dir / "observation.csv";
  auto out = open_output(path);
  write_observation_csv(out, env.state(), env.observation().item_ids);
  close_output(out, path);
  std::printf("live %d observed %zu pickable_rows %zu\n", env.state().live_count(),
              env.observation().item_ids.size(), env.pickable_rows().size());
  finish_manifest(m, dir);
  return kExitOk;
}

// ---- tune

struct TuneArgs {
  std::vector<double> learning_rates{1e-1, 1e-2, 1e-3};
  std::vector<int> batch_sizes{64, 256, 1024, 2048};
  long steps = 3000;
  int repeats = 10;
  std::uint64_t seed = 0;
  bool no_fe = false;
  int workers = 0;
  std::string out;
};

std::string join(const auto& values) {
  std::string s;
  for (const auto& v : values) {
    if (!s.empty()) s += ' ';
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) {
      s += format_double(v);
    } else {
      s += std::to_string(v);
    }
  }
  return s;
}

int cmd_tune(const TuneArgs& a) {
  if (a.repeats < 1) throw ConfigError("repeats: must be >= 1");
  if (a.learning_rates.empty() || a.batch_sizes.empty()) throw ConfigError("grid: empty");
  RunConfig base = tuning_run_config(a.learning_rates.front(), a.batch_sizes.front(), a.steps, a.seed, !a.no_fe);
  base.workers = a.workers;
  base.validate();
  const fs::path dir = run_dir(a.out, "tune", a.seed);
  ConfigMap cfg = resolved_config(base);
  cfg["grid_learning_rates"] = join(a.learning_rates);
  cfg["grid_batch_sizes"] = join(a.batch_sizes);
  cfg["repeats"] = std::to_string(a.repeats);
  cfg.erase("learning_rate");
  cfg.erase("batch_size");
  RunManifest m = start_manifest("tune", cfg, a.seed, dir);
  fs::create_directories(dir / "curves");

  const auto summary_path = dir / "summary.csv";
  auto summary = open_output(summary_path);
  summary << "learning_rate,batch_size,repeats,msr_mean,msr_min,msr_max,runs_msr_at_least_0.9\n";
  for (double lr : a.learning_rates) {
    for (int b : a.batch_sizes) {
      const std::string name = "lr" + format_double(lr) + "_b" + std::to_string(b);
      fs::create_directories(dir / "curves" / name);
      std::vector<CurveRow> mean_curve;
      double msr_sum = 0.0;
      double msr_min = 1.0;
      double msr_max = 0.0;
      int good = 0;
      for (int r = 0; r < a.repeats; ++r) {
        RunConfig c = base;
        c.train.learning_rate = lr;
        c.train.batch_size = b;
        c.train.seed = a.seed + static_cast<std::uint64_t>(r);
        const auto result = run_training(c, catalog());
        const auto path = dir / "curves" / name / ("repeat_" + std::to_string(r) + ".csv");
        auto out = open_output(path);
        write_curves_csv(out, result.curves);
        close_output(out, path);
        if (mean_curve.empty()) {
          mean_curve.assign(result.curves.size(), CurveRow{});
          for (std::size_t i = 0; i < mean_curve.size(); ++i) {
            mean_curve[i].step = result.curves[i].step;
            mean_curve[i].epsilon = result.curves[i].epsilon;
          }
        }
        for (std::size_t i = 0; i < mean_curve.size(); ++i) {
          mean_curve[i].batch_loss += result.curves[i].batch_loss / a.repeats;
          mean_curve[i].mean_reward_window += result.curves[i].mean_reward_window / a.repeats;
          mean_curve[i].msr_window += result.curves[i].msr_window / a.repeats;
        }
        msr_sum += result.final_msr;
        msr_min = std::min(msr_min, result.final_msr);
        msr_max = std::max(msr_max, result.final_msr);
        if (result.final_msr >= 0.9) ++good;
        std::printf("lr %s b %d repeat %d final_msr %.4f\n", format_double(lr).c_str(), b, r, result.final_msr);
        std::fflush(stdout);
      }
      const auto path = dir / "curves" / (name + ".csv");
      auto out = open_output(path);
      write_curves_csv(out, mean_curve);
      close_output(out, path);
      summary << format_double(lr) << ',' << b << ',' << a.repeats << ',' << msr_sum / a.repeats << ',' << msr_min
              << ',' << msr_max << ',' << good << '\n';
    }
  }
  close_output(summary, summary_path);
  finish_manifest(m, dir);
  std::printf("summary %s\n", summary_path.string().c_str());
  return kExitOk;
}

// ---- train

struct TrainArgs {
  std::string config_file;
  std::string manifest_file;
  std::string out;
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> options;
};

int cmd_train(const TrainArgs& a) {
  if (!a.config_file.empty() && !a.manifest_file.empty()) {
    throw ConfigError("config: give either --config or --manifest");
  }
  // Defaults < file < flags.
  ConfigMap values;
  if (!a.manifest_file.empty()) {
    const RunManifest prev = read_manifest(a.manifest_file);
    if (prev.command != "train") throw ConfigError("manifest: not a train run");
    values = prev.config;
  } else if (!a.config_file.empty()) {
    values = load_config_file(a.config_file);
  }
  for (const auto& [key, opt] : a.options) {
    if (opt->count() > 0) values[key] = a.overrides.at(key);
  }
  RunConfig config;
  apply_config(config, values);
  config.validate();

  const std::uint64_t seed = config.train.seed;
  const fs::path dir = run_dir(a.out, "train", seed);
  RunManifest m = start_manifest("train", resolved_config(config), seed, dir);
  write_manifest(dir / "manifest.json", m);
  {
    const auto path = dir / "config.txt";
    auto out = open_output(path);
    write_config(out, config);
    close_output(out, path);
  }
  if (config.checkpoint_interval > 0) fs::create_directories(dir / "checkpoints");
  const int items = config.network.item_count;
  const auto on_checkpoint = [&](long step, const QNetworkParams& params) {
    fs::path path = dir / "checkpoint.txt";
    if (step != config.train.total_steps) {
      char name[64];
      std::snprintf(name, sizeof name, "step_%09ld.txt", step);
      path = dir / "checkpoints" / name;
    }
    auto out = open_output(path);
    save_checkpoint(out, params, items);
    close_output(out, path);
  };
  const auto t0 = std::chrono::steady_clock::now();
  const long total = config.train.total_steps;
  const long report_every = std::max<long>(1, total / 100);
  long next_report = report_every;
  const auto on_log = [&](const CurveRow& row) {
    if (row.step < next_report && row.step != total) return;
    while (next_report <= row.step) next_report += report_every;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "step %ld/%ld eps %.3f loss %.5f msr %.4f elapsed %.0fs\n", row.step, total, row.epsilon,
                 row.batch_loss, row.msr_window, secs);
  };
  const auto result = run_training(config, catalog(), on_checkpoint, on_log);
  {
    const auto path = dir / "curves.csv";
    auto out = open_output(path);
    write_curves_csv(out, result.curves);
    close_output(out, path);
  }
  finish_manifest(m, dir);
  std::printf("final_msr %.4f final_mean_reward %.4f dir %s\n", result.final_msr, result.final_mean_reward,
              dir.string().c_str());
  return kExitOk;
}

// ---- eval

struct EvalArgs {
  std::string checkpoint;
  std::string config_file;
  int episodes = 10;
  bool unmasked = false;
  std::vector<std::string> baselines;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  if (a.checkpoint.empty() && a.baselines.empty()) {
    throw ConfigError("checkpoint: required unless a --baseline is given");
  }
  RunConfig config;
  if (!a.config_file.empty()) apply_config(config, load_config_file(a.config_file));
  config.env.validate();

  std::vector<std::pair<std::string, PolicyKind>> policies;
  std::optional<Checkpoint> ckpt;
  if (!a.checkpoint.empty()) {
    std::ifstream in(a.checkpoint);
    if (!in) throw IoError("cannot read checkpoint " + a.checkpoint);
    ckpt = load_checkpoint(in);
    if (ckpt->item_count != config.env.viewer.visible_count) {
      throw ShapeMismatch("checkpoint item_count does not match the observation size");
    }
    policies.emplace_back("network", PolicyKind::Network);
  }
  for (const auto& b : a.baselines) {
    if (b == "random") {
      policies.emplace_back("random", PolicyKind::Random);
    } else if (b == "oracle") {
      policies.emplace_back("oracle", PolicyKind::Oracle);
    } else {
      throw ConfigError("baseline: expected random or oracle, got '" + b + "'");
    }
  }

  const fs::path dir = run_dir(a.out, "eval", a.seed);
  ConfigMap cfg = resolved_config(config);
  cfg["seed"] = std::to_string(a.seed);
  cfg["episodes"] = std::to_string(a.episodes);
  cfg["masked"] = a.unmasked ? "false" : "true";
  cfg["checkpoint"] = a.checkpoint;
  RunManifest m = start_manifest("eval", cfg, a.seed, dir);

  bool livelock = false;
  for (const auto& [name, kind] : policies) {
    EvalConfig ec;
    ec.policy = kind;
    ec.masked = !a.unmasked;
    ec.episodes = a.episodes;
    ec.seed = a.seed;
    const auto report = evaluate(ckpt ? &ckpt->params : nullptr, config.env, catalog(), ec);
    {
      const auto path = dir / ("eval_" + name + ".csv");
      auto out = open_output(path);
      write_eval_csv(out, report);
      close_output(out, path);
    }
    {
      const auto path = dir / ("attempts_" + name + ".csv");
      auto out = open_output(path);
      out << "attempts,count\n";
      for (const auto& [attempts, count] : report.attempts_per_success) out << attempts << ',' << count << '\n';
      close_output(out, path);
    }
    std::printf("policy %s masked %s episodes %d msr %.4f livelock %s\n", name.c_str(), a.unmasked ? "no" : "yes",
                a.episodes, report.msr, report.livelock ? "yes" : "no");
    if (report.livelock) {
      livelock = true;
      std::fprintf(stderr, "%s", report.diagnostics.c_str());
    }
  }
  finish_manifest(m, dir);
  return livelock ? kExitLivelock : kExitOk;
}

// ---- plot / gradcheck

struct PlotArgs {
  std::string csv;
  std::string kind = "msr";
  std::string out;
  std::string title;
};

int cmd_plot(const PlotArgs& a) {
  const PlotKind kind = parse_plot_kind(a.kind);
  const CsvTable table = read_csv_file(a.csv);
  fs::path path = a.out.empty() ? fs::path(a.csv).replace_extension(".svg") : fs::path(a.out);
  auto out = open_output(path);
  plot_svg(out, table, kind, a.title.empty() ? fs::path(a.csv).filename().string() : a.title);
  close_output(out, path);
  std::printf("wrote %s\n", path.string().c_str());
  return kExitOk;
}

struct GradArgs {
  int pairs = 20;
  std::uint64_t seed = 0;
  int n_features = 32;
  int items = 128;
  double tolerance = 1e-5;
};

int cmd_gradcheck(const GradArgs& a) {
  const auto report = gradcheck_suite(a.pairs, a.seed, a.n_features, a.items);
  for (std::size_t i = 0; i < report.errors.size(); ++i) {
    std::printf("pair %zu max_rel_error %.3e\n", i, report.errors[i]);
  }
  const bool ok = report.max_error < a.tolerance;
  const bool control = report.corrupted_error >= a.tolerance;
  std::printf("max_rel_error %.3e (%s), corrupted gradient error %.3e (%s)\n", report.max_error,
              ok ? "ok" : "too large", report.corrupted_error, control ? "detected" : "missed");
  std::printf("inputs redrawn near a kink: %d\n", report.rejected_inputs);
  return ok && control ? kExitOk : kExitOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Container unloading reinforcement-learning workbench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version_string()));

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "Generate a container and write its item table");
  gen->add_option("--seed", gen_args.seed, "Container seed");
  gen->add_option("--out", gen_args.out, "Run directory (default: a fresh one under the output root)");

  ObsArgs obs_args;
  auto* obs = app.add_subcommand("obs", "Write the observation of a generated container");
  obs->add_option("--seed", obs_args.seed, "Container seed");
  obs->add_option("--picks", obs_args.picks, "Random successful picks before the dump");
  obs->add_option("--out", obs_args.out, "Run directory");

  TuneArgs tune_args;
  auto* tune = app.add_subcommand("tune", "Learning-rate and batch-size sweep on the tuning env");
  tune->add_option("--lr", tune_args.learning_rates, "Learning rates")->capture_default_str();
  tune->add_option("--batch", tune_args.batch_sizes, "Batch sizes")->capture_default_str();
  tune->add_option("--steps", tune_args.steps, "Training steps per run")->capture_default_str();
  tune->add_option("--repeats", tune_args.repeats, "Runs per grid point; repeat r uses seed + r")->capture_default_str();
  tune->add_option("--seed", tune_args.seed, "Base seed");
  tune->add_flag("--no-fe", tune_args.no_fe, "Disable histogram equalization");
  tune->add_option("--workers", tune_args.workers, "Threads (0: all cores)");
  tune->add_option("--out", tune_args.out, "Run directory");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train on the unloading env");
  train->add_option("--config", train_args.config_file, "Flat key = value settings file");
  train->add_option("--manifest", train_args.manifest_file, "Repeat the run described by a manifest.json");
  train->add_option("--out", train_args.out, "Run directory");
  for (const auto& key : config_keys()) {
    train_args.options[key] = train->add_option("--" + key, train_args.overrides[key], config_help(key));
  }

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and/or baselines");
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file");
  eval->add_option("--config", eval_args.config_file, "Settings file for the environment");
  eval->add_option("--episodes", eval_args.episodes, "Episodes per policy")->capture_default_str();
  eval->add_flag("--unmasked,!--masked", eval_args.unmasked, "Disable action masking (default: masked)");
  eval->add_option("--baseline", eval_args.baselines, "random or oracle; may be repeated");
  eval->add_option("--seed", eval_args.seed, "Evaluation seed");
  eval->add_option("--out", eval_args.out, "Run directory");

  PlotArgs plot_args;
  auto* plot = app.add_subcommand("plot", "Render a CSV as SVG");
  plot->add_option("csv", plot_args.csv, "Curves, observation or container CSV")->required();
  plot->add_option("--kind", plot_args.kind, "loss, msr, reward or scatter")->capture_default_str();
  plot->add_option("--out", plot_args.out, "SVG path (default: CSV path with .svg)");
  plot->add_option("--title", plot_args.title, "Plot title");

  GradArgs grad_args;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the network gradient");
  grad->add_option("--pairs", grad_args.pairs, "Random (params, input) pairs")->capture_default_str();
  grad->add_option("--seed", grad_args.seed, "Seed");
  grad->add_option("--n-features", grad_args.n_features, "Feature channels")->capture_default_str();
  grad->add_option("--items", grad_args.items, "Rows per input")->capture_default_str();
  grad->add_option("--tolerance", grad_args.tolerance, "Maximum relative error")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_args);
    if (obs->parsed()) return cmd_obs(obs_args);
    if (tune->parsed()) return cmd_tune(tune_args);
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (plot->parsed()) return cmd_plot(plot_args);
    if (grad->parsed()) return cmd_gradcheck(grad_args);
  } catch (const AllMasked& e) {
    std::fprintf(stderr, "error: evaluation failed: %s\n", e.what());
    return kExitOther;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  }
  return kExitOther;
}
