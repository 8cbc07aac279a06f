#include "unloadrl/workbench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "unloadrl/errors.hpp"

namespace unloadrl {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
      dynamic_cast<const ShapeMismatch*>(&e) || dynamic_cast<const SchemaMismatch*>(&e) ||
      dynamic_cast<const InvalidAction*>(&e)) {
    return kExitValidation;
  }
  if (dynamic_cast<const GenerationFailure*>(&e) || dynamic_cast<const TooFewItems*>(&e)) return kExitGeneration;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e)) {
    return kExitIo;
  }
  return kExitOther;
}

std::string_view version_string() { return UNLOADRL_VERSION; }

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
  return v;
}

long long parse_integer(const std::string& key, const std::string& value) {
  long long v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected an integer, got '" + value + "'");
  return v;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

std::string bool_text(bool v) { return v ? "true" : "false"; }

struct ConfigEntry {
  std::string key;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Field>
ConfigEntry double_entry(std::string key, std::string help, Field field) {
  return {key, std::move(help),
          [key, field](RunConfig& c, const std::string& v) { field(c) = parse_double(key, v); },
          [field](const RunConfig& c) { return format_double(field(c)); }};
}

template <typename Field>
ConfigEntry int_entry(std::string key, std::string help, Field field) {
  return {key, std::move(help),
          [key, field](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(field(c))>;
            const long long raw = parse_integer(key, v);
            if (raw < std::numeric_limits<T>::min() || raw > std::numeric_limits<T>::max()) {
              throw ConfigError(key + ": out of range");
            }
            field(c) = static_cast<T>(raw);
          },
          [field](const RunConfig& c) { return std::to_string(field(c)); }};
}

template <typename Field>
ConfigEntry bool_entry(std::string key, std::string help, Field field) {
  return {key, std::move(help),
          [key, field](RunConfig& c, const std::string& v) { field(c) = parse_bool(key, v); },
          [field](const RunConfig& c) { return bool_text(field(c)); }};
}

const std::vector<ConfigEntry>& entries() {
  static const std::vector<ConfigEntry> table = [] {
    std::vector<ConfigEntry> t;
    t.push_back({"env_kind", "environment: unload or tuning",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "unload") {
                     c.env_kind = EnvKind::Unload;
                   } else if (v == "tuning") {
                     c.env_kind = EnvKind::Tuning;
                   } else {
                     throw ConfigError("env_kind: expected unload or tuning, got '" + v + "'");
                   }
                 },
                 [](const RunConfig& c) { return std::string(c.env_kind == EnvKind::Unload ? "unload" : "tuning"); }});
    t.push_back(double_entry("learning_rate", "optimizer step size", [](auto& c) -> auto& {
      return c.train.learning_rate;
    }));
    t.push_back(int_entry("batch_size", "transitions per update", [](auto& c) -> auto& { return c.train.batch_size; }));
    t.push_back(int_entry("total_steps", "training rounds K", [](auto& c) -> auto& { return c.train.total_steps; }));
    t.push_back(double_entry("epsilon_init", "exploration rate at step 0",
                             [](auto& c) -> auto& { return c.train.epsilon_init; }));
    t.push_back(double_entry("epsilon_final", "exploration rate after the decay",
                             [](auto& c) -> auto& { return c.train.epsilon_final; }));
    t.push_back(int_entry("epsilon_decay_steps", "linear decay length; negative means total_steps / 2",
                          [](auto& c) -> auto& { return c.train.epsilon_decay_steps; }));
    t.push_back(double_entry("gamma", "discount", [](auto& c) -> auto& { return c.train.gamma; }));
    t.push_back(double_entry("beta", "smooth L1 transition point", [](auto& c) -> auto& { return c.train.beta; }));
    t.push_back({"loss_kind", "smooth_l1 or mse",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "smooth_l1") {
                     c.train.loss_kind = LossKind::SmoothL1;
                   } else if (v == "mse") {
                     c.train.loss_kind = LossKind::MSE;
                   } else {
                     throw ConfigError("loss_kind: expected smooth_l1 or mse, got '" + v + "'");
                   }
                 },
                 [](const RunConfig& c) {
                   return std::string(c.train.loss_kind == LossKind::SmoothL1 ? "smooth_l1" : "mse");
                 }});
    t.push_back({"buffer_capacity", "replay buffer entries",
                 [](RunConfig& c, const std::string& v) {
                   c.train.buffer_capacity = static_cast<std::size_t>(parse_unsigned("buffer_capacity", v));
                 },
                 [](const RunConfig& c) { return std::to_string(c.train.buffer_capacity); }});
    t.push_back({"optimizer", "adaptive or sgd",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "adaptive") {
                     c.train.optimizer = OptimizerKind::Adaptive;
                   } else if (v == "sgd") {
                     c.train.optimizer = OptimizerKind::SGD;
                   } else {
                     throw ConfigError("optimizer: expected adaptive or sgd, got '" + v + "'");
                   }
                 },
                 [](const RunConfig& c) {
                   return std::string(c.train.optimizer == OptimizerKind::Adaptive ? "adaptive" : "sgd");
                 }});
    t.push_back({"seed", "master seed",
                 [](RunConfig& c, const std::string& v) { c.train.seed = parse_unsigned("seed", v); },
                 [](const RunConfig& c) { return std::to_string(c.train.seed); }});
    t.push_back(int_entry("target_sync_period", "updates between target copies (gamma > 0)",
                          [](auto& c) -> auto& { return c.train.target_sync_period; }));
    t.push_back(double_entry("adam_beta1", "first moment decay", [](auto& c) -> auto& { return c.train.adam_beta1; }));
    t.push_back(double_entry("adam_beta2", "second moment decay",
                             [](auto& c) -> auto& { return c.train.adam_beta2; }));
    t.push_back(double_entry("adam_epsilon", "denominator offset",
                             [](auto& c) -> auto& { return c.train.adam_epsilon; }));
    t.push_back(bool_entry("mask_during_training", "apply action masking to the behavior policy",
                           [](auto& c) -> auto& { return c.train.mask_during_training; }));
    t.push_back(int_entry("n_features", "feature channels n", [](auto& c) -> auto& { return c.network.n_features; }));
    t.push_back({"fe_enabled", "histogram equalization of the observation",
                 [](RunConfig& c, const std::string& v) {
                   const bool on = parse_bool("fe_enabled", v);
                   c.env.viewer.fe_enabled = on;
                   c.tuning.fe_enabled = on;
                 },
                 [](const RunConfig& c) { return bool_text(c.env.viewer.fe_enabled); }});
    t.push_back(int_entry("episode_limit", "steps per episode", [](auto& c) -> auto& { return c.env.episode_limit; }));
    t.push_back(int_entry("min_items", "lower bound on the generated item count",
                          [](auto& c) -> auto& { return c.env.spec.min_items; }));
    t.push_back(int_entry("max_items", "upper bound on the generated item count",
                          [](auto& c) -> auto& { return c.env.spec.max_items; }));
    t.push_back(double_entry("agent_force", "lifting force [N]",
                             [](auto& c) -> auto& { return c.env.physics.agent_force; }));
    t.push_back(double_entry("lift_time", "lifting time [s]", [](auto& c) -> auto& { return c.env.physics.lift_time; }));
    t.push_back(double_entry("distance_threshold", "minimum lift distance of a success [m]",
                             [](auto& c) -> auto& { return c.env.physics.distance_threshold; }));
    t.push_back(double_entry("tuning_jitter", "per-axis jitter of tuning observations [m]",
                             [](auto& c) -> auto& { return c.tuning.jitter; }));
    t.push_back(bool_entry("tuning_redraw_on_failure", "draw a new tuning observation after a failure",
                           [](auto& c) -> auto& { return c.tuning.redraw_on_failure; }));
    t.push_back(int_entry("tuning_pool_containers", "containers recorded for the tuning pool",
                          [](auto& c) -> auto& { return c.tuning_pool_containers; }));
    t.push_back(int_entry("env_count", "parallel environments", [](auto& c) -> auto& { return c.env_count; }));
    t.push_back(int_entry("workers", "threads; 0 means all cores", [](auto& c) -> auto& { return c.workers; }));
    t.push_back(int_entry("log_interval", "rounds between curve rows", [](auto& c) -> auto& { return c.log_interval; }));
    t.push_back(int_entry("metrics_window", "trailing transitions in the windowed metrics",
                          [](auto& c) -> auto& { return c.metrics_window; }));
    t.push_back(int_entry("checkpoint_interval", "rounds between checkpoints; 0 writes only the final one",
                          [](auto& c) -> auto& { return c.checkpoint_interval; }));
    return t;
  }();
  return table;
}

const ConfigEntry* find_entry(std::string_view key) {
  for (const auto& e : entries()) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw DomainError("cannot format value");
  return {buf, ptr};
}

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap out;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": missing key");
    if (!out.emplace(key, value).second) throw ConfigError(key + ": given twice");
  }
  return out;
}

ConfigMap load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

std::string config_help(const std::string& key) {
  const auto* e = find_entry(key);
  if (!e) throw ConfigError(key + ": unknown setting");
  return e->help;
}

void apply_config(RunConfig& config, const ConfigMap& values) {
  for (const auto& [key, value] : values) {
    const auto* e = find_entry(key);
    if (!e) throw ConfigError(key + ": unknown setting");
    e->set(config, value);
  }
}

ConfigMap resolved_config(const RunConfig& config) {
  ConfigMap out;
  for (const auto& e : entries()) out[e.key] = e.get(config);
  return out;
}

void write_config(std::ostream& out, const RunConfig& config) {
  for (const auto& e : entries()) out << e.key << " = " << e.get(config) << '\n';
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  nlohmann::ordered_json j;
  j["command"] = manifest.command;
  j["seed"] = manifest.seed;
  j["version"] = manifest.version;
  j["output_dir"] = manifest.output_dir;
  j["started"] = manifest.started;
  j["finished"] = manifest.finished;
  j["config"] = manifest.config;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.version = j.at("version").get<std::string>();
    m.output_dir = j.value("output_dir", "");
    m.started = j.value("started", "");
    m.finished = j.value("finished", "");
    m.config = j.at("config").get<ConfigMap>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::filesystem::path output_root() {
  const char* env = std::getenv("UNLOADRL_OUTPUT_ROOT");
  if (env && *env) return env;
  return "runs";
}

std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& command,
                                   std::uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  for (int i = 1; i < 100000; ++i) {
    char name[128];
    std::snprintf(name, sizeof name, "%s-seed%llu-%03d", command.c_str(), static_cast<unsigned long long>(seed), i);
    const auto dir = root / name;
    if (std::filesystem::create_directory(dir, ec)) return dir;
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
  throw IoError("no free run directory under " + root.string());
}

int CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

namespace {

std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> cells;
  while (true) {
    const auto comma = line.find(',');
    cells.emplace_back(trim(line.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    line = line.substr(comma + 1);
  }
  return cells;
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatch("empty CSV");
  t.header = split_commas(line);
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != t.header.size()) {
      throw SchemaMismatch("line " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                           " cells");
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      if (c.empty() || c == "nan" || c == "-nan") {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (ec != std::errc() || ptr != c.data() + c.size()) {
        throw SchemaMismatch("line " + std::to_string(line_no) + ": '" + c + "' is not a number");
      }
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  return read_csv(in);
}

RunConfig tuning_run_config(double learning_rate, int batch_size, long total_steps, std::uint64_t seed,
                            bool fe_enabled) {
  RunConfig c;
  c.env_kind = EnvKind::Tuning;
  c.train.learning_rate = learning_rate;
  c.train.batch_size = batch_size;
  c.train.total_steps = total_steps;
  c.train.seed = seed;
  c.train.mask_during_training = true;
  c.env.viewer.fe_enabled = fe_enabled;
  c.tuning.fe_enabled = fe_enabled;
  c.log_interval = 10;
  return c;
}

namespace {

// Central differences move a pre-activation by at most step * (1 + |x|); keep
// every ReLU input and every pooling winner further than this from a switch.
constexpr double kKinkMargin = 1e-4;

double kink_distance(const Matrix& x, const QNetworkParams& params) {
  const std::size_t n = params.xi1.size();
  double closest = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> pre(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double acc = params.xi1[c];
      for (std::size_t j = 0; j < 3; ++j) acc += params.theta1[c * 3 + j] * x(i, j);
      pre[i] = acc;
      closest = std::min(closest, std::abs(acc));
    }
    // Pooling switches only matter among active units; clamped zeros stay zero.
    std::vector<double> active;
    for (double v : pre) {
      if (v > 0.0) active.push_back(v);
    }
    std::sort(active.begin(), active.end());
    if (active.size() >= 2) {
      closest = std::min(closest, active[active.size() - 1] - active[active.size() - 2]);
      if (active.size() == pre.size()) closest = std::min(closest, active[1] - active[0]);
    }
  }
  return closest;
}

}  // namespace

GradCheckSuiteReport gradcheck_suite(int pairs, std::uint64_t seed, int n_features, int items) {
  if (pairs < 1) throw ConfigError("pairs: must be >= 1");
  NetworkConfig net;
  net.n_features = n_features;
  net.item_count = items;
  net.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  GradCheckSuiteReport report;
  for (int p = 0; p < pairs; ++p) {
    const QNetworkParams params = init_params(net, rng());
    Matrix x(static_cast<std::size_t>(items), 3);
    for (;;) {
      for (double& v : x.values()) v = unit(rng);
      if (kink_distance(x, params) > kKinkMargin) break;
      ++report.rejected_inputs;
    }
    std::vector<double> w(static_cast<std::size_t>(items));
    for (double& v : w) v = unit(rng);
    const LossProbe probe = [&w](std::span<const double> q, std::span<double> dq) {
      double l = 0.0;
      for (std::size_t i = 0; i < q.size(); ++i) {
        l += w[i] * q[i];
        dq[i] = w[i];
      }
      return l;
    };
    const double err = grad_check(params, x, probe);
    report.errors.push_back(err);
    report.max_error = std::max(report.max_error, err);
    if (p == 0) {
      const auto fwd = forward(x, params);
      QNetworkParams analytic = backward(params, fwd.trace, w);
      std::uniform_int_distribution<std::size_t> pick(0, analytic.size() - 1);
      const std::size_t k = pick(rng);
      analytic.flat(k) = analytic.flat(k) * 1.01 + 1e-4;
      report.corrupted_error = compare_gradient(params, x, probe, analytic).max_rel_error;
    }
  }
  return report;
}

PlotKind parse_plot_kind(std::string_view name) {
  if (name == "loss") return PlotKind::Loss;
  if (name == "msr") return PlotKind::Msr;
  if (name == "reward") return PlotKind::Reward;
  if (name == "scatter") return PlotKind::Scatter;
  throw ConfigError("kind: expected loss, msr, reward or scatter, got '" + std::string(name) + "'");
}

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 440.0;

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (span / step <= 6.0) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) ticks.push_back(t);
  return ticks;
}

struct Panel {
  double left, top, width, height;
  double x_lo, x_hi, y_lo, y_hi;

  [[nodiscard]] double px(double x) const { return left + (x - x_lo) / (x_hi - x_lo) * width; }
  [[nodiscard]] double py(double y) const { return top + height - (y - y_lo) / (y_hi - y_lo) * height; }
};

void widen(double& lo, double& hi) {
  if (!(hi > lo)) {
    const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
    lo -= pad;
    hi += pad;
  }
}

void draw_axes(std::ostream& out, const Panel& p, const std::string& x_label, const std::string& y_label) {
  out << "<rect x=\"" << num(p.left) << "\" y=\"" << num(p.top) << "\" width=\"" << num(p.width) << "\" height=\""
      << num(p.height) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (double t : nice_ticks(p.x_lo, p.x_hi)) {
    const double x = p.px(t);
    out << "<line x1=\"" << num(x) << "\" y1=\"" << num(p.top + p.height) << "\" x2=\"" << num(x) << "\" y2=\""
        << num(p.top + p.height + 5) << "\" stroke=\"#333\"/>\n";
    out << "<text x=\"" << num(x) << "\" y=\"" << num(p.top + p.height + 18)
        << "\" font-size=\"11\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
  }
  for (double t : nice_ticks(p.y_lo, p.y_hi)) {
    const double y = p.py(t);
    out << "<line x1=\"" << num(p.left - 5) << "\" y1=\"" << num(y) << "\" x2=\"" << num(p.left + p.width)
        << "\" y2=\"" << num(y) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << num(p.left - 8) << "\" y=\"" << num(y + 4)
        << "\" font-size=\"11\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
  }
  out << "<text x=\"" << num(p.left + p.width / 2) << "\" y=\"" << num(p.top + p.height + 36)
      << "\" font-size=\"12\" text-anchor=\"middle\">" << escape_xml(x_label) << "</text>\n";
  out << "<text x=\"" << num(p.left - 44) << "\" y=\"" << num(p.top + p.height / 2)
      << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 " << num(p.left - 44) << ' '
      << num(p.top + p.height / 2) << ")\">" << escape_xml(y_label) << "</text>\n";
}

void plot_curve(std::ostream& out, const CsvTable& table, PlotKind kind) {
  const char* y_name = kind == PlotKind::Loss ? "batch_loss" : kind == PlotKind::Msr ? "msr_window" : "mean_reward_window";
  const int xc = table.column("step");
  const int yc = table.column(y_name);
  if (xc < 0 || yc < 0) throw SchemaMismatch(std::string("curve plot needs columns step and ") + y_name);
  double x_lo = std::numeric_limits<double>::infinity();
  double x_hi = -x_lo;
  double y_lo = x_lo;
  double y_hi = -x_lo;
  for (const auto& row : table.rows) {
    const double x = row[static_cast<std::size_t>(xc)];
    const double y = row[static_cast<std::size_t>(yc)];
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    x_lo = std::min(x_lo, x);
    x_hi = std::max(x_hi, x);
    y_lo = std::min(y_lo, y);
    y_hi = std::max(y_hi, y);
  }
  if (!std::isfinite(x_lo)) {
    x_lo = 0.0;
    x_hi = 1.0;
  }
  if (kind == PlotKind::Msr) {
    y_lo = 0.0;
    y_hi = 1.0;
  } else if (kind == PlotKind::Reward) {
    y_lo = -1.0;
    y_hi = 1.0;
  } else if (!std::isfinite(y_lo)) {
    y_lo = 0.0;
    y_hi = 1.0;
  } else {
    y_lo = std::min(0.0, y_lo);
  }
  widen(x_lo, x_hi);
  widen(y_lo, y_hi);
  const Panel p{70, 40, kWidth - 100, kHeight - 100, x_lo, x_hi, y_lo, y_hi};
  draw_axes(out, p, "training step", y_name);
  // NaN rows (before the first update) break the line.
  bool open = false;
  for (const auto& row : table.rows) {
    const double x = row[static_cast<std::size_t>(xc)];
    const double y = row[static_cast<std::size_t>(yc)];
    if (!std::isfinite(x) || !std::isfinite(y)) {
      if (open) out << "\"/>\n";
      open = false;
      continue;
    }
    if (!open) out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.2\" points=\"";
    open = true;
    out << num(p.px(x)) << ',' << num(p.py(y)) << ' ';
  }
  if (open) out << "\"/>\n";
}

void scatter_panel(std::ostream& out, const CsvTable& table, int xc, int yc, double left, double width,
                   const std::string& x_label, const std::string& y_label) {
  double x_lo = std::numeric_limits<double>::infinity();
  double x_hi = -x_lo;
  double y_lo = x_lo;
  double y_hi = -x_lo;
  for (const auto& row : table.rows) {
    x_lo = std::min(x_lo, row[static_cast<std::size_t>(xc)]);
    x_hi = std::max(x_hi, row[static_cast<std::size_t>(xc)]);
    y_lo = std::min(y_lo, row[static_cast<std::size_t>(yc)]);
    y_hi = std::max(y_hi, row[static_cast<std::size_t>(yc)]);
  }
  if (!std::isfinite(x_lo)) {
    x_lo = y_lo = 0.0;
    x_hi = y_hi = 1.0;
  }
  widen(x_lo, x_hi);
  widen(y_lo, y_hi);
  const Panel p{left, 40, width, kHeight - 100, x_lo, x_hi, y_lo, y_hi};
  draw_axes(out, p, x_label, y_label);
  for (const auto& row : table.rows) {
    out << "<circle cx=\"" << num(p.px(row[static_cast<std::size_t>(xc)])) << "\" cy=\""
        << num(p.py(row[static_cast<std::size_t>(yc)])) << "\" r=\"2.5\" fill=\"#d62728\" fill-opacity=\"0.7\"/>\n";
  }
}

void plot_scatter(std::ostream& out, const CsvTable& table) {
  const int yc = table.column("y");
  const int zc = table.column("z");
  if (yc < 0 || zc < 0) throw SchemaMismatch("scatter plot needs columns y and z");
  const int yq = table.column("y_eq");
  const int zq = table.column("z_eq");
  if (yq >= 0 && zq >= 0) {
    const double w = (kWidth - 170) / 2;
    scatter_panel(out, table, yc, zc, 70, w, "y", "z");
    scatter_panel(out, table, yq, zq, 70 + w + 70, w, "y equalized", "z equalized");
  } else {
    scatter_panel(out, table, yc, zc, 70, kWidth - 100, "y", "z");
  }
}

}  // namespace

void plot_svg(std::ostream& out, const CsvTable& table, PlotKind kind, const std::string& title) {
  std::ostringstream body;
  if (kind == PlotKind::Scatter) {
    plot_scatter(body, table);
  } else {
    plot_curve(body, table, kind);
  }
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">" << escape_xml(title)
      << "</text>\n"
      << body.str() << "</svg>\n";
}

}  // namespace unloadrl
