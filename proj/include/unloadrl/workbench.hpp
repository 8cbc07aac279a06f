#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "unloadrl/env_suite.hpp"

namespace unloadrl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitGeneration = 3;
inline constexpr int kExitIo = 4;
inline constexpr int kExitLivelock = 5;

int exit_code_for(const std::exception& e);

std::string_view version_string();

// Flat "key = value" settings, one per line; '#' starts a comment.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(std::string_view text);
ConfigMap load_config_file(const std::filesystem::path& path);

// Every key apply_config understands, in a stable order.
const std::vector<std::string>& config_keys();
std::string config_help(const std::string& key);

// Unknown keys and unparsable values throw ConfigError naming the key.
void apply_config(RunConfig& config, const ConfigMap& values);
// Every key with its current value; floats round-trip exactly.
ConfigMap resolved_config(const RunConfig& config);
void write_config(std::ostream& out, const RunConfig& config);

std::string format_double(double v);

struct RunManifest {
  std::string command;
  ConfigMap config;
  std::uint64_t seed = 0;
  std::string version;
  std::string output_dir;
  std::string started;
  std::string finished;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

std::string utc_timestamp();

// UNLOADRL_OUTPUT_ROOT when set, else "runs".
std::filesystem::path output_root();
// A fresh directory "<root>/<command>-seed<seed>-<index>".
std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& command,
                                   std::uint64_t seed);

// Numeric CSV with a header row. Empty cells and "nan" read as NaN.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  // Index of a column, or -1.
  [[nodiscard]] int column(std::string_view name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::filesystem::path& path);

// Settings of one tuning-env run as used by the tune command: masked
// exploration, FE as requested, everything else at the defaults.
RunConfig tuning_run_config(double learning_rate, int batch_size, long total_steps, std::uint64_t seed,
                            bool fe_enabled);

struct GradCheckSuiteReport {
  std::vector<double> errors;  // per (params, input) pair
  double max_error = 0.0;
  // Error reported for a deliberately corrupted analytic gradient.
  double corrupted_error = 0.0;
  // Inputs redrawn because a ReLU or pooling switch sat within reach of the step.
  int rejected_inputs = 0;
};

// Random parameters and inputs kept away from ReLU and pooling kinks, loss
// sum_i w_i q_i with random w.
GradCheckSuiteReport gradcheck_suite(int pairs, std::uint64_t seed, int n_features = 32, int items = 128);

enum class PlotKind { Loss, Msr, Reward, Scatter };

PlotKind parse_plot_kind(std::string_view name);

// Standalone SVG. Curve kinds need the training-curve columns; scatter
// takes an observation or container CSV. Throws SchemaMismatch otherwise.
void plot_svg(std::ostream& out, const CsvTable& table, PlotKind kind, const std::string& title);

}  // namespace unloadrl
