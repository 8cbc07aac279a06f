#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "unloadrl/container_model.hpp"
#include "unloadrl/masked_dqn.hpp"
#include "unloadrl/observation.hpp"
#include "unloadrl/peq_qnet.hpp"
#include "unloadrl/pick_physics.hpp"

namespace unloadrl {

enum class EnvKind { Unload, Tuning };

struct EnvConfig {
  ContainerSpec spec;
  ViewerConfig viewer;
  PhysicsConfig physics;
  int episode_limit = 500;

  void validate() const;
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
  bool success = false;
  int item_id = -1;
};

// Independent seeded stream number `stream` of a master seed.
Rng derive_rng(std::uint64_t master_seed, std::uint64_t stream);

// The physics-based unloading environment. The support graph and the viewer
// order are computed once per container: items never move, they only vanish.
class UnloadEnv {
 public:
  UnloadEnv(EnvConfig config, std::shared_ptr<const SubstackCatalog> catalog);

  const Observation& reset(std::uint64_t seed);
  StepResult step(int action);

  [[nodiscard]] const Observation& observation() const { return obs_; }
  [[nodiscard]] const ContainerState& state() const { return state_; }
  [[nodiscard]] const SupportGraph& graph() const { return graph_; }
  [[nodiscard]] const EnvConfig& config() const { return config_; }
  [[nodiscard]] int step_count() const { return step_count_; }
  [[nodiscard]] bool done() const { return step_count_ >= config_.episode_limit; }

  // Whether a pick of this live item would succeed in the current state.
  [[nodiscard]] bool is_pickable(int item_id) const;
  // Observation rows whose item is pickable, ascending.
  [[nodiscard]] std::vector<int> pickable_rows() const;

 private:
  void refresh_observation();

  EnvConfig config_;
  std::shared_ptr<const SubstackCatalog> catalog_;
  ContainerState state_;
  SupportGraph graph_;
  std::vector<int> order_;
  Observation obs_;
  int step_count_ = 0;
  int max_liftable_ = 0;
  bool started_ = false;
};

std::pair<UnloadEnv, Observation> env_reset(const EnvConfig& config,
                                            std::shared_ptr<const SubstackCatalog> catalog, std::uint64_t seed);

struct EnvStepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
};
EnvStepResult env_step(UnloadEnv& env, int action);

// Raw item centers of observed item sets, recorded from generated containers
// at random stages of unloading. Tuning observations are jittered copies of
// these, so they share the lattice structure of real observations.
struct TuningPool {
  ContainerSpec spec;
  std::vector<std::vector<Vec3>> observations;
};

// `containers` fresh containers, each unloaded by uniformly random successful
// picks for up to one episode; every `snapshot_stride` picks the observed set
// is recorded.
TuningPool build_tuning_pool(const EnvConfig& env, std::shared_ptr<const SubstackCatalog> catalog,
                             int containers, std::uint64_t seed, int snapshot_stride = 8);

struct TuningConfig {
  double jitter = 0.01;  // [m], uniform per axis
  bool fe_enabled = true;
  bool redraw_on_failure = false;
};

struct TuningSample {
  Observation obs;
  int correct_row = 0;
  int regenerations = 0;  // draws rejected for a tied maximum z
};

TuningSample tuning_env_sample(const TuningPool& pool, const TuningConfig& config, Rng& rng);

// Reward +1 for the row with the largest z, -1 otherwise. A success draws a
// fresh observation; a failure keeps the current one unless
// redraw_on_failure is set.
class TuningEnv {
 public:
  TuningEnv(std::shared_ptr<const TuningPool> pool, TuningConfig config, std::uint64_t seed);

  [[nodiscard]] const Observation& observation() const { return current_.obs; }
  [[nodiscard]] int correct_row() const { return current_.correct_row; }
  StepResult step(int action);

 private:
  std::shared_ptr<const TuningPool> pool_;
  TuningConfig config_;
  Rng rng_;
  TuningSample current_;
};

double msr(double r_mean);

// Trailing mean of the last `capacity` rewards.
class RewardWindow {
 public:
  explicit RewardWindow(std::size_t capacity);
  void push(double reward);
  [[nodiscard]] std::size_t size() const { return count_; }
  [[nodiscard]] double mean() const;
  [[nodiscard]] double msr() const { return unloadrl::msr(mean()); }

 private:
  std::vector<double> values_;
  std::size_t next_ = 0;
  std::size_t count_ = 0;
  double sum_ = 0.0;
};

struct RunConfig {
  EnvKind env_kind = EnvKind::Unload;
  TrainConfig train;
  NetworkConfig network;
  EnvConfig env;
  TuningConfig tuning;
  int tuning_pool_containers = 8;
  int env_count = 64;
  int workers = 0;  // 0: all cores; results do not depend on it
  long log_interval = 100;
  long metrics_window = 500;  // trailing env steps (transitions) in the windowed metrics
  long checkpoint_interval = 0;

  void validate() const;
};

struct TrainingResult {
  std::vector<CurveRow> curves;
  QNetworkParams params;
  double final_msr = 0.0;
  double final_mean_reward = 0.0;
};

using CheckpointHook = std::function<void(long step, const QNetworkParams& params)>;
using LogHook = std::function<void(const CurveRow& row)>;

// One round = one epsilon-greedy step in each of the env_count environments,
// transitions pushed in env order, then one train_step once the buffer holds
// a full batch. total_steps counts rounds.
TrainingResult run_training(const RunConfig& config, std::shared_ptr<const SubstackCatalog> catalog,
                            const CheckpointHook& on_checkpoint = {}, const LogHook& on_log = {});

enum class PolicyKind { Network, Random, Oracle };

struct EvalConfig {
  PolicyKind policy = PolicyKind::Network;
  bool masked = true;
  int episodes = 10;
  std::uint64_t seed = 0;
  // Identical (observation, action) pairs in a row that count as a livelock.
  int livelock_repeats = 3;
};

struct EpisodeReport {
  int episode = 0;
  int successes = 0;
  int failures = 0;
  double msr = 0.0;
  bool livelock = false;
  int max_attempts_per_success = 0;
};

struct EvalReport {
  std::vector<EpisodeReport> episodes;
  double msr = 0.0;
  std::map<int, long> attempts_per_success;
  bool livelock = false;
  std::string diagnostics;
  // Longest run of attempts until a success while a pickable item was observed.
  int max_attempts_between_successes = 0;
  // Steps at which no observed item was pickable.
  long steps_without_pickable = 0;
};

EvalReport evaluate(const QNetworkParams* params, const EnvConfig& env_config,
                    std::shared_ptr<const SubstackCatalog> catalog, const EvalConfig& config);

// "episode,successes,failures,msr".
void write_eval_csv(std::ostream& out, const EvalReport& report);

}  // namespace unloadrl
