#include "unloadrl/env_suite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "unloadrl/errors.hpp"
#include "unloadrl/parallel.hpp"

namespace unloadrl {

namespace {

int max_liftable_items(const PhysicsConfig& physics) {
  int p = 0;
  while (p < 1 << 20 && lift_distance(physics.agent_force, (p + 1) * physics.item_mass, physics) >=
                            physics.distance_threshold) {
    ++p;
  }
  return p;
}

}  // namespace

void EnvConfig::validate() const {
  spec.validate();
  viewer.validate();
  physics.validate();
  if (episode_limit < 1) throw ConfigError("episode_limit: must be >= 1");
}

Rng derive_rng(std::uint64_t master_seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedU};
  return Rng(seq);
}

UnloadEnv::UnloadEnv(EnvConfig config, std::shared_ptr<const SubstackCatalog> catalog)
    : config_(std::move(config)), catalog_(std::move(catalog)) {
  if (!catalog_) throw DomainError("environment needs a substack catalog");
  config_.validate();
  max_liftable_ = max_liftable_items(config_.physics);
}

const Observation& UnloadEnv::reset(std::uint64_t seed) {
  state_ = generate_container(config_.spec, *catalog_, seed);
  graph_ = build_support_graph(state_);
  order_ = viewer_order(state_, config_.viewer);
  step_count_ = 0;
  started_ = true;
  refresh_observation();
  return obs_;
}

void UnloadEnv::refresh_observation() {
  const auto want = static_cast<std::size_t>(config_.viewer.visible_count);
  std::vector<int> visible;
  visible.reserve(want);
  for (int id : order_) {
    if (!state_.items[static_cast<std::size_t>(id)].alive) continue;
    visible.push_back(id);
    if (visible.size() == want) break;
  }
  if (visible.size() < want) {
    throw TooFewItems("only " + std::to_string(visible.size()) + " live items, " + std::to_string(want) +
                      " required");
  }
  obs_ = observation_from_rows(state_, visible, config_.viewer, step_count_);
}

bool UnloadEnv::is_pickable(int item_id) const {
  const ItemInstance& it = state_.item(item_id);
  if (!it.alive) throw DeadItem("item " + std::to_string(item_id) + " has already been removed");
  if (max_liftable_ == 0) return false;
  if (max_liftable_ == 1) {
    const auto& above = graph_.supported[static_cast<std::size_t>(item_id)];
    return std::none_of(above.begin(), above.end(),
                        [&](int a) { return state_.items[static_cast<std::size_t>(a)].alive; });
  }
  return evaluate_pick(state_, graph_, item_id, config_.physics).success;
}

std::vector<int> UnloadEnv::pickable_rows() const {
  std::vector<int> rows;
  for (std::size_t r = 0; r < obs_.item_ids.size(); ++r) {
    if (is_pickable(obs_.item_ids[r])) rows.push_back(static_cast<int>(r));
  }
  return rows;
}

StepResult UnloadEnv::step(int action) {
  if (!started_) throw EpisodeDone("environment has not been reset");
  if (done()) throw EpisodeDone("episode reached its step limit");
  if (action < 0 || action >= static_cast<int>(obs_.item_ids.size())) {
    throw InvalidAction("action " + std::to_string(action) + " outside the observation");
  }
  StepResult r;
  r.item_id = obs_.item_ids[static_cast<std::size_t>(action)];
  r.success = is_pickable(r.item_id);
  r.reward = r.success ? 1.0 : -1.0;
  ++step_count_;
  if (r.success) {
    remove_item(state_, graph_, r.item_id);
    refresh_observation();
  } else {
    obs_.step_k = step_count_;
  }
  r.done = done();
  return r;
}

std::pair<UnloadEnv, Observation> env_reset(const EnvConfig& config,
                                            std::shared_ptr<const SubstackCatalog> catalog, std::uint64_t seed) {
  UnloadEnv env(config, std::move(catalog));
  Observation obs = env.reset(seed);
  return {std::move(env), std::move(obs)};
}

EnvStepResult env_step(UnloadEnv& env, int action) {
  const StepResult r = env.step(action);
  return {env.observation(), r.reward, r.done};
}

TuningPool build_tuning_pool(const EnvConfig& env, std::shared_ptr<const SubstackCatalog> catalog,
                             int containers, std::uint64_t seed, int snapshot_stride) {
  if (containers < 1) throw ConfigError("tuning_pool_containers: must be >= 1");
  if (snapshot_stride < 1) throw ConfigError("snapshot_stride: must be >= 1");
  TuningPool pool;
  pool.spec = env.spec;
  Rng rng = derive_rng(seed, 0x7u);
  UnloadEnv unload(env, std::move(catalog));
  const auto record = [&] {
    std::vector<Vec3> centers;
    for (int id : unload.observation().item_ids) centers.push_back(unload.state().item(id).center);
    pool.observations.push_back(std::move(centers));
  };
  for (int c = 0; c < containers; ++c) {
    unload.reset(rng());
    record();
    int picks = 0;
    while (!unload.done()) {
      const auto rows = unload.pickable_rows();
      if (rows.empty()) break;
      std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
      unload.step(rows[pick(rng)]);
      if (++picks % snapshot_stride == 0) record();
    }
  }
  return pool;
}

TuningSample tuning_env_sample(const TuningPool& pool, const TuningConfig& config, Rng& rng) {
  if (pool.observations.empty()) throw DomainError("tuning pool is empty");
  const ContainerSpec& spec = pool.spec;
  std::uniform_int_distribution<std::size_t> pick_obs(0, pool.observations.size() - 1);
  std::uniform_real_distribution<double> jitter(-config.jitter, config.jitter);

  TuningSample sample;
  for (;;) {
    const auto& centers = pool.observations[pick_obs(rng)];
    const std::size_t n = centers.size();
    // Random row order: the recorded order is the viewer ranking.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> swap_with(0, i - 1);
      std::swap(order[i - 1], order[swap_with(rng)]);
    }
    Matrix x(n, 3);
    for (std::size_t r = 0; r < n; ++r) {
      const Vec3& c = centers[static_cast<std::size_t>(order[r])];
      const Vec3 p{std::clamp(c.x + jitter(rng), 0.0, spec.depth_x), std::clamp(c.y + jitter(rng), 0.0, spec.width_y),
                   std::clamp(c.z + jitter(rng), 0.0, spec.height_z)};
      const Vec3 q = normalize_position(p, spec);
      x(r, 0) = q.x;
      x(r, 1) = q.y;
      x(r, 2) = q.z;
    }
    std::size_t best = 0;
    int ties = 0;
    for (std::size_t r = 1; r < n; ++r) {
      if (x(r, 2) > x(best, 2)) {
        best = r;
        ties = 0;
      } else if (x(r, 2) == x(best, 2)) {
        ++ties;
      }
    }
    if (ties > 0) {
      ++sample.regenerations;
      continue;
    }
    if (config.fe_enabled) equalize_columns(x);
    sample.obs.features = std::move(x);
    sample.obs.item_ids = std::move(order);
    sample.correct_row = static_cast<int>(best);
    return sample;
  }
}

TuningEnv::TuningEnv(std::shared_ptr<const TuningPool> pool, TuningConfig config, std::uint64_t seed)
    : pool_(std::move(pool)), config_(config), rng_(seed) {
  if (!pool_) throw DomainError("tuning environment needs a pool");
  current_ = tuning_env_sample(*pool_, config_, rng_);
}

StepResult TuningEnv::step(int action) {
  if (action < 0 || action >= static_cast<int>(current_.obs.item_ids.size())) {
    throw InvalidAction("action outside the observation");
  }
  StepResult r;
  r.success = action == current_.correct_row;
  r.reward = r.success ? 1.0 : -1.0;
  r.item_id = current_.obs.item_ids[static_cast<std::size_t>(action)];
  // As in the unloading task, a failed pick leaves the observation unchanged.
  if (r.success || config_.redraw_on_failure) current_ = tuning_env_sample(*pool_, config_, rng_);
  return r;
}

double msr(double r_mean) { return (r_mean + 1.0) / 2.0; }

RewardWindow::RewardWindow(std::size_t capacity) : values_(capacity, 0.0) {
  if (capacity == 0) throw DomainError("reward window must hold at least one value");
}

void RewardWindow::push(double reward) {
  if (count_ == values_.size()) sum_ -= values_[next_];
  values_[next_] = reward;
  sum_ += reward;
  next_ = (next_ + 1) % values_.size();
  count_ = std::min(count_ + 1, values_.size());
}

double RewardWindow::mean() const { return count_ == 0 ? 0.0 : sum_ / static_cast<double>(count_); }

void RunConfig::validate() const {
  train.validate();
  network.validate();
  if (env_count < 1) throw ConfigError("env_count: must be >= 1");
  if (workers < 0) throw ConfigError("workers: must be >= 0");
  if (log_interval < 1) throw ConfigError("log_interval: must be >= 1");
  if (metrics_window < 1) throw ConfigError("metrics_window: must be >= 1");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval: must be >= 0");
  if (env_kind == EnvKind::Unload) {
    env.validate();
    if (network.item_count != env.viewer.visible_count) {
      throw ConfigError("item_count: must equal the number of observed items");
    }
  } else {
    if (tuning_pool_containers < 1) throw ConfigError("tuning_pool_containers: must be >= 1");
    if (!(tuning.jitter >= 0)) throw ConfigError("tuning_jitter: must be >= 0");
    env.validate();
    if (network.item_count != env.viewer.visible_count) {
      throw ConfigError("item_count: must equal the number of observed items");
    }
  }
}

namespace {

int random_unblocked(const ActionMask& mask, Rng& rng) {
  const int open = static_cast<int>(mask.blocked.size()) - mask.blocked_count();
  if (open == 0) throw AllMasked("every action is masked");
  std::uniform_int_distribution<int> pick(0, open - 1);
  int k = pick(rng);
  for (std::size_t i = 0; i < mask.blocked.size(); ++i) {
    if (mask.blocked[i]) continue;
    if (k-- == 0) return static_cast<int>(i);
  }
  return -1;
}

struct EnvSlot {
  std::unique_ptr<UnloadEnv> unload;
  std::unique_ptr<TuningEnv> tuning;
  Rng rng;
  ActionMask mask;
  // Transition of the current round.
  Matrix obs;
  Matrix next_obs;
  int action = 0;
  double reward = 0.0;

  [[nodiscard]] const Observation& observation() const {
    return unload ? unload->observation() : tuning->observation();
  }
};

}  // namespace

TrainingResult run_training(const RunConfig& config, std::shared_ptr<const SubstackCatalog> catalog,
                            const CheckpointHook& on_checkpoint, const LogHook& on_log) {
  config.validate();
  if (!catalog) throw DomainError("training needs a substack catalog");
  const TrainConfig& tc = config.train;
  const std::uint64_t seed = tc.seed;
  const int workers = config.workers == 0 ? default_worker_count() : config.workers;

  Rng init_rng = derive_rng(seed, 0);
  DqnLearner learner(init_params(config.network, init_rng()), tc, workers);
  Rng learn_rng = derive_rng(seed, 1);
  const bool store_next = tc.gamma > 0.0;
  ReplayBuffer buffer(tc.buffer_capacity, config.network.item_count, store_next);
  RewardWindow window(static_cast<std::size_t>(config.metrics_window));

  const auto env_count = static_cast<std::size_t>(config.env_count);
  std::vector<EnvSlot> slots(env_count);
  std::shared_ptr<const TuningPool> pool;
  if (config.env_kind == EnvKind::Tuning) {
    pool = std::make_shared<const TuningPool>(
        build_tuning_pool(config.env, catalog, config.tuning_pool_containers, seed));
  }
  for (std::size_t i = 0; i < env_count; ++i) {
    slots[i].rng = derive_rng(seed, 100 + i);
    slots[i].mask = ActionMask(config.network.item_count);
  }
  parallel_for(env_count, workers, [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t i = begin; i < end; ++i) {
      EnvSlot& s = slots[i];
      if (config.env_kind == EnvKind::Unload) {
        s.unload = std::make_unique<UnloadEnv>(config.env, catalog);
        s.unload->reset(s.rng());
      } else {
        s.tuning = std::make_unique<TuningEnv>(pool, config.tuning, s.rng());
      }
    }
  });

  TrainingResult result;
  const bool use_mask = tc.mask_during_training;
  for (long k = 0; k < tc.total_steps; ++k) {
    const double eps = epsilon_at(k, tc);
    const QNetworkParams& params = learner.params();
    parallel_for(env_count, workers, [&](std::size_t begin, std::size_t end, int) {
      std::uniform_real_distribution<double> coin(0.0, 1.0);
      for (std::size_t i = begin; i < end; ++i) {
        EnvSlot& s = slots[i];
        const Observation& obs = s.observation();
        // Same rule as select_action_train; q is only evaluated for greedy draws.
        if (coin(s.rng) < eps) {
          if (use_mask) {
            s.action = random_unblocked(s.mask, s.rng);
          } else {
            std::uniform_int_distribution<int> pick(0, config.network.item_count - 1);
            s.action = pick(s.rng);
          }
        } else {
          const auto q = q_values(obs.features, params);
          s.action = use_mask ? select_action_masked(q, s.mask) : argmax(q);
        }
        s.obs = obs.features;
        StepResult r = s.unload ? s.unload->step(s.action) : s.tuning->step(s.action);
        s.reward = r.reward;
        if (store_next) s.next_obs = s.observation().features;
        if (use_mask) s.mask = update_mask(std::move(s.mask), s.action, r.success);
        if (s.unload && r.done) {
          s.unload->reset(s.rng());
          s.mask.clear();
        }
      }
    });
    for (const auto& s : slots) {
      buffer.push(s.obs, s.action, s.reward, store_next ? &s.next_obs : nullptr);
      window.push(s.reward);
    }
    double batch_loss = std::numeric_limits<double>::quiet_NaN();
    if (buffer.size() >= static_cast<std::size_t>(tc.batch_size)) {
      batch_loss = learner.train_step(buffer, learn_rng, k);
    }
    const long done_steps = k + 1;
    if (done_steps % config.log_interval == 0 || done_steps == tc.total_steps) {
      result.curves.push_back({done_steps, eps, batch_loss, window.mean(), window.msr()});
      if (on_log) on_log(result.curves.back());
    }
    if (on_checkpoint && config.checkpoint_interval > 0 && done_steps % config.checkpoint_interval == 0 &&
        done_steps != tc.total_steps) {
      on_checkpoint(done_steps, learner.params());
    }
  }
  result.params = learner.params();
  result.final_mean_reward = window.mean();
  result.final_msr = window.msr();
  if (on_checkpoint) on_checkpoint(tc.total_steps, result.params);
  return result;
}

EvalReport evaluate(const QNetworkParams* params, const EnvConfig& env_config,
                    std::shared_ptr<const SubstackCatalog> catalog, const EvalConfig& config) {
  if (config.policy == PolicyKind::Network && params == nullptr) {
    throw DomainError("network policy needs parameters");
  }
  if (config.episodes < 1) throw ConfigError("episodes: must be >= 1");
  if (config.livelock_repeats < 2) throw ConfigError("livelock_repeats: must be >= 2");
  EvalReport report;
  long total_success = 0;
  long total_fail = 0;
  for (int e = 0; e < config.episodes; ++e) {
    UnloadEnv env(env_config, catalog);
    Rng episode_rng = derive_rng(config.seed, static_cast<std::uint64_t>(e));
    const std::uint64_t container_seed = episode_rng();
    env.reset(container_seed);
    ActionMask mask(env_config.viewer.visible_count);
    EpisodeReport ep;
    ep.episode = e;
    Matrix last_features;
    int last_action = -1;
    int repeats = 0;
    int attempts = 0;
    while (!env.done()) {
      const Observation& obs = env.observation();
      const auto pickable = env.pickable_rows();
      if (pickable.empty()) ++report.steps_without_pickable;
      int action = 0;
      try {
        switch (config.policy) {
          case PolicyKind::Network: {
            const auto q = q_values(obs.features, *params);
            action = config.masked ? select_action_masked(q, mask) : argmax(q);
            break;
          }
          case PolicyKind::Random: {
            std::vector<int> open;
            for (int r = 0; r < static_cast<int>(mask.blocked.size()); ++r) {
              if (!config.masked || !mask.blocked[static_cast<std::size_t>(r)]) open.push_back(r);
            }
            if (open.empty()) throw AllMasked("every action is masked");
            std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
            action = open[pick(episode_rng)];
            break;
          }
          case PolicyKind::Oracle:
            action = pickable.empty() ? 0 : pickable.front();
            break;
        }
      } catch (const AllMasked&) {
        std::ostringstream msg;
        msg << "all actions masked: episode " << e << ", container seed " << container_seed << ", step "
            << env.step_count() << ", pickable observed rows " << pickable.size();
        throw AllMasked(msg.str());
      }

      if (action == last_action && obs.features == last_features) {
        ++repeats;
      } else {
        repeats = 1;
        last_action = action;
        last_features = obs.features;
      }

      const StepResult r = env.step(action);
      ++attempts;
      if (r.success) {
        ++ep.successes;
        ++report.attempts_per_success[attempts];
        ep.max_attempts_per_success = std::max(ep.max_attempts_per_success, attempts);
        attempts = 0;
      } else {
        ++ep.failures;
      }
      if (config.masked) mask = update_mask(std::move(mask), action, r.success);

      if (repeats >= config.livelock_repeats) {
        ep.livelock = true;
        report.livelock = true;
        std::ostringstream msg;
        msg << "livelock: episode " << e << " repeated action " << action << " (item " << r.item_id << ") "
            << repeats << " times on an unchanged observation at step " << env.step_count() << ";";
        report.diagnostics += msg.str();
        break;
      }
    }
    ep.max_attempts_per_success = std::max(ep.max_attempts_per_success, attempts);
    report.max_attempts_between_successes =
        std::max(report.max_attempts_between_successes, ep.max_attempts_per_success);
    const int n = ep.successes + ep.failures;
    ep.msr = n == 0 ? 0.0 : msr(static_cast<double>(ep.successes - ep.failures) / n);
    total_success += ep.successes;
    total_fail += ep.failures;
    report.episodes.push_back(ep);
  }
  const long n = total_success + total_fail;
  report.msr = n == 0 ? 0.0 : msr(static_cast<double>(total_success - total_fail) / static_cast<double>(n));
  return report;
}

void write_eval_csv(std::ostream& out, const EvalReport& report) {
  const auto old_precision = out.precision(17);
  out << "episode,successes,failures,msr\n";
  for (const auto& ep : report.episodes) {
    out << ep.episode << ',' << ep.successes << ',' << ep.failures << ',' << ep.msr << '\n';
  }
  out.precision(old_precision);
}

}  // namespace unloadrl
