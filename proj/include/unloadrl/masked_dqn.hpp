#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "unloadrl/container_model.hpp"
#include "unloadrl/linalg.hpp"
#include "unloadrl/peq_qnet.hpp"

namespace unloadrl {

enum class LossKind { SmoothL1, MSE };
enum class OptimizerKind { SGD, Adaptive };

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 2048;
  long total_steps = 200000;
  double epsilon_init = 1.0;
  double epsilon_final = 0.0;
  long epsilon_decay_steps = -1;  // negative: total_steps / 2
  double gamma = 0.0;
  double beta = 1.0;
  LossKind loss_kind = LossKind::SmoothL1;
  std::size_t buffer_capacity = std::size_t{1} << 20;
  OptimizerKind optimizer = OptimizerKind::Adaptive;
  std::uint64_t seed = 0;
  long target_sync_period = 1000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  bool mask_during_training = false;

  [[nodiscard]] long decay_steps() const { return epsilon_decay_steps < 0 ? total_steps / 2 : epsilon_decay_steps; }
  void validate() const;
};

struct Transition {
  Matrix obs;
  int action = 0;
  double reward = 0.0;
  std::optional<Matrix> next_obs;
};

// Ring buffer of transitions. Observations are stored as float rows to keep
// the full-capacity buffer within memory.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int items, bool store_next_obs);

  void push(const Matrix& obs, int action, double reward, const Matrix* next_obs = nullptr);
  void push(const Transition& t) { push(t.obs, t.action, t.reward, t.next_obs ? &*t.next_obs : nullptr); }

  [[nodiscard]] std::size_t size() const { return size_; }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] int items() const { return items_; }
  [[nodiscard]] bool stores_next_obs() const { return store_next_; }
  // Slot the next push writes to.
  [[nodiscard]] std::size_t cursor() const { return cursor_; }

  [[nodiscard]] std::span<const float> obs(std::size_t slot) const;
  [[nodiscard]] std::span<const float> next_obs(std::size_t slot) const;
  [[nodiscard]] int action(std::size_t slot) const { return actions_.at(slot); }
  [[nodiscard]] double reward(std::size_t slot) const { return rewards_.at(slot); }
  [[nodiscard]] Transition transition(std::size_t slot) const;

  // `count` slots drawn uniformly with replacement from the stored entries.
  std::vector<std::size_t> sample(std::size_t count, Rng& rng) const;

 private:
  std::size_t capacity_;
  int items_;
  bool store_next_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  // Storage is allocated in fixed blocks as the buffer fills, so growth never
  // copies existing entries.
  static constexpr std::size_t kBlockSlots = 4096;
  float* slot_data(const std::vector<std::unique_ptr<float[]>>& blocks, std::size_t slot) const;

  std::vector<std::unique_ptr<float[]>> obs_blocks_;
  std::vector<std::unique_ptr<float[]>> next_blocks_;
  std::vector<int> actions_;
  std::vector<float> rewards_;
};

struct ActionMask {
  std::vector<char> blocked;

  explicit ActionMask(int actions = 128) : blocked(static_cast<std::size_t>(actions), 0) {}
  [[nodiscard]] int blocked_count() const;
  [[nodiscard]] bool all_blocked() const { return blocked_count() == static_cast<int>(blocked.size()); }
  void clear();
};

double epsilon_at(long step, const TrainConfig& config);

// Lowest index among the maxima.
int argmax(std::span<const double> q);

int select_action_train(std::span<const double> q, double epsilon, Rng& rng);
int select_action_masked(std::span<const double> q, const ActionMask& mask);
ActionMask update_mask(ActionMask mask, int action, bool success);

struct LossValue {
  double value = 0.0;
  double derivative = 0.0;  // d loss / d estimate
};
LossValue loss(double estimate, double target, LossKind kind, double beta = 1.0);
LossValue loss(double estimate, double target, const TrainConfig& config);

// r + gamma * max_u q(next_obs, u; frozen). With gamma == 0 neither pointer
// is dereferenced.
double td_target(double reward, const Matrix* next_obs, double gamma, const QNetworkParams* frozen);

class Optimizer {
 public:
  Optimizer(const TrainConfig& config, std::size_t param_count);
  void apply(QNetworkParams& params, const QNetworkParams& grad);
  [[nodiscard]] long updates() const { return t_; }

 private:
  OptimizerKind kind_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

struct TrainStepResult {
  double batch_loss = 0.0;
  QNetworkParams gradient;
};

// Mean loss and gradient over the given buffer slots, loss only on the taken
// action of each transition. Gradients are summed per fixed chunk and chunks
// are merged in order, so the result does not depend on `workers`.
TrainStepResult batch_gradient(const QNetworkParams& params, const ReplayBuffer& buffer,
                               std::span<const std::size_t> slots, const TrainConfig& config,
                               const QNetworkParams* frozen, int workers = 1);

// Owns the parameters, the optimizer state and the frozen target copy.
class DqnLearner {
 public:
  DqnLearner(QNetworkParams params, const TrainConfig& config, int workers = 1);

  // Samples batch_size transitions, applies one optimizer update and returns
  // the batch loss. Throws BufferTooSmall while the buffer holds < b entries.
  double train_step(const ReplayBuffer& buffer, Rng& rng, long step);

  [[nodiscard]] const QNetworkParams& params() const { return params_; }
  [[nodiscard]] const std::optional<QNetworkParams>& frozen() const { return frozen_; }
  [[nodiscard]] const TrainConfig& config() const { return config_; }
  void set_workers(int workers) { workers_ = workers; }

 private:
  QNetworkParams params_;
  TrainConfig config_;
  Optimizer optimizer_;
  std::optional<QNetworkParams> frozen_;
  int workers_;
};

struct CurveRow {
  long step = 0;
  double epsilon = 0.0;
  double batch_loss = 0.0;  // NaN before the first update
  double mean_reward_window = 0.0;
  double msr_window = 0.0;
};

// "step,epsilon,batch_loss,mean_reward_window,msr_window".
void write_curves_csv(std::ostream& out, std::span<const CurveRow> rows);

}  // namespace unloadrl
