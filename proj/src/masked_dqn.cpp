#include "unloadrl/masked_dqn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <string>

#include "unloadrl/errors.hpp"
#include "unloadrl/parallel.hpp"

namespace unloadrl {

namespace {

// Transitions per gradient chunk. Fixed so that summation order only depends
// on the batch, never on the number of workers.
constexpr std::size_t kGradientChunk = 64;

void add_into(QNetworkParams& acc, const QNetworkParams& g) {
  for (std::size_t i = 0; i < acc.theta1.size(); ++i) acc.theta1[i] += g.theta1[i];
  for (std::size_t i = 0; i < acc.xi1.size(); ++i) acc.xi1[i] += g.xi1[i];
  for (std::size_t i = 0; i < acc.theta2.size(); ++i) acc.theta2[i] += g.theta2[i];
  acc.xi2 += g.xi2;
}

Matrix to_matrix(std::span<const float> x, int items) {
  Matrix m(static_cast<std::size_t>(items), 3);
  auto out = m.values();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(x[i]);
  return m;
}

}  // namespace

void TrainConfig::validate() const {
  const auto bad = [](const std::string& field, const std::string& why) {
    throw ConfigError(field + ": " + why);
  };
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) bad("learning_rate", "must be > 0");
  if (batch_size < 1) bad("batch_size", "must be >= 1");
  if (total_steps < 1) bad("total_steps", "must be >= 1");
  if (!(gamma >= 0 && gamma <= 1)) bad("gamma", "must lie in [0, 1]");
  if (!(beta > 0)) bad("beta", "must be > 0");
  if (!(epsilon_init >= 0 && epsilon_init <= 1)) bad("epsilon_init", "must lie in [0, 1]");
  if (!(epsilon_final >= 0 && epsilon_final <= 1)) bad("epsilon_final", "must lie in [0, 1]");
  if (decay_steps() > total_steps) bad("epsilon_decay_steps", "must not exceed total_steps");
  if (buffer_capacity < static_cast<std::size_t>(batch_size)) bad("buffer_capacity", "must hold at least one batch");
  if (target_sync_period < 1) bad("target_sync_period", "must be >= 1");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) bad("adam_beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) bad("adam_beta2", "must lie in [0, 1)");
  if (!(adam_epsilon > 0)) bad("adam_epsilon", "must be > 0");
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, int items, bool store_next_obs)
    : capacity_(capacity), items_(items), store_next_(store_next_obs) {
  if (capacity == 0) throw DomainError("replay buffer capacity must be positive");
  if (items < 1) throw DomainError("replay buffer needs at least one item per observation");
}

void ReplayBuffer::push(const Matrix& obs, int action, double reward, const Matrix* next_obs) {
  const auto width = static_cast<std::size_t>(items_) * 3;
  if (obs.rows() != static_cast<std::size_t>(items_) || obs.cols() != 3) {
    throw ShapeMismatch("transition observation has the wrong shape");
  }
  if (action < 0 || action >= items_) throw InvalidAction("transition action out of range");
  if (reward != 1.0 && reward != -1.0) throw DomainError("transition reward must be +1 or -1");
  if (store_next_ && next_obs == nullptr) throw MissingNextObs("buffer stores next observations");
  if (store_next_ && (next_obs->rows() != obs.rows() || next_obs->cols() != 3)) {
    throw ShapeMismatch("next observation has the wrong shape");
  }
  const std::size_t slot = cursor_;
  if (slot == actions_.size()) {
    if (slot % kBlockSlots == 0) {
      const std::size_t slots = std::min(kBlockSlots, capacity_ - slot);
      obs_blocks_.push_back(std::make_unique<float[]>(slots * width));
      if (store_next_) next_blocks_.push_back(std::make_unique<float[]>(slots * width));
    }
    actions_.push_back(0);
    rewards_.push_back(0.0F);
  }
  const auto to_float = [](double v) { return static_cast<float>(v); };
  const auto src = obs.values();
  std::transform(src.begin(), src.end(), slot_data(obs_blocks_, slot), to_float);
  if (store_next_) {
    const auto nsrc = next_obs->values();
    std::transform(nsrc.begin(), nsrc.end(), slot_data(next_blocks_, slot), to_float);
  }
  actions_[slot] = action;
  rewards_[slot] = static_cast<float>(reward);
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::span<const float> ReplayBuffer::obs(std::size_t slot) const {
  if (slot >= size_) throw DomainError("replay slot out of range");
  return {slot_data(obs_blocks_, slot), static_cast<std::size_t>(items_) * 3};
}

std::span<const float> ReplayBuffer::next_obs(std::size_t slot) const {
  if (!store_next_) throw MissingNextObs("buffer was created without next observations");
  if (slot >= size_) throw DomainError("replay slot out of range");
  return {slot_data(next_blocks_, slot), static_cast<std::size_t>(items_) * 3};
}

float* ReplayBuffer::slot_data(const std::vector<std::unique_ptr<float[]>>& blocks, std::size_t slot) const {
  const auto width = static_cast<std::size_t>(items_) * 3;
  return blocks[slot / kBlockSlots].get() + (slot % kBlockSlots) * width;
}

Transition ReplayBuffer::transition(std::size_t slot) const {
  Transition t;
  t.obs = to_matrix(obs(slot), items_);
  t.action = action(slot);
  t.reward = reward(slot);
  if (store_next_) t.next_obs = to_matrix(next_obs(slot), items_);
  return t;
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
  if (size_ == 0) throw BufferTooSmall("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> out(count);
  for (auto& s : out) s = pick(rng);
  return out;
}

int ActionMask::blocked_count() const {
  return static_cast<int>(std::count(blocked.begin(), blocked.end(), 1));
}

void ActionMask::clear() { std::fill(blocked.begin(), blocked.end(), 0); }

double epsilon_at(long step, const TrainConfig& config) {
  if (step < 0) throw DomainError("step must be non-negative");
  const long decay = config.decay_steps();
  if (decay <= 0 || step >= decay) return config.epsilon_final;
  const double frac = static_cast<double>(step) / static_cast<double>(decay);
  return config.epsilon_init + (config.epsilon_final - config.epsilon_init) * frac;
}

int argmax(std::span<const double> q) {
  if (q.empty()) throw ShapeMismatch("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.size(); ++i) {
    if (q[i] > q[best]) best = i;
  }
  return static_cast<int>(best);
}

int select_action_train(std::span<const double> q, double epsilon, Rng& rng) {
  if (q.empty()) throw ShapeMismatch("no actions to select from");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(q.size()) - 1);
    return pick(rng);
  }
  return argmax(q);
}

int select_action_masked(std::span<const double> q, const ActionMask& mask) {
  if (mask.blocked.size() != q.size()) throw ShapeMismatch("mask size differs from the q-vector");
  int best = -1;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (mask.blocked[i]) continue;
    if (best < 0 || q[i] > q[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  if (best < 0) throw AllMasked("every action is masked");
  return best;
}

ActionMask update_mask(ActionMask mask, int action, bool success) {
  if (action < 0 || action >= static_cast<int>(mask.blocked.size())) {
    throw InvalidAction("mask action out of range");
  }
  if (success) {
    mask.clear();
  } else {
    mask.blocked[static_cast<std::size_t>(action)] = 1;
  }
  return mask;
}

LossValue loss(double estimate, double target, LossKind kind, double beta) {
  const double diff = estimate - target;
  if (kind == LossKind::MSE) return {diff * diff, 2.0 * diff};
  if (!(beta > 0)) throw DomainError("smooth-L1 beta must be positive");
  if (std::abs(diff) < beta) return {diff * diff / (2.0 * beta), diff / beta};
  return {std::abs(diff) - 0.5 * beta, diff > 0 ? 1.0 : -1.0};
}

LossValue loss(double estimate, double target, const TrainConfig& config) {
  return loss(estimate, target, config.loss_kind, config.beta);
}

double td_target(double reward, const Matrix* next_obs, double gamma, const QNetworkParams* frozen) {
  if (gamma == 0.0) return reward;
  if (next_obs == nullptr) throw MissingNextObs("gamma > 0 requires the next observation");
  if (frozen == nullptr) throw MissingNextObs("gamma > 0 requires frozen target parameters");
  const auto q = q_values(*next_obs, *frozen);
  return reward + gamma * *std::max_element(q.begin(), q.end());
}

Optimizer::Optimizer(const TrainConfig& config, std::size_t param_count)
    : kind_(config.optimizer),
      lr_(config.learning_rate),
      b1_(config.adam_beta1),
      b2_(config.adam_beta2),
      eps_(config.adam_epsilon) {
  if (kind_ == OptimizerKind::Adaptive) {
    m_.assign(param_count, 0.0);
    v_.assign(param_count, 0.0);
  }
}

void Optimizer::apply(QNetworkParams& params, const QNetworkParams& grad) {
  if (grad.size() != params.size()) throw ShapeMismatch("gradient shape differs from parameters");
  ++t_;
  const std::size_t count = params.size();
  if (kind_ == OptimizerKind::SGD) {
    for (std::size_t i = 0; i < count; ++i) params.flat(i) -= lr_ * grad.flat(i);
    return;
  }
  if (m_.size() != count) throw ShapeMismatch("optimizer state does not match the parameters");
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < count; ++i) {
    const double g = grad.flat(i);
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * g * g;
    params.flat(i) -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

TrainStepResult batch_gradient(const QNetworkParams& params, const ReplayBuffer& buffer,
                               std::span<const std::size_t> slots, const TrainConfig& config,
                               const QNetworkParams* frozen, int workers) {
  if (slots.empty()) throw BufferTooSmall("empty batch");
  const std::size_t chunks = (slots.size() + kGradientChunk - 1) / kGradientChunk;
  std::vector<QNetworkParams> chunk_grad(chunks, QNetworkParams::zeros(params.n));
  std::vector<double> chunk_loss(chunks, 0.0);
  const double scale = 1.0 / static_cast<double>(slots.size());
  const int items = buffer.items();
  const bool bootstrap = config.gamma != 0.0;

  parallel_for(chunks, workers, [&](std::size_t begin, std::size_t end, int) {
    ActionValueKernel kernel(params);
    for (std::size_t c = begin; c < end; ++c) {
      const std::size_t first = c * kGradientChunk;
      const std::size_t last = std::min(slots.size(), first + kGradientChunk);
      double loss_sum = 0.0;
      for (std::size_t k = first; k < last; ++k) {
        const std::size_t slot = slots[k];
        if (k + 1 < slots.size()) {
          // Replay rows are scattered over a large buffer; fetch the next one early.
          const auto next = buffer.obs(slots[k + 1]);
          const char* p = reinterpret_cast<const char*>(next.data());
          for (std::size_t off = 0; off < next.size_bytes(); off += 64) __builtin_prefetch(p + off);
        }
        double target = buffer.reward(slot);
        if (bootstrap) {
          const Matrix next = to_matrix(buffer.next_obs(slot), items);
          target = td_target(buffer.reward(slot), &next, config.gamma, frozen);
        }
        const double q = kernel.evaluate(buffer.obs(slot), items, buffer.action(slot));
        const LossValue lv = loss(q, target, config);
        loss_sum += lv.value;
        kernel.accumulate(lv.derivative * scale, chunk_grad[c]);
      }
      chunk_loss[c] = loss_sum;
    }
  });

  TrainStepResult result;
  result.gradient = QNetworkParams::zeros(params.n);
  double total = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    add_into(result.gradient, chunk_grad[c]);
    total += chunk_loss[c];
  }
  result.batch_loss = total * scale;
  return result;
}

DqnLearner::DqnLearner(QNetworkParams params, const TrainConfig& config, int workers)
    : params_(std::move(params)), config_(config), optimizer_(config, params_.size()), workers_(workers) {
  config_.validate();
  if (config_.gamma > 0.0) frozen_ = params_;
}

double DqnLearner::train_step(const ReplayBuffer& buffer, Rng& rng, long step) {
  const auto b = static_cast<std::size_t>(config_.batch_size);
  if (buffer.size() < b) {
    throw BufferTooSmall("replay buffer holds " + std::to_string(buffer.size()) + " transitions, batch needs " +
                         std::to_string(b));
  }
  const auto slots = buffer.sample(b, rng);
  const auto result =
      batch_gradient(params_, buffer, slots, config_, frozen_ ? &*frozen_ : nullptr, workers_);
  optimizer_.apply(params_, result.gradient);
  if (frozen_ && (step + 1) % config_.target_sync_period == 0) frozen_ = params_;
  return result.batch_loss;
}

void write_curves_csv(std::ostream& out, std::span<const CurveRow> rows) {
  const auto old_precision = out.precision(17);
  out << "step,epsilon,batch_loss,mean_reward_window,msr_window\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.epsilon << ',' << r.batch_loss << ',' << r.mean_reward_window << ',' << r.msr_window
        << '\n';
  }
  out.precision(old_precision);
}

}  // namespace unloadrl
