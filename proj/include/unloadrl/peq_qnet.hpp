#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "unloadrl/linalg.hpp"

namespace unloadrl {

struct NetworkConfig {
  int n_features = 32;
  int item_count = 128;
  static constexpr int input_dim = 3;

  [[nodiscard]] int enhanced_width() const { return 4 * n_features; }
  void validate() const;
};

// Learnable tensors of the permutation-equivariant Q-network. Also used as
// the gradient container (same shapes).
struct QNetworkParams {
  int n = 0;
  std::vector<double> theta1;  // n x 3, row-major (feature c, axis j)
  std::vector<double> xi1;     // n
  std::vector<double> theta2;  // 4n: [LF | min | max | mean]
  double xi2 = 0.0;

  static QNetworkParams zeros(int n_features);

  [[nodiscard]] std::size_t size() const { return theta1.size() + xi1.size() + theta2.size() + 1; }
  // Flat view in the order theta1, xi1, theta2, xi2.
  double& flat(std::size_t i);
  [[nodiscard]] double flat(std::size_t i) const;
  [[nodiscard]] bool all_finite() const;
  // FNV-1a over the raw bytes of every value.
  [[nodiscard]] std::uint64_t fingerprint() const;

  friend bool operator==(const QNetworkParams&, const QNetworkParams&) = default;
};

struct GlobalContext {
  std::vector<double> values;  // 3n: [min | max | mean]
  std::vector<int> argmin;     // n, lowest row on ties
  std::vector<int> argmax;     // n, lowest row on ties
};

struct ForwardTrace {
  Matrix x;
  Matrix lf_pre;  // items x n
  Matrix lf;      // items x n
  GlobalContext gc;
  Matrix ef;      // items x 4n
  std::vector<double> q_pre;
  std::vector<double> q;
  std::vector<double> theta2;  // copy used by backward
  std::uint64_t params_fingerprint = 0;
  bool valid = false;
};

QNetworkParams init_params(const NetworkConfig& config, std::uint64_t seed);

Matrix lfe_forward(const Matrix& x, std::span<const double> theta1, std::span<const double> xi1);
GlobalContext gre_forward(const Matrix& lf);
Matrix concat_features(const Matrix& lf, std::span<const double> gc);
// Pre-activation scores xi2 + theta2 . ef[i].
std::vector<double> rs_logits(const Matrix& ef, std::span<const double> theta2, double xi2);
std::vector<double> rs_forward(const Matrix& ef, std::span<const double> theta2, double xi2);

struct ForwardResult {
  std::vector<double> q;
  ForwardTrace trace;
};
ForwardResult forward(const Matrix& x, const QNetworkParams& params);

// Same values as forward(x, params).q without building a trace.
std::vector<double> q_values(const Matrix& x, const QNetworkParams& params);

QNetworkParams backward(const ForwardTrace& trace, std::span<const double> dL_dq);
// Also rejects a trace recorded with different parameter values.
QNetworkParams backward(const QNetworkParams& params, const ForwardTrace& trace, std::span<const double> dL_dq);

// Loss of a q-vector and its derivative; writes dL/dq into the second argument.
using LossProbe = std::function<double(std::span<const double> q, std::span<double> dL_dq)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
};

// Central differences on every parameter against `analytic`. The relative
// error uses max(|analytic|, |numeric|, 1e-3) as denominator.
GradCheckReport compare_gradient(const QNetworkParams& params, const Matrix& x, const LossProbe& probe,
                                 const QNetworkParams& analytic, double step = 1e-6);
double grad_check(const QNetworkParams& params, const Matrix& x, const LossProbe& probe, double step = 1e-6);

// Value of a single q entry and its parameter gradient, for training on
// (observation, action) pairs. Exploits that only one output row carries a
// loss: the row-wise work is one fused pass over the items.
class ActionValueKernel {
 public:
  explicit ActionValueKernel(const QNetworkParams& params);

  // Returns q[action] for the items x 3 row-major input.
  double evaluate(std::span<const float> x, int items, int action);
  double evaluate(std::span<const double> x, int items, int action);
  // Adds dq * d q[action] / d params (for the last evaluate call) to grad.
  void accumulate(double dq, QNetworkParams& grad) const;

 private:
  template <typename T>
  double evaluate_impl(std::span<const T> x, int items, int action);

  // Channel count is padded to a multiple of this for the blocked pass.
  static constexpr std::size_t kPadding = 16;

  const QNetworkParams& params_;
  int n_;
  std::vector<double> w0_, w1_, w2_, b_;
  std::vector<float> w0f_, w1f_, w2f_, bf_;
  // Per-sample state.
  std::vector<double> min_, max_, sum_, amin_, amax_, sx0_, sx1_, sx2_, cnt_;
  std::vector<double> lf_action_;
  double xa_[3] = {0, 0, 0};
  std::vector<double> x_min_row_, x_max_row_;  // n x 3
  int items_ = 0;
  double q_ = 0.0;
};

void save_checkpoint(std::ostream& out, const QNetworkParams& params, int item_count);
struct Checkpoint {
  QNetworkParams params;
  int item_count = 0;
};
Checkpoint load_checkpoint(std::istream& in);

}  // namespace unloadrl
