#include "unloadrl/peq_qnet.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <type_traits>

#include "unloadrl/errors.hpp"

namespace unloadrl {

namespace {

constexpr const char* kCheckpointMagic = "unloadrl-peq-checkpoint";
constexpr int kCheckpointVersion = 1;

void check_params_shape(const QNetworkParams& p) {
  if (p.n < 1 || p.theta1.size() != static_cast<std::size_t>(3 * p.n) ||
      p.xi1.size() != static_cast<std::size_t>(p.n) || p.theta2.size() != static_cast<std::size_t>(4 * p.n)) {
    throw ShapeMismatch("network parameters have inconsistent shapes");
  }
}

double relu(double v) { return v > 0.0 ? v : 0.0; }

}  // namespace

void NetworkConfig::validate() const {
  if (n_features < 1) throw DomainError("n_features must be at least 1");
  if (item_count < 1) throw DomainError("item_count must be at least 1");
}

QNetworkParams QNetworkParams::zeros(int n_features) {
  QNetworkParams p;
  p.n = n_features;
  p.theta1.assign(static_cast<std::size_t>(3 * n_features), 0.0);
  p.xi1.assign(static_cast<std::size_t>(n_features), 0.0);
  p.theta2.assign(static_cast<std::size_t>(4 * n_features), 0.0);
  p.xi2 = 0.0;
  return p;
}

double& QNetworkParams::flat(std::size_t i) {
  if (i < theta1.size()) return theta1[i];
  i -= theta1.size();
  if (i < xi1.size()) return xi1[i];
  i -= xi1.size();
  if (i < theta2.size()) return theta2[i];
  i -= theta2.size();
  if (i == 0) return xi2;
  throw ShapeMismatch("flat parameter index out of range");
}

double QNetworkParams::flat(std::size_t i) const { return const_cast<QNetworkParams&>(*this).flat(i); }

bool QNetworkParams::all_finite() const {
  const auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(theta1.begin(), theta1.end(), finite) && std::all_of(xi1.begin(), xi1.end(), finite) &&
         std::all_of(theta2.begin(), theta2.end(), finite) && std::isfinite(xi2);
}

std::uint64_t QNetworkParams::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  const auto mix = [&](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<double>(n));
  for (double v : theta1) mix(v);
  for (double v : xi1) mix(v);
  for (double v : theta2) mix(v);
  mix(xi2);
  return h;
}

QNetworkParams init_params(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  QNetworkParams p = QNetworkParams::zeros(config.n_features);
  std::mt19937_64 rng(seed);
  const double bound1 = std::sqrt(1.0 / NetworkConfig::input_dim);
  const double bound2 = std::sqrt(1.0 / config.enhanced_width());
  std::uniform_real_distribution<double> u1(-bound1, bound1);
  std::uniform_real_distribution<double> u2(-bound2, bound2);
  for (double& v : p.theta1) v = u1(rng);
  for (double& v : p.xi1) v = u1(rng);
  for (double& v : p.theta2) v = u2(rng);
  p.xi2 = u2(rng);
  return p;
}

Matrix lfe_forward(const Matrix& x, std::span<const double> theta1, std::span<const double> xi1) {
  const std::size_t n = xi1.size();
  if (x.cols() != NetworkConfig::input_dim || theta1.size() != 3 * n || n == 0) {
    throw ShapeMismatch("lfe_forward: expected items x 3 input and n x 3 kernel");
  }
  Matrix lf(x.rows(), n);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < n; ++c) {
      double acc = xi1[c];
      for (std::size_t j = 0; j < 3; ++j) acc += theta1[c * 3 + j] * x(i, j);
      lf(i, c) = relu(acc);
    }
  }
  return lf;
}

GlobalContext gre_forward(const Matrix& lf) {
  if (lf.rows() == 0 || lf.cols() == 0) throw ShapeMismatch("gre_forward: empty feature matrix");
  const std::size_t n = lf.cols();
  GlobalContext gc;
  gc.values.assign(3 * n, 0.0);
  gc.argmin.assign(n, 0);
  gc.argmax.assign(n, 0);
  for (std::size_t c = 0; c < n; ++c) {
    double mn = lf(0, c);
    double mx = lf(0, c);
    double sum = 0.0;
    int amin = 0;
    int amax = 0;
    for (std::size_t i = 0; i < lf.rows(); ++i) {
      const double v = lf(i, c);
      if (v < mn) {
        mn = v;
        amin = static_cast<int>(i);
      }
      if (v > mx) {
        mx = v;
        amax = static_cast<int>(i);
      }
      sum += v;
    }
    gc.values[c] = mn;
    gc.values[n + c] = mx;
    gc.values[2 * n + c] = sum / static_cast<double>(lf.rows());
    gc.argmin[c] = amin;
    gc.argmax[c] = amax;
  }
  return gc;
}

Matrix concat_features(const Matrix& lf, std::span<const double> gc) {
  const std::size_t n = lf.cols();
  if (gc.size() != 3 * n) throw ShapeMismatch("concat_features: global context must have 3n entries");
  Matrix ef(lf.rows(), 4 * n);
  for (std::size_t i = 0; i < lf.rows(); ++i) {
    auto out = ef.row(i);
    const auto in = lf.row(i);
    std::copy(in.begin(), in.end(), out.begin());
    std::copy(gc.begin(), gc.end(), out.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return ef;
}

std::vector<double> rs_logits(const Matrix& ef, std::span<const double> theta2, double xi2) {
  if (ef.cols() != theta2.size()) throw ShapeMismatch("rs_forward: kernel width must equal 4n");
  std::vector<double> z(ef.rows());
  for (std::size_t i = 0; i < ef.rows(); ++i) {
    double acc = xi2;
    const auto r = ef.row(i);
    for (std::size_t l = 0; l < r.size(); ++l) acc += theta2[l] * r[l];
    z[i] = acc;
  }
  return z;
}

std::vector<double> rs_forward(const Matrix& ef, std::span<const double> theta2, double xi2) {
  auto q = rs_logits(ef, theta2, xi2);
  for (double& v : q) v = std::tanh(v);
  return q;
}

ForwardResult forward(const Matrix& x, const QNetworkParams& params) {
  check_params_shape(params);
  if (x.cols() != NetworkConfig::input_dim || x.rows() == 0) {
    throw ShapeMismatch("forward: expected a non-empty items x 3 input");
  }
  const auto n = static_cast<std::size_t>(params.n);
  ForwardTrace t;
  t.x = x;
  t.lf_pre = Matrix(x.rows(), n);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < n; ++c) {
      double acc = params.xi1[c];
      for (std::size_t j = 0; j < 3; ++j) acc += params.theta1[c * 3 + j] * x(i, j);
      t.lf_pre(i, c) = acc;
    }
  }
  t.lf = lfe_forward(x, params.theta1, params.xi1);
  t.gc = gre_forward(t.lf);
  t.ef = concat_features(t.lf, t.gc.values);
  t.q_pre = rs_logits(t.ef, params.theta2, params.xi2);
  t.q.resize(t.q_pre.size());
  std::transform(t.q_pre.begin(), t.q_pre.end(), t.q.begin(), [](double v) { return std::tanh(v); });
  t.theta2 = params.theta2;
  t.params_fingerprint = params.fingerprint();
  t.valid = true;
  ForwardResult result;
  result.q = t.q;
  result.trace = std::move(t);
  return result;
}

namespace {

typedef float float_lanes __attribute__((vector_size(64)));
typedef double double_lanes __attribute__((vector_size(64)));

template <typename S>
struct LaneType;
template <>
struct LaneType<float> {
  using type = float_lanes;
};
template <>
struct LaneType<double> {
  using type = double_lanes;
};

struct PoolOutputs {
  double* mn;
  double* mx;
  double* amin;
  double* amax;
  double* sum;
  double* sx0;
  double* sx1;
  double* sx2;
  double* cnt;
};

// One pass over the rows computing, per channel, min/max of the rectified
// features with their first arg, their sum, and sums of the inputs over the
// rows where the channel is active. Channels are processed in register-sized
// blocks of scalar type S; `padded` is a multiple of the block width.
template <typename S, typename T>
void pooled_pass(const S* w0, const S* w1, const S* w2, const S* b, std::size_t padded, const T* x, int items,
                 const PoolOutputs& out) {
  constexpr std::size_t width = 64 / sizeof(S);
  using lanes = typename LaneType<S>::type;
  const auto load = [](const S* p) {
    lanes v;
    std::memcpy(&v, p, sizeof v);
    return v;
  };
  const auto store = [](double* p, const lanes& v) {
    for (std::size_t l = 0; l < width; ++l) p[l] = static_cast<double>(v[l]);
  };
  const lanes zero = lanes{} * S(0);
  const lanes one = zero + S(1);
  for (std::size_t cb = 0; cb < padded; cb += width) {
    const lanes bw0 = load(w0 + cb);
    const lanes bw1 = load(w1 + cb);
    const lanes bw2 = load(w2 + cb);
    const lanes bb = load(b + cb);
    lanes bmn = zero + std::numeric_limits<S>::max();
    lanes bmx = zero - std::numeric_limits<S>::max();
    lanes bamin = zero, bamax = zero, bsum = zero, bs0 = zero, bs1 = zero, bs2 = zero, bcnt = zero;
    for (int i = 0; i < items; ++i) {
      const S x0 = static_cast<S>(x[3 * i]);
      const S x1 = static_cast<S>(x[3 * i + 1]);
      const S x2 = static_cast<S>(x[3 * i + 2]);
      const lanes row = zero + static_cast<S>(i);
      const lanes pre = bb + bw0 * x0 + bw1 * x1 + bw2 * x2;
      const auto active = pre > zero;
      const lanes lf = active ? pre : zero;
      const auto lt = lf < bmn;
      const auto gt = lf > bmx;
      bmn = lt ? lf : bmn;
      bamin = lt ? row : bamin;
      bmx = gt ? lf : bmx;
      bamax = gt ? row : bamax;
      bsum += lf;
      bs0 += active ? zero + x0 : zero;
      bs1 += active ? zero + x1 : zero;
      bs2 += active ? zero + x2 : zero;
      bcnt += active ? one : zero;
    }
    store(out.mn + cb, bmn);
    store(out.mx + cb, bmx);
    store(out.amin + cb, bamin);
    store(out.amax + cb, bamax);
    store(out.sum + cb, bsum);
    store(out.sx0 + cb, bs0);
    store(out.sx1 + cb, bs1);
    store(out.sx2 + cb, bs2);
    store(out.cnt + cb, bcnt);
  }
}

}  // namespace

std::vector<double> q_values(const Matrix& x, const QNetworkParams& params) {
  check_params_shape(params);
  if (x.cols() != NetworkConfig::input_dim || x.rows() == 0) {
    throw ShapeMismatch("q_values: expected a non-empty items x 3 input");
  }
  constexpr std::size_t block = 16;
  const auto n = static_cast<std::size_t>(params.n);
  const std::size_t padded = (n + block - 1) / block * block;
  const std::size_t items = x.rows();
  std::vector<double> w(4 * padded, 0.0);
  double* w0 = w.data();
  double* w1 = w0 + padded;
  double* w2 = w1 + padded;
  double* b = w2 + padded;
  for (std::size_t c = 0; c < n; ++c) {
    w0[c] = params.theta1[c * 3];
    w1[c] = params.theta1[c * 3 + 1];
    w2[c] = params.theta1[c * 3 + 2];
    b[c] = params.xi1[c];
  }
  std::vector<double> pooled(9 * padded);
  const PoolOutputs out{pooled.data(),
                        pooled.data() + padded,
                        pooled.data() + 2 * padded,
                        pooled.data() + 3 * padded,
                        pooled.data() + 4 * padded,
                        pooled.data() + 5 * padded,
                        pooled.data() + 6 * padded,
                        pooled.data() + 7 * padded,
                        pooled.data() + 8 * padded};
  pooled_pass<double>(w0, w1, w2, b, padded, x.values().data(), static_cast<int>(items), out);

  // The global context contributes the same offset to every row.
  double base = params.xi2;
  for (std::size_t c = 0; c < n; ++c) {
    base += params.theta2[n + c] * out.mn[c] + params.theta2[2 * n + c] * out.mx[c] +
            params.theta2[3 * n + c] * (out.sum[c] / static_cast<double>(items));
  }
  std::vector<double> cols(3 * items);
  double* x0 = cols.data();
  double* x1 = x0 + items;
  double* x2 = x1 + items;
  for (std::size_t i = 0; i < items; ++i) {
    x0[i] = x(i, 0);
    x1[i] = x(i, 1);
    x2[i] = x(i, 2);
  }
  std::vector<double> acc(items, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    const double t = params.theta2[c];
    for (std::size_t i = 0; i < items; ++i) {
      const double pre = b[c] + w0[c] * x0[i] + w1[c] * x1[i] + w2[c] * x2[i];
      acc[i] += t * (pre > 0.0 ? pre : 0.0);
    }
  }
  std::vector<double> q(items);
  for (std::size_t i = 0; i < items; ++i) q[i] = std::tanh(base + acc[i]);
  return q;
}

QNetworkParams backward(const ForwardTrace& trace, std::span<const double> dL_dq) {
  if (!trace.valid) throw StaleTrace("backward called with a trace that was never filled by forward");
  const std::size_t items = trace.x.rows();
  if (dL_dq.size() != items) throw ShapeMismatch("backward: dL_dq must have one entry per item");
  const std::size_t n = trace.lf.cols();
  QNetworkParams g = QNetworkParams::zeros(static_cast<int>(n));

  // Relation scorer.
  std::vector<double> dz(items);
  std::vector<double> d_gc(3 * n, 0.0);
  Matrix d_lf(items, n);
  for (std::size_t i = 0; i < items; ++i) {
    dz[i] = dL_dq[i] * (1.0 - trace.q[i] * trace.q[i]);
    if (dz[i] == 0.0) continue;
    g.xi2 += dz[i];
    const auto ef = trace.ef.row(i);
    for (std::size_t l = 0; l < 4 * n; ++l) g.theta2[l] += dz[i] * ef[l];
    for (std::size_t c = 0; c < n; ++c) d_lf(i, c) += dz[i] * trace.theta2[c];
    for (std::size_t l = 0; l < 3 * n; ++l) d_gc[l] += dz[i] * trace.theta2[n + l];
  }

  // Global relation extractor: min/max route to the cached row, mean spreads evenly.
  const double inv_items = 1.0 / static_cast<double>(items);
  for (std::size_t c = 0; c < n; ++c) {
    d_lf(static_cast<std::size_t>(trace.gc.argmin[c]), c) += d_gc[c];
    d_lf(static_cast<std::size_t>(trace.gc.argmax[c]), c) += d_gc[n + c];
    const double share = d_gc[2 * n + c] * inv_items;
    for (std::size_t i = 0; i < items; ++i) d_lf(i, c) += share;
  }

  // Feature extractor.
  for (std::size_t i = 0; i < items; ++i) {
    for (std::size_t c = 0; c < n; ++c) {
      if (!(trace.lf_pre(i, c) > 0.0)) continue;
      const double d = d_lf(i, c);
      g.xi1[c] += d;
      for (std::size_t j = 0; j < 3; ++j) g.theta1[c * 3 + j] += d * trace.x(i, j);
    }
  }
  return g;
}

QNetworkParams backward(const QNetworkParams& params, const ForwardTrace& trace, std::span<const double> dL_dq) {
  if (!trace.valid || trace.params_fingerprint != params.fingerprint()) {
    throw StaleTrace("trace was recorded with different network parameters");
  }
  return backward(trace, dL_dq);
}

GradCheckReport compare_gradient(const QNetworkParams& params, const Matrix& x, const LossProbe& probe,
                                 const QNetworkParams& analytic, double step) {
  check_params_shape(params);
  if (analytic.size() != params.size()) throw ShapeMismatch("gradient shape differs from parameters");
  std::vector<double> scratch(x.rows());
  const auto loss_at = [&](const QNetworkParams& p) { return probe(q_values(x, p), scratch); };
  GradCheckReport report;
  QNetworkParams probe_params = params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double orig = params.flat(k);
    probe_params.flat(k) = orig + step;
    const double up = loss_at(probe_params);
    probe_params.flat(k) = orig - step;
    const double down = loss_at(probe_params);
    probe_params.flat(k) = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic.flat(k);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = k;
    }
  }
  return report;
}

double grad_check(const QNetworkParams& params, const Matrix& x, const LossProbe& probe, double step) {
  auto [q, trace] = forward(x, params);
  std::vector<double> dq(q.size(), 0.0);
  probe(q, dq);
  const QNetworkParams analytic = backward(params, trace, dq);
  return compare_gradient(params, x, probe, analytic, step).max_rel_error;
}

ActionValueKernel::ActionValueKernel(const QNetworkParams& params) : params_(params), n_(params.n) {
  check_params_shape(params);
  const auto n = static_cast<std::size_t>(n_);
  // Padded channels have zero weights and bias, so they never activate.
  const std::size_t padded = (n + kPadding - 1) / kPadding * kPadding;
  for (auto* v : {&w0_, &w1_, &w2_, &b_}) v->assign(padded, 0.0);
  for (auto* v : {&w0f_, &w1f_, &w2f_, &bf_}) v->assign(padded, 0.0F);
  for (std::size_t c = 0; c < n; ++c) {
    w0_[c] = params.theta1[c * 3];
    w1_[c] = params.theta1[c * 3 + 1];
    w2_[c] = params.theta1[c * 3 + 2];
    b_[c] = params.xi1[c];
    w0f_[c] = static_cast<float>(w0_[c]);
    w1f_[c] = static_cast<float>(w1_[c]);
    w2f_[c] = static_cast<float>(w2_[c]);
    bf_[c] = static_cast<float>(b_[c]);
  }
  for (auto* v : {&min_, &max_, &sum_, &amin_, &amax_, &sx0_, &sx1_, &sx2_, &cnt_}) v->assign(padded, 0.0);
  lf_action_.assign(n, 0.0);
  x_min_row_.assign(3 * n, 0.0);
  x_max_row_.assign(3 * n, 0.0);
}

double ActionValueKernel::evaluate(std::span<const float> x, int items, int action) {
  return evaluate_impl(x, items, action);
}

double ActionValueKernel::evaluate(std::span<const double> x, int items, int action) {
  return evaluate_impl(x, items, action);
}

template <typename T>
double ActionValueKernel::evaluate_impl(std::span<const T> x, int items, int action) {
  if (items < 1 || x.size() != static_cast<std::size_t>(items) * 3) {
    throw ShapeMismatch("kernel input must be items x 3");
  }
  if (action < 0 || action >= items) throw ShapeMismatch("kernel action index out of range");
  items_ = items;
  const auto n = static_cast<std::size_t>(n_);
  const PoolOutputs out{min_.data(), max_.data(), amin_.data(), amax_.data(), sum_.data(),
                        sx0_.data(), sx1_.data(), sx2_.data(), cnt_.data()};
  // Single precision inputs (replay storage) are pooled in single precision.
  if constexpr (std::is_same_v<T, float>) {
    pooled_pass<float>(w0f_.data(), w1f_.data(), w2f_.data(), bf_.data(), w0f_.size(), x.data(), items, out);
  } else {
    pooled_pass<double>(w0_.data(), w1_.data(), w2_.data(), b_.data(), w0_.size(), x.data(), items, out);
  }
  const double* w0 = w0_.data();
  const double* w1 = w1_.data();
  const double* w2 = w2_.data();
  const double* b = b_.data();
  const double* mn = min_.data();
  const double* mx = max_.data();
  const double* sum = sum_.data();
  const double* amin = amin_.data();
  const double* amax = amax_.data();
  const auto a = static_cast<std::size_t>(action);
  xa_[0] = static_cast<double>(x[3 * a]);
  xa_[1] = static_cast<double>(x[3 * a + 1]);
  xa_[2] = static_cast<double>(x[3 * a + 2]);
  const double inv_items = 1.0 / static_cast<double>(items);
  const double* t2 = params_.theta2.data();
  double z = params_.xi2;
  for (std::size_t c = 0; c < n; ++c) {
    lf_action_[c] = relu(b[c] + w0[c] * xa_[0] + w1[c] * xa_[1] + w2[c] * xa_[2]);
    z += t2[c] * lf_action_[c] + t2[n + c] * mn[c] + t2[2 * n + c] * mx[c] + t2[3 * n + c] * (sum[c] * inv_items);
    const auto rmin = static_cast<std::size_t>(amin[c]);
    const auto rmax = static_cast<std::size_t>(amax[c]);
    for (std::size_t j = 0; j < 3; ++j) {
      x_min_row_[c * 3 + j] = static_cast<double>(x[3 * rmin + j]);
      x_max_row_[c * 3 + j] = static_cast<double>(x[3 * rmax + j]);
    }
  }
  q_ = std::tanh(z);
  return q_;
}

void ActionValueKernel::accumulate(double dq, QNetworkParams& grad) const {
  const auto n = static_cast<std::size_t>(n_);
  const double dz = dq * (1.0 - q_ * q_);
  if (dz == 0.0) return;
  const double inv_items = 1.0 / static_cast<double>(items_);
  const double* t2 = params_.theta2.data();
  grad.xi2 += dz;
  for (std::size_t c = 0; c < n; ++c) {
    grad.theta2[c] += dz * lf_action_[c];
    grad.theta2[n + c] += dz * min_[c];
    grad.theta2[2 * n + c] += dz * max_[c];
    grad.theta2[3 * n + c] += dz * sum_[c] * inv_items;

    double d_bias = 0.0;
    double d_w[3] = {0.0, 0.0, 0.0};
    if (lf_action_[c] > 0.0) {
      const double d = dz * t2[c];
      d_bias += d;
      for (std::size_t j = 0; j < 3; ++j) d_w[j] += d * xa_[j];
    }
    if (min_[c] > 0.0) {
      const double d = dz * t2[n + c];
      d_bias += d;
      for (std::size_t j = 0; j < 3; ++j) d_w[j] += d * x_min_row_[c * 3 + j];
    }
    if (max_[c] > 0.0) {
      const double d = dz * t2[2 * n + c];
      d_bias += d;
      for (std::size_t j = 0; j < 3; ++j) d_w[j] += d * x_max_row_[c * 3 + j];
    }
    const double share = dz * t2[3 * n + c] * inv_items;
    d_bias += share * cnt_[c];
    d_w[0] += share * sx0_[c];
    d_w[1] += share * sx1_[c];
    d_w[2] += share * sx2_[c];
    grad.xi1[c] += d_bias;
    for (std::size_t j = 0; j < 3; ++j) grad.theta1[c * 3 + j] += d_w[j];
  }
}

void save_checkpoint(std::ostream& out, const QNetworkParams& params, int item_count) {
  check_params_shape(params);
  char buf[32];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  const auto put_list = [&](const char* name, const std::vector<double>& values) {
    out << name;
    for (double v : values) {
      out << ' ';
      put(v);
    }
    out << '\n';
  };
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "n " << params.n << '\n';
  out << "item_count " << item_count << '\n';
  put_list("theta1", params.theta1);
  put_list("xi1", params.xi1);
  put_list("theta2", params.theta2);
  out << "xi2 ";
  put(params.xi2);
  out << '\n';
  if (!out) throw IoError("failed to write checkpoint");
}

Checkpoint load_checkpoint(std::istream& in) {
  const auto fail = [](const std::string& what) { throw IoError("malformed checkpoint: " + what); };
  std::string line;
  const auto next_line = [&](const char* key) {
    if (!std::getline(in, line)) fail(std::string("missing ") + key);
    std::istringstream fields(line);
    std::string head;
    fields >> head;
    if (head != key) fail(std::string("expected '") + key + "', got '" + head + "'");
    std::string rest;
    std::getline(fields, rest);
    return rest;
  };
  const auto parse_doubles = [&](const std::string& text, std::size_t expected, const char* key) {
    std::vector<double> values;
    const char* p = text.data();
    const char* end = text.data() + text.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{}) fail(std::string("bad number in ") + key);
      values.push_back(v);
      p = ptr;
    }
    if (values.size() != expected) fail(std::string("wrong value count for ") + key);
    return values;
  };

  const std::string version = next_line(kCheckpointMagic);
  if (std::stoi(version) != kCheckpointVersion) fail("unsupported version " + version);
  Checkpoint cp;
  const int n = std::stoi(next_line("n"));
  if (n < 1) fail("n must be positive");
  cp.item_count = std::stoi(next_line("item_count"));
  cp.params.n = n;
  const auto nn = static_cast<std::size_t>(n);
  cp.params.theta1 = parse_doubles(next_line("theta1"), 3 * nn, "theta1");
  cp.params.xi1 = parse_doubles(next_line("xi1"), nn, "xi1");
  cp.params.theta2 = parse_doubles(next_line("theta2"), 4 * nn, "theta2");
  cp.params.xi2 = parse_doubles(next_line("xi2"), 1, "xi2").front();
  return cp;
}

}  // namespace unloadrl
