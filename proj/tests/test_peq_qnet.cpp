#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "unloadrl/errors.hpp"
#include "unloadrl/peq_qnet.hpp"

using namespace unloadrl;

namespace {

Matrix random_input(std::mt19937_64& rng, int items) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix x(static_cast<std::size_t>(items), 3);
  for (double& v : x.values()) v = u(rng);
  return x;
}

QNetworkParams random_params(std::mt19937_64& rng, int n) {
  NetworkConfig cfg;
  cfg.n_features = n;
  return init_params(cfg, rng());
}

// Straight transcription of the architecture, one loop per formula.
std::vector<double> naive_q(const Matrix& x, const QNetworkParams& p) {
  const std::size_t items = x.rows();
  const auto n = static_cast<std::size_t>(p.n);
  std::vector<std::vector<double>> lf(items, std::vector<double>(n));
  for (std::size_t i = 0; i < items; ++i) {
    for (std::size_t c = 0; c < n; ++c) {
      double a = p.xi1[c];
      for (std::size_t j = 0; j < 3; ++j) a += p.theta1[c * 3 + j] * x(i, j);
      lf[i][c] = std::max(a, 0.0);
    }
  }
  std::vector<double> mn(n, 1e300), mx(n, -1e300), mean(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < items; ++i) {
      mn[c] = std::min(mn[c], lf[i][c]);
      mx[c] = std::max(mx[c], lf[i][c]);
      mean[c] += lf[i][c] / static_cast<double>(items);
    }
  }
  std::vector<double> q(items);
  for (std::size_t i = 0; i < items; ++i) {
    double z = p.xi2;
    for (std::size_t c = 0; c < n; ++c) {
      z += p.theta2[c] * lf[i][c] + p.theta2[n + c] * mn[c] + p.theta2[2 * n + c] * mx[c] +
           p.theta2[3 * n + c] * mean[c];
    }
    q[i] = std::tanh(z);
  }
  return q;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

double max_rel_diff(const QNetworkParams& a, const QNetworkParams& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, std::abs(a.flat(i) - b.flat(i)) / std::max({std::abs(a.flat(i)), std::abs(b.flat(i)), 1e-8}));
  }
  return d;
}

}  // namespace

TEST_CASE("init_params ranges and reproducibility") {
  NetworkConfig cfg;
  const auto p = init_params(cfg, 9);
  CHECK(p.n == 32);
  CHECK(p.size() == 3 * 32 + 32 + 4 * 32 + 1);
  const double b1 = std::sqrt(1.0 / 3.0);
  const double b2 = std::sqrt(1.0 / 128.0);
  for (double v : p.theta1) CHECK(std::abs(v) <= b1);
  for (double v : p.xi1) CHECK(std::abs(v) <= b1);
  for (double v : p.theta2) CHECK(std::abs(v) <= b2);
  CHECK(std::abs(p.xi2) <= b2);
  CHECK(init_params(cfg, 9) == p);
  CHECK_FALSE(init_params(cfg, 10) == p);
  cfg.n_features = 0;
  CHECK_THROWS_AS(init_params(cfg, 1), DomainError);
}

TEST_CASE("flat view order and fingerprint") {
  auto p = QNetworkParams::zeros(2);
  for (std::size_t i = 0; i < p.size(); ++i) p.flat(i) = static_cast<double>(i);
  CHECK(p.theta1[5] == 5.0);
  CHECK(p.xi1[0] == 6.0);
  CHECK(p.theta2[0] == 8.0);
  CHECK(p.xi2 == 16.0);
  CHECK_THROWS_AS(p.flat(17), ShapeMismatch);
  const auto fp = p.fingerprint();
  p.theta2[3] = std::nextafter(p.theta2[3], 1e9);
  CHECK(p.fingerprint() != fp);
  p.xi2 = std::nan("");
  CHECK_FALSE(p.all_finite());
}

TEST_CASE("forward on a hand-computed two-item example") {
  auto p = QNetworkParams::zeros(1);
  p.theta1 = {1.0, 0.0, 0.0};
  p.theta2 = {1.0, 1.0, 1.0, 1.0};
  Matrix x(2, 3);
  x(0, 0) = 0.5;
  x(1, 0) = -0.5;
  // lf = [0.5, 0]; min 0, max 0.5, mean 0.25
  const auto r = forward(x, p);
  CHECK(r.q[0] == doctest::Approx(std::tanh(0.5 + 0.0 + 0.5 + 0.25)).epsilon(1e-15));
  CHECK(r.q[1] == doctest::Approx(std::tanh(0.0 + 0.0 + 0.5 + 0.25)).epsilon(1e-15));
  CHECK(r.trace.gc.argmin[0] == 1);
  CHECK(r.trace.gc.argmax[0] == 0);
}

TEST_CASE("forward matches a naive transcription") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    const auto p = random_params(rng, 1 + t * 3);
    const auto x = random_input(rng, 1 + t * 13);
    CHECK(max_abs_diff(forward(x, p).q, naive_q(x, p)) < 1e-13);
  }
}

TEST_CASE("stage functions") {
  Matrix lf(3, 2);
  lf(0, 0) = 1.0;
  lf(1, 0) = 1.0;
  lf(2, 0) = 0.0;
  lf(0, 1) = 2.0;
  lf(1, 1) = 3.0;
  lf(2, 1) = 3.0;
  const auto gc = gre_forward(lf);
  CHECK(gc.values == std::vector<double>{0.0, 2.0, 1.0, 3.0, 2.0 / 3.0, 8.0 / 3.0});
  // Lowest row on ties.
  CHECK(gc.argmax[0] == 0);
  CHECK(gc.argmax[1] == 1);
  CHECK(gc.argmin[0] == 2);
  const auto ef = concat_features(lf, gc.values);
  CHECK(ef.cols() == 8);
  CHECK(ef(1, 5) == 3.0);
  CHECK_THROWS_AS(concat_features(lf, std::vector<double>(5)), ShapeMismatch);
  CHECK_THROWS_AS(lfe_forward(Matrix(2, 2), std::vector<double>(3), std::vector<double>(1)), ShapeMismatch);
  CHECK_THROWS_AS(rs_forward(ef, std::vector<double>(7), 0.0), ShapeMismatch);
}

TEST_CASE("q_values equals forward") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto p = random_params(rng, 32);
    const auto x = random_input(rng, 128);
    CHECK(max_abs_diff(q_values(x, p), forward(x, p).q) <= 1e-12);
  }
  CHECK_THROWS_AS(q_values(Matrix(4, 2), QNetworkParams::zeros(2)), ShapeMismatch);
}

TEST_CASE("permutation equivariance") {
  std::mt19937_64 rng(3);
  const auto p = random_params(rng, 32);
  const auto x = random_input(rng, 128);
  const auto q = forward(x, p).q;
  std::vector<std::size_t> perm(128);
  std::iota(perm.begin(), perm.end(), 0);
  for (int t = 0; t < 20; ++t) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix px(128, 3);
    for (std::size_t i = 0; i < 128; ++i) {
      for (std::size_t j = 0; j < 3; ++j) px(i, j) = x(perm[i], j);
    }
    const auto pq = forward(px, p).q;
    double d = 0.0;
    for (std::size_t i = 0; i < 128; ++i) d = std::max(d, std::abs(pq[i] - q[perm[i]]));
    CHECK(d <= 1e-12);
  }
}

TEST_CASE("backward agrees with finite differences") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 4; ++t) {
    const auto p = random_params(rng, 8);
    const auto x = random_input(rng, 16);
    std::vector<double> w(16);
    for (double& v : w) v = u(rng);
    const LossProbe probe = [&](std::span<const double> q, std::span<double> dq) {
      double l = 0.0;
      for (std::size_t i = 0; i < q.size(); ++i) {
        l += 0.5 * w[i] * q[i] * q[i];
        dq[i] = w[i] * q[i];
      }
      return l;
    };
    CHECK(grad_check(p, x, probe) < 1e-5);
  }
}

TEST_CASE("a corrupted gradient is detected") {
  std::mt19937_64 rng(5);
  const auto p = random_params(rng, 8);
  const auto x = random_input(rng, 16);
  const std::vector<double> w(16, 1.0);
  const LossProbe probe = [&](std::span<const double> q, std::span<double> dq) {
    std::copy(w.begin(), w.end(), dq.begin());
    return std::accumulate(q.begin(), q.end(), 0.0);
  };
  auto g = backward(p, forward(x, p).trace, w);
  CHECK(compare_gradient(p, x, probe, g).max_rel_error < 1e-5);
  g.theta1[4] += 0.01;
  const auto bad = compare_gradient(p, x, probe, g);
  CHECK(bad.max_rel_error > 1e-3);
  CHECK(bad.worst_index == 4);
}

TEST_CASE("stale traces are rejected") {
  std::mt19937_64 rng(6);
  auto p = random_params(rng, 4);
  const auto x = random_input(rng, 8);
  const auto r = forward(x, p);
  const std::vector<double> dq(8, 1.0);
  CHECK_NOTHROW(backward(p, r.trace, dq));
  p.xi2 += 1e-3;
  CHECK_THROWS_AS(backward(p, r.trace, dq), StaleTrace);
  CHECK_THROWS_AS(backward(ForwardTrace{}, dq), StaleTrace);
  CHECK_THROWS_AS(backward(r.trace, std::vector<double>(7)), ShapeMismatch);
}

TEST_CASE("action kernel matches forward and backward, double input") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pick(0, 127);
  for (int t = 0; t < 10; ++t) {
    const auto p = random_params(rng, 32);
    auto x = random_input(rng, 128);
    if (t % 2 == 1) {
      // Duplicate rows create pooling ties.
      for (std::size_t j = 0; j < 3; ++j) x(9, j) = x(3, j);
    }
    const int a = pick(rng);
    ActionValueKernel kernel(p);
    const double qa = kernel.evaluate(x.values(), 128, a);
    const auto fwd = forward(x, p);
    CHECK(std::abs(qa - fwd.q[static_cast<std::size_t>(a)]) <= 1e-12);
    std::vector<double> dq(128, 0.0);
    dq[static_cast<std::size_t>(a)] = 0.7;
    const auto g_ref = backward(p, fwd.trace, dq);
    auto g = QNetworkParams::zeros(32);
    kernel.accumulate(0.7, g);
    CHECK(max_rel_diff(g, g_ref) < 1e-9);
  }
}

TEST_CASE("action kernel on float input") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 10; ++t) {
    const auto p = random_params(rng, 32);
    const auto xd = random_input(rng, 128);
    std::vector<float> xf(xd.values().begin(), xd.values().end());
    Matrix x(128, 3);
    for (std::size_t i = 0; i < xf.size(); ++i) x.values()[i] = xf[i];
    const int a = t * 11;
    ActionValueKernel kernel(p);
    const double qa = kernel.evaluate(std::span<const float>(xf), 128, a);
    const auto fwd = forward(x, p);
    CHECK(std::abs(qa - fwd.q[static_cast<std::size_t>(a)]) <= 1e-5);
    std::vector<double> dq(128, 0.0);
    dq[static_cast<std::size_t>(a)] = -1.3;
    const auto g_ref = backward(p, fwd.trace, dq);
    auto g = QNetworkParams::zeros(32);
    kernel.accumulate(-1.3, g);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      worst = std::max(worst, std::abs(g.flat(i) - g_ref.flat(i)) / std::max(std::abs(g_ref.flat(i)), 1e-3));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("action kernel with channel counts off the padding") {
  std::mt19937_64 rng(9);
  for (int n : {1, 5, 17, 33}) {
    const auto p = random_params(rng, n);
    const auto x = random_input(rng, 40);
    ActionValueKernel kernel(p);
    const double qa = kernel.evaluate(x.values(), 40, 39);
    const auto fwd = forward(x, p);
    CHECK(std::abs(qa - fwd.q[39]) <= 1e-12);
    std::vector<double> dq(40, 0.0);
    dq[39] = 1.0;
    auto g = QNetworkParams::zeros(n);
    kernel.accumulate(1.0, g);
    CHECK(max_rel_diff(g, backward(p, fwd.trace, dq)) < 1e-9);
  }
  ActionValueKernel kernel(random_params(rng, 4));
  CHECK_THROWS_AS(kernel.evaluate(std::vector<double>(30), 10, 10), ShapeMismatch);
  CHECK_THROWS_AS(kernel.evaluate(std::vector<double>(29), 10, 0), ShapeMismatch);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  std::mt19937_64 rng(10);
  auto p = random_params(rng, 32);
  p.theta2[0] = 1e-310;  // subnormal
  p.xi2 = -0.1;
  std::stringstream buf;
  save_checkpoint(buf, p, 128);
  const auto cp = load_checkpoint(buf);
  CHECK(cp.item_count == 128);
  CHECK(cp.params == p);
  CHECK(cp.params.fingerprint() == p.fingerprint());
}

TEST_CASE("malformed checkpoints") {
  std::stringstream empty;
  CHECK_THROWS_AS(load_checkpoint(empty), IoError);
  std::stringstream good;
  save_checkpoint(good, QNetworkParams::zeros(2), 4);
  std::string text = good.str();
  std::stringstream truncated(text.substr(0, text.size() - 6));
  CHECK_THROWS_AS(load_checkpoint(truncated), IoError);
  std::string wrong = text;
  wrong.replace(wrong.find("xi1"), 3, "xj1");
  std::stringstream renamed(wrong);
  CHECK_THROWS_AS(load_checkpoint(renamed), IoError);
}
