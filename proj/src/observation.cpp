#include "unloadrl/observation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "unloadrl/errors.hpp"

namespace unloadrl {

namespace {

constexpr double kBoundsTolerance = 1e-9;

bool is_psd3(const Weight3& w) {
  constexpr double eps = 1e-12;
  const auto at = [&](int r, int c) { return w[static_cast<std::size_t>(r * 3 + c)]; };
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (std::abs(at(r, c) - at(c, r)) > eps) return false;
    }
  }
  // All principal minors non-negative.
  for (int i = 0; i < 3; ++i) {
    if (at(i, i) < -eps) return false;
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (at(i, i) * at(j, j) - at(i, j) * at(j, i) < -eps) return false;
    }
  }
  const double det = at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1)) -
                     at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0)) +
                     at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0));
  return det >= -eps;
}

}  // namespace

void ViewerConfig::validate() const {
  if (visible_count < 1) throw DomainError("visible_count must be at least 1");
  if (!is_psd3(weight)) throw DomainError("viewer weight matrix must be symmetric positive semi-definite");
}

double weighted_distance(const Vec3& p_view, const Vec3& p, const Weight3& w) {
  const double d[3] = {p_view.x - p.x, p_view.y - p.y, p_view.z - p.z};
  double acc = 0.0;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) acc += d[r] * w[static_cast<std::size_t>(r * 3 + c)] * d[c];
  }
  return std::sqrt(std::max(acc, 0.0));
}

std::vector<int> viewer_order(const ContainerState& state, const ViewerConfig& viewer) {
  std::vector<std::pair<double, int>> keyed;
  keyed.reserve(state.items.size());
  for (const auto& it : state.items) {
    if (it.alive) keyed.emplace_back(weighted_distance(viewer.p_view, it.center, viewer.weight), it.item_id);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<int> order;
  order.reserve(keyed.size());
  for (const auto& [d, id] : keyed) order.push_back(id);
  return order;
}

std::vector<int> select_visible(const ContainerState& state, const ViewerConfig& viewer) {
  viewer.validate();
  const int live = state.live_count();
  if (live < viewer.visible_count) {
    throw TooFewItems("only " + std::to_string(live) + " live items, " +
                      std::to_string(viewer.visible_count) + " required");
  }
  auto order = viewer_order(state, viewer);
  order.resize(static_cast<std::size_t>(viewer.visible_count));
  return order;
}

Vec3 normalize_position(const Vec3& p, const ContainerSpec& spec) {
  const Vec3 out{2.0 * p.x / spec.depth_x - 1.0, 2.0 * p.y / spec.width_y - 1.0, 2.0 * p.z / spec.height_z - 1.0};
  for (double v : {out.x, out.y, out.z}) {
    if (v < -1.0 - kBoundsTolerance || v > 1.0 + kBoundsTolerance) {
      throw OutOfBounds("position outside the container");
    }
  }
  return out;
}

std::vector<double> equalize_axis(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<double> out(n, 0.0);
  if (n <= 1) return out;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const double denom = static_cast<double>(n - 1);
  for (std::size_t rank = 0; rank < n; ++rank) {
    out[idx[rank]] = (2.0 * static_cast<double>(rank) - denom) / denom;
  }
  return out;
}

void equalize_columns(Matrix& features) {
  std::vector<double> column(features.rows());
  for (std::size_t c = 0; c < features.cols(); ++c) {
    for (std::size_t r = 0; r < features.rows(); ++r) column[r] = features(r, c);
    const auto eq = equalize_axis(column);
    for (std::size_t r = 0; r < features.rows(); ++r) features(r, c) = eq[r];
  }
}

Observation observation_from_rows(const ContainerState& state, std::span<const int> visible,
                                  const ViewerConfig& viewer, int step_k) {
  Observation obs;
  obs.step_k = step_k;
  obs.item_ids.assign(visible.begin(), visible.end());
  obs.features = Matrix(visible.size(), kFeatureDim);
  for (std::size_t r = 0; r < visible.size(); ++r) {
    const ItemInstance& it = state.item(visible[r]);
    if (!it.alive) throw DeadItem("observation row refers to a removed item");
    const Vec3 p = normalize_position(it.center, state.spec);
    obs.features(r, 0) = p.x;
    obs.features(r, 1) = p.y;
    obs.features(r, 2) = p.z;
  }
  if (viewer.fe_enabled) equalize_columns(obs.features);
  return obs;
}

Observation make_observation(const ContainerState& state, const ViewerConfig& viewer,
                             const ContainerSpec& spec, int step_k) {
  const auto visible = select_visible(state, viewer);
  if (!(spec.depth_x == state.spec.depth_x && spec.width_y == state.spec.width_y &&
        spec.height_z == state.spec.height_z)) {
    throw DomainError("container spec does not match the state");
  }
  return observation_from_rows(state, visible, viewer, step_k);
}

void write_observation_csv(std::ostream& out, const ContainerState& state, std::span<const int> visible) {
  ViewerConfig plain;
  plain.fe_enabled = false;
  const Observation raw = observation_from_rows(state, visible, plain, 0);
  Matrix eq = raw.features;
  equalize_columns(eq);
  const auto old_precision = out.precision(17);
  out << "row,item_id,x,y,z,x_eq,y_eq,z_eq\n";
  for (std::size_t r = 0; r < visible.size(); ++r) {
    out << r << ',' << visible[r];
    for (std::size_t c = 0; c < 3; ++c) out << ',' << raw.features(r, c);
    for (std::size_t c = 0; c < 3; ++c) out << ',' << eq(r, c);
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace unloadrl
