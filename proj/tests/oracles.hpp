#pragma once

// Brute-force reference implementations used by the tests. They share no
// code with the library beyond the data types.

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>
#include <vector>

#include "unloadrl/container_model.hpp"
#include "unloadrl/pick_physics.hpp"

namespace oracle {

inline double overlap(double a0, double a1, double b0, double b1) { return std::min(a1, b1) - std::max(a0, b0); }

inline double axis_overlap(const unloadrl::ItemInstance& a, const unloadrl::ItemInstance& b, int axis) {
  const double ca = axis == 0 ? a.center.x : axis == 1 ? a.center.y : a.center.z;
  const double cb = axis == 0 ? b.center.x : axis == 1 ? b.center.y : b.center.z;
  const double ea = axis == 0 ? a.extent.x : axis == 1 ? a.extent.y : a.extent.z;
  const double eb = axis == 0 ? b.extent.x : axis == 1 ? b.extent.y : b.extent.z;
  return overlap(ca - ea / 2, ca + ea / 2, cb - eb / 2, cb + eb / 2);
}

// Pairs of live items sharing volume deeper than 1 mm on every axis.
inline int overlap_count(const unloadrl::ContainerState& s) {
  int count = 0;
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    if (!s.items[i].alive) continue;
    for (std::size_t j = i + 1; j < s.items.size(); ++j) {
      if (!s.items[j].alive) continue;
      bool all = true;
      for (int axis = 0; axis < 3 && all; ++axis) all = axis_overlap(s.items[i], s.items[j], axis) > 1e-3;
      if (all) ++count;
    }
  }
  return count;
}

// (lower, upper) pairs: upper's bottom face lies on lower's top face with a
// footprint overlap of at least 1 mm in x and y.
inline std::set<std::pair<int, int>> support_edges(const unloadrl::ContainerState& s) {
  std::set<std::pair<int, int>> edges;
  for (const auto& a : s.items) {
    if (!a.alive) continue;
    for (const auto& b : s.items) {
      if (!b.alive || a.item_id == b.item_id) continue;
      if (axis_overlap(a, b, 0) < 1e-3 || axis_overlap(a, b, 1) < 1e-3) continue;
      if (std::abs(b.bottom() - a.top()) <= 1e-3) edges.emplace(a.item_id, b.item_id);
    }
  }
  return edges;
}

inline int unsupported_count(const unloadrl::ContainerState& s) {
  const auto edges = support_edges(s);
  int count = 0;
  for (const auto& it : s.items) {
    if (!it.alive || it.bottom() <= 1e-3) continue;
    const bool rests = std::any_of(edges.begin(), edges.end(), [&](const auto& e) { return e.second == it.item_id; });
    if (!rests) ++count;
  }
  return count;
}

// Items that move when `id` is lifted: transitive closure over the edges.
inline std::set<int> closure(const std::set<std::pair<int, int>>& edges, int id) {
  std::set<int> out{id};
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& [lo, up] : edges) {
      if (out.count(lo) && !out.count(up)) {
        out.insert(up);
        grew = true;
      }
    }
  }
  return out;
}

// Constant-acceleration lift of p items over the configured time.
inline double lift(double force, double mass, double g, double t) {
  const double a = force / mass - g;
  return a > 0 ? 0.5 * a * t * t : 0.0;
}

inline std::vector<int> pickable(const unloadrl::ContainerState& s, const unloadrl::PhysicsConfig& cfg) {
  const auto edges = support_edges(s);
  std::vector<int> out;
  for (const auto& it : s.items) {
    if (!it.alive) continue;
    const auto c = closure(edges, it.item_id);
    const double d = lift(cfg.agent_force, static_cast<double>(c.size()) * cfg.item_mass, cfg.gravity, cfg.lift_time);
    if (d >= cfg.distance_threshold) out.push_back(it.item_id);
  }
  return out;
}

}  // namespace oracle
