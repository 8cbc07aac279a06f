#include "unloadrl/pick_physics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "unloadrl/errors.hpp"

namespace unloadrl {

namespace {

const ItemInstance& live_item(const ContainerState& state, int item_id) {
  const ItemInstance& it = state.item(item_id);
  if (!it.alive) throw DeadItem("item " + std::to_string(item_id) + " has already been removed");
  return it;
}

double overlap_1d(double a_min, double a_max, double b_min, double b_max) {
  return std::min(a_max, b_max) - std::max(a_min, b_min);
}

}  // namespace

void PhysicsConfig::validate() const {
  if (!(agent_force > 0 && lift_time > 0 && distance_threshold > 0 && gravity > 0 && item_mass > 0)) {
    throw DomainError("physics parameters must all be strictly positive");
  }
}

bool SupportGraph::has_edge(int supporter, int supported_item) const {
  if (supporter < 0 || supporter >= static_cast<int>(supported.size())) return false;
  const auto& out = supported[static_cast<std::size_t>(supporter)];
  return std::find(out.begin(), out.end(), supported_item) != out.end();
}

SupportGraph build_support_graph(const ContainerState& state, double tol_z) {
  const std::size_t n = state.items.size();
  SupportGraph graph;
  graph.supported.resize(n);
  graph.supporters.resize(n);

  // Sweep along x so only items sharing a wall slab are compared.
  std::vector<int> order;
  order.reserve(n);
  for (const auto& it : state.items) {
    if (it.alive) order.push_back(it.item_id);
  }
  const auto x_min = [&](int id) {
    const auto& it = state.items[static_cast<std::size_t>(id)];
    return it.center.x - 0.5 * it.extent.x;
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return x_min(a) < x_min(b); });

  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const ItemInstance& a = state.items[static_cast<std::size_t>(order[oi])];
    const double a_x_max = a.center.x + 0.5 * a.extent.x;
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const ItemInstance& b = state.items[static_cast<std::size_t>(order[oj])];
      if (x_min(b.item_id) >= a_x_max - kMinFootprintOverlap) break;
      const double y_overlap = overlap_1d(a.center.y - 0.5 * a.extent.y, a.center.y + 0.5 * a.extent.y,
                                          b.center.y - 0.5 * b.extent.y, b.center.y + 0.5 * b.extent.y);
      if (y_overlap < kMinFootprintOverlap) continue;
      const ItemInstance* lower = nullptr;
      const ItemInstance* upper = nullptr;
      if (std::abs(b.bottom() - a.top()) <= tol_z) {
        lower = &a;
        upper = &b;
      } else if (std::abs(a.bottom() - b.top()) <= tol_z) {
        lower = &b;
        upper = &a;
      } else {
        continue;
      }
      graph.supported[static_cast<std::size_t>(lower->item_id)].push_back(upper->item_id);
      graph.supporters[static_cast<std::size_t>(upper->item_id)].push_back(lower->item_id);
      ++graph.edge_count;
    }
  }
  for (auto& v : graph.supported) std::sort(v.begin(), v.end());
  for (auto& v : graph.supporters) std::sort(v.begin(), v.end());
  return graph;
}

double lift_distance(double force, double total_mass, const PhysicsConfig& cfg) {
  if (!(total_mass > 0)) throw DomainError("total mass must be positive");
  const double net_acceleration = force / total_mass - cfg.gravity;
  if (!(net_acceleration > 0)) return 0.0;
  return 0.5 * net_acceleration * cfg.lift_time * cfg.lift_time;
}

std::vector<int> lifted_closure(const ContainerState& state, const SupportGraph& graph, int item_id) {
  live_item(state, item_id);
  if (graph.supported.size() != state.items.size()) {
    throw DomainError("support graph does not belong to this state");
  }
  std::vector<char> visited(state.items.size(), 0);
  std::vector<int> stack{item_id};
  std::vector<int> closure;
  visited[static_cast<std::size_t>(item_id)] = 1;
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    closure.push_back(cur);
    for (int next : graph.supported[static_cast<std::size_t>(cur)]) {
      const auto idx = static_cast<std::size_t>(next);
      if (visited[idx] || !state.items[idx].alive) continue;
      visited[idx] = 1;
      stack.push_back(next);
    }
  }
  std::sort(closure.begin(), closure.end());
  return closure;
}

PickResult evaluate_pick(const ContainerState& state, const SupportGraph& graph, int item_id,
                         const PhysicsConfig& cfg) {
  const auto closure = lifted_closure(state, graph, item_id);
  PickResult result;
  result.lifted_count = static_cast<int>(closure.size());
  result.traveled = lift_distance(cfg.agent_force, result.lifted_count * cfg.item_mass, cfg);
  result.success = result.traveled >= cfg.distance_threshold;
  return result;
}

bool is_supported(const ContainerState& state, const SupportGraph& graph, int item_id, double tol_z) {
  const ItemInstance& it = state.item(item_id);
  if (it.bottom() <= tol_z) return true;
  const auto& below = graph.supporters[static_cast<std::size_t>(item_id)];
  return std::any_of(below.begin(), below.end(),
                     [&](int s) { return state.items[static_cast<std::size_t>(s)].alive; });
}

void remove_item(ContainerState& state, const SupportGraph& graph, int item_id) {
  live_item(state, item_id);
  state.items[static_cast<std::size_t>(item_id)].alive = false;
  for (int above : graph.supported[static_cast<std::size_t>(item_id)]) {
    if (!state.items[static_cast<std::size_t>(above)].alive) continue;
    if (!is_supported(state, graph, above)) {
      throw SupportViolation("removing item " + std::to_string(item_id) + " leaves item " +
                             std::to_string(above) + " floating");
    }
  }
}

PickOutcome attempt_pick(const ContainerState& state, const SupportGraph& graph, int item_id,
                         const PhysicsConfig& cfg) {
  const PickResult r = evaluate_pick(state, graph, item_id, cfg);
  PickOutcome out{r.success, r.traveled, r.lifted_count, state};
  if (r.success) remove_item(out.next_state, graph, item_id);
  return out;
}

PickOutcome attempt_pick(const ContainerState& state, int item_id, const PhysicsConfig& cfg) {
  live_item(state, item_id);
  return attempt_pick(state, build_support_graph(state), item_id, cfg);
}

std::vector<int> pickable_set(const ContainerState& state, const SupportGraph& graph,
                              const PhysicsConfig& cfg) {
  std::vector<int> out;
  // A closure of size p lifts iff the p-item lift clears the threshold; p is
  // monotone so one comparison per item suffices.
  int max_liftable = 0;
  while (lift_distance(cfg.agent_force, (max_liftable + 1) * cfg.item_mass, cfg) >= cfg.distance_threshold) {
    ++max_liftable;
    if (max_liftable > static_cast<int>(state.items.size())) break;
  }
  for (const auto& it : state.items) {
    if (!it.alive) continue;
    if (max_liftable == 0) continue;
    if (max_liftable == 1) {
      const auto& above = graph.supported[static_cast<std::size_t>(it.item_id)];
      const bool free_top = std::none_of(above.begin(), above.end(), [&](int a) {
        return state.items[static_cast<std::size_t>(a)].alive;
      });
      if (free_top) out.push_back(it.item_id);
      continue;
    }
    if (static_cast<int>(lifted_closure(state, graph, it.item_id).size()) <= max_liftable) {
      out.push_back(it.item_id);
    }
  }
  return out;
}

std::vector<int> pickable_set(const ContainerState& state, const PhysicsConfig& cfg) {
  return pickable_set(state, build_support_graph(state), cfg);
}

}  // namespace unloadrl
