#pragma once

#include <cstddef>
#include <vector>

#include "unloadrl/container_model.hpp"

namespace unloadrl {

struct PhysicsConfig {
  double agent_force = 20.0;         // [N]
  double lift_time = 0.3;            // [s]
  double distance_threshold = 0.2;   // [m]
  double gravity = 9.81;             // [m/s^2]
  double item_mass = 1.0;            // [kg]

  void validate() const;
};

// Directed contact relation "supporter carries supported" over the live items
// of one state. Indexed by item id.
struct SupportGraph {
  std::vector<std::vector<int>> supported;   // supporter -> items resting on it
  std::vector<std::vector<int>> supporters;  // item -> items it rests on
  std::size_t edge_count = 0;

  [[nodiscard]] bool has_edge(int supporter, int supported_item) const;
};

struct PickOutcome {
  bool success = false;
  double traveled = 0.0;  // [m]
  int lifted_count = 0;
  ContainerState next_state;
};

// Outcome of a pick without the successor state.
struct PickResult {
  bool success = false;
  double traveled = 0.0;
  int lifted_count = 0;
};

SupportGraph build_support_graph(const ContainerState& state, double tol_z = kContactTolerance);

// Distance covered in `lift_time` from rest under `force` against gravity.
double lift_distance(double force, double total_mass, const PhysicsConfig& cfg);

// The item plus everything transitively resting on it (live items only),
// sorted ascending.
std::vector<int> lifted_closure(const ContainerState& state, const SupportGraph& graph, int item_id);

PickResult evaluate_pick(const ContainerState& state, const SupportGraph& graph, int item_id,
                         const PhysicsConfig& cfg);

PickOutcome attempt_pick(const ContainerState& state, int item_id, const PhysicsConfig& cfg);
PickOutcome attempt_pick(const ContainerState& state, const SupportGraph& graph, int item_id,
                         const PhysicsConfig& cfg);

// Marks the item dead in place and verifies that every live item it carried
// still rests on something. Throws SupportViolation otherwise.
void remove_item(ContainerState& state, const SupportGraph& graph, int item_id);

// True when the live item rests on the floor or on at least one live item.
bool is_supported(const ContainerState& state, const SupportGraph& graph, int item_id,
                  double tol_z = kContactTolerance);

std::vector<int> pickable_set(const ContainerState& state, const PhysicsConfig& cfg);
std::vector<int> pickable_set(const ContainerState& state, const SupportGraph& graph,
                              const PhysicsConfig& cfg);

}  // namespace unloadrl
