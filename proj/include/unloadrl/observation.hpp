#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "unloadrl/container_model.hpp"
#include "unloadrl/linalg.hpp"

namespace unloadrl {

inline constexpr int kObservedItems = 128;
inline constexpr int kFeatureDim = 3;

// Row-major 3x3 weight of the viewer distance.
using Weight3 = std::array<double, 9>;

struct ViewerConfig {
  Vec3 p_view{7.0, 1.25, 2.5};
  Weight3 weight{1.0, 0.0, 0.0,  //
                 0.0, 0.0, 0.0,  //
                 0.0, 0.0, 4.0};
  int visible_count = kObservedItems;
  bool fe_enabled = true;

  void validate() const;
};

struct Observation {
  Matrix features;            // visible_count x 3, every entry in [-1, 1]
  std::vector<int> item_ids;  // row -> item id
  int step_k = 0;
};

double weighted_distance(const Vec3& p_view, const Vec3& p, const Weight3& weight);

// Live items sorted by (weighted distance, item id). Used by the env to avoid
// re-sorting after every pick: items never move, they only disappear.
std::vector<int> viewer_order(const ContainerState& state, const ViewerConfig& viewer);

// The visible_count nearest live items, ascending distance, ties by id.
std::vector<int> select_visible(const ContainerState& state, const ViewerConfig& viewer);

Vec3 normalize_position(const Vec3& p, const ContainerSpec& spec);

// Rank transform onto the uniform lattice {(2r - (N-1)) / (N-1)}. Ties keep
// their original order.
std::vector<double> equalize_axis(std::span<const double> values);

// Builds the observation from an explicit visible row set.
Observation observation_from_rows(const ContainerState& state, std::span<const int> visible,
                                  const ViewerConfig& viewer, int step_k);

Observation make_observation(const ContainerState& state, const ViewerConfig& viewer,
                             const ContainerSpec& spec, int step_k);

// Applies equalize_axis to every column of a feature matrix in place.
void equalize_columns(Matrix& features);

// "row,item_id,x,y,z,x_eq,y_eq,z_eq" with normalized and equalized coordinates.
void write_observation_csv(std::ostream& out, const ContainerState& state, std::span<const int> visible);

}  // namespace unloadrl
