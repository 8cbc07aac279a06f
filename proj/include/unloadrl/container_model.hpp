#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string_view>
#include <vector>

#include "unloadrl/linalg.hpp"

namespace unloadrl {

using Rng = std::mt19937_64;

enum class Column { Left, Mid, Right };

inline constexpr int kSizingCount = 13;
inline constexpr int kVariantsPerColumn = 3;
inline constexpr int kRowsPerWall = 3;

// Contact tolerance for face-to-face support and the minimum footprint
// overlap that counts as "resting on".
inline constexpr double kContactTolerance = 1e-3;
inline constexpr double kMinFootprintOverlap = 1e-3;

struct PackageSizing {
  int sizing_id = 0;
  double width = 0.0;   // y extent [m]
  double height = 0.0;  // z extent [m]
  double depth = 0.0;   // x extent [m], identical for all sizings
  double mass = 1.0;    // [kg]
};

// Offsets are the lower-left corner of the box relative to the substack body
// origin, in figure units.
struct Placement {
  int sizing_id = 0;
  double y_offset = 0.0;
  double z_offset = 0.0;
};

struct SubstackTemplate {
  Column column = Column::Left;
  int variant = 0;
  std::vector<Placement> placements;
  double bounding_width = 0.0;   // figure units
  double bounding_height = 0.0;  // figure units
};

// Transcribed substack geometry plus the calibration that maps figure units
// to meters. `templates` is ordered Left 0..2, Mid 0..2, Right 0..2.
struct SubstackCatalog {
  std::vector<SubstackTemplate> templates;
  std::vector<double> sizing_width_units;   // indexed by sizing_id
  std::vector<double> sizing_height_units;  // indexed by sizing_id
  double package_depth = 7.0 / 12.0;        // [m]
  double item_mass = 1.0;                   // [kg]
  double scale = 0.0;                       // meters per figure unit

  [[nodiscard]] const SubstackTemplate& at(Column column, int variant) const;
  [[nodiscard]] PackageSizing sizing(int sizing_id) const;
  // Width of one wall row in figure units (Left + 2 Mid + Right bodies).
  [[nodiscard]] double row_width_units() const;
  [[nodiscard]] double row_height_units() const;
};

struct ContainerSpec {
  double depth_x = 7.0;
  double width_y = 2.5;
  double height_z = 2.5;
  double wall_pitch_x = 7.0 / 12.0;
  int wall_count = 12;
  int min_items = 800;
  int max_items = 1000;
  // Number of whole-container layouts drawn before giving up on the item
  // count window.
  int max_layout_attempts = 64;

  void validate() const;
};

struct ItemInstance {
  int item_id = 0;
  int sizing_id = 0;
  Vec3 center;
  Vec3 extent;  // full box size (x = depth, y = width, z = height)
  bool alive = true;

  [[nodiscard]] double bottom() const { return center.z - 0.5 * extent.z; }
  [[nodiscard]] double top() const { return center.z + 0.5 * extent.z; }

  friend bool operator==(const ItemInstance&, const ItemInstance&) = default;
};

// Snapshot of one container. Item ids are dense: items[i].item_id == i.
struct ContainerState {
  ContainerSpec spec;
  std::vector<ItemInstance> items;
  std::uint64_t seed = 0;

  [[nodiscard]] int live_count() const;
  [[nodiscard]] const ItemInstance& item(int item_id) const;

  friend bool operator==(const ContainerState& a, const ContainerState& b) {
    return a.seed == b.seed && a.items == b.items;
  }
};

// Parses the plain-text catalog format (see data/substacks.txt) and calibrates
// the figure-unit scale so that one row spans `width_y`.
SubstackCatalog parse_substack_catalog(std::string_view text, double width_y = 2.5);
SubstackCatalog load_substack_catalog(const std::filesystem::path& path, double width_y = 2.5);

// The built-in catalog (identical to data/substacks.txt).
SubstackCatalog build_substack_catalog(double width_y = 2.5);
std::string_view builtin_catalog_text();

// One wall of 3 rows x (Left, Mid, Mid, Right), variants drawn uniformly,
// gravity-snapped bottom-up. Item ids start at `first_item_id`.
std::vector<ItemInstance> generate_wall(const SubstackCatalog& catalog, double wall_x, Rng& rng,
                                        int first_item_id = 0);

ContainerState generate_container(const ContainerSpec& spec, const SubstackCatalog& catalog,
                                  std::uint64_t seed);

// True when the two boxes share positive volume beyond `tolerance` on every axis.
bool boxes_overlap(const ItemInstance& a, const ItemInstance& b, double tolerance = kContactTolerance);

// Writes live items as "item_id,sizing_id,x,y,z".
void write_container_csv(std::ostream& out, const ContainerState& state);

}  // namespace unloadrl
