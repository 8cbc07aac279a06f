#include "unloadrl/container_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>

#include "unloadrl/errors.hpp"

namespace unloadrl {

namespace {

int column_index(Column c) { return static_cast<int>(c); }

Column parse_column(const std::string& name, int line_no) {
  if (name == "Left") return Column::Left;
  if (name == "Mid") return Column::Mid;
  if (name == "Right") return Column::Right;
  throw GenerationFailure("catalog line " + std::to_string(line_no) + ": unknown column '" +
                          name + "'");
}

double overlap_1d(double a_min, double a_max, double b_min, double b_max) {
  return std::min(a_max, b_max) - std::max(a_min, b_min);
}

// Column order of one row and the body widths that place each slot.
constexpr std::array<Column, 4> kRowSlots = {Column::Left, Column::Mid, Column::Mid, Column::Right};

}  // namespace

const SubstackTemplate& SubstackCatalog::at(Column column, int variant) const {
  if (variant < 0 || variant >= kVariantsPerColumn) {
    throw DomainError("substack variant out of range: " + std::to_string(variant));
  }
  return templates.at(static_cast<std::size_t>(column_index(column) * kVariantsPerColumn + variant));
}

PackageSizing SubstackCatalog::sizing(int sizing_id) const {
  if (sizing_id < 0 || sizing_id >= static_cast<int>(sizing_width_units.size())) {
    throw DomainError("unknown sizing id " + std::to_string(sizing_id));
  }
  const auto idx = static_cast<std::size_t>(sizing_id);
  return PackageSizing{sizing_id, sizing_width_units[idx] * scale, sizing_height_units[idx] * scale,
                       package_depth, item_mass};
}

double SubstackCatalog::row_width_units() const {
  double total = 0.0;
  for (Column c : kRowSlots) total += at(c, 0).bounding_width;
  return total;
}

double SubstackCatalog::row_height_units() const {
  double h = 0.0;
  for (const auto& t : templates) h = std::max(h, t.bounding_height);
  return h;
}

void ContainerSpec::validate() const {
  if (!(depth_x > 0 && width_y > 0 && height_z > 0 && wall_pitch_x > 0)) {
    throw DomainError("container dimensions must be positive");
  }
  if (wall_count < 1) throw DomainError("wall_count must be at least 1");
  if (wall_count * wall_pitch_x > depth_x + 1e-9) {
    throw DomainError("wall_count * wall_pitch_x exceeds container depth");
  }
  if (min_items > max_items) throw DomainError("min_items exceeds max_items");
  if (max_layout_attempts < 1) throw DomainError("max_layout_attempts must be at least 1");
}

int ContainerState::live_count() const {
  return static_cast<int>(std::count_if(items.begin(), items.end(), [](const ItemInstance& it) { return it.alive; }));
}

const ItemInstance& ContainerState::item(int item_id) const {
  if (item_id < 0 || item_id >= static_cast<int>(items.size())) {
    throw UnknownItem("unknown item id " + std::to_string(item_id));
  }
  return items[static_cast<std::size_t>(item_id)];
}

SubstackCatalog parse_substack_catalog(std::string_view text, double width_y) {
  SubstackCatalog catalog;
  catalog.sizing_width_units.assign(kSizingCount, 0.0);
  catalog.sizing_height_units.assign(kSizingCount, 0.0);
  catalog.templates.resize(3 * kVariantsPerColumn);
  for (int c = 0; c < 3; ++c) {
    for (int v = 0; v < kVariantsPerColumn; ++v) {
      auto& t = catalog.templates[static_cast<std::size_t>(c * kVariantsPerColumn + v)];
      t.column = static_cast<Column>(c);
      t.variant = v;
    }
  }

  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  std::array<bool, kSizingCount> seen{};
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string head;
    if (!(fields >> head)) continue;
    if (head == "sizing") {
      int id = -1;
      double w = 0, h = 0;
      if (!(fields >> id >> w >> h) || id < 0 || id >= kSizingCount || w <= 0 || h <= 0) {
        throw GenerationFailure("catalog line " + std::to_string(line_no) + ": bad sizing row");
      }
      catalog.sizing_width_units[static_cast<std::size_t>(id)] = w;
      catalog.sizing_height_units[static_cast<std::size_t>(id)] = h;
      seen[static_cast<std::size_t>(id)] = true;
      continue;
    }
    const Column column = parse_column(head, line_no);
    int variant = -1;
    Placement p;
    if (!(fields >> variant >> p.sizing_id >> p.y_offset >> p.z_offset) || variant < 0 ||
        variant >= kVariantsPerColumn || p.sizing_id < 0 || p.sizing_id >= kSizingCount) {
      throw GenerationFailure("catalog line " + std::to_string(line_no) + ": bad placement row");
    }
    catalog.templates[static_cast<std::size_t>(column_index(column) * kVariantsPerColumn + variant)]
        .placements.push_back(p);
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
    throw GenerationFailure("catalog does not define all 13 sizings");
  }

  for (auto& t : catalog.templates) {
    if (t.placements.empty()) throw GenerationFailure("catalog has an empty substack template");
    for (const auto& p : t.placements) {
      const auto id = static_cast<std::size_t>(p.sizing_id);
      t.bounding_width = std::max(t.bounding_width, p.y_offset + catalog.sizing_width_units[id]);
      t.bounding_height = std::max(t.bounding_height, p.z_offset + catalog.sizing_height_units[id]);
    }
  }
  // Every variant of one column must share the body width, otherwise rows
  // would not tile.
  for (int c = 0; c < 3; ++c) {
    const double w0 = catalog.at(static_cast<Column>(c), 0).bounding_width;
    for (int v = 1; v < kVariantsPerColumn; ++v) {
      if (std::abs(catalog.at(static_cast<Column>(c), v).bounding_width - w0) > 1e-9) {
        throw GenerationFailure("substack variants of one column differ in width");
      }
    }
  }
  catalog.scale = width_y / catalog.row_width_units();
  return catalog;
}

SubstackCatalog load_substack_catalog(const std::filesystem::path& path, double width_y) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open catalog " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_substack_catalog(buf.str(), width_y);
}

SubstackCatalog build_substack_catalog(double width_y) {
  return parse_substack_catalog(builtin_catalog_text(), width_y);
}

bool boxes_overlap(const ItemInstance& a, const ItemInstance& b, double tolerance) {
  const auto axis = [&](double ca, double ea, double cb, double eb) {
    return overlap_1d(ca - 0.5 * ea, ca + 0.5 * ea, cb - 0.5 * eb, cb + 0.5 * eb) > tolerance;
  };
  return axis(a.center.x, a.extent.x, b.center.x, b.extent.x) &&
         axis(a.center.y, a.extent.y, b.center.y, b.extent.y) &&
         axis(a.center.z, a.extent.z, b.center.z, b.extent.z);
}

std::vector<ItemInstance> generate_wall(const SubstackCatalog& catalog, double wall_x, Rng& rng,
                                        int first_item_id) {
  std::uniform_int_distribution<int> pick_variant(0, kVariantsPerColumn - 1);
  const double row_h = catalog.row_height_units();

  struct Nominal {
    int sizing_id;
    double y_min;
    double z_min;
    double width;
    double height;
  };
  std::vector<Nominal> nominal;
  for (int row = 0; row < kRowsPerWall; ++row) {
    double y_origin = 0.0;
    for (Column slot : kRowSlots) {
      const SubstackTemplate& t = catalog.at(slot, pick_variant(rng));
      for (const auto& p : t.placements) {
        const PackageSizing s = catalog.sizing(p.sizing_id);
        nominal.push_back({p.sizing_id, (y_origin + p.y_offset) * catalog.scale,
                           (row * row_h + p.z_offset) * catalog.scale, s.width, s.height});
      }
      y_origin += t.bounding_width;
    }
  }

  // Gravity snap, lowest nominal bottom first.
  std::stable_sort(nominal.begin(), nominal.end(), [](const Nominal& a, const Nominal& b) {
    return a.z_min != b.z_min ? a.z_min < b.z_min : a.y_min < b.y_min;
  });
  std::vector<ItemInstance> wall;
  wall.reserve(nominal.size());
  for (const auto& n : nominal) {
    double rest = 0.0;
    for (const auto& placed : wall) {
      const double py_min = placed.center.y - 0.5 * placed.extent.y;
      const double py_max = placed.center.y + 0.5 * placed.extent.y;
      if (overlap_1d(n.y_min, n.y_min + n.width, py_min, py_max) < kMinFootprintOverlap) continue;
      if (placed.top() <= n.z_min + kContactTolerance) rest = std::max(rest, placed.top());
    }
    ItemInstance item;
    item.item_id = first_item_id + static_cast<int>(wall.size());
    item.sizing_id = n.sizing_id;
    item.extent = {catalog.package_depth, n.width, n.height};
    item.center = {wall_x, n.y_min + 0.5 * n.width, rest + 0.5 * n.height};
    wall.push_back(item);
  }

  for (std::size_t i = 0; i < wall.size(); ++i) {
    for (std::size_t j = i + 1; j < wall.size(); ++j) {
      if (boxes_overlap(wall[i], wall[j])) {
        throw GenerationFailure("gravity snap produced overlapping items " + std::to_string(wall[i].item_id) +
                                " and " + std::to_string(wall[j].item_id));
      }
    }
  }
  return wall;
}

ContainerState generate_container(const ContainerSpec& spec, const SubstackCatalog& catalog,
                                  std::uint64_t seed) {
  spec.validate();
  if (catalog.package_depth > spec.wall_pitch_x + 1e-12) {
    throw GenerationFailure("package depth exceeds wall pitch");
  }
  Rng rng(seed);
  for (int attempt = 0; attempt < spec.max_layout_attempts; ++attempt) {
    ContainerState state;
    state.spec = spec;
    state.seed = seed;
    for (int k = 0; k < spec.wall_count; ++k) {
      const double wall_x = spec.wall_pitch_x * (k + 0.5);
      auto wall = generate_wall(catalog, wall_x, rng, static_cast<int>(state.items.size()));
      state.items.insert(state.items.end(), wall.begin(), wall.end());
    }
    const int count = static_cast<int>(state.items.size());
    if (count >= spec.min_items && count <= spec.max_items) return state;
  }
  throw GenerationFailure("no layout within [" + std::to_string(spec.min_items) + ", " +
                          std::to_string(spec.max_items) + "] items after " +
                          std::to_string(spec.max_layout_attempts) + " attempts (seed " +
                          std::to_string(seed) + ")");
}

void write_container_csv(std::ostream& out, const ContainerState& state) {
  const auto old_precision = out.precision(17);
  out << "item_id,sizing_id,x,y,z\n";
  for (const auto& it : state.items) {
    if (!it.alive) continue;
    out << it.item_id << ',' << it.sizing_id << ',' << it.center.x << ',' << it.center.y << ','
        << it.center.z << '\n';
  }
  out.precision(old_precision);
}

}  // namespace unloadrl
