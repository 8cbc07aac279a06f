#include <sstream>
#include <string>

#include "doctest.h"
#include "oracles.hpp"
#include "unloadrl/container_model.hpp"
#include "unloadrl/errors.hpp"

using namespace unloadrl;

TEST_CASE("builtin catalog") {
  const auto cat = build_substack_catalog();
  CHECK(cat.templates.size() == 9);
  CHECK(cat.sizing_width_units.size() == kSizingCount);
  // One row spans the container width.
  CHECK(cat.scale * cat.row_width_units() == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(cat.scale == doctest::Approx(2.5 / 10.8));
  CHECK(cat.package_depth == doctest::Approx(7.0 / 12.0));
  for (const auto& t : cat.templates) {
    CHECK_FALSE(t.placements.empty());
    CHECK(t.bounding_height <= cat.row_height_units() + 1e-9);
  }
  CHECK(cat.at(Column::Mid, 2).column == Column::Mid);
  CHECK_THROWS_AS((void)cat.at(Column::Left, 3), DomainError);
  CHECK_THROWS_AS((void)cat.sizing(13), DomainError);
}

TEST_CASE("catalog parser rejects malformed text") {
  CHECK_THROWS_AS(parse_substack_catalog("sizing 0 1.0\n"), GenerationFailure);
  CHECK_THROWS_AS(parse_substack_catalog("Top 0 1 0 0\n"), GenerationFailure);
  // Missing sizings.
  CHECK_THROWS_AS(parse_substack_catalog("sizing 0 1 1\nLeft 0 0 0 0\n"), GenerationFailure);
  CHECK_THROWS_AS(load_substack_catalog("/nonexistent/catalog.txt"), IoError);
}

TEST_CASE("same seed gives the same container") {
  const auto cat = build_substack_catalog();
  const ContainerSpec spec;
  CHECK(generate_container(spec, cat, 17) == generate_container(spec, cat, 17));
  CHECK_FALSE(generate_container(spec, cat, 17).items == generate_container(spec, cat, 18).items);
}

TEST_CASE("generated containers are physically consistent") {
  const auto cat = build_substack_catalog();
  const ContainerSpec spec;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    CAPTURE(seed);
    const auto s = generate_container(spec, cat, seed);
    const int n = s.live_count();
    CHECK(n >= 800);
    CHECK(n <= 1000);
    for (std::size_t i = 0; i < s.items.size(); ++i) {
      const auto& it = s.items[i];
      REQUIRE(it.item_id == static_cast<int>(i));
      CHECK(it.center.x - it.extent.x / 2 >= -1e-9);
      CHECK(it.center.x + it.extent.x / 2 <= spec.depth_x + 1e-9);
      CHECK(it.center.y - it.extent.y / 2 >= -1e-9);
      CHECK(it.center.y + it.extent.y / 2 <= spec.width_y + 1e-9);
      CHECK(it.bottom() >= -1e-9);
      CHECK(it.top() <= spec.height_z + 1e-9);
    }
    CHECK(oracle::overlap_count(s) == 0);
    CHECK(oracle::unsupported_count(s) == 0);
  }
}

TEST_CASE("one wall has three rows of four substacks") {
  const auto cat = build_substack_catalog();
  Rng rng(3);
  const auto wall = generate_wall(cat, 0.5, rng, 10);
  REQUIRE_FALSE(wall.empty());
  CHECK(wall.front().item_id == 10);
  for (const auto& it : wall) {
    CHECK(it.center.x == doctest::Approx(0.5));
    CHECK(it.top() <= 3 * cat.row_height_units() * cat.scale + 1e-9);
  }
}

TEST_CASE("spec validation and an unreachable item window") {
  const auto cat = build_substack_catalog();
  ContainerSpec bad;
  bad.wall_count = 0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = ContainerSpec{};
  bad.min_items = 900;
  bad.max_items = 800;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = ContainerSpec{};
  bad.wall_count = 13;  // 13 * 7/12 m exceeds the depth
  CHECK_THROWS_AS(bad.validate(), DomainError);

  ContainerSpec tight;
  tight.min_items = 5000;
  tight.max_items = 6000;
  tight.max_layout_attempts = 3;
  CHECK_THROWS_AS(generate_container(tight, cat, 1), GenerationFailure);
}

TEST_CASE("container csv lists live items") {
  const auto cat = build_substack_catalog();
  auto s = generate_container(ContainerSpec{}, cat, 5);
  s.items[0].alive = false;
  std::ostringstream out;
  write_container_csv(out, s);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "item_id,sizing_id,x,y,z");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == s.live_count());
}

TEST_CASE("box overlap test") {
  ItemInstance a{0, 0, {0.5, 0.5, 0.5}, {1, 1, 1}, true};
  ItemInstance b = a;
  b.item_id = 1;
  b.center.z = 1.5;  // face contact only
  CHECK_FALSE(boxes_overlap(a, b));
  b.center.z = 1.2;
  CHECK(boxes_overlap(a, b));
}
