#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "embal/render.hpp"
#include "embal/world.hpp"
#include "fixtures.hpp"

using namespace embal;
using embal::testing::flood_fill;

TEST_CASE("generation is deterministic in seed and params") {
  const GridWorld a = generate_world(7);
  const GridWorld b = generate_world(7);
  CHECK(a == b);
  std::ostringstream sa, sb;
  a.save(sa);
  b.save(sb);
  CHECK(sa.str() == sb.str());
  CHECK_FALSE(a == generate_world(8));
}

TEST_CASE("generated free space is one component") {
  for (std::uint64_t seed : {7u, 21u, 1003u}) {
    const GridWorld w = generate_world(seed);
    const auto cells = w.free_cells();
    REQUIRE_FALSE(cells.empty());
    const auto dist = flood_fill(w, cells.front());
    int reached = 0;
    for (int d : dist) reached += d >= 0;
    CHECK(reached == w.free_count());
  }
}

TEST_CASE("generated worlds satisfy the type invariants") {
  const GridWorld w = generate_world(3);
  for (int x = 0; x < w.width(); ++x) {
    CHECK(w.is_wall(CellIndex{x, 0}));
    CHECK(w.is_wall(CellIndex{x, w.height() - 1}));
  }
  for (int i = 0; i < w.width() * w.height(); ++i) {
    const CellIndex c = w.cell_at(i);
    if (w.is_wall(c)) {
      CHECK(w.surface_class(c) >= 0);
      CHECK(w.surface_class(c) < w.class_count());
      CHECK(w.texture(c) >= 0.0);
      CHECK(w.texture(c) <= 1.0);
    } else {
      CHECK(w.surface_class(c) == -1);
    }
  }
  CHECK(w.class_count() == 13);
  CHECK(w.width() == 96);
}

TEST_CASE("every world shows at least five classes from its free cells") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const GridWorld w = generate_world(seed);
    std::set<int> seen;
    const auto cells = w.free_cells();
    for (std::size_t i = 0; i < cells.size() && seen.size() < 5; i += 7) {
      for (int h = 0; h < kHeadingCount; h += 6) {
        const Vec2 p = w.center_of(cells[i]);
        const View v = render_view(w, Pose{p.x, p.y, h});
        seen.insert(v.gt_class.begin(), v.gt_class.end());
      }
    }
    CHECK_MESSAGE(seen.size() >= 5, "seed " << seed);
  }
}

TEST_CASE("degenerate generation parameters are rejected") {
  GenParams p;
  p.width_m = 1.0;
  p.height_m = 1.0;
  CHECK_THROWS_AS(generate_world(1, p), Error);
  GenParams q;
  q.min_rooms = 5;
  q.max_rooms = 2;
  CHECK_THROWS_AS(generate_world(1, q), Error);
}

TEST_CASE("step_pose moves a quarter meter and rotates by 15 degrees") {
  const GridWorld w = embal::testing::room(16, 16);
  const Pose p{1.0, 1.0, 0};

  const auto fwd = step_pose(w, p, Action::MoveForward);
  CHECK_FALSE(fwd.collided);
  CHECK(fwd.pose.x == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(fwd.pose.y == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fwd.pose.heading == 0);

  const auto rot = step_pose(w, p, Action::RotateLeft);
  CHECK(rot.pose == Pose{1.0, 1.0, 1});
  CHECK(rot.pose.heading_deg() == 15.0);
  CHECK(step_pose(w, p, Action::RotateRight).pose.heading == 23);

  // Strafing is perpendicular to the heading; left is counter-clockwise.
  const auto left = step_pose(w, p, Action::MoveLeft);
  CHECK(left.pose.x == doctest::Approx(1.0));
  CHECK(left.pose.y == doctest::Approx(1.25));
  CHECK(left.pose.heading == 0);
  const auto right = step_pose(w, p, Action::MoveRight);
  CHECK(right.pose.y == doctest::Approx(0.75));
}

TEST_CASE("a blocked move leaves the pose unchanged") {
  const GridWorld w = embal::testing::room(16, 16);
  const Pose p{0.375, 1.0, 12};  // one cell from the west wall, facing it
  const auto r = step_pose(w, p, Action::MoveForward);
  CHECK(r.collided);
  CHECK(r.pose == p);
  const auto turn = step_pose(w, p, Action::RotateLeft);
  CHECK_FALSE(turn.collided);
  CHECK(turn.pose.heading == 13);
}

TEST_CASE("step_pose never ends inside a wall") {
  const GridWorld w = generate_world(11);
  const auto cells = w.free_cells();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  std::uniform_int_distribution<int> head(0, kHeadingCount - 1);
  for (int n = 0; n < 10000; ++n) {
    const CellIndex c = cells[pick(rng)];
    const Pose p{(c.x + u(rng)) * w.cell_size(), (c.y + u(rng)) * w.cell_size(), head(rng)};
    for (Action a : kMovementActions) {
      const auto r = step_pose(w, p, a);
      REQUIRE(w.is_free(r.pose.position()));
      if (r.collided) REQUIRE(r.pose.position() == p.position());
    }
  }
}

TEST_CASE("geodesic distance basics") {
  const GridWorld w = embal::testing::room(16, 16);
  const Vec2 a{1.1, 1.1};
  CHECK(geodesic_distance(w, a, a) == 0.0);
  CHECK(geodesic_distance(w, a, Vec2{1.2, 1.0}) == 0.0);  // same cell
  CHECK(geodesic_distance(w, a, Vec2{1.3, 1.1}) == doctest::Approx(0.25));
  CHECK(geodesic_distance(w, Vec2{0.4, 0.4}, Vec2{3.6, 3.6}) ==
        geodesic_distance(w, Vec2{3.6, 3.6}, Vec2{0.4, 0.4}));
}

TEST_CASE("geodesic distance around an obstacle matches a flood fill") {
  auto l = embal::testing::room_layout(20, 20);
  embal::testing::fill_block(l, 4, 3, 15, 12, 3);
  const GridWorld w(l);
  const CellIndex from{9, 2};
  const auto oracle = flood_fill(w, from);
  const Vec2 a = w.center_of(from);
  for (int i = 0; i < w.width() * w.height(); ++i) {
    const CellIndex c = w.cell_at(i);
    if (w.is_wall(c)) continue;
    REQUIRE(oracle[i] >= 0);
    CHECK(geodesic_distance(w, a, w.center_of(c)) == doctest::Approx(oracle[i] * 0.25).epsilon(1e-12));
  }
  // Straight through the block would be 11 cells; the detour is longer.
  CHECK(geodesic_distance(w, a, w.center_of(CellIndex{9, 14})) > 12 * 0.25);
}

TEST_CASE("geodesic distance is never much below the straight line") {
  const GridWorld w = generate_world(12);
  const auto cells = w.free_cells();
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  for (int n = 0; n < 300; ++n) {
    const Vec2 a = w.center_of(cells[pick(rng)]);
    const Vec2 b = w.center_of(cells[pick(rng)]);
    const double g = geodesic_distance(w, a, b);
    CHECK(std::isfinite(g));
    CHECK(g >= norm(a - b) - w.cell_size());
  }
}

TEST_CASE("shortest path is a connected free-cell chain") {
  const GridWorld w = generate_world(4);
  const auto cells = w.free_cells();
  const auto path = shortest_path(w, cells.front(), cells.back());
  REQUIRE_FALSE(path.empty());
  CHECK(path.front() == cells.front());
  CHECK(path.back() == cells.back());
  for (std::size_t i = 1; i < path.size(); ++i) {
    CHECK(std::abs(path[i].x - path[i - 1].x) + std::abs(path[i].y - path[i - 1].y) == 1);
    CHECK(w.is_free(path[i]));
  }
  const double g = geodesic_distance(w, w.center_of(cells.front()), w.center_of(cells.back()));
  CHECK(g == doctest::Approx((path.size() - 1) * 0.25));
}

int direction_changes(const std::vector<CellIndex>& path) {
  int turns = 0;
  for (std::size_t i = 2; i < path.size(); ++i) {
    const int ax = path[i - 1].x - path[i - 2].x, ay = path[i - 1].y - path[i - 2].y;
    turns += ax != path[i].x - path[i - 1].x || ay != path[i].y - path[i - 1].y;
  }
  return turns;
}

TEST_CASE("shortest paths prefer the fewest turns") {
  const GridWorld open = testing::room(12, 12);
  const auto diag = shortest_path(open, {1, 1}, {8, 6});
  CHECK(diag.size() == 13);
  CHECK(direction_changes(diag) == 1);

  // A pillar between the corners forces a detour; still no extra turns.
  auto l = testing::room_layout(12, 12);
  testing::fill_block(l, 3, 3, 6, 6, 0);
  const GridWorld pillar(l);
  const auto around = shortest_path(pillar, {2, 2}, {8, 8});
  CHECK(around.size() == 13);
  CHECK(direction_changes(around) == 1);
}

TEST_CASE("world files round-trip exactly") {
  const GridWorld w = generate_world(5);
  std::stringstream s;
  w.save(s);
  const GridWorld back = GridWorld::load(s);
  CHECK(back == w);
  std::istringstream bad("not-a-world 1\n");
  CHECK_THROWS_AS(GridWorld::load(bad), Error);
}

TEST_CASE("layout validation rejects broken worlds") {
  auto open = embal::testing::room_layout(8, 8);
  open.wall[3] = 0;
  open.surface_class[3] = -1;
  CHECK_THROWS_AS(GridWorld{open}, Error);

  auto split = embal::testing::room_layout(9, 9);
  embal::testing::fill_block(split, 4, 1, 4, 7, 0);
  CHECK_THROWS_AS(GridWorld{split}, Error);

  auto stray = embal::testing::room_layout(8, 8);
  stray.surface_class[3 * 8 + 3] = 2;
  CHECK_THROWS_AS(GridWorld{stray}, Error);
}

TEST_CASE("start poses are cell centred and valid") {
  const GridWorld w = generate_world(9);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Pose p = sample_start_pose(w, s);
    CHECK(w.is_free(p.position()));
    CHECK(p.heading >= 0);
    CHECK(p.heading < kHeadingCount);
    CHECK(p == sample_start_pose(w, s));
  }
}
