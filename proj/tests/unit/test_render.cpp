#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "embal/render.hpp"
#include "fixtures.hpp"

using namespace embal;

namespace {

std::vector<Pose> random_poses(const GridWorld& w, int n, std::uint64_t seed) {
  const auto cells = w.free_cells();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::uniform_int_distribution<int> head(0, kHeadingCount - 1);
  std::vector<Pose> out;
  for (int i = 0; i < n; ++i) {
    const CellIndex c = cells[pick(rng)];
    out.push_back({(c.x + u(rng)) * w.cell_size(), (c.y + u(rng)) * w.cell_size(), head(rng)});
  }
  return out;
}

}  // namespace

TEST_CASE("view invariants hold") {
  const GridWorld w = generate_world(2);
  for (const Pose& p : random_poses(w, 50, 1)) {
    const View v = render_view(w, p);
    REQUIRE(v.width() == 64);
    CHECK(v.features.rows() == 64);
    CHECK(v.features.cols() == w.appearance_dim());
    for (int i = 0; i < v.width(); ++i) {
      CHECK(v.depth[i] > 0.0);
      // The hit point lies on the boundary of the hit cell; nudge it along the ray.
      const double a = ray_angle(p, i, v.width(), v.fov_deg);
      const Vec2 inside = v.hit_points[i] + 1e-7 * Vec2{std::cos(a), std::sin(a)};
      CHECK(w.surface_class(w.cell_of(inside)) == v.gt_class[i]);
    }
  }
}

TEST_CASE("depth is symmetric when centred in a square room") {
  const GridWorld w = embal::testing::room(17, 17);
  const double c = 17 * 0.25 / 2.0;
  for (int h : {0, 6, 12, 18}) {
    const View v = render_view(w, Pose{c, c, h});
    for (int i = 0; i < v.width() / 2; ++i)
      CHECK(v.depth[i] == doctest::Approx(v.depth[v.width() - 1 - i]).epsilon(1e-9));
  }
}

TEST_CASE("rendering is deterministic") {
  const GridWorld w = generate_world(6);
  const Pose p = sample_start_pose(w, 3);
  const View a = render_view(w, p);
  const View b = render_view(w, p);
  CHECK(a.features == b.features);
  CHECK(a.gt_class == b.gt_class);
  CHECK(a.depth == b.depth);
}

TEST_CASE("a patch spanning the field of view is seen on every pixel") {
  // Room interior x in [1, 14]; the east wall is column 15, painted class 4.
  auto l = embal::testing::room_layout(16, 16);
  embal::testing::paint(l, 15, 0, 15, 15, 4);
  const GridWorld w(l);
  // Cell (14, 8) centre: 0.125 m from the wall face at x = 3.75.
  const Pose p{3.625, 2.125, 0};
  const View v = render_view(w, p);
  for (int i = 0; i < v.width(); ++i) {
    CHECK(v.gt_class[i] == 4);
    // Hand-traced: the ray meets the plane x = 3.75 after 0.125 / cos(angle).
    const double a = ray_angle(p, i, v.width(), 90.0);
    CHECK(v.depth[i] == doctest::Approx(0.125 / std::cos(a)).epsilon(1e-12));
    CHECK(v.hit_points[i].x == doctest::Approx(3.75).epsilon(1e-12));
  }
}

TEST_CASE("ray angles sweep left to right across the field of view") {
  const Pose p{0, 0, 0};
  CHECK(ray_angle(p, 0, 64, 90.0) * 180.0 / kPi == doctest::Approx(45.0 - 90.0 / 128));
  CHECK(ray_angle(p, 63, 64, 90.0) * 180.0 / kPi == doctest::Approx(-45.0 + 90.0 / 128));
}

TEST_CASE("cast_ray against a hand-traced grid") {
  const GridWorld w = embal::testing::room(8, 8);
  // From (1.0, 1.0) heading +x the first wall cell is column 7 at x = 1.75.
  const RayHit h = cast_ray(w, Vec2{1.0, 1.0}, 0.0);
  CHECK(h.distance == doctest::Approx(0.75));
  CHECK(h.cell == CellIndex{7, 4});
  // Diagonal: x and y reach 1.75 together at distance 0.75 * sqrt(2).
  const RayHit d = cast_ray(w, Vec2{1.0, 1.0}, kPi / 4);
  CHECK(d.distance == doctest::Approx(0.75 * std::sqrt(2.0)));
  CHECK(w.is_wall(d.cell));
}

TEST_CASE("correspondence of a view with itself is the identity") {
  const GridWorld w = generate_world(8);
  for (const Pose& p : random_poses(w, 20, 2)) {
    const View v = render_view(w, p);
    const auto m = correspondence(v, v);
    for (int j = 0; j < v.width(); ++j) CHECK(m[j] == j);
  }
}

TEST_CASE("opposite views of an open room share nothing") {
  const GridWorld w = embal::testing::room(33, 33);
  const Pose a{4.125, 4.125, 0};
  const Pose b{4.125, 4.125, 12};
  const auto m = correspondence(render_view(w, a), render_view(w, b));
  CHECK(std::all_of(m.begin(), m.end(), [](int i) { return i == kNoMatch; }));
}

TEST_CASE("a 15 degree turn shifts correspondences by a sixth of the strip") {
  const GridWorld w = embal::testing::room(33, 33);
  const Pose a{3.125, 4.125, 0};
  const Pose b{3.125, 4.125, 1};
  const View va = render_view(w, a);
  const View vb = render_view(w, b);
  const auto m = correspondence(va, vb);

  // Geometric oracle: a target ray is matchable iff its direction lies inside
  // the source field of view.
  int expected = 0;
  for (int j = 0; j < vb.width(); ++j) {
    const double rel = ray_angle(b, j, vb.width(), 90.0) - a.heading_rad();
    expected += std::abs(rel) < kPi / 4;
  }
  int defined = 0, first = -1, last = -1;
  std::vector<int> shifts;
  for (int j = 0; j < vb.width(); ++j) {
    if (m[j] == kNoMatch) continue;
    ++defined;
    if (first < 0) first = j;
    last = j;
    shifts.push_back(m[j] - j);
  }
  CHECK(expected == doctest::Approx(64 * 75.0 / 90.0).epsilon(0.03));
  CHECK(std::abs(defined - expected) <= 2);
  CHECK(last - first + 1 == defined);  // contiguous
  std::nth_element(shifts.begin(), shifts.begin() + shifts.size() / 2, shifts.end());
  CHECK(std::abs(shifts[shifts.size() / 2]) == doctest::Approx(64 * 15.0 / 90.0).epsilon(0.1));
}

TEST_CASE("correspondence round trips and transports labels") {
  const GridWorld w = generate_world(10);
  std::mt19937_64 rng(4);
  int matched = 0, agree = 0;
  for (const Pose& p : random_poses(w, 200, 3)) {
    Pose q = p;
    for (int k = 0; k < 3; ++k) {
      const Action a = kMovementActions[rng() % kMovementActionCount];
      q = step_pose(w, q, a).pose;
    }
    const View va = render_view(w, p);
    const View vb = render_view(w, q);
    const auto ab = correspondence(va, vb);
    const auto ba = correspondence(vb, va);
    for (int j = 0; j < vb.width(); ++j) {
      if (ab[j] == kNoMatch) continue;
      ++matched;
      agree += va.gt_class[ab[j]] == vb.gt_class[j];
      if (ba[ab[j]] != kNoMatch) CHECK(std::abs(ba[ab[j]] - j) <= 1);
    }
  }
  REQUIRE(matched > 1000);
  CHECK(static_cast<double>(agree) / matched >= 0.99);
}

TEST_CASE("view csv dump") {
  const GridWorld w = embal::testing::room(8, 8);
  std::ostringstream out;
  write_view_csv(out, render_view(w, Pose{1.0, 1.0, 0}));
  const std::string s = out.str();
  CHECK(s.rfind("pixel,class,depth\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 65);
}
