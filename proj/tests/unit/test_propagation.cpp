#include <random>

#include "doctest.h"
#include "embal/propagation.hpp"
#include "fixtures.hpp"

using namespace embal;

namespace {

CorrespondenceMap identity(int w) {
  CorrespondenceMap m(w);
  for (int i = 0; i < w; ++i) m[i] = i;
  return m;
}

}  // namespace

TEST_CASE("init_from_gt copies the ground truth") {
  const GridWorld w = generate_world(1);
  const View v = render_view(w, sample_start_pose(w, 1));
  const PropagatedMask m = init_from_gt(v);
  CHECK(m.labels() == v.gt_class);
  CHECK(m.unknown_fraction() == 0.0);
  CHECK(m.unknown_count() == 0);
}

TEST_CASE("unknown fraction is derived from the labels") {
  const PropagatedMask m({1, kUnknown, 2, kUnknown, kUnknown});
  CHECK(m.unknown_count() == 3);
  CHECK(m.unknown_fraction() == 3.0 / 5.0);
  CHECK_FALSE(m.all_unknown());
  CHECK(PropagatedMask({kUnknown, kUnknown}).all_unknown());
}

TEST_CASE("propagate through identity and empty maps") {
  const PropagatedMask m({1, 2, kUnknown, 4});
  CHECK(propagate(m, identity(4)) == m);
  const PropagatedMask none = propagate(m, CorrespondenceMap(4, kNoMatch));
  CHECK(none.unknown_fraction() == 1.0);
  // Labels follow the map; unknown sources stay unknown.
  const PropagatedMask moved = propagate(m, {3, kNoMatch, 0, 2});
  CHECK(moved.labels() == std::vector<int>{4, kUnknown, 1, kUnknown});
}

TEST_CASE("a 15 degree turn loses about a sixth of the labels") {
  const GridWorld w = embal::testing::room(33, 33);
  const Pose a{3.125, 4.125, 0};
  const View va = render_view(w, a);
  const View vb = render_view(w, step_pose(w, a, Action::RotateLeft).pose);
  const PropagatedMask m = propagate(init_from_gt(va), correspondence(va, vb));
  CHECK(std::abs(m.unknown_fraction() - 15.0 / 90.0) <= 2.0 / 64);
}

TEST_CASE("annotate appends the ground truth and resets the mask") {
  const GridWorld w = generate_world(2);
  const View v = render_view(w, sample_start_pose(w, 2));
  TrainSet ts;
  const PropagatedMask m = do_annotate(ts, v);
  REQUIRE(ts.size() == 1);
  CHECK(ts.back().labels == v.gt_class);
  CHECK(m.unknown_fraction() == 0.0);
  CHECK(m == init_from_gt(v));
  do_annotate(ts, v);
  CHECK(ts.size() == 2);
}

TEST_CASE("collect passes the propagated labels through") {
  const GridWorld w = generate_world(3);
  const View v = render_view(w, sample_start_pose(w, 3));
  TrainSet ts;
  const PropagatedMask fresh = do_annotate(ts, v);
  do_collect(ts, v, fresh);
  CHECK(ts.back().labels == v.gt_class);

  std::vector<int> labels = v.gt_class;
  for (int i = 0; i < v.width(); i += 5) labels[i] = kUnknown;  // 13 of 64, then pad to 40%
  for (int i = 1; i < v.width() && PropagatedMask(labels).unknown_fraction() < 0.4; i += 5)
    labels[i] = kUnknown;
  const PropagatedMask partial(labels);
  const double before = partial.unknown_fraction();
  do_collect(ts, v, partial);
  CHECK(ts.back().labels == labels);
  CHECK(partial.unknown_fraction() == before);
  CHECK(ts.size() == 3);

  CHECK_THROWS_AS(do_collect(ts, v, PropagatedMask(std::vector<int>(64, kUnknown))), Error);
  CHECK(ts.size() == 3);
}

TEST_CASE("propagated labels stay sound along random motion") {
  const GridWorld w = generate_world(14);
  std::mt19937_64 rng(8);
  long known = 0, correct = 0;
  for (int seq = 0; seq < 100; ++seq) {
    Pose p = sample_start_pose(w, rng());
    View prev = render_view(w, p);
    PropagatedMask m = init_from_gt(prev);
    for (int step = 0; step < 10; ++step) {
      p = step_pose(w, p, kMovementActions[rng() % kMovementActionCount]).pose;
      const View next = render_view(w, p);
      const auto corr = correspondence(prev, next);
      const PropagatedMask after = propagate(m, corr);
      for (int j = 0; j < next.width(); ++j) {
        if (after.labels()[j] == kUnknown) continue;
        // Never invented: a known label has a known source.
        REQUIRE(corr[j] != kNoMatch);
        REQUIRE(m.labels()[corr[j]] != kUnknown);
        ++known;
        const int l = after.labels()[j];
        correct += l == next.gt_class[j] || testing::boundary_tie(w, next.hit_points[j], l);
      }
      m = after;
      prev = next;
    }
  }
  REQUIRE(known > 0);
  CHECK(static_cast<double>(correct) / known >= 0.99);
}
