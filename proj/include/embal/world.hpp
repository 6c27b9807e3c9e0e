#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

#include "embal/types.hpp"

namespace embal {

/// Procedural generation knobs. Lengths are in meters.
struct GenParams {
  double width_m = 24.0;
  double height_m = 24.0;
  double cell_size = 0.25;
  int min_rooms = 6;
  int max_rooms = 10;
  double min_room_m = 2.5;
  double max_room_m = 5.0;
  double corridor_width_m = 1.0;
  /// Object patches painted onto the walls of each room.
  int patches_per_room = 8;
  /// Free-standing obstacle blocks per room.
  int obstacles_per_room = 2;
  /// Object classes drawn per room; rooms differ in what they contain.
  int classes_per_room = 3;
  int class_count = 13;
  int appearance_dim = 8;
  /// Weight of the class code shared by all worlds versus the per-world code.
  double shared_appearance = 0.8;
  /// Length of the texture direction added to the class code.
  double texture_scale = 0.3;
  int max_retries = 32;
};

struct CellIndex {
  int x = 0;
  int y = 0;
  friend bool operator==(CellIndex, CellIndex) = default;
};

/// Occupancy grid with a semantic class and texture scalar on every wall cell
/// plus per-world class appearance codes. Immutable once built.
class GridWorld {
 public:
  struct Layout {
    std::uint64_t seed = 0;
    double cell_size = 0.25;
    int width = 0;
    int height = 0;
    int class_count = 0;
    int appearance_dim = 0;
    std::vector<std::uint8_t> wall;     // 1 = wall, 0 = free
    std::vector<int> surface_class;     // -1 on free cells
    std::vector<double> texture;        // 0 on free cells
    std::vector<double> embeddings;     // class_count x appearance_dim
    std::vector<double> texture_dir;    // appearance_dim
  };

  /// Validates every invariant (closed boundary, classes on walls only,
  /// connected free space) and throws Error otherwise.
  explicit GridWorld(Layout layout);

  std::uint64_t seed() const { return l_.seed; }
  double cell_size() const { return l_.cell_size; }
  int width() const { return l_.width; }
  int height() const { return l_.height; }
  int class_count() const { return l_.class_count; }
  int appearance_dim() const { return l_.appearance_dim; }
  const Layout& layout() const { return l_; }

  bool in_bounds(CellIndex c) const {
    return c.x >= 0 && c.y >= 0 && c.x < l_.width && c.y < l_.height;
  }
  int index(CellIndex c) const { return c.y * l_.width + c.x; }
  CellIndex cell_at(int index) const { return {index % l_.width, index / l_.width}; }
  bool is_wall(CellIndex c) const { return !in_bounds(c) || l_.wall[index(c)] != 0; }
  bool is_free(CellIndex c) const { return !is_wall(c); }
  int surface_class(CellIndex c) const { return l_.surface_class[index(c)]; }
  double texture(CellIndex c) const { return l_.texture[index(c)]; }
  const double* embedding(int cls) const {
    return l_.embeddings.data() + static_cast<std::size_t>(cls) * l_.appearance_dim;
  }
  const std::vector<double>& texture_dir() const { return l_.texture_dir; }

  CellIndex cell_of(Vec2 p) const {
    return {static_cast<int>(std::floor(p.x / l_.cell_size)),
            static_cast<int>(std::floor(p.y / l_.cell_size))};
  }
  Vec2 center_of(CellIndex c) const {
    return {(c.x + 0.5) * l_.cell_size, (c.y + 0.5) * l_.cell_size};
  }
  bool is_free(Vec2 p) const { return is_free(cell_of(p)); }

  int free_count() const { return free_count_; }
  std::vector<CellIndex> free_cells() const;

  void save(std::ostream& out) const;
  static GridWorld load(std::istream& in);

  friend bool operator==(const GridWorld& a, const GridWorld& b);

 private:
  Layout l_;
  int free_count_ = 0;
};

inline constexpr int kHeadingCount = 24;
inline constexpr double kHeadingStepDeg = 15.0;
inline constexpr double kMoveStep = 0.25;

/// Agent pose; heading is an index into the 24 multiples of 15 degrees,
/// measured counter-clockwise from +x.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  int heading = 0;

  Vec2 position() const { return {x, y}; }
  double heading_deg() const { return heading * kHeadingStepDeg; }
  double heading_rad() const { return heading * kHeadingStepDeg * kPi / 180.0; }
  friend bool operator==(const Pose&, const Pose&) = default;
};

inline int wrap_heading(int h) { return ((h % kHeadingCount) + kHeadingCount) % kHeadingCount; }

struct StepResult {
  Pose pose;
  bool collided = false;
};

GridWorld generate_world(std::uint64_t seed, const GenParams& params = {});

/// Applies one movement action. Translations are swept in 0.05 m samples and
/// cancelled entirely when any sample lands in a wall cell.
StepResult step_pose(const GridWorld& world, const Pose& pose, Action action);

/// Breadth-first step counts over free cells (4-connectivity); -1 where
/// unreachable.
std::vector<int> distance_field(const GridWorld& world, CellIndex from);

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

/// Shortest free-cell path length in meters between the cells holding a and b.
double geodesic_distance(const GridWorld& world, Vec2 a, Vec2 b);

/// Shortest 4-connected free-cell path from a to b inclusive; empty when
/// unreachable. `allowed` optionally restricts traversable cells.
std::vector<CellIndex> shortest_path(const GridWorld& world, CellIndex a, CellIndex b,
                                     const std::vector<std::uint8_t>* allowed = nullptr);

/// Uniformly random free-cell-centred pose with a uniformly random heading.
Pose sample_start_pose(const GridWorld& world, std::uint64_t seed);

}  // namespace embal
