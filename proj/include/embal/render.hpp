#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <vector>

#include "embal/world.hpp"

namespace embal {

/// Where a view came from. Reference views are evaluation-only and must never
/// reach a training set.
enum class ViewOrigin : std::uint8_t { Agent, Reference, Offline };

struct RenderParams {
  int width = 64;
  double fov_deg = 90.0;
  double noise_sigma = 0.1;
};

/// One-dimensional first-person strip: pixel 0 is the leftmost ray.
struct View {
  Pose pose;
  ViewOrigin origin = ViewOrigin::Agent;
  double fov_deg = 90.0;
  Eigen::MatrixXd features;        // width x appearance_dim
  std::vector<int> gt_class;
  std::vector<double> depth;
  std::vector<Vec2> hit_points;

  int width() const { return static_cast<int>(gt_class.size()); }
};

/// Angle (radians) of the ray through pixel i.
double ray_angle(const Pose& pose, int pixel, int width, double fov_deg);

struct RayHit {
  double distance = 0.0;
  Vec2 point;
  CellIndex cell;
};

/// Grid traversal (DDA) from origin to the first wall cell.
RayHit cast_ray(const GridWorld& world, Vec2 origin, double angle);

View render_view(const GridWorld& world, const Pose& pose, const RenderParams& params = {},
                 ViewOrigin origin = ViewOrigin::Agent);

inline constexpr int kNoMatch = -1;

/// For every destination pixel, the matching source pixel or kNoMatch.
using CorrespondenceMap = std::vector<int>;

struct CorrespondenceParams {
  double match_distance = 0.125;
  int backward_tolerance = 1;
};

CorrespondenceMap correspondence(const View& src, const View& dst,
                                 const CorrespondenceParams& params = {});

/// Debug dump: "pixel,class,depth" rows.
void write_view_csv(std::ostream& out, const View& view);

}  // namespace embal
