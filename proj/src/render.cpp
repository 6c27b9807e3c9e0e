#include "embal/render.hpp"

#include <limits>
#include <ostream>

#include "embal/hash.hpp"

namespace embal {

double ray_angle(const Pose& pose, int pixel, int width, double fov_deg) {
  const double step = fov_deg / width;
  const double deg = pose.heading_deg() + fov_deg / 2.0 - (pixel + 0.5) * step;
  return deg * kPi / 180.0;
}

RayHit cast_ray(const GridWorld& world, Vec2 origin, double angle) {
  const double cs = world.cell_size();
  const double dx = std::cos(angle);
  const double dy = std::sin(angle);
  CellIndex cell = world.cell_of(origin);
  const int step_x = dx > 0 ? 1 : -1;
  const int step_y = dy > 0 ? 1 : -1;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double delta_x = dx != 0.0 ? std::abs(cs / dx) : kInf;
  const double delta_y = dy != 0.0 ? std::abs(cs / dy) : kInf;
  double next_x = kInf, next_y = kInf;
  if (dx > 0) next_x = ((cell.x + 1) * cs - origin.x) / dx;
  else if (dx < 0) next_x = (cell.x * cs - origin.x) / dx;
  if (dy > 0) next_y = ((cell.y + 1) * cs - origin.y) / dy;
  else if (dy < 0) next_y = (cell.y * cs - origin.y) / dy;

  double t = 0.0;
  const int max_steps = 2 * (world.width() + world.height()) + 4;
  for (int i = 0; i < max_steps && !world.is_wall(cell); ++i) {
    if (next_x < next_y) {
      t = next_x;
      next_x += delta_x;
      cell.x += step_x;
    } else {
      t = next_y;
      next_y += delta_y;
      cell.y += step_y;
    }
  }
  return {t, Vec2{origin.x + t * dx, origin.y + t * dy}, cell};
}

View render_view(const GridWorld& world, const Pose& pose, const RenderParams& params,
                 ViewOrigin origin) {
  const int w = params.width;
  const int d = world.appearance_dim();
  View v;
  v.pose = pose;
  v.origin = origin;
  v.fov_deg = params.fov_deg;
  v.features.resize(w, d);
  v.gt_class.resize(w);
  v.depth.resize(w);
  v.hit_points.resize(w);

  std::uint64_t pose_key = hash_combine(world.seed(), hash_double(pose.x));
  pose_key = hash_combine(pose_key, hash_double(pose.y));
  pose_key = hash_combine(pose_key, static_cast<std::uint64_t>(pose.heading));
  const auto& tdir = world.texture_dir();

  for (int i = 0; i < w; ++i) {
    const RayHit hit = cast_ray(world, pose.position(), ray_angle(pose, i, w, params.fov_deg));
    const int cls = world.surface_class(hit.cell);
    const double tex = world.texture(hit.cell);
    v.gt_class[i] = cls;
    v.depth[i] = hit.distance;
    v.hit_points[i] = hit.point;
    const double* emb = world.embedding(cls);
    HashNormal noise(hash_combine(pose_key, static_cast<std::uint64_t>(i)));
    for (int k = 0; k < d; ++k)
      v.features(i, k) = emb[k] + tex * tdir[k] + params.noise_sigma * noise.next();
  }
  return v;
}

namespace {

int nearest_pixel(const std::vector<Vec2>& points, Vec2 q, double* best_d2) {
  int best = kNoMatch;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d2 = squared_norm(points[i] - q);
    if (d2 < bd) {
      bd = d2;
      best = static_cast<int>(i);
    }
  }
  if (best_d2) *best_d2 = bd;
  return best;
}

}  // namespace

CorrespondenceMap correspondence(const View& src, const View& dst,
                                 const CorrespondenceParams& params) {
  CorrespondenceMap map(dst.width(), kNoMatch);
  const double max_d2 = params.match_distance * params.match_distance;
  for (int j = 0; j < dst.width(); ++j) {
    double d2 = 0.0;
    const int i = nearest_pixel(src.hit_points, dst.hit_points[j], &d2);
    if (i == kNoMatch || !(d2 < max_d2)) continue;
    const int back = nearest_pixel(dst.hit_points, src.hit_points[i], nullptr);
    if (std::abs(back - j) <= params.backward_tolerance) map[j] = i;
  }
  return map;
}

void write_view_csv(std::ostream& out, const View& view) {
  out << "pixel,class,depth\n";
  for (int i = 0; i < view.width(); ++i)
    out << i << ',' << view.gt_class[i] << ',' << view.depth[i] << '\n';
}

}  // namespace embal
