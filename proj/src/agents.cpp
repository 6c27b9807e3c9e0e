#include "embal/agents.hpp"

#include <algorithm>
#include <deque>
#include <limits>

#include "embal/render.hpp"

namespace embal {

void validate(const ThresholdPerceptionConfig& cfg) {
  if (!(cfg.collect_threshold > 0.0 && cfg.collect_threshold < cfg.annotate_threshold &&
        cfg.annotate_threshold <= 1.0))
    throw Error("ThresholdPerceptionConfig: need 0 < collect < annotate <= 1");
}

std::optional<Action> threshold_perception(const PropagatedMask& mask,
                                           const ThresholdPerceptionConfig& cfg) {
  const double u = mask.unknown_fraction();
  if (u >= cfg.annotate_threshold) return Action::Annotate;
  if (u >= cfg.collect_threshold) return Action::Collect;
  return std::nullopt;
}

Action RandomPolicy::next(const AgentObservation&) {
  std::uniform_int_distribution<int> pick(0, kMovementActionCount - 1);
  return kMovementActions[pick(rng_)];
}

namespace {

Action rotate_toward(int heading, int target) {
  const int diff = wrap_heading(target - heading);
  return diff <= kHeadingCount / 2 ? Action::RotateLeft : Action::RotateRight;
}

}  // namespace

Action BouncePolicy::next(const AgentObservation& obs) {
  if (last_was_forward_ && obs.collision) {
    std::uniform_int_distribution<int> pick(0, kHeadingCount - 1);
    int h = pick(rng_);
    while (h == obs.pose.heading) h = pick(rng_);
    target_ = h;
  }
  if (target_) {
    if (*target_ == obs.pose.heading) {
      target_.reset();
    } else {
      last_was_forward_ = false;
      return rotate_toward(obs.pose.heading, *target_);
    }
  }
  last_was_forward_ = true;
  return Action::MoveForward;
}

Action steer_toward(const Pose& pose, Vec2 target) {
  const Vec2 d = target - pose.position();
  if (squared_norm(d) < 1e-18) return Action::RotateLeft;
  const double deg = std::atan2(d.y, d.x) * 180.0 / kPi;
  const int desired = wrap_heading(static_cast<int>(std::lround(deg / kHeadingStepDeg)));
  if (desired == pose.heading) return Action::MoveForward;
  return rotate_toward(pose.heading, desired);
}

OccupancyMap::OccupancyMap(int width, int height, double cell_size, double range_limit)
    : width_(width),
      height_(height),
      cell_size_(cell_size),
      range_limit_(range_limit),
      cells_(static_cast<std::size_t>(width) * height, MapCell::Unknown) {
  if (width <= 0 || height <= 0 || cell_size <= 0.0 || range_limit <= 0.0)
    throw Error("OccupancyMap: invalid dimensions");
}

MapCell OccupancyMap::at(CellIndex c) const {
  if (c.x < 0 || c.y < 0 || c.x >= width_ || c.y >= height_) return MapCell::Unknown;
  return cells_[static_cast<std::size_t>(c.y) * width_ + c.x];
}

void OccupancyMap::set(CellIndex c, MapCell v) {
  if (c.x < 0 || c.y < 0 || c.x >= width_ || c.y >= height_) return;
  auto& cell = cells_[static_cast<std::size_t>(c.y) * width_ + c.x];
  if (cell == MapCell::Obstacle && v != MapCell::Obstacle) return;
  cell = v;
}

int OccupancyMap::count(MapCell v) const {
  return static_cast<int>(std::count(cells_.begin(), cells_.end(), v));
}

void update_occupancy(OccupancyMap& map, const Pose& pose, const View& view) {
  const double cs = map.cell_size();
  const double range = map.range_limit();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const Vec2 origin = pose.position();
  for (int i = 0; i < view.width(); ++i) {
    const double depth = view.depth[i];
    const double limit = std::min(depth, range);
    const double angle = ray_angle(pose, i, view.width(), view.fov_deg);
    const double dx = std::cos(angle), dy = std::sin(angle);
    CellIndex cell{static_cast<int>(std::floor(origin.x / cs)),
                   static_cast<int>(std::floor(origin.y / cs))};
    const int sx = dx > 0 ? 1 : -1, sy = dy > 0 ? 1 : -1;
    const double tdx = dx != 0.0 ? std::abs(cs / dx) : kInf;
    const double tdy = dy != 0.0 ? std::abs(cs / dy) : kInf;
    double nx = kInf, ny = kInf;
    if (dx > 0) nx = ((cell.x + 1) * cs - origin.x) / dx;
    else if (dx < 0) nx = (cell.x * cs - origin.x) / dx;
    if (dy > 0) ny = ((cell.y + 1) * cs - origin.y) / dy;
    else if (dy < 0) ny = (cell.y * cs - origin.y) / dy;

    map.set(cell, MapCell::Free);
    const int max_steps = 4 * (map.width() + map.height());
    for (int s = 0; s < max_steps; ++s) {
      double t;
      if (nx < ny) {
        t = nx;
        nx += tdx;
        cell.x += sx;
      } else {
        t = ny;
        ny += tdy;
        cell.y += sy;
      }
      if (depth <= range && t >= depth - 1e-9) {
        map.set(cell, MapCell::Obstacle);
        break;
      }
      if (t >= limit - 1e-9) break;
      map.set(cell, MapCell::Free);
    }
  }
}

std::vector<std::uint8_t> disc_mask(const GridWorld& world, const Pose& start, double radius) {
  const auto dist = distance_field(world, world.cell_of(start.position()));
  std::vector<std::uint8_t> mask(dist.size(), 0);
  for (std::size_t i = 0; i < dist.size(); ++i)
    mask[i] = dist[i] >= 0 && dist[i] * world.cell_size() <= radius + 1e-9;
  return mask;
}

namespace {

std::vector<int> masked_distance_field(const GridWorld& world, CellIndex from,
                                       const std::vector<std::uint8_t>& allowed) {
  std::vector<int> dist(allowed.size(), -1);
  const int start = world.index(from);
  if (!allowed[start] || world.is_wall(from)) return dist;
  const int w = world.width();
  std::deque<int> queue{start};
  dist[start] = 0;
  while (!queue.empty()) {
    const int i = queue.front();
    queue.pop_front();
    for (int j : {i + 1, i - 1, i + w, i - w}) {
      if (j < 0 || j >= static_cast<int>(allowed.size())) continue;
      if (dist[j] < 0 && allowed[j] && world.is_free(world.cell_at(j))) {
        dist[j] = dist[i] + 1;
        queue.push_back(j);
      }
    }
  }
  return dist;
}

}  // namespace

FrontierPolicy::FrontierPolicy(const GridWorld& world, const Pose& start, double radius)
    : world_(world),
      in_radius_(disc_mask(world, start, radius)),
      map_(world.width(), world.height(), world.cell_size()),
      last_visit_(static_cast<std::size_t>(world.width()) * world.height(), -1) {}

std::vector<CellIndex> FrontierPolicy::frontiers() const {
  std::vector<CellIndex> out;
  for (int i = 0; i < world_.width() * world_.height(); ++i) {
    if (!in_radius_[i] || map_.at(i) != MapCell::Free) continue;
    const CellIndex c = world_.cell_at(i);
    const CellIndex nb[4] = {{c.x + 1, c.y}, {c.x - 1, c.y}, {c.x, c.y + 1}, {c.x, c.y - 1}};
    for (const auto& n : nb) {
      if (map_.at(n) == MapCell::Unknown) {
        out.push_back(c);
        break;
      }
    }
  }
  return out;
}

std::vector<CellIndex> FrontierPolicy::plan_to(CellIndex from, bool frontier_goal) const {
  std::vector<std::uint8_t> allowed(in_radius_.size(), 0);
  for (std::size_t i = 0; i < allowed.size(); ++i)
    allowed[i] = in_radius_[i] && map_.at(static_cast<int>(i)) == MapCell::Free;
  allowed[world_.index(from)] = 1;
  const auto dist = masked_distance_field(world_, from, allowed);

  int best = -1;
  if (frontier_goal) {
    int bd = std::numeric_limits<int>::max();
    for (const auto& f : frontiers()) {
      const int i = world_.index(f);
      if (dist[i] > 0 && dist[i] < bd && !blacklisted(i)) {
        bd = dist[i];
        best = i;
      }
    }
  } else {
    // Least recently visited reachable cell; unvisited first, then nearest.
    std::pair<int, int> key{std::numeric_limits<int>::max(), 0};
    for (std::size_t i = 0; i < dist.size(); ++i) {
      if (dist[i] <= 0) continue;
      const std::pair<int, int> k{last_visit_[i], dist[i]};
      if (k < key) {
        key = k;
        best = static_cast<int>(i);
      }
    }
  }
  if (best < 0) return {};
  return shortest_path(world_, from, world_.cell_at(best), &allowed);
}

bool FrontierPolicy::blacklisted(int index) const {
  return std::find(blacklist_.begin(), blacklist_.end(), index) != blacklist_.end();
}

Action FrontierPolicy::next(const AgentObservation& obs) {
  update_occupancy(map_, obs.pose, obs.view);
  const CellIndex cur = world_.cell_of(obs.pose.position());
  last_visit_[world_.index(cur)] = obs.step;

  if (!path_.empty()) {
    // Drop the current plan once reached, or once a frontier goal is resolved.
    const CellIndex goal = path_.back();
    bool still_frontier = false;
    if (!fallback_) {
      for (const auto& f : frontiers()) still_frontier |= f == goal;
    }
    const bool stale = ++plan_age_ > kMaxPlanAge;
    if (goal == cur || (!fallback_ && !still_frontier) || stale) {
      // A frontier that survives a visit cannot be resolved from here.
      if (!fallback_ && still_frontier && (goal == cur || stale))
        blacklist_.push_back(world_.index(goal));
      path_.clear();
    }
  }
  if (path_.empty()) {
    plan_age_ = 0;
    path_ = plan_to(cur, true);
    fallback_ = path_.empty();
    if (fallback_) path_ = plan_to(cur, false);
  }
  if (path_.empty()) return Action::RotateLeft;

  // Advance along the plan past the current cell; rejoin it if the agent drifted off.
  auto it = std::find(path_.begin(), path_.end(), cur);
  if (it == path_.end()) {
    auto rejoin = shortest_path(world_, cur, path_.front(), &in_radius_);
    if (rejoin.empty()) {
      path_.clear();
      return Action::RotateLeft;
    }
    rejoin.pop_back();
    path_.insert(path_.begin(), rejoin.begin(), rejoin.end());
    it = path_.begin();
  }
  path_.erase(path_.begin(), it);
  if (path_.size() < 2) return Action::RotateLeft;
  return steer_toward(obs.pose, world_.center_of(path_[1]));
}

SpaceFillingTour build_space_filling_tour(const GridWorld& world, const Pose& start, double radius) {
  const auto in_radius = disc_mask(world, start, radius);
  const CellIndex start_cell = world.cell_of(start.position());
  const int g = std::max(1, static_cast<int>(std::lround(1.0 / world.cell_size())));

  SpaceFillingTour tour;
  for (int y = g / 2; y < world.height(); y += g) {
    for (int x = g / 2; x < world.width(); x += g) {
      const CellIndex c{x, y};
      if (world.is_free(c) && in_radius[world.index(c)]) tour.nodes.push_back(c);
    }
  }
  if (tour.nodes.empty()) tour.nodes.push_back(start_cell);

  const int n = static_cast<int>(tour.nodes.size());
  tsp::DistanceMatrix d(n, n);
  for (int a = 0; a < n; ++a) {
    const auto field = masked_distance_field(world, tour.nodes[a], in_radius);
    for (int b = 0; b < n; ++b) {
      const int steps = field[world.index(tour.nodes[b])];
      d(a, b) = steps < 0 ? 1e9 : steps * world.cell_size();
    }
  }
  const auto from_start = masked_distance_field(world, start_cell, in_radius);
  int first = 0;
  for (int a = 1; a < n; ++a) {
    const int da = from_start[world.index(tour.nodes[a])];
    const int df = from_start[world.index(tour.nodes[first])];
    if (da >= 0 && (df < 0 || da < df)) first = a;
  }
  tour.order = tsp::solve_open(d, first);
  tour.length_m = tsp::path_length(d, tour.order);
  for (std::size_t i = 1; i < tour.order.size(); ++i)
    tour.leg_paths.push_back(shortest_path(world, tour.nodes[tour.order[i - 1]],
                                           tour.nodes[tour.order[i]], &in_radius));
  return tour;
}

constexpr std::size_t kLoopSkip = 6;

SpaceFillerPolicy::SpaceFillerPolicy(const GridWorld& world, const Pose& start, double radius)
    : SpaceFillerPolicy(world, build_space_filling_tour(world, start, radius), radius, start) {}

SpaceFillerPolicy::SpaceFillerPolicy(const GridWorld& world, SpaceFillingTour tour, double radius,
                                     const Pose& start)
    : world_(world),
      tour_(std::move(tour)),
      in_radius_(disc_mask(world, start, radius)),
      is_node_(in_radius_.size(), 0) {
  for (const auto& n : tour_.nodes) is_node_[world_.index(n)] = 1;
}

void SpaceFillerPolicy::refill(CellIndex from) {
  ++completed_;
  // Odd passes walk the tour backwards so surfaces are seen from the other side.
  const bool reverse = completed_ % 2 == 1;
  std::vector<CellIndex> route;
  for (const auto& leg : tour_.leg_paths)
    for (const auto& c : leg)
      if (route.empty() || !(route.back() == c)) route.push_back(c);
  if (route.empty()) route.push_back(tour_.nodes[tour_.order.front()]);
  if (reverse) std::reverse(route.begin(), route.end());
  waypoints_ = shortest_path(world_, from, route.front(), &in_radius_);
  for (const auto& c : route)
    if (waypoints_.empty() || !(waypoints_.back() == c)) waypoints_.push_back(c);
  cursor_ = 0;
}

Action SpaceFillerPolicy::next(const AgentObservation& obs) {
  const CellIndex cur = world_.cell_of(obs.pose.position());
  for (int attempt = 0; attempt < 2; ++attempt) {
    // Skip short loops: if the route comes back to this cell soon, jump past
    // the return, but never past a tour node.
    const std::size_t end = std::min(waypoints_.size(), cursor_ + kLoopSkip + 1);
    for (std::size_t k = cursor_; k < end; ++k) {
      if (waypoints_[k] == cur) cursor_ = k + 1;
      else if (is_node_[world_.index(waypoints_[k])]) break;
    }
    if (cursor_ < waypoints_.size()) break;
    refill(cur);
  }
  if (cursor_ >= waypoints_.size()) return Action::RotateLeft;
  const CellIndex next = waypoints_[cursor_];
  if (std::abs(next.x - cur.x) + std::abs(next.y - cur.y) > 1) {
    // Off the planned path: splice in a detour back to the next waypoint.
    auto detour = shortest_path(world_, cur, next, &in_radius_);
    if (detour.size() >= 2) {
      waypoints_.insert(waypoints_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                        detour.begin() + 1, detour.end() - 1);
    }
  }
  return steer_toward(obs.pose, world_.center_of(waypoints_[cursor_]));
}

ThresholdAgent::ThresholdAgent(std::unique_ptr<MovementPolicy> movement, ThresholdPerceptionConfig cfg)
    : movement_(std::move(movement)), gate_(cfg) {}

ThresholdGate::ThresholdGate(ThresholdPerceptionConfig cfg) : cfg_(cfg) { validate(cfg_); }

std::optional<Action> ThresholdGate::decide(const PropagatedMask& mask) {
  const auto p = threshold_perception(mask, cfg_);
  if (p == Action::Annotate) {
    collected_ = false;
    return p;
  }
  if (p == Action::Collect && !collected_) {
    collected_ = true;
    return p;
  }
  return std::nullopt;
}

Action ThresholdAgent::act(const AgentObservation& obs) {
  if (auto p = gate_.decide(obs.mask)) return *p;
  return movement_->next(obs);
}

RandomPerceptionAgent::RandomPerceptionAgent(std::unique_ptr<MovementPolicy> movement,
                                             std::uint64_t seed, double annotate_p,
                                             double collect_p)
    : movement_(std::move(movement)), rng_(seed), annotate_p_(annotate_p), collect_p_(collect_p) {}

Action RandomPerceptionAgent::act(const AgentObservation& obs) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng_);
  if (u < annotate_p_) return Action::Annotate;
  if (u < annotate_p_ + collect_p_)
    return obs.mask.all_unknown() ? Action::Annotate : Action::Collect;
  return movement_->next(obs);
}

}  // namespace embal
