#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "embal/propagation.hpp"
#include "embal/tsp.hpp"
#include "embal/world.hpp"

namespace embal {

/// What an agent sees before choosing its next action.
struct AgentObservation {
  const View& view;
  const Eigen::MatrixXd& predicted;  // width x classes
  const PropagatedMask& mask;
  bool collision = false;            // most recent movement was blocked
  int step = 0;
  Pose pose;                         // privileged; used by map-based agents only
  std::optional<Action> last_action;
  int steps_since_annotate = 0;
};

struct ThresholdPerceptionConfig {
  double collect_threshold = 0.30;
  double annotate_threshold = 0.85;
};

void validate(const ThresholdPerceptionConfig& cfg);

/// Annotate when unknown_fraction >= annotate_threshold, else Collect when
/// >= collect_threshold; nullopt defers to the movement policy.
std::optional<Action> threshold_perception(const PropagatedMask& mask,
                                           const ThresholdPerceptionConfig& cfg);

/// Stateful use of the thresholds: Collect fires once per annotation cycle
/// (the first time the collect threshold is reached since the last Annotate),
/// since a repeated Collect without motion would add the same labels again.
class ThresholdGate {
 public:
  explicit ThresholdGate(ThresholdPerceptionConfig cfg = {});
  std::optional<Action> decide(const PropagatedMask& mask);
  const ThresholdPerceptionConfig& config() const { return cfg_; }

 private:
  ThresholdPerceptionConfig cfg_;
  bool collected_ = false;
};

/// Chooses movement actions only.
class MovementPolicy {
 public:
  virtual ~MovementPolicy() = default;
  virtual Action next(const AgentObservation& obs) = 0;
};

/// Chooses any of the seven actions.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual Action act(const AgentObservation& obs) = 0;
};

class RandomPolicy final : public MovementPolicy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
  Action next(const AgentObservation& obs) override;

 private:
  std::mt19937_64 rng_;
};

class RotatePolicy final : public MovementPolicy {
 public:
  Action next(const AgentObservation&) override { return Action::RotateLeft; }
};

/// Walks forward until blocked, then turns to a fresh uniformly random heading.
class BouncePolicy final : public MovementPolicy {
 public:
  explicit BouncePolicy(std::uint64_t seed) : rng_(seed) {}
  Action next(const AgentObservation& obs) override;
  std::optional<int> target_heading() const { return target_; }

 private:
  std::mt19937_64 rng_;
  std::optional<int> target_;
  bool last_was_forward_ = false;
};

/// Rotate toward the heading (nearest 15 degrees) pointing at target, then
/// move forward. Rotations take the shorter way round.
Action steer_toward(const Pose& pose, Vec2 target);

enum class MapCell : std::uint8_t { Unknown = 0, Free = 1, Obstacle = 2 };

/// Online map built from depth rays.
class OccupancyMap {
 public:
  OccupancyMap(int width, int height, double cell_size, double range_limit = 4.0);

  int width() const { return width_; }
  int height() const { return height_; }
  double cell_size() const { return cell_size_; }
  double range_limit() const { return range_limit_; }
  MapCell at(CellIndex c) const;
  MapCell at(int index) const { return cells_[index]; }
  void set(CellIndex c, MapCell v);
  int count(MapCell v) const;
  friend bool operator==(const OccupancyMap&, const OccupancyMap&) = default;

 private:
  int width_, height_;
  double cell_size_, range_limit_;
  std::vector<MapCell> cells_;
};

/// Marks cells traversed by each ray as free up to min(depth, range) and the
/// hit cell as obstacle when depth <= range. Obstacles are never downgraded.
void update_occupancy(OccupancyMap& map, const Pose& pose, const View& view);

/// Frontier exploration confined to a geodesic disc around the start.
class FrontierPolicy final : public MovementPolicy {
 public:
  FrontierPolicy(const GridWorld& world, const Pose& start, double radius);
  Action next(const AgentObservation& obs) override;

  const OccupancyMap& map() const { return map_; }
  /// Free map cells inside the disc that border unknown cells.
  std::vector<CellIndex> frontiers() const;
  bool fallback_engaged() const { return fallback_; }

 private:
  std::vector<CellIndex> plan_to(CellIndex from, bool frontier_goal) const;
  bool blacklisted(int index) const;

  static constexpr int kMaxPlanAge = 200;

  const GridWorld& world_;
  std::vector<std::uint8_t> in_radius_;
  OccupancyMap map_;
  std::vector<int> last_visit_;
  std::vector<CellIndex> path_;  // current plan, path_[0] is the agent's cell
  std::vector<int> blacklist_;   // frontier cells that could not be resolved
  int plan_age_ = 0;
  bool fallback_ = false;
};

struct SpaceFillingTour {
  std::vector<CellIndex> nodes;
  tsp::Tour order;                                // indices into nodes
  std::vector<std::vector<CellIndex>> leg_paths;  // order.size() - 1 legs
  double length_m = 0.0;
};

/// 1 m grid of reachable free nodes within geodesic radius r of start,
/// ordered by nearest-neighbour construction from the node closest to start
/// plus 2-opt, with legs materialized as shortest in-radius cell paths.
SpaceFillingTour build_space_filling_tour(const GridWorld& world, const Pose& start, double radius);

class SpaceFillerPolicy final : public MovementPolicy {
 public:
  SpaceFillerPolicy(const GridWorld& world, const Pose& start, double radius);
  explicit SpaceFillerPolicy(const GridWorld& world, SpaceFillingTour tour, double radius,
                             const Pose& start);
  Action next(const AgentObservation& obs) override;
  const SpaceFillingTour& tour() const { return tour_; }
  int completed_tours() const { return completed_; }

 private:
  void refill(CellIndex from);

  const GridWorld& world_;
  SpaceFillingTour tour_;
  std::vector<std::uint8_t> in_radius_;
  std::vector<std::uint8_t> is_node_;
  std::vector<CellIndex> waypoints_;
  std::size_t cursor_ = 0;
  int completed_ = -1;
};

/// Movement from a policy, perception from the unknown-fraction thresholds.
class ThresholdAgent final : public Agent {
 public:
  ThresholdAgent(std::unique_ptr<MovementPolicy> movement, ThresholdPerceptionConfig cfg = {});
  Action act(const AgentObservation& obs) override;

 private:
  std::unique_ptr<MovementPolicy> movement_;
  ThresholdGate gate_;
};

/// Annotate and Collect with probability 0.1 each, otherwise the base
/// policy's movement. Collect on an all-unknown mask becomes Annotate.
class RandomPerceptionAgent final : public Agent {
 public:
  RandomPerceptionAgent(std::unique_ptr<MovementPolicy> movement, std::uint64_t seed,
                        double annotate_p = 0.1, double collect_p = 0.1);
  Action act(const AgentObservation& obs) override;

 private:
  std::unique_ptr<MovementPolicy> movement_;
  std::mt19937_64 rng_;
  double annotate_p_, collect_p_;
};

/// Geodesic-disc membership mask (cells within radius of start).
std::vector<std::uint8_t> disc_mask(const GridWorld& world, const Pose& start, double radius);

}  // namespace embal
