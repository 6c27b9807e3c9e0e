#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "embal/agents.hpp"
#include "embal/rl.hpp"

namespace embal {

/// Which learnt-agent variant is being trained or run.
struct AblationFlags {
  bool no_prop_features = false;
  bool no_explore_reward = false;
  bool no_collect = false;
  bool heuristic_perception_only = false;
  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

/// Parses a comma-separated flag list; throws on unknown flags.
AblationFlags parse_ablation_flags(const std::string& csv);
std::string to_string(const AblationFlags& flags);

enum class Regime { Steps, Budget };

struct ReferenceSet {
  std::vector<View> views;
};

/// Rejection-samples n poses in free cells within geodesic distance r of the
/// start (uniform position inside the cell, uniform heading).
ReferenceSet sample_reference_set(const GridWorld& world, const Pose& start, double radius, int n,
                                  std::uint64_t seed, const RenderParams& render = {});

struct EpisodeConfig {
  std::shared_ptr<const GridWorld> world;
  std::uint64_t start_seed = 0;
  Regime regime = Regime::Steps;
  int max_steps = 256;
  int annotation_budget = 100;
  /// Step cap that also ends budget-regime episodes.
  int safety_step_cap = 5000;
  double radius = 5.0;
  int reference_count = 32;
  /// random | rotate | bounce | frontier | spacefill | rl
  std::string agent = "spacefill";
  /// threshold | random | learnt (ignored by the full rl agent)
  std::string perception = "threshold";
  std::uint64_t policy_seed = 1;
  std::uint64_t train_seed = 2;
  std::uint64_t model_seed = 3;
  /// Defaults to a value derived from start_seed so all agents share it.
  std::optional<std::uint64_t> reference_seed;
  RenderParams render;
  SegShape seg_shape;
  TrainConfig train;
  RewardConfig reward;
  ThresholdPerceptionConfig threshold;
  int checkpoint_every = 32;
  AblationFlags flags;
  std::shared_ptr<const PolicyModel> policy;
  bool greedy_policy = false;
  /// Optional initialization for the segmentation model (pre-training runs).
  std::shared_ptr<const SegModel> initial_model;
  /// When false the model is never refined (frozen evaluation).
  bool refine_enabled = true;
};

struct StepLog {
  int step = 0;
  Action action = Action::MoveForward;
  bool converted = false;  // Collect on an all-unknown mask turned into Annotate
  Pose pose;
  bool collided = false;
  double unknown_fraction = 0.0;
  double r_exp = 0.0;
  double r_ann = 0.0;
  double r_col = 0.0;
  int refine_iters = 0;
};

struct CurvePoint {
  int step = 0;
  int n_ann = 0;
  int n_coll = 0;
  double miou = 0.0;
  double acc = 0.0;
  bool perception = false;
  bool checkpoint = false;
};

struct EpisodeRecord {
  static constexpr int kVersion = 1;
  std::uint64_t world_seed = 0;
  std::uint64_t start_seed = 0;
  std::string agent;
  std::string perception;
  Regime regime = Regime::Steps;
  Pose start;
  std::vector<int> reward_classes;
  std::vector<StepLog> steps;
  std::vector<CurvePoint> curve;
  int n_ann = 0;
  int n_coll = 0;
  int n_steps = 0;
  int n_converted = 0;
  double final_miou = 0.0;
  double final_acc = 0.0;
  double reward_miou_initial = 0.0;
  double reward_miou_final = 0.0;
  double final_reward = 0.0;
  double episode_return = 0.0;
  int distinct_cells = 0;
};

/// Runs one episode. When `trajectory` is given, transitions emitted by a
/// learnt agent are appended and the per-step rewards (plus the final reward
/// on the last transition) are attached to them.
EpisodeRecord run_episode(const EpisodeConfig& cfg, Trajectory* trajectory = nullptr);

/// Builds the agent named by cfg.agent / cfg.perception.
std::unique_ptr<Agent> make_agent(const EpisodeConfig& cfg, const GridWorld& world, const Pose& start,
                                  Trajectory* sink);

std::string method_name(const EpisodeConfig& cfg);

/// Versioned JSON text of the record.
std::string to_json(const EpisodeRecord& record);
EpisodeRecord record_from_json(const std::string& text);

}  // namespace embal
