#pragma once

#include <cmath>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "embal/harness.hpp"

namespace embal {

struct TrainLogRow {
  int episode = 0;
  std::uint64_t world_seed = 0;
  double episode_return = 0.0;
  int n_ann = 0;
  int n_coll = 0;
  double final_miou = 0.0;
  double val_miou = NAN;  // only on validation episodes
};

struct TrainOptions {
  int episodes = 4000;
  int workers = 1;
  PpoConfig ppo;
  double gamma = 0.99;
  int hidden = 64;
  std::uint64_t seed = 7;
  AblationFlags flags;
  /// "rl" trains the seven-action agent; any other agent id trains learnt
  /// perception on top of that agent's movement.
  std::string agent = "rl";
  /// Validation every this many episodes; 0 disables checkpoint selection.
  int validate_every = 200;
  /// Uses only the first n validation worlds when positive.
  int validation_worlds = 0;
  /// Generator seeds to train on; the training split when empty.
  std::vector<std::uint64_t> train_worlds;
  EpisodeConfig base;
  std::function<void(const TrainLogRow&)> on_log;
};

struct TrainResult {
  PolicyModel best;
  PolicyModel last;
  double best_val_miou = NAN;
  int best_episode = 0;
  std::vector<TrainLogRow> log;
};

/// Action mask and feature layout implied by the flags and agent kind.
PolicyModel make_policy(const TrainOptions& opts);

/// Collects rollouts on the training worlds and applies clipped-surrogate
/// updates whenever a batch of transitions is full. Episodes run in rounds of
/// ceil(batch / max_steps) on up to `workers` threads; each round uses an
/// immutable snapshot of the policy, so results do not depend on `workers`.
TrainResult train_policy(const TrainOptions& opts, WorldCache& worlds);

/// Mean validation mIoU of a policy.
double validate_policy(const PolicyModel& policy, const TrainOptions& opts, WorldCache& worlds);

void write_train_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log);

void save_policy_file(const PolicyModel& policy, const std::string& path);
PolicyModel load_policy_file(const std::string& path);

struct AblationRow {
  std::string variant;
  MethodSummary summary;
};

/// Trains one policy per variant and evaluates each on `split`.
std::vector<AblationRow> ablation_suite(const std::vector<AblationFlags>& variants, const TrainOptions& train,
                                        const BenchmarkOptions& eval, WorldCache& worlds);

}  // namespace embal
