#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "embal/episode.hpp"

namespace embal {

enum class Split { Train, Validation, Test };

Split parse_split(const std::string& name);
std::string split_name(Split split);

/// Generator seeds of a split. The ranges are disjoint: 61 training worlds
/// from 1000, 11 validation worlds from 2000, 18 test worlds from 3000.
std::vector<std::uint64_t> world_seeds(Split split);

/// Evaluation starts per world: 4 on test worlds, 3 elsewhere.
int starts_per_world(Split split);

/// Start-pose seed for the index-th evaluation start of a world.
std::uint64_t start_seed_for(std::uint64_t world_seed, int index);

/// Thread-safe memo of generated worlds.
class WorldCache {
 public:
  explicit WorldCache(GenParams params = {}) : params_(params) {}
  std::shared_ptr<const GridWorld> get(std::uint64_t seed);

 private:
  GenParams params_;
  std::mutex mutex_;
  std::map<std::uint64_t, std::shared_ptr<const GridWorld>> worlds_;
};

/// Parses "steps:256" or "budget:100" into the config.
void apply_regime(EpisodeConfig& cfg, const std::string& regime);

/// A method to benchmark: agent id plus perception id, or a learnt policy.
struct MethodSpec {
  std::string agent = "spacefill";
  std::string perception = "threshold";
  std::shared_ptr<const PolicyModel> policy;
  AblationFlags flags;
  std::string label;  // defaults to method_name
};

/// Parses "spacefill", "bounce+random" or "spacefill+learnt".
MethodSpec parse_method(const std::string& text);

struct ResultRow {
  std::string method;
  std::uint64_t world_seed = 0;
  std::uint64_t start_seed = 0;
  double miou = 0.0;
  double acc = 0.0;
  int n_ann = 0;
  int n_coll = 0;
  int n_steps = 0;
};

struct BenchmarkOptions {
  Split split = Split::Test;
  /// Evaluates only the first n worlds of the split when positive.
  int max_worlds = 0;
  int workers = 1;
  /// Template for every episode; world, start_seed, agent and policy fields are overwritten.
  EpisodeConfig base;
  bool keep_records = true;
  std::function<void(const ResultRow&)> on_row;
};

struct BenchmarkResult {
  std::vector<ResultRow> rows;        // method-major, then world, then start
  std::vector<EpisodeRecord> records; // parallel to rows when kept
};

/// Runs every (method, world, start) episode. Episodes are independent jobs
/// and results are stored in job order, so the output does not depend on the
/// number of workers.
/// The configuration the benchmark runs for one method at one start.
EpisodeConfig episode_config(const MethodSpec& method, const EpisodeConfig& base,
                             std::shared_ptr<const GridWorld> world, std::uint64_t start_seed);

BenchmarkResult run_benchmark(const std::vector<MethodSpec>& methods, const BenchmarkOptions& opts,
                              WorldCache& worlds);

/// Runs jobs 0..n-1 on up to `workers` threads; rethrows the first failure.
void parallel_for(int n, int workers, const std::function<void(int)>& job);

inline const char* kResultsHeader = "method,world_seed,start_seed,miou,acc,n_ann,n_coll,n_steps";
void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(std::istream& in);

/// method, world_seed, start_seed, step, n_ann, n_coll, miou, acc, perception, checkpoint
void write_curves_csv(std::ostream& out, const std::vector<EpisodeRecord>& records,
                      const std::vector<ResultRow>& rows);

struct CurveRow {
  std::string method;
  std::uint64_t world_seed = 0;
  std::uint64_t start_seed = 0;
  CurvePoint point;
};
std::vector<CurveRow> read_curves_csv(std::istream& in);

struct MethodSummary {
  std::string method;
  int episodes = 0;
  double miou = 0.0;
  double acc = 0.0;
  double n_ann = 0.0;
  double n_coll = 0.0;
  double n_steps = 0.0;
};

/// Means per method, in order of first appearance.
std::vector<MethodSummary> summarize(const std::vector<ResultRow>& rows);
std::string format_summary(const std::vector<MethodSummary>& summary);

struct PairedTest {
  int n = 0;
  double mean_diff = 0.0;  // mean of (b - a)
  double t = 0.0;
  double p_two_sided = 1.0;
  double p_greater = 1.0;  // one-sided p for mean(b - a) > 0
};

/// Paired t-test on matched samples.
PairedTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// mIoU of `method` per (world, start), in the order of rows for the first method listed.
std::vector<double> paired_metric(const std::vector<ResultRow>& rows, const std::string& method,
                                  const std::vector<std::pair<std::uint64_t, std::uint64_t>>& keys,
                                  double ResultRow::*field = &ResultRow::miou);
std::vector<std::pair<std::uint64_t, std::uint64_t>> episode_keys(const std::vector<ResultRow>& rows,
                                                                  const std::string& method);

/// Gain of a curve between two steps, linearly interpolating checkpoints.
double curve_value_at(const std::vector<CurvePoint>& curve, int step);

// ---------------------------------------------------------------------------
// Pre-training experiment

struct PretrainOptions {
  int views = 2000;
  std::uint64_t seed = 11;
  /// Offline training runs the episode's segmentation settings (base.train),
  /// with this iteration cap in place of max_iters when positive.
  int iterations = 0;
  int max_test_worlds = 0;
  int workers = 1;
  EpisodeConfig base;
};

/// Random annotated views from the training worlds.
TrainSet offline_views(WorldCache& worlds, int n, std::uint64_t seed, const RenderParams& render);

/// Trains a segmentation model offline on an annotated view pool.
SegModel pretrain_model(const TrainSet& pool, const SegShape& shape, const PretrainOptions& opts);

struct PretrainRow {
  std::string condition;
  double miou = 0.0;
  double acc = 0.0;
  double n_ann = 0.0;
};

struct PretrainResult {
  std::vector<PretrainRow> table;  // frozen, scratch, pretrain+active
  std::vector<ResultRow> rows;
  double frozen_train_miou = 0.0;  // frozen model on its own training views
};

/// Frozen pre-trained model, per-episode learning from scratch, and pre-trained
/// initialization refined per episode, all on the same test episodes.
PretrainResult pretrain_experiment(const PretrainOptions& opts, WorldCache& worlds);

}  // namespace embal
