#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include "embal/render.hpp"

namespace embal {

inline constexpr int kUnknown = -1;

struct LabeledView {
  View view;
  std::vector<int> labels;  // class id or kUnknown per pixel
};

/// Ordered, append-only within an episode.
using TrainSet = std::vector<LabeledView>;

struct TrainConfig {
  int batch_size = 8;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  int max_iters = 1000;
  double early_stop_acc = 0.95;
  /// Crops keep between this fraction and all of the strip.
  double min_crop_fraction = 0.5;
};

void validate(const TrainConfig& config);

struct SegShape {
  int width = 64;
  int appearance_dim = 8;
  int context = 2;
  int classes = 13;
  friend bool operator==(const SegShape&, const SegShape&) = default;
};

/// Per-pixel linear softmax over a (2c+1)-pixel window of appearance features,
/// normalized depth and a bias. The momentum buffer lives with the weights so
/// successive refinements within an episode continue the same optimizer state.
struct SegModel {
  SegShape shape;
  std::uint64_t init_seed = 0;
  Eigen::MatrixXd weights;   // classes x feature_count
  Eigen::MatrixXd velocity;  // same shape as weights

  int feature_count() const { return (2 * shape.context + 1) * shape.appearance_dim + 2; }
};

inline constexpr double kDepthScale = 5.0;

SegModel init_model(std::uint64_t seed, const SegShape& shape = {});

/// Window features for every pixel (edges replicate), then depth / kDepthScale
/// and a constant 1.
Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& features, const std::vector<double>& depth,
                              int context);

/// Row-wise softmax of the logits, width x classes.
Eigen::MatrixXd predict(const SegModel& model, const View& view);
std::vector<int> predict_labels(const SegModel& model, const View& view);
std::vector<int> argmax_rows(const Eigen::MatrixXd& probs);

struct LossAndGradient {
  double loss = 0.0;
  Eigen::MatrixXd gradient;
  int known_pixels = 0;
  int correct_pixels = 0;
};

/// Mean cross-entropy over known pixels of a batch of design matrices plus
/// 0.5 * weight_decay * ||W||^2, with its exact gradient.
LossAndGradient cross_entropy(const Eigen::MatrixXd& weights,
                              const std::vector<Eigen::MatrixXd>& designs,
                              const std::vector<std::vector<int>>& labels, double weight_decay);

/// Random contiguous crop of at least min_fraction of the strip, resized back
/// to full width by nearest neighbour. Applied identically to features, depth
/// and labels.
LabeledView augment_crop(const LabeledView& sample, double min_fraction, std::mt19937_64& rng);

struct RefineStats {
  int iterations = 0;
  double last_batch_accuracy = 0.0;
  bool early_stopped = false;
};

/// SGD with momentum on the training set. Each mini-batch holds the most
/// recently added view plus batch_size - 1 views drawn with replacement.
/// Gradients use cropped copies; the accuracy stopping rule is checked on the
/// sampled views uncropped, before each update.
RefineStats refine(SegModel& model, const TrainSet& trainset, const TrainConfig& config,
                   std::mt19937_64& rng);

// Checkpoint format, version 1 (text):
//   embal-segmodel 1
//   <width> <appearance_dim> <context> <classes> <init_seed>
//   classes*feature_count weights, row-major
void save_model(std::ostream& out, const SegModel& model);
SegModel load_model(std::istream& in);

}  // namespace embal
