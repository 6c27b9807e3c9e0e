#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <memory>
#include <random>
#include <vector>

#include "embal/agents.hpp"
#include "embal/metrics.hpp"

namespace embal {

struct RewardConfig {
  double eps_ann = 0.01;
  double a = 0.003;
  double b = 0.003;
  double kde_bandwidth = 0.3;
  double discount = 0.99;
  int top_k = 10;
};

void validate(const RewardConfig& cfg);

/// a - b * mean_i exp(-|x - x_i|^2 / (2 h^2)) over previously visited
/// positions; `a` when nothing has been visited yet.
double exploration_reward(const std::vector<Vec2>& trace, Vec2 x, const RewardConfig& cfg);

double annotate_reward(double miou_after, double miou_before, const RewardConfig& cfg);
double collect_reward(double miou_after, double miou_before);

/// Top-k-class mIoU of the final model minus that of the initial model.
double final_reward(const SegModel& final_model, const SegModel& initial_model,
                    const std::vector<View>& refset, const RewardConfig& cfg);

/// Layout of the policy input: an instantaneous block followed by its
/// exponential moving average.
struct FeatureSpec {
  int classes = 13;
  bool prop_features = true;

  int instant_size() const { return 24 + 2 * classes; }
  int size() const { return 2 * instant_size(); }
  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

inline constexpr double kMemoryDecay = 0.9;

/// Instantaneous features of one observation. Blocks in order: normalized mean
/// prediction entropy, prediction/mask disagreement on known pixels, unknown
/// fraction, 8-bin depth histogram over [0, 4] m, predicted-class histogram,
/// mask-class histogram with a trailing unknown bin, steps since Annotate / 64,
/// last-action one-hot, collision flag, and mean clearance of the left,
/// centre and right thirds of the strip.
Eigen::VectorXd instant_features(const AgentObservation& obs, const FeatureSpec& spec);

/// Updates memory <- 0.9 memory + 0.1 instant and returns [instant, memory].
Eigen::VectorXd featurize(const AgentObservation& obs, const FeatureSpec& spec,
                          Eigen::VectorXd& memory);

/// Two tanh hidden layers shared by an action-logit head and a value head.
/// Parameters live in one flat vector so optimizers treat them uniformly.
class PolicyModel {
 public:
  PolicyModel() = default;
  PolicyModel(FeatureSpec spec, int actions, int hidden, std::uint64_t seed);

  static PolicyModel zeros(FeatureSpec spec, int actions, int hidden = 64);

  const FeatureSpec& spec() const { return spec_; }
  int inputs() const { return spec_.size(); }
  int actions() const { return actions_; }
  int hidden() const { return hidden_; }

  /// Disallowed actions get probability zero.
  const std::vector<std::uint8_t>& allowed() const { return allowed_; }
  void set_allowed(std::vector<std::uint8_t> allowed);

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  struct Forward {
    Eigen::VectorXd h1, h2, logits, probs;
    double value = 0.0;
  };

  Forward forward(const Eigen::VectorXd& x) const;

  /// grad += d(dlogits . logits + dvalue * value) / d params.
  void backward(const Eigen::VectorXd& x, const Forward& f, const Eigen::VectorXd& dlogits,
                double dvalue, Eigen::VectorXd& grad) const;

  void save(std::ostream& out) const;
  static PolicyModel load(std::istream& in);

 private:
  struct Offsets {
    Eigen::Index w1, b1, w2, b2, wp, bp, wv, bv, total;
  };
  Offsets offsets() const;

  FeatureSpec spec_;
  int actions_ = 0;
  int hidden_ = 0;
  std::vector<std::uint8_t> allowed_;
  Eigen::VectorXd params_;
};

struct PolicyOutput {
  Eigen::VectorXd probs;
  double value = 0.0;
};

/// Throws on non-finite features.
PolicyOutput policy_forward(const PolicyModel& model, const Eigen::VectorXd& features);

/// Gradient of log pi(action | features) with respect to all parameters.
Eigen::VectorXd log_prob_gradient(const PolicyModel& model, const Eigen::VectorXd& features,
                                  int action);

/// Gradient of the value estimate with respect to all parameters.
Eigen::VectorXd value_gradient(const PolicyModel& model, const Eigen::VectorXd& features);

/// One decision of a learnt policy; rewards are attached by the episode runner.
struct Transition {
  int step = 0;
  Eigen::VectorXd features;
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
};

using Trajectory = std::vector<Transition>;

/// Full seven-action learnt agent. With `threshold_overlay` the perception
/// actions come from the unknown-fraction thresholds and the policy only moves.
class RlAgent final : public Agent {
 public:
  RlAgent(std::shared_ptr<const PolicyModel> policy, std::uint64_t seed, bool greedy = false,
          Trajectory* sink = nullptr, std::optional<ThresholdPerceptionConfig> threshold_overlay = {});
  Action act(const AgentObservation& obs) override;

 private:
  std::shared_ptr<const PolicyModel> policy_;
  std::mt19937_64 rng_;
  bool greedy_;
  Trajectory* sink_;
  std::optional<ThresholdGate> overlay_;
  Eigen::VectorXd memory_;
};

/// Learnt perception over a fixed exploration policy: its three actions are
/// follow-the-base-trajectory, Annotate and Collect.
class LearntPerceptionAgent final : public Agent {
 public:
  static constexpr int kFollow = 0;
  static constexpr int kAnnotate = 1;
  static constexpr int kCollect = 2;

  LearntPerceptionAgent(std::unique_ptr<MovementPolicy> movement,
                        std::shared_ptr<const PolicyModel> policy, std::uint64_t seed,
                        bool greedy = false, Trajectory* sink = nullptr);
  Action act(const AgentObservation& obs) override;

 private:
  std::unique_ptr<MovementPolicy> movement_;
  std::shared_ptr<const PolicyModel> policy_;
  std::mt19937_64 rng_;
  bool greedy_;
  Trajectory* sink_;
  Eigen::VectorXd memory_;
};

// ---------------------------------------------------------------------------
// Proximal policy optimization

struct PpoConfig {
  double learning_rate = 1e-4;
  double clip = 0.2;
  int batch_steps = 512;
  int minibatch = 128;
  int epochs = 4;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
};

double clipped_surrogate(double ratio, double advantage, double clip);

struct PpoSample {
  const Eigen::VectorXd* features = nullptr;
  int action = 0;
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

struct PpoLoss {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

/// Mean over samples of -min(r A, clip(r) A) + value_coef * 0.5 (V - G)^2
/// - entropy_coef * H. Accumulates the gradient into `grad` when non-null.
PpoLoss ppo_objective(const PolicyModel& model, const std::vector<PpoSample>& samples,
                      const PpoConfig& cfg, Eigen::VectorXd* grad);

/// Discounted returns per trajectory (reset at trajectory boundaries).
std::vector<double> discounted_returns(const Trajectory& traj, double gamma);

class Adam {
 public:
  explicit Adam(Eigen::Index size, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  Eigen::VectorXd m_, v_;
};

/// Runs `epochs` passes of shuffled minibatch updates over the batch.
/// Advantages are normalized across the batch first. Throws on non-finite loss.
PpoLoss ppo_update(PolicyModel& model, Adam& adam, const std::vector<Trajectory>& batch,
                   const PpoConfig& cfg, double gamma, std::mt19937_64& rng);

}  // namespace embal
