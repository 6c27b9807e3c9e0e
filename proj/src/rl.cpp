#include "embal/rl.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

namespace embal {

void validate(const RewardConfig& c) {
  if (!(c.eps_ann > 0 && c.a > 0 && c.b > 0 && c.kde_bandwidth > 0 && c.discount > 0 && c.top_k > 0))
    throw Error("RewardConfig: all values must be positive");
}

double exploration_reward(const std::vector<Vec2>& trace, Vec2 x, const RewardConfig& cfg) {
  if (trace.empty()) return cfg.a;
  const double inv = 1.0 / (2.0 * cfg.kde_bandwidth * cfg.kde_bandwidth);
  double density = 0.0;
  for (const auto& xi : trace) density += std::exp(-squared_norm(x - xi) * inv);
  density /= static_cast<double>(trace.size());
  return cfg.a - cfg.b * density;
}

double annotate_reward(double miou_after, double miou_before, const RewardConfig& cfg) {
  return (miou_after - miou_before) - cfg.eps_ann;
}

double collect_reward(double miou_after, double miou_before) { return miou_after - miou_before; }

double final_reward(const SegModel& final_model, const SegModel& initial_model,
                    const std::vector<View>& refset, const RewardConfig& cfg) {
  const auto classes = top_k_classes(refset, cfg.top_k);
  return miou(final_model, refset, classes) - miou(initial_model, refset, classes);
}

Eigen::VectorXd instant_features(const AgentObservation& obs, const FeatureSpec& spec) {
  const int k = spec.classes;
  const int w = obs.view.width();
  const Eigen::MatrixXd& p = obs.predicted;
  if (p.rows() != w || p.cols() != k || obs.mask.width() != w)
    throw Error("instant_features: inconsistent observation widths");
  Eigen::VectorXd f = Eigen::VectorXd::Zero(spec.instant_size());
  int o = 0;

  double entropy = 0.0;
  std::vector<int> argmax(w);
  for (int i = 0; i < w; ++i) {
    Eigen::Index a = 0;
    p.row(i).maxCoeff(&a);
    argmax[i] = static_cast<int>(a);
    for (int c = 0; c < k; ++c)
      if (p(i, c) > 0.0) entropy -= p(i, c) * std::log(p(i, c));
  }
  f[o++] = k > 1 ? entropy / (w * std::log(static_cast<double>(k))) : 0.0;

  const auto& labels = obs.mask.labels();
  int known = 0, disagree = 0;
  for (int i = 0; i < w; ++i) {
    if (labels[i] == kUnknown) continue;
    ++known;
    disagree += argmax[i] != labels[i];
  }
  f[o++] = (spec.prop_features && known > 0) ? static_cast<double>(disagree) / known : 0.0;
  f[o++] = spec.prop_features ? obs.mask.unknown_fraction() : 0.0;

  for (int i = 0; i < w; ++i) {
    const int bin = std::clamp(static_cast<int>(obs.view.depth[i] / 0.5), 0, 7);
    f[o + bin] += 1.0 / w;
  }
  o += 8;
  for (int i = 0; i < w; ++i) f[o + argmax[i]] += 1.0 / w;
  o += k;
  if (spec.prop_features) {
    for (int i = 0; i < w; ++i) f[o + (labels[i] == kUnknown ? k : labels[i])] += 1.0 / w;
  }
  o += k + 1;
  f[o++] = std::min(1.0, obs.steps_since_annotate / 64.0);
  if (obs.last_action) f[o + static_cast<int>(*obs.last_action)] = 1.0;
  o += kActionCount;
  f[o++] = obs.collision ? 1.0 : 0.0;
  for (int part = 0; part < 3; ++part) {
    const int lo = part * w / 3, hi = (part + 1) * w / 3;
    double s = 0.0;
    for (int i = lo; i < hi; ++i) s += std::min(obs.view.depth[i], 4.0) / 4.0;
    f[o++] = hi > lo ? s / (hi - lo) : 0.0;
  }
  return f;
}

Eigen::VectorXd featurize(const AgentObservation& obs, const FeatureSpec& spec,
                          Eigen::VectorXd& memory) {
  const Eigen::VectorXd inst = instant_features(obs, spec);
  if (memory.size() != inst.size()) memory = Eigen::VectorXd::Zero(inst.size());
  memory = kMemoryDecay * memory + (1.0 - kMemoryDecay) * inst;
  Eigen::VectorXd out(2 * inst.size());
  out << inst, memory;
  return out;
}

PolicyModel::Offsets PolicyModel::offsets() const {
  Offsets o{};
  const Eigen::Index in = inputs(), h = hidden_, a = actions_;
  o.w1 = 0;
  o.b1 = o.w1 + h * in;
  o.w2 = o.b1 + h;
  o.b2 = o.w2 + h * h;
  o.wp = o.b2 + h;
  o.bp = o.wp + a * h;
  o.wv = o.bp + a;
  o.bv = o.wv + h;
  o.total = o.bv + 1;
  return o;
}

PolicyModel::PolicyModel(FeatureSpec spec, int actions, int hidden, std::uint64_t seed)
    : spec_(spec), actions_(actions), hidden_(hidden), allowed_(actions, 1) {
  if (actions < 2 || hidden < 1 || spec.classes < 1) throw Error("PolicyModel: invalid shape");
  const Offsets o = offsets();
  params_ = Eigen::VectorXd::Zero(o.total);
  std::mt19937_64 rng(seed);
  auto fill = [&](Eigen::Index from, Eigen::Index count, double std) {
    std::normal_distribution<double> g(0.0, std);
    for (Eigen::Index i = 0; i < count; ++i) params_[from + i] = g(rng);
  };
  fill(o.w1, o.b1 - o.w1, 1.0 / std::sqrt(static_cast<double>(inputs())));
  fill(o.w2, o.b2 - o.w2, 1.0 / std::sqrt(static_cast<double>(hidden)));
  fill(o.wp, o.bp - o.wp, 0.01 / std::sqrt(static_cast<double>(hidden)));
  fill(o.wv, o.bv - o.wv, 1.0 / std::sqrt(static_cast<double>(hidden)));
}

PolicyModel PolicyModel::zeros(FeatureSpec spec, int actions, int hidden) {
  PolicyModel m(spec, actions, hidden, 0);
  m.params_.setZero();
  return m;
}

void PolicyModel::set_allowed(std::vector<std::uint8_t> allowed) {
  if (static_cast<int>(allowed.size()) != actions_ ||
      std::none_of(allowed.begin(), allowed.end(), [](auto v) { return v != 0; }))
    throw Error("PolicyModel::set_allowed: need one flag per action, at least one set");
  allowed_ = std::move(allowed);
}

PolicyModel::Forward PolicyModel::forward(const Eigen::VectorXd& x) const {
  const Offsets o = offsets();
  const Eigen::Index in = inputs(), h = hidden_, a = actions_;
  const double* p = params_.data();
  Eigen::Map<const Eigen::MatrixXd> w1(p + o.w1, h, in);
  Eigen::Map<const Eigen::VectorXd> b1(p + o.b1, h);
  Eigen::Map<const Eigen::MatrixXd> w2(p + o.w2, h, h);
  Eigen::Map<const Eigen::VectorXd> b2(p + o.b2, h);
  Eigen::Map<const Eigen::MatrixXd> wp(p + o.wp, a, h);
  Eigen::Map<const Eigen::VectorXd> bp(p + o.bp, a);
  Eigen::Map<const Eigen::VectorXd> wv(p + o.wv, h);

  Forward f;
  f.h1 = (w1 * x + b1).array().tanh();
  f.h2 = (w2 * f.h1 + b2).array().tanh();
  f.logits = wp * f.h2 + bp;
  f.value = wv.dot(f.h2) + p[o.bv];
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < actions_; ++i)
    if (allowed_[i]) mx = std::max(mx, f.logits[i]);
  f.probs = Eigen::VectorXd::Zero(a);
  double z = 0.0;
  for (int i = 0; i < actions_; ++i) {
    if (!allowed_[i]) continue;
    f.probs[i] = std::exp(f.logits[i] - mx);
    z += f.probs[i];
  }
  f.probs /= z;
  return f;
}

void PolicyModel::backward(const Eigen::VectorXd& x, const Forward& f, const Eigen::VectorXd& dlogits,
                           double dvalue, Eigen::VectorXd& grad) const {
  const Offsets o = offsets();
  const Eigen::Index in = inputs(), h = hidden_, a = actions_;
  if (grad.size() != o.total) grad = Eigen::VectorXd::Zero(o.total);
  const double* p = params_.data();
  double* g = grad.data();
  Eigen::Map<const Eigen::MatrixXd> w2(p + o.w2, h, h);
  Eigen::Map<const Eigen::MatrixXd> wp(p + o.wp, a, h);
  Eigen::Map<const Eigen::VectorXd> wv(p + o.wv, h);

  Eigen::Map<Eigen::MatrixXd>(g + o.wp, a, h).noalias() += dlogits * f.h2.transpose();
  Eigen::Map<Eigen::VectorXd>(g + o.bp, a) += dlogits;
  Eigen::Map<Eigen::VectorXd>(g + o.wv, h) += dvalue * f.h2;
  g[o.bv] += dvalue;

  const Eigen::VectorXd dh2 = wp.transpose() * dlogits + dvalue * wv;
  const Eigen::VectorXd da2 = dh2.array() * (1.0 - f.h2.array().square());
  Eigen::Map<Eigen::MatrixXd>(g + o.w2, h, h).noalias() += da2 * f.h1.transpose();
  Eigen::Map<Eigen::VectorXd>(g + o.b2, h) += da2;
  const Eigen::VectorXd dh1 = w2.transpose() * da2;
  const Eigen::VectorXd da1 = dh1.array() * (1.0 - f.h1.array().square());
  Eigen::Map<Eigen::MatrixXd>(g + o.w1, h, in).noalias() += da1 * x.transpose();
  Eigen::Map<Eigen::VectorXd>(g + o.b1, h) += da1;
}

// Checkpoint format, version 1 (text):
//   embal-policy 1
//   <classes> <prop_features> <actions> <hidden>
//   <allowed flags, one per action>
//   <parameter count> then the flat parameter vector
void PolicyModel::save(std::ostream& out) const {
  const auto prec = out.precision(17);
  out << "embal-policy 1\n"
      << spec_.classes << ' ' << int(spec_.prop_features) << ' ' << actions_ << ' ' << hidden_ << '\n';
  for (int i = 0; i < actions_; ++i) out << (i ? " " : "") << int(allowed_[i]);
  out << '\n' << params_.size() << '\n';
  for (Eigen::Index i = 0; i < params_.size(); ++i) out << params_[i] << '\n';
  out.precision(prec);
}

PolicyModel PolicyModel::load(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "embal-policy" || version != 1) throw Error("PolicyModel::load: not a version-1 policy");
  FeatureSpec spec;
  int prop = 1, actions = 0, hidden = 0;
  in >> spec.classes >> prop >> actions >> hidden;
  if (!in || spec.classes < 1 || actions < 2 || hidden < 1 || hidden > 4096 || actions > 64)
    throw Error("PolicyModel::load: malformed header");
  spec.prop_features = prop != 0;
  PolicyModel m(spec, actions, hidden, 0);
  std::vector<std::uint8_t> allowed(actions);
  for (auto& a : allowed) {
    int v = 0;
    in >> v;
    a = static_cast<std::uint8_t>(v != 0);
  }
  m.set_allowed(std::move(allowed));
  Eigen::Index n = 0;
  in >> n;
  if (!in || n != m.params_.size()) throw Error("PolicyModel::load: parameter count mismatch");
  for (Eigen::Index i = 0; i < n; ++i) in >> m.params_[i];
  if (!in) throw Error("PolicyModel::load: truncated parameters");
  return m;
}

PolicyOutput policy_forward(const PolicyModel& model, const Eigen::VectorXd& features) {
  if (features.size() != model.inputs()) throw Error("policy_forward: feature size mismatch");
  if (!features.allFinite()) throw Error("policy_forward: non-finite features");
  auto f = model.forward(features);
  return {std::move(f.probs), f.value};
}

Eigen::VectorXd log_prob_gradient(const PolicyModel& model, const Eigen::VectorXd& features,
                                  int action) {
  const auto f = model.forward(features);
  Eigen::VectorXd dlogits = -f.probs;
  dlogits[action] += 1.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.params().size());
  model.backward(features, f, dlogits, 0.0, grad);
  return grad;
}

Eigen::VectorXd value_gradient(const PolicyModel& model, const Eigen::VectorXd& features) {
  const auto f = model.forward(features);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.params().size());
  model.backward(features, f, Eigen::VectorXd::Zero(model.actions()), 1.0, grad);
  return grad;
}

namespace {

int sample_action(const Eigen::VectorXd& probs, bool greedy, std::mt19937_64& rng) {
  if (greedy) {
    Eigen::Index a = 0;
    probs.maxCoeff(&a);
    return static_cast<int>(a);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  int last = 0;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

}  // namespace

RlAgent::RlAgent(std::shared_ptr<const PolicyModel> policy, std::uint64_t seed, bool greedy,
                 Trajectory* sink, std::optional<ThresholdPerceptionConfig> threshold_overlay)
    : policy_(std::move(policy)), rng_(seed), greedy_(greedy), sink_(sink), overlay_() {
  if (threshold_overlay) overlay_.emplace(*threshold_overlay);
  if (!policy_ || policy_->actions() != kActionCount)
    throw Error("RlAgent: policy must have seven actions");
}

Action RlAgent::act(const AgentObservation& obs) {
  Eigen::VectorXd x = featurize(obs, policy_->spec(), memory_);
  if (overlay_) {
    if (auto p = overlay_->decide(obs.mask)) return *p;
  }
  const auto f = policy_->forward(x);
  if (!x.allFinite()) throw Error("RlAgent: non-finite features");
  const int a = sample_action(f.probs, greedy_, rng_);
  if (sink_) sink_->push_back(Transition{obs.step, std::move(x), a, std::log(f.probs[a]), f.value, 0.0});
  return static_cast<Action>(a);
}

LearntPerceptionAgent::LearntPerceptionAgent(std::unique_ptr<MovementPolicy> movement,
                                             std::shared_ptr<const PolicyModel> policy,
                                             std::uint64_t seed, bool greedy, Trajectory* sink)
    : movement_(std::move(movement)), policy_(std::move(policy)), rng_(seed), greedy_(greedy), sink_(sink) {
  if (!policy_ || policy_->actions() != 3)
    throw Error("LearntPerceptionAgent: policy must have three actions");
}

Action LearntPerceptionAgent::act(const AgentObservation& obs) {
  Eigen::VectorXd x = featurize(obs, policy_->spec(), memory_);
  const auto f = policy_->forward(x);
  const int a = sample_action(f.probs, greedy_, rng_);
  if (sink_) sink_->push_back(Transition{obs.step, std::move(x), a, std::log(f.probs[a]), f.value, 0.0});
  switch (a) {
    case kAnnotate: return Action::Annotate;
    case kCollect: return Action::Collect;
    default: return movement_->next(obs);
  }
}

double clipped_surrogate(double ratio, double advantage, double clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return std::min(ratio * advantage, clipped * advantage);
}

PpoLoss ppo_objective(const PolicyModel& model, const std::vector<PpoSample>& samples,
                      const PpoConfig& cfg, Eigen::VectorXd* grad) {
  PpoLoss loss;
  if (samples.empty()) return loss;
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  if (grad && grad->size() != model.params().size()) *grad = Eigen::VectorXd::Zero(model.params().size());
  for (const auto& s : samples) {
    const auto f = model.forward(*s.features);
    const double logp = std::log(f.probs[s.action]);
    const double ratio = std::exp(logp - s.old_log_prob);
    const double surr = clipped_surrogate(ratio, s.advantage, cfg.clip);
    const bool unclipped = ratio * s.advantage <= surr;
    if (!unclipped) loss.clip_fraction += inv_n;
    double entropy = 0.0;
    for (int i = 0; i < f.probs.size(); ++i)
      if (f.probs[i] > 0.0) entropy -= f.probs[i] * std::log(f.probs[i]);
    const double verr = f.value - s.ret;
    loss.policy -= surr * inv_n;
    loss.value += 0.5 * verr * verr * inv_n;
    loss.entropy += entropy * inv_n;

    if (grad) {
      Eigen::VectorXd dlogits = Eigen::VectorXd::Zero(f.probs.size());
      if (unclipped) {
        // d(-ratio * A)/dlogits = -ratio * A * (onehot - p)
        const double coef = -ratio * s.advantage;
        dlogits = -coef * f.probs;
        dlogits[s.action] += coef;
      }
      // d(-c_e H)/dlogits_j = c_e * p_j (log p_j + H)
      for (int j = 0; j < f.probs.size(); ++j)
        if (f.probs[j] > 0.0)
          dlogits[j] += cfg.entropy_coef * f.probs[j] * (std::log(f.probs[j]) + entropy);
      model.backward(*s.features, f, dlogits * inv_n, cfg.value_coef * verr * inv_n, *grad);
    }
  }
  loss.total = loss.policy + cfg.value_coef * loss.value - cfg.entropy_coef * loss.entropy;
  return loss;
}

std::vector<double> discounted_returns(const Trajectory& traj, double gamma) {
  std::vector<double> g(traj.size());
  double acc = 0.0;
  for (std::size_t i = traj.size(); i-- > 0;) {
    acc = traj[i].reward + gamma * acc;
    g[i] = acc;
  }
  return g;
}

Adam::Adam(Eigen::Index size, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

PpoLoss ppo_update(PolicyModel& model, Adam& adam, const std::vector<Trajectory>& batch,
                   const PpoConfig& cfg, double gamma, std::mt19937_64& rng) {
  std::vector<PpoSample> samples;
  for (const auto& traj : batch) {
    const auto returns = discounted_returns(traj, gamma);
    for (std::size_t i = 0; i < traj.size(); ++i)
      samples.push_back(PpoSample{&traj[i].features, traj[i].action, traj[i].log_prob,
                                  returns[i] - traj[i].value, returns[i]});
  }
  if (samples.empty()) return {};
  double mean = 0.0;
  for (const auto& s : samples) mean += s.advantage;
  mean /= samples.size();
  double var = 0.0;
  for (const auto& s : samples) var += (s.advantage - mean) * (s.advantage - mean);
  const double sd = std::sqrt(var / samples.size()) + 1e-8;
  for (auto& s : samples) s.advantage = (s.advantage - mean) / sd;

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  PpoLoss last;
  Eigen::VectorXd grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t from = 0; from < order.size(); from += cfg.minibatch) {
      std::vector<PpoSample> mb;
      for (std::size_t i = from; i < std::min(order.size(), from + cfg.minibatch); ++i)
        mb.push_back(samples[order[i]]);
      grad = Eigen::VectorXd::Zero(model.params().size());
      last = ppo_objective(model, mb, cfg, &grad);
      if (!std::isfinite(last.total) || !grad.allFinite())
        throw Error("ppo_update: non-finite loss (policy " + std::to_string(last.policy) +
                    ", value " + std::to_string(last.value) + ")");
      const double gn = grad.norm();
      if (cfg.max_grad_norm > 0.0 && gn > cfg.max_grad_norm) grad *= cfg.max_grad_norm / gn;
      adam.step(model.params(), grad);
    }
  }
  return last;
}

}  // namespace embal
