#include <random>
#include <sstream>

#include "doctest.h"
#include "embal/rl.hpp"
#include "fixtures.hpp"

using namespace embal;

namespace {

struct ObsFixture {
  View view;
  Eigen::MatrixXd predicted;
  PropagatedMask mask;

  AgentObservation obs(bool collision = false, std::optional<Action> last = std::nullopt) const {
    return AgentObservation{view, predicted, mask, collision, 3, view.pose, last, 5};
  }
};

ObsFixture fixture(std::uint64_t seed) {
  const GridWorld w = generate_world(seed);
  ObsFixture f;
  f.view = render_view(w, sample_start_pose(w, seed));
  f.predicted = predict(init_model(seed), f.view);
  std::vector<int> labels = f.view.gt_class;
  for (int i = 0; i < 64; i += 4) labels[i] = kUnknown;
  f.mask = PropagatedMask(labels);
  return f;
}

Eigen::VectorXd random_features(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> d(0.0, 1.0);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = d(rng);
  return x;
}

double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(1e-12, a.norm() + b.norm());
}

}  // namespace

TEST_CASE("feature layout and histograms") {
  const FeatureSpec spec;
  const ObsFixture f = fixture(1);
  const Eigen::VectorXd x = instant_features(f.obs(), spec);
  REQUIRE(x.size() == spec.instant_size());
  CHECK(x.allFinite());
  const int k = spec.classes;
  CHECK(x.segment(3, 8).sum() == doctest::Approx(1.0));                  // depth
  CHECK(x.segment(11, k).sum() == doctest::Approx(1.0));                 // predicted
  CHECK(x.segment(11 + k, k + 1).sum() == doctest::Approx(1.0));         // mask
  CHECK(x[11 + 2 * k + k - k] == doctest::Approx(0.25));                 // unknown bin
  CHECK(x[2] == doctest::Approx(0.25));
  CHECK(x[12 + 2 * k] == doctest::Approx(5.0 / 64));                     // steps since annotate
}

TEST_CASE("uniform predictions have normalized entropy one") {
  ObsFixture f = fixture(2);
  f.predicted = Eigen::MatrixXd::Constant(64, 13, 1.0 / 13);
  const Eigen::VectorXd x = instant_features(f.obs(), FeatureSpec{});
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("disagreement is zero when every pixel is unknown") {
  ObsFixture f = fixture(3);
  f.mask = PropagatedMask(std::vector<int>(64, kUnknown));
  const Eigen::VectorXd x = instant_features(f.obs(), FeatureSpec{});
  CHECK(x[1] == 0.0);
  CHECK(x[2] == 1.0);
}

TEST_CASE("last action and collision flags") {
  const ObsFixture f = fixture(4);
  const FeatureSpec spec;
  const int o = 13 + 2 * spec.classes;
  const Eigen::VectorXd x = instant_features(f.obs(true, Action::Collect), spec);
  CHECK(x.segment(o, kActionCount).sum() == 1.0);
  CHECK(x[o + static_cast<int>(Action::Collect)] == 1.0);
  CHECK(x[o + kActionCount] == 1.0);
  const Eigen::VectorXd y = instant_features(f.obs(), spec);
  CHECK(y.segment(o, kActionCount + 1).sum() == 0.0);
}

TEST_CASE("memory converges geometrically to a repeated observation") {
  const ObsFixture f = fixture(5);
  const FeatureSpec spec;
  const Eigen::VectorXd inst = instant_features(f.obs(), spec);
  Eigen::VectorXd memory;
  for (int n = 1; n <= 40; ++n) {
    const Eigen::VectorXd out = featurize(f.obs(), spec, memory);
    REQUIRE(out.size() == spec.size());
    CHECK(out.head(inst.size()) == inst);
    // Closed form from a zero start: (1 - 0.9^n) * inst.
    CHECK((memory - (1.0 - std::pow(0.9, n)) * inst).norm() < 1e-12);
  }
  // The gap halves every ln 2 / ln(1 / 0.9), about 6.58 steps.
  CHECK(std::log(2.0) / std::log(1.0 / kMemoryDecay) == doctest::Approx(6.579).epsilon(1e-3));
}

TEST_CASE("prop features can be switched off") {
  const ObsFixture f = fixture(6);
  FeatureSpec spec;
  spec.prop_features = false;
  const Eigen::VectorXd x = instant_features(f.obs(), spec);
  CHECK(x[1] == 0.0);
  CHECK(x[2] == 0.0);
  CHECK(x.segment(11 + spec.classes, spec.classes + 1).sum() == 0.0);
}

TEST_CASE("policy outputs are distributions") {
  std::mt19937_64 rng(1);
  const PolicyModel m(FeatureSpec{}, kActionCount, 64, 3);
  for (int n = 0; n < 20; ++n) {
    const PolicyOutput o = policy_forward(m, random_features(rng, m.inputs()));
    CHECK(o.probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((o.probs.array() > 0.0).all());
  }
  const PolicyModel z = PolicyModel::zeros(FeatureSpec{}, kActionCount);
  const PolicyOutput o = policy_forward(z, random_features(rng, z.inputs()));
  for (int a = 0; a < kActionCount; ++a) CHECK(o.probs[a] == doctest::Approx(1.0 / 7).epsilon(1e-15));
  CHECK(o.value == 0.0);

  Eigen::VectorXd bad = Eigen::VectorXd::Zero(m.inputs());
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(policy_forward(m, bad), Error);
  CHECK_THROWS_AS(policy_forward(m, Eigen::VectorXd::Zero(5)), Error);
}

TEST_CASE("masked actions get zero probability") {
  PolicyModel m(FeatureSpec{}, kActionCount, 16, 1);
  std::vector<std::uint8_t> allowed(kActionCount, 1);
  allowed[static_cast<int>(Action::Collect)] = 0;
  m.set_allowed(allowed);
  std::mt19937_64 rng(2);
  const PolicyOutput o = policy_forward(m, random_features(rng, m.inputs()));
  CHECK(o.probs[static_cast<int>(Action::Collect)] == 0.0);
  CHECK(o.probs.sum() == doctest::Approx(1.0));
}

TEST_CASE("log-probability and value gradients match finite differences") {
  std::mt19937_64 rng(11);
  for (int fixture_id = 0; fixture_id < 10; ++fixture_id) {
    PolicyModel m(FeatureSpec{}, kActionCount, 8, fixture_id);
    m.params() *= 5.0;  // leave the near-linear regime
    const Eigen::VectorXd x = random_features(rng, m.inputs());
    const int a = static_cast<int>(rng() % kActionCount);
    const Eigen::VectorXd g = log_prob_gradient(m, x, a);
    const Eigen::VectorXd gv = value_gradient(m, x);
    Eigen::VectorXd fd(m.params().size()), fdv(m.params().size());
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < m.params().size(); ++i) {
      PolicyModel up = m, dn = m;
      up.params()[i] += h;
      dn.params()[i] -= h;
      const auto pu = policy_forward(up, x), pd = policy_forward(dn, x);
      fd[i] = (std::log(pu.probs[a]) - std::log(pd.probs[a])) / (2 * h);
      fdv[i] = (pu.value - pd.value) / (2 * h);
    }
    CHECK(rel_err(g, fd) < 1e-5);
    CHECK(rel_err(gv, fdv) < 1e-5);
  }
}

TEST_CASE("exploration reward examples") {
  const RewardConfig cfg;
  CHECK(exploration_reward({}, Vec2{1, 1}, cfg) == 0.003);
  CHECK(exploration_reward({Vec2{1, 1}}, Vec2{1, 1}, cfg) == 0.0);
  const double r = exploration_reward({Vec2{1, 1}}, Vec2{1.3, 1}, cfg);
  CHECK(std::abs(r - 0.001180) < 1e-6);
  CHECK(r == doctest::Approx(0.003 * (1.0 - std::exp(-0.5))).epsilon(1e-14));
  // Mean over the trace: two visits, one coincident, one far away.
  const double two = exploration_reward({Vec2{1, 1}, Vec2{9, 9}}, Vec2{1, 1}, cfg);
  CHECK(two == doctest::Approx(0.003 - 0.003 * (1.0 + std::exp(-128.0 / 0.18)) / 2));
}

TEST_CASE("exploration reward is translation invariant") {
  const RewardConfig cfg;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int n = 0; n < 50; ++n) {
    std::vector<Vec2> trace(1 + rng() % 20);
    for (auto& p : trace) p = {u(rng), u(rng)};
    const Vec2 x{u(rng), u(rng)};
    const Vec2 shift{u(rng) * 10 - 25, u(rng) * 10 - 25};
    std::vector<Vec2> moved = trace;
    for (auto& p : moved) p = p + shift;
    CHECK(std::abs(exploration_reward(trace, x, cfg) - exploration_reward(moved, x + shift, cfg)) < 1e-12);
  }
}

TEST_CASE("perception rewards") {
  const RewardConfig cfg;
  CHECK(annotate_reward(0.3, 0.3, cfg) == doctest::Approx(-0.01));
  CHECK(annotate_reward(0.35, 0.30, cfg) == doctest::Approx(0.04));
  CHECK(annotate_reward(0.31, 0.30, cfg) == doctest::Approx(0.0));
  CHECK(collect_reward(0.3, 0.3) == 0.0);
  CHECK(collect_reward(0.32, 0.30) == doctest::Approx(0.02));
  CHECK(collect_reward(0.29, 0.30) == doctest::Approx(-0.01));
}

TEST_CASE("final reward compares top-10 mIoU of two models") {
  const GridWorld w = generate_world(7);
  std::vector<View> refs;
  for (std::uint64_t s = 0; s < 8; ++s) refs.push_back(render_view(w, sample_start_pose(w, s)));
  const SegModel m0 = init_model(1);
  CHECK(final_reward(m0, m0, refs, RewardConfig{}) == 0.0);
  SegModel m1 = m0;
  TrainConfig tc;
  std::mt19937_64 rng(1);
  TrainSet ts;
  for (const View& v : refs) ts.push_back(LabeledView{v, v.gt_class});
  refine(m1, ts, tc, rng);
  const auto top = top_k_classes(refs, 10);
  CHECK(final_reward(m1, m0, refs, RewardConfig{}) ==
        doctest::Approx(miou(m1, refs, top) - miou(m0, refs, top)).epsilon(1e-15));
}

TEST_CASE("clipped surrogate on hand-built cases") {
  // min(r A, clip(r, 0.8, 1.2) A)
  CHECK(clipped_surrogate(1.5, 2.0, 0.2) == doctest::Approx(2.4));
  CHECK(clipped_surrogate(1.5, -2.0, 0.2) == doctest::Approx(-3.0));
  CHECK(clipped_surrogate(0.5, 2.0, 0.2) == doctest::Approx(1.0));
  CHECK(clipped_surrogate(0.5, -2.0, 0.2) == doctest::Approx(-1.6));
  CHECK(clipped_surrogate(1.1, 1.0, 0.2) == doctest::Approx(1.1));
  CHECK(clipped_surrogate(1.0, 0.0, 0.2) == 0.0);
}

TEST_CASE("PPO objective equals the hand formula and its gradient") {
  std::mt19937_64 rng(13);
  PolicyModel m(FeatureSpec{}, kActionCount, 8, 5);
  m.params() *= 3.0;
  std::vector<Eigen::VectorXd> xs;
  for (int i = 0; i < 6; ++i) xs.push_back(random_features(rng, m.inputs()));
  std::vector<PpoSample> samples;
  std::normal_distribution<double> d(0.0, 1.0);
  for (int i = 0; i < 6; ++i) {
    const int a = static_cast<int>(rng() % kActionCount);
    const double lp = std::log(policy_forward(m, xs[i]).probs[a]) + 0.3 * d(rng);
    samples.push_back(PpoSample{&xs[i], a, lp, d(rng), d(rng)});
  }
  PpoConfig cfg;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(m.params().size());
  const PpoLoss loss = ppo_objective(m, samples, cfg, &grad);

  double expect = 0.0;
  for (const auto& s : samples) {
    const PolicyOutput o = policy_forward(m, *s.features);
    const double ratio = std::exp(std::log(o.probs[s.action]) - s.old_log_prob);
    double h = 0.0;
    for (int a = 0; a < kActionCount; ++a) h -= o.probs[a] * std::log(o.probs[a]);
    expect += -clipped_surrogate(ratio, s.advantage, cfg.clip) +
              cfg.value_coef * 0.5 * (o.value - s.ret) * (o.value - s.ret) - cfg.entropy_coef * h;
  }
  expect /= samples.size();
  CHECK(loss.total == doctest::Approx(expect).epsilon(1e-12));

  Eigen::VectorXd fd(m.params().size());
  for (Eigen::Index i = 0; i < fd.size(); ++i) {
    PolicyModel up = m, dn = m;
    up.params()[i] += 1e-6;
    dn.params()[i] -= 1e-6;
    fd[i] = (ppo_objective(up, samples, cfg, nullptr).total - ppo_objective(dn, samples, cfg, nullptr).total) / 2e-6;
  }
  CHECK(rel_err(grad, fd) < 1e-5);
}

TEST_CASE("discounted returns") {
  Trajectory t(3);
  t[0].reward = 1.0;
  t[1].reward = 0.0;
  t[2].reward = 2.0;
  const auto g = discounted_returns(t, 0.5);
  CHECK(g[2] == 2.0);
  CHECK(g[1] == 1.0);
  CHECK(g[0] == 1.5);
}

TEST_CASE("Adam's first step has magnitude lr per coordinate") {
  Adam adam(3, 0.1);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd g(3);
  g << 2.0, -0.5, 0.0;
  adam.step(p, g);
  CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(p[2] == 0.0);
}

TEST_CASE("a PPO update raises the probability of advantaged actions") {
  std::mt19937_64 rng(3);
  PolicyModel m(FeatureSpec{}, kActionCount, 16, 2);
  const Eigen::VectorXd x = random_features(rng, m.inputs());
  const double before = policy_forward(m, x).probs[2];
  Trajectory t;
  for (int i = 0; i < 64; ++i) {
    const int a = i % kActionCount;
    Transition tr;
    tr.step = i;
    tr.features = x;
    tr.action = a;
    tr.log_prob = std::log(policy_forward(m, x).probs[a]);
    tr.reward = a == 2 ? 1.0 : 0.0;
    t.push_back(tr);
  }
  Adam adam(m.params().size(), 1e-3);
  PpoConfig cfg;
  ppo_update(m, adam, {t}, cfg, 0.0, rng);
  CHECK(policy_forward(m, x).probs[2] > before);
}

TEST_CASE("policy checkpoints round-trip") {
  PolicyModel m(FeatureSpec{}, kActionCount, 32, 9);
  std::vector<std::uint8_t> allowed(kActionCount, 1);
  allowed[6] = 0;
  m.set_allowed(allowed);
  std::stringstream s;
  m.save(s);
  const PolicyModel back = PolicyModel::load(s);
  CHECK(back.params() == m.params());
  CHECK(back.allowed() == m.allowed());
  CHECK(back.spec() == m.spec());
  CHECK(back.hidden() == 32);
  std::istringstream bad("garbage");
  CHECK_THROWS_AS(PolicyModel::load(bad), Error);
}

TEST_CASE("reward config validation") {
  RewardConfig c;
  CHECK_NOTHROW(validate(c));
  c.kde_bandwidth = 0.0;
  CHECK_THROWS_AS(validate(c), Error);
}
