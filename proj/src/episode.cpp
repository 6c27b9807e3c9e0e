#include "embal/episode.hpp"

#include <algorithm>
#include "json.hpp"
#include <set>
#include <sstream>

#include "embal/hash.hpp"

namespace embal {

AblationFlags parse_ablation_flags(const std::string& csv) {
  AblationFlags f;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty()) continue;
    if (item == "no_prop_features") f.no_prop_features = true;
    else if (item == "no_explore_reward") f.no_explore_reward = true;
    else if (item == "no_collect") f.no_collect = true;
    else if (item == "heuristic_perception_only") f.heuristic_perception_only = true;
    else throw Error("unknown ablation flag: " + item);
  }
  return f;
}

std::string to_string(const AblationFlags& f) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(f.no_prop_features, "no_prop_features");
  add(f.no_explore_reward, "no_explore_reward");
  add(f.no_collect, "no_collect");
  add(f.heuristic_perception_only, "heuristic_perception_only");
  return out;
}

ReferenceSet sample_reference_set(const GridWorld& world, const Pose& start, double radius, int n,
                                  std::uint64_t seed, const RenderParams& render) {
  if (n <= 0) throw Error("sample_reference_set: n must be positive");
  const CellIndex sc = world.cell_of(start.position());
  if (world.is_wall(sc)) throw Error("sample_reference_set: start is not in free space");
  const auto dist = distance_field(world, sc);
  const auto cells = world.free_cells();
  std::size_t in_radius = 0;
  for (const auto& c : cells) in_radius += dist[world.index(c)] * world.cell_size() <= radius;
  if (in_radius < 2) throw Error("sample_reference_set: insufficient free space within radius");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  std::uniform_real_distribution<double> offset(0.05, 0.95);
  std::uniform_int_distribution<int> heading(0, kHeadingCount - 1);
  ReferenceSet set;
  while (static_cast<int>(set.views.size()) < n) {
    const CellIndex c = cells[pick(rng)];
    if (dist[world.index(c)] * world.cell_size() > radius) continue;
    const double cs = world.cell_size();
    Pose p{(c.x + offset(rng)) * cs, (c.y + offset(rng)) * cs, heading(rng)};
    set.views.push_back(render_view(world, p, render, ViewOrigin::Reference));
  }
  return set;
}

std::unique_ptr<Agent> make_agent(const EpisodeConfig& cfg, const GridWorld& world, const Pose& start,
                                  Trajectory* sink) {
  const std::uint64_t seed = cfg.policy_seed;
  if (cfg.agent == "rl") {
    if (!cfg.policy) throw Error("make_agent: the rl agent needs a policy");
    std::optional<ThresholdPerceptionConfig> overlay;
    if (cfg.flags.heuristic_perception_only) overlay = cfg.threshold;
    return std::make_unique<RlAgent>(cfg.policy, seed, cfg.greedy_policy, sink, overlay);
  }
  std::unique_ptr<MovementPolicy> movement;
  if (cfg.agent == "random") movement = std::make_unique<RandomPolicy>(seed);
  else if (cfg.agent == "rotate") movement = std::make_unique<RotatePolicy>();
  else if (cfg.agent == "bounce") movement = std::make_unique<BouncePolicy>(seed);
  else if (cfg.agent == "frontier") movement = std::make_unique<FrontierPolicy>(world, start, cfg.radius);
  else if (cfg.agent == "spacefill") movement = std::make_unique<SpaceFillerPolicy>(world, start, cfg.radius);
  else throw Error("unknown agent id: " + cfg.agent);

  if (cfg.perception == "threshold") return std::make_unique<ThresholdAgent>(std::move(movement), cfg.threshold);
  if (cfg.perception == "random")
    return std::make_unique<RandomPerceptionAgent>(std::move(movement), hash_combine(seed, 0x9e7));
  if (cfg.perception == "learnt") {
    if (!cfg.policy) throw Error("make_agent: learnt perception needs a policy");
    return std::make_unique<LearntPerceptionAgent>(std::move(movement), cfg.policy, seed,
                                                   cfg.greedy_policy, sink);
  }
  throw Error("unknown perception strategy: " + cfg.perception);
}

std::string method_name(const EpisodeConfig& cfg) {
  if (cfg.agent == "rl") {
    const std::string f = to_string(cfg.flags);
    return f.empty() ? "rl" : "rl[" + f + "]";
  }
  if (cfg.perception == "threshold") return cfg.agent;
  return cfg.agent + "+" + cfg.perception;
}

namespace {

struct Scores {
  double miou = 0.0;
  double acc = 0.0;
  double reward_miou = 0.0;
};

Scores score(const SegModel& model, const ReferenceSet& refs, const std::vector<int>& reward_classes) {
  const ConfusionMatrix cm = confusion(model, refs.views);
  return {cm.mean_iou(), cm.accuracy(), cm.mean_iou(reward_classes)};
}

void attach_rewards(Trajectory& traj, std::size_t first, const EpisodeRecord& rec) {
  if (traj.size() <= first) return;
  std::size_t t = first;
  for (const auto& s : rec.steps) {
    const double r = s.r_exp + s.r_ann + s.r_col;
    // Decision taken on observation step k produces log entry k + 1.
    while (t + 1 < traj.size() && traj[t + 1].step < s.step) ++t;
    traj[t].reward += r;
  }
  traj.back().reward += rec.final_reward;
}

}  // namespace

EpisodeRecord run_episode(const EpisodeConfig& cfg, Trajectory* trajectory) {
  if (!cfg.world) throw Error("run_episode: no world");
  const GridWorld& world = *cfg.world;
  validate(cfg.train);
  validate(cfg.reward);
  validate(cfg.threshold);
  if (cfg.regime == Regime::Steps && cfg.max_steps <= 0) throw Error("run_episode: max_steps must be positive");
  if (cfg.regime == Regime::Budget && cfg.annotation_budget <= 0)
    throw Error("run_episode: annotation_budget must be positive");

  EpisodeRecord rec;
  rec.world_seed = world.seed();
  rec.start_seed = cfg.start_seed;
  rec.agent = cfg.agent;
  rec.perception = cfg.perception;
  rec.regime = cfg.regime;

  const Pose start = sample_start_pose(world, cfg.start_seed);
  rec.start = start;
  const std::uint64_t ref_seed = cfg.reference_seed.value_or(hash_combine(cfg.start_seed, 0x4ef5));
  const ReferenceSet refs =
      sample_reference_set(world, start, cfg.radius, cfg.reference_count, ref_seed, cfg.render);
  rec.reward_classes = top_k_classes(refs.views, cfg.reward.top_k);

  SegShape shape = cfg.seg_shape;
  shape.width = cfg.render.width;
  shape.appearance_dim = world.appearance_dim();
  shape.classes = world.class_count();
  SegModel model = cfg.initial_model ? *cfg.initial_model : init_model(cfg.model_seed, shape);
  if (!(model.shape == shape)) throw Error("run_episode: initial model shape does not match the world");
  std::mt19937_64 train_rng(cfg.train_seed);

  TrainSet trainset;
  auto train = [&]() -> int {
    if (!cfg.refine_enabled) return 0;
    for (const auto& s : trainset)
      if (s.view.origin != ViewOrigin::Agent) throw Error("run_episode: non-agent view in the training set");
    return refine(model, trainset, cfg.train, train_rng).iterations;
  };

  Pose pose = start;
  View view = render_view(world, pose, cfg.render);
  PropagatedMask mask = do_annotate(trainset, view);
  train();

  Scores current = score(model, refs, rec.reward_classes);
  rec.reward_miou_initial = current.reward_miou;
  rec.curve.push_back(CurvePoint{0, 0, 0, current.miou, current.acc, false, true});

  std::unique_ptr<Agent> agent = make_agent(cfg, world, start, trajectory);
  const std::size_t traj_first = trajectory ? trajectory->size() : 0;

  std::vector<Vec2> trace{start.position()};
  std::set<int> visited{world.index(world.cell_of(start.position()))};
  bool collision = false;
  std::optional<Action> last_action;
  int since_annotate = 0;
  double prev_reward_miou = current.reward_miou;
  double step_reward_sum = 0.0;

  for (int step = 0;;) {
    if (cfg.regime == Regime::Steps && step >= cfg.max_steps) break;
    if (cfg.regime == Regime::Budget && rec.n_ann >= cfg.annotation_budget) break;
    if (step >= cfg.safety_step_cap) break;

    const Eigen::MatrixXd predicted = predict(model, view);
    const AgentObservation obs{view, predicted, mask, collision, step, pose, last_action, since_annotate};
    Action action = agent->act(obs);
    ++step;

    StepLog log;
    log.step = step;
    if (action == Action::Collect && mask.all_unknown()) {
      action = Action::Annotate;
      log.converted = true;
      ++rec.n_converted;
    }
    log.action = action;

    if (is_movement(action)) {
      const StepResult sr = step_pose(world, pose, action);
      collision = sr.collided;
      log.collided = sr.collided;
      if (!(sr.pose == pose)) {
        pose = sr.pose;
        View next = render_view(world, pose, cfg.render);
        mask = propagate(mask, correspondence(view, next));
        view = std::move(next);
      }
      if (!cfg.flags.no_explore_reward) log.r_exp = exploration_reward(trace, pose.position(), cfg.reward);
      ++since_annotate;
    } else {
      if (action == Action::Annotate) {
        mask = do_annotate(trainset, view);
        ++rec.n_ann;
        since_annotate = 0;
      } else {
        do_collect(trainset, view, mask);
        ++rec.n_coll;
        ++since_annotate;
      }
      log.refine_iters = train();
      current = score(model, refs, rec.reward_classes);
      if (action == Action::Annotate) log.r_ann = annotate_reward(current.reward_miou, prev_reward_miou, cfg.reward);
      else log.r_col = collect_reward(current.reward_miou, prev_reward_miou);
      prev_reward_miou = current.reward_miou;
    }
    log.pose = pose;
    log.unknown_fraction = mask.unknown_fraction();
    step_reward_sum += log.r_exp + log.r_ann + log.r_col;
    trace.push_back(pose.position());
    visited.insert(world.index(world.cell_of(pose.position())));
    last_action = action;

    const bool perception = is_perception(action);
    const bool checkpoint = step % cfg.checkpoint_every == 0;
    if (perception || checkpoint) {
      if (!perception) current = score(model, refs, rec.reward_classes);
      rec.curve.push_back(CurvePoint{step, rec.n_ann, rec.n_coll, current.miou, current.acc, perception, checkpoint});
    }
    rec.steps.push_back(log);
  }

  rec.n_steps = static_cast<int>(rec.steps.size());
  current = score(model, refs, rec.reward_classes);
  if (rec.curve.back().step != rec.n_steps)
    rec.curve.push_back(CurvePoint{rec.n_steps, rec.n_ann, rec.n_coll, current.miou, current.acc, false, true});
  rec.final_miou = current.miou;
  rec.final_acc = current.acc;
  rec.reward_miou_final = current.reward_miou;
  rec.final_reward = rec.reward_miou_final - rec.reward_miou_initial;
  rec.episode_return = rec.final_reward + step_reward_sum;
  rec.distinct_cells = static_cast<int>(visited.size());
  if (trajectory) attach_rewards(*trajectory, traj_first, rec);
  return rec;
}

namespace {

nlohmann::json pose_json(const Pose& p) { return {p.x, p.y, p.heading}; }
Pose pose_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<int>()}; }

}  // namespace

std::string to_json(const EpisodeRecord& r) {
  nlohmann::json j;
  j["format"] = "embal-episode";
  j["version"] = EpisodeRecord::kVersion;
  j["world_seed"] = r.world_seed;
  j["start_seed"] = r.start_seed;
  j["agent"] = r.agent;
  j["perception"] = r.perception;
  j["regime"] = r.regime == Regime::Steps ? "steps" : "budget";
  j["start"] = pose_json(r.start);
  j["reward_classes"] = r.reward_classes;
  auto& steps = j["steps"] = nlohmann::json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"step", s.step},
                     {"action", action_name(s.action)},
                     {"converted", s.converted},
                     {"pose", pose_json(s.pose)},
                     {"collided", s.collided},
                     {"unknown_fraction", s.unknown_fraction},
                     {"r_exp", s.r_exp},
                     {"r_ann", s.r_ann},
                     {"r_col", s.r_col},
                     {"refine_iters", s.refine_iters}});
  }
  auto& curve = j["curve"] = nlohmann::json::array();
  for (const auto& c : r.curve) {
    curve.push_back({{"step", c.step},
                     {"n_ann", c.n_ann},
                     {"n_coll", c.n_coll},
                     {"miou", c.miou},
                     {"acc", c.acc},
                     {"perception", c.perception},
                     {"checkpoint", c.checkpoint}});
  }
  j["n_ann"] = r.n_ann;
  j["n_coll"] = r.n_coll;
  j["n_steps"] = r.n_steps;
  j["n_converted"] = r.n_converted;
  j["final_miou"] = r.final_miou;
  j["final_acc"] = r.final_acc;
  j["reward_miou_initial"] = r.reward_miou_initial;
  j["reward_miou_final"] = r.reward_miou_final;
  j["final_reward"] = r.final_reward;
  j["episode_return"] = r.episode_return;
  j["distinct_cells"] = r.distinct_cells;
  return j.dump();
}

EpisodeRecord record_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "embal-episode" || j.value("version", 0) != EpisodeRecord::kVersion)
    throw Error("record_from_json: not a version-1 episode record");
  EpisodeRecord r;
  r.world_seed = j.at("world_seed").get<std::uint64_t>();
  r.start_seed = j.at("start_seed").get<std::uint64_t>();
  r.agent = j.at("agent").get<std::string>();
  r.perception = j.at("perception").get<std::string>();
  r.regime = j.at("regime").get<std::string>() == "steps" ? Regime::Steps : Regime::Budget;
  r.start = pose_from(j.at("start"));
  r.reward_classes = j.at("reward_classes").get<std::vector<int>>();
  for (const auto& s : j.at("steps")) {
    StepLog l;
    l.step = s.at("step").get<int>();
    l.action = action_from_name(s.at("action").get<std::string>());
    l.converted = s.at("converted").get<bool>();
    l.pose = pose_from(s.at("pose"));
    l.collided = s.at("collided").get<bool>();
    l.unknown_fraction = s.at("unknown_fraction").get<double>();
    l.r_exp = s.at("r_exp").get<double>();
    l.r_ann = s.at("r_ann").get<double>();
    l.r_col = s.at("r_col").get<double>();
    l.refine_iters = s.at("refine_iters").get<int>();
    r.steps.push_back(l);
  }
  for (const auto& c : j.at("curve")) {
    r.curve.push_back(CurvePoint{c.at("step").get<int>(), c.at("n_ann").get<int>(), c.at("n_coll").get<int>(),
                                 c.at("miou").get<double>(), c.at("acc").get<double>(),
                                 c.at("perception").get<bool>(), c.at("checkpoint").get<bool>()});
  }
  r.n_ann = j.at("n_ann").get<int>();
  r.n_coll = j.at("n_coll").get<int>();
  r.n_steps = j.at("n_steps").get<int>();
  r.n_converted = j.at("n_converted").get<int>();
  r.final_miou = j.at("final_miou").get<double>();
  r.final_acc = j.at("final_acc").get<double>();
  r.reward_miou_initial = j.at("reward_miou_initial").get<double>();
  r.reward_miou_final = j.at("reward_miou_final").get<double>();
  r.final_reward = j.at("final_reward").get<double>();
  r.episode_return = j.at("episode_return").get<double>();
  r.distinct_cells = j.at("distinct_cells").get<int>();
  return r;
}

}  // namespace embal
