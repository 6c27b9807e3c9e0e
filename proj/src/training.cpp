#include "embal/training.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>

#include "embal/hash.hpp"

namespace embal {

namespace {

MethodSpec method_for(const TrainOptions& opts, std::shared_ptr<const PolicyModel> policy) {
  MethodSpec m;
  m.agent = opts.agent;
  m.perception = opts.agent == "rl" ? "threshold" : "learnt";
  m.policy = std::move(policy);
  m.flags = opts.flags;
  return m;
}

EpisodeConfig episode_config(const TrainOptions& opts, const MethodSpec& m) {
  EpisodeConfig cfg = opts.base;
  cfg.agent = m.agent;
  cfg.perception = m.perception;
  cfg.policy = m.policy;
  cfg.flags = m.flags;
  return cfg;
}

}  // namespace

PolicyModel make_policy(const TrainOptions& opts) {
  FeatureSpec spec;
  spec.classes = opts.base.seg_shape.classes;
  spec.prop_features = !opts.flags.no_prop_features;
  const bool full = opts.agent == "rl";
  PolicyModel model(spec, full ? kActionCount : 3, opts.hidden, hash_combine(opts.seed, 0x901));
  std::vector<std::uint8_t> allowed(model.actions(), 1);
  if (full) {
    if (opts.flags.no_collect) allowed[static_cast<int>(Action::Collect)] = 0;
    if (opts.flags.heuristic_perception_only) {
      allowed[static_cast<int>(Action::Annotate)] = 0;
      allowed[static_cast<int>(Action::Collect)] = 0;
    }
  } else {
    if (opts.flags.heuristic_perception_only)
      throw Error("make_policy: heuristic_perception_only needs the full rl agent");
    if (opts.flags.no_collect) allowed[LearntPerceptionAgent::kCollect] = 0;
  }
  model.set_allowed(allowed);
  return model;
}

double validate_policy(const PolicyModel& policy, const TrainOptions& opts, WorldCache& worlds) {
  BenchmarkOptions b;
  b.split = Split::Validation;
  b.max_worlds = opts.validation_worlds;
  b.workers = opts.workers;
  b.keep_records = false;
  b.base = opts.base;
  const auto r = run_benchmark({method_for(opts, std::make_shared<const PolicyModel>(policy))}, b, worlds);
  return summarize(r.rows).front().miou;
}

TrainResult train_policy(const TrainOptions& opts, WorldCache& worlds) {
  if (opts.episodes <= 0) throw Error("train_policy: episodes must be positive");
  if (opts.base.regime != Regime::Steps) throw Error("train_policy: training uses the step regime");
  PolicyModel model = make_policy(opts);
  Adam adam(model.params().size(), opts.ppo.learning_rate);
  std::mt19937_64 rng(hash_combine(opts.seed, 0xadd));
  const auto train_worlds = opts.train_worlds.empty() ? world_seeds(Split::Train) : opts.train_worlds;
  const int round = std::max(1, (opts.ppo.batch_steps + opts.base.max_steps - 1) / opts.base.max_steps);

  TrainResult result;
  result.best = model;
  std::vector<Trajectory> batch;
  std::size_t batch_steps = 0;
  for (int first = 0; first < opts.episodes; first += round) {
    const int n = std::min(round, opts.episodes - first);
    const auto snapshot = std::make_shared<const PolicyModel>(model);
    const MethodSpec m = method_for(opts, snapshot);
    std::vector<Trajectory> trajs(n);
    std::vector<EpisodeRecord> recs(n);
    parallel_for(n, opts.workers, [&](int k) {
      const std::uint64_t h = hash_combine(opts.seed, static_cast<std::uint64_t>(first + k));
      EpisodeConfig cfg = episode_config(opts, m);
      cfg.world = worlds.get(train_worlds[h % train_worlds.size()]);
      cfg.start_seed = hash_combine(h, 1);
      cfg.policy_seed = hash_combine(h, 2);
      cfg.train_seed = hash_combine(h, 3);
      cfg.model_seed = hash_combine(h, 4);
      recs[k] = run_episode(cfg, &trajs[k]);
    });
    for (int k = 0; k < n; ++k) {
      TrainLogRow row;
      row.episode = first + k + 1;
      row.world_seed = recs[k].world_seed;
      row.episode_return = recs[k].episode_return;
      row.n_ann = recs[k].n_ann;
      row.n_coll = recs[k].n_coll;
      row.final_miou = recs[k].final_miou;
      const bool validate_now = opts.validate_every > 0 &&
                                (row.episode % opts.validate_every == 0 || row.episode == opts.episodes);
      batch_steps += trajs[k].size();
      if (!trajs[k].empty()) batch.push_back(std::move(trajs[k]));
      if (batch_steps >= static_cast<std::size_t>(opts.ppo.batch_steps)) {
        ppo_update(model, adam, batch, opts.ppo, opts.gamma, rng);
        batch.clear();
        batch_steps = 0;
      }
      if (validate_now) {
        row.val_miou = validate_policy(model, opts, worlds);
        if (std::isnan(result.best_val_miou) || row.val_miou > result.best_val_miou) {
          result.best_val_miou = row.val_miou;
          result.best_episode = row.episode;
          result.best = model;
        }
      }
      result.log.push_back(row);
      if (opts.on_log) opts.on_log(row);
    }
  }
  if (!batch.empty()) ppo_update(model, adam, batch, opts.ppo, opts.gamma, rng);
  result.last = model;
  if (opts.validate_every <= 0) {
    result.best = model;
    result.best_episode = opts.episodes;
  }
  return result;
}

void write_train_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log) {
  out << "episode,world_seed,return,n_ann,n_coll,final_miou,val_miou\n" << std::setprecision(10);
  for (const auto& r : log) {
    out << r.episode << ',' << r.world_seed << ',' << r.episode_return << ',' << r.n_ann << ',' << r.n_coll
        << ',' << r.final_miou << ',';
    if (!std::isnan(r.val_miou)) out << r.val_miou;
    out << '\n';
  }
}

void save_policy_file(const PolicyModel& policy, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  policy.save(out);
  if (!out) throw Error("failed writing " + path);
}

PolicyModel load_policy_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  return PolicyModel::load(in);
}

std::vector<AblationRow> ablation_suite(const std::vector<AblationFlags>& variants, const TrainOptions& train,
                                        const BenchmarkOptions& eval, WorldCache& worlds) {
  std::vector<AblationRow> out;
  for (const auto& flags : variants) {
    TrainOptions t = train;
    t.flags = flags;
    const TrainResult trained = train_policy(t, worlds);
    MethodSpec m = method_for(t, std::make_shared<const PolicyModel>(trained.best));
    const std::string f = to_string(flags);
    m.label = f.empty() ? "full" : f;
    BenchmarkOptions b = eval;
    b.keep_records = false;
    const auto r = run_benchmark({m}, b, worlds);
    out.push_back(AblationRow{m.label, summarize(r.rows).front()});
  }
  return out;
}

}  // namespace embal
