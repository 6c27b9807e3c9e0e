#include "embal/harness.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <exception>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include "embal/hash.hpp"

namespace embal {

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val" || name == "validation") return Split::Validation;
  if (name == "test") return Split::Test;
  throw Error("unknown split: " + name);
}

std::string split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::vector<std::uint64_t> world_seeds(Split split) {
  std::uint64_t first = 0;
  int count = 0;
  switch (split) {
    case Split::Train: first = 1000; count = 61; break;
    case Split::Validation: first = 2000; count = 11; break;
    case Split::Test: first = 3000; count = 18; break;
  }
  std::vector<std::uint64_t> out(count);
  for (int i = 0; i < count; ++i) out[i] = first + i;
  return out;
}

int starts_per_world(Split split) { return split == Split::Test ? 4 : 3; }

std::uint64_t start_seed_for(std::uint64_t world_seed, int index) {
  return hash_combine(hash_combine(world_seed, 0x57a27), static_cast<std::uint64_t>(index));
}

std::shared_ptr<const GridWorld> WorldCache::get(std::uint64_t seed) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = worlds_.find(seed);
  if (it != worlds_.end()) return it->second;
  auto w = std::make_shared<const GridWorld>(generate_world(seed, params_));
  worlds_.emplace(seed, w);
  return w;
}

void apply_regime(EpisodeConfig& cfg, const std::string& regime) {
  const auto colon = regime.find(':');
  if (colon == std::string::npos) throw Error("regime must look like steps:N or budget:N");
  const std::string kind = regime.substr(0, colon);
  int value = 0;
  try {
    std::size_t used = 0;
    value = std::stoi(regime.substr(colon + 1), &used);
    if (used != regime.size() - colon - 1) throw Error("");
  } catch (...) {
    throw Error("bad regime value: " + regime);
  }
  if (value <= 0) throw Error("regime value must be positive: " + regime);
  if (kind == "steps") {
    cfg.regime = Regime::Steps;
    cfg.max_steps = value;
  } else if (kind == "budget") {
    cfg.regime = Regime::Budget;
    cfg.annotation_budget = value;
  } else {
    throw Error("unknown regime: " + kind);
  }
}

MethodSpec parse_method(const std::string& text) {
  MethodSpec m;
  const auto plus = text.find('+');
  m.agent = text.substr(0, plus);
  if (plus != std::string::npos) m.perception = text.substr(plus + 1);
  static const std::vector<std::string> agents{"random", "rotate", "bounce", "frontier", "spacefill", "rl"};
  static const std::vector<std::string> perceptions{"threshold", "random", "learnt"};
  if (std::find(agents.begin(), agents.end(), m.agent) == agents.end())
    throw Error("unknown agent id: " + m.agent);
  if (std::find(perceptions.begin(), perceptions.end(), m.perception) == perceptions.end())
    throw Error("unknown perception strategy: " + m.perception);
  return m;
}

void parallel_for(int n, int workers, const std::function<void(int)>& job) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto loop = [&] {
    for (int i; (i = next.fetch_add(1)) < n;) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w) threads.emplace_back(loop);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

EpisodeConfig episode_config(const MethodSpec& m, const EpisodeConfig& base,
                             std::shared_ptr<const GridWorld> world, std::uint64_t start_seed) {
  EpisodeConfig cfg = base;
  cfg.world = std::move(world);
  cfg.start_seed = start_seed;
  cfg.agent = m.agent;
  cfg.perception = m.perception;
  cfg.policy = m.policy;
  cfg.flags = m.flags;
  cfg.policy_seed = hash_combine(start_seed, 0x9011c7);
  cfg.train_seed = hash_combine(start_seed, 0x7a1e);
  cfg.model_seed = hash_combine(start_seed, 0x30de1);
  return cfg;
}

BenchmarkResult run_benchmark(const std::vector<MethodSpec>& methods, const BenchmarkOptions& opts,
                              WorldCache& worlds) {
  auto seeds = world_seeds(opts.split);
  if (opts.max_worlds > 0 && opts.max_worlds < static_cast<int>(seeds.size())) seeds.resize(opts.max_worlds);
  const int starts = starts_per_world(opts.split);

  struct Job {
    std::size_t method;
    std::uint64_t world_seed;
    std::uint64_t start_seed;
  };
  std::vector<Job> jobs;
  for (std::size_t m = 0; m < methods.size(); ++m)
    for (auto ws : seeds)
      for (int s = 0; s < starts; ++s) jobs.push_back({m, ws, start_seed_for(ws, s)});

  BenchmarkResult result;
  result.rows.resize(jobs.size());
  if (opts.keep_records) result.records.resize(jobs.size());
  std::mutex emit;
  parallel_for(static_cast<int>(jobs.size()), opts.workers, [&](int i) {
    const Job& job = jobs[i];
    const MethodSpec& m = methods[job.method];
    const EpisodeConfig cfg = episode_config(m, opts.base, worlds.get(job.world_seed), job.start_seed);
    EpisodeRecord rec = run_episode(cfg);
    ResultRow row{m.label.empty() ? method_name(cfg) : m.label,
                  job.world_seed,
                  job.start_seed,
                  rec.final_miou,
                  rec.final_acc,
                  rec.n_ann,
                  rec.n_coll,
                  rec.n_steps};
    result.rows[i] = row;
    if (opts.keep_records) result.records[i] = std::move(rec);
    if (opts.on_row) {
      std::lock_guard<std::mutex> lock(emit);
      opts.on_row(row);
    }
  });
  return result;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultsHeader << '\n' << std::setprecision(17);
  for (const auto& r : rows)
    out << r.method << ',' << r.world_seed << ',' << r.start_seed << ',' << r.miou << ',' << r.acc << ','
        << r.n_ann << ',' << r.n_coll << ',' << r.n_steps << '\n';
}

std::vector<ResultRow> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim_cr(line) != kResultsHeader) throw Error("results CSV: bad header");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    line = trim_cr(line);
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 8) throw Error("results CSV: expected 8 columns in '" + line + "'");
    rows.push_back(ResultRow{c[0], std::stoull(c[1]), std::stoull(c[2]), std::stod(c[3]), std::stod(c[4]),
                             std::stoi(c[5]), std::stoi(c[6]), std::stoi(c[7])});
  }
  return rows;
}

void write_curves_csv(std::ostream& out, const std::vector<EpisodeRecord>& records,
                      const std::vector<ResultRow>& rows) {
  if (records.size() != rows.size()) throw Error("write_curves_csv: records and rows differ in length");
  out << "method,world_seed,start_seed,step,n_ann,n_coll,miou,acc,perception,checkpoint\n" << std::setprecision(17);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (const auto& p : records[i].curve)
      out << rows[i].method << ',' << rows[i].world_seed << ',' << rows[i].start_seed << ',' << p.step << ','
          << p.n_ann << ',' << p.n_coll << ',' << p.miou << ',' << p.acc << ',' << p.perception << ','
          << p.checkpoint << '\n';
}

std::vector<CurveRow> read_curves_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim_cr(line).rfind("method,world_seed,start_seed,step", 0) != 0)
    throw Error("curves CSV: bad header");
  std::vector<CurveRow> rows;
  while (std::getline(in, line)) {
    line = trim_cr(line);
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 10) throw Error("curves CSV: expected 10 columns in '" + line + "'");
    CurveRow r;
    r.method = c[0];
    r.world_seed = std::stoull(c[1]);
    r.start_seed = std::stoull(c[2]);
    r.point = CurvePoint{std::stoi(c[3]), std::stoi(c[4]), std::stoi(c[5]), std::stod(c[6]),
                         std::stod(c[7]),  c[8] == "1",     c[9] == "1"};
    rows.push_back(r);
  }
  return rows;
}

std::vector<MethodSummary> summarize(const std::vector<ResultRow>& rows) {
  std::vector<MethodSummary> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const MethodSummary& s) { return s.method == r.method; });
    if (it == out.end()) {
      out.push_back(MethodSummary{r.method});
      it = out.end() - 1;
    }
    it->episodes += 1;
    it->miou += r.miou;
    it->acc += r.acc;
    it->n_ann += r.n_ann;
    it->n_coll += r.n_coll;
    it->n_steps += r.n_steps;
  }
  for (auto& s : out) {
    s.miou /= s.episodes;
    s.acc /= s.episodes;
    s.n_ann /= s.episodes;
    s.n_coll /= s.episodes;
    s.n_steps /= s.episodes;
  }
  return out;
}

std::string format_summary(const std::vector<MethodSummary>& summary) {
  std::ostringstream os;
  std::size_t width = 6;
  for (const auto& s : summary) width = std::max(width, s.method.size());
  os << std::left << std::setw(static_cast<int>(width)) << "Method" << std::right << std::setw(8) << "mIoU"
     << std::setw(8) << "Acc" << std::setw(8) << "#Ann" << std::setw(8) << "#Coll" << std::setw(9) << "#Steps"
     << std::setw(6) << "n" << '\n';
  os << std::fixed;
  for (const auto& s : summary)
    os << std::left << std::setw(static_cast<int>(width)) << s.method << std::right << std::setprecision(3)
       << std::setw(8) << s.miou << std::setw(8) << s.acc << std::setprecision(1) << std::setw(8) << s.n_ann
       << std::setw(8) << s.n_coll << std::setw(9) << s.n_steps << std::setw(6) << s.episodes << '\n';
  return os.str();
}

PairedTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("paired_t_test: samples differ in length");
  if (a.size() < 2) throw Error("paired_t_test: need at least two pairs");
  PairedTest t;
  t.n = static_cast<int>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += b[i] - a[i];
  mean /= t.n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (b[i] - a[i] - mean) * (b[i] - a[i] - mean);
  const double sd = std::sqrt(ss / (t.n - 1));
  t.mean_diff = mean;
  if (sd == 0.0) {
    t.t = mean == 0.0 ? 0.0 : std::copysign(INFINITY, mean);
    t.p_two_sided = mean == 0.0 ? 1.0 : 0.0;
    t.p_greater = mean > 0.0 ? 0.0 : 1.0;
    return t;
  }
  t.t = mean / (sd / std::sqrt(static_cast<double>(t.n)));
  boost::math::students_t dist(t.n - 1);
  t.p_greater = boost::math::cdf(boost::math::complement(dist, t.t));
  t.p_two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t.t)));
  return t;
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> episode_keys(const std::vector<ResultRow>& rows,
                                                                  const std::string& method) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> keys;
  for (const auto& r : rows)
    if (r.method == method) keys.emplace_back(r.world_seed, r.start_seed);
  return keys;
}

std::vector<double> paired_metric(const std::vector<ResultRow>& rows, const std::string& method,
                                  const std::vector<std::pair<std::uint64_t, std::uint64_t>>& keys,
                                  double ResultRow::*field) {
  std::map<std::pair<std::uint64_t, std::uint64_t>, double> by_key;
  for (const auto& r : rows)
    if (r.method == method) by_key[{r.world_seed, r.start_seed}] = r.*field;
  std::vector<double> out;
  for (const auto& k : keys) {
    auto it = by_key.find(k);
    if (it == by_key.end()) throw Error("paired_metric: " + method + " lacks an episode");
    out.push_back(it->second);
  }
  return out;
}

double curve_value_at(const std::vector<CurvePoint>& curve, int step) {
  if (curve.empty()) throw Error("curve_value_at: empty curve");
  if (step <= curve.front().step) return curve.front().miou;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].step >= step) {
      const auto& a = curve[i - 1];
      const auto& b = curve[i];
      if (b.step == a.step) return b.miou;
      const double w = static_cast<double>(step - a.step) / (b.step - a.step);
      return a.miou + w * (b.miou - a.miou);
    }
  }
  return curve.back().miou;
}

TrainSet offline_views(WorldCache& worlds, int n, std::uint64_t seed, const RenderParams& render) {
  if (n <= 0) throw Error("offline_views: n must be positive");
  const auto seeds = world_seeds(Split::Train);
  TrainSet pool;
  pool.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t h = hash_combine(seed, static_cast<std::uint64_t>(i));
    const auto world = worlds.get(seeds[h % seeds.size()]);
    const Pose pose = sample_start_pose(*world, hash_combine(h, 0x0ff));
    View v = render_view(*world, pose, render, ViewOrigin::Offline);
    std::vector<int> labels = v.gt_class;
    pool.push_back(LabeledView{std::move(v), std::move(labels)});
  }
  return pool;
}

SegModel pretrain_model(const TrainSet& pool, const SegShape& shape, const PretrainOptions& opts) {
  if (pool.empty()) throw Error("pretrain_model: empty view pool");
  TrainConfig cfg = opts.base.train;
  if (opts.iterations > 0) cfg.max_iters = opts.iterations;
  SegModel model = init_model(hash_combine(opts.seed, 0x5e9), shape);
  std::mt19937_64 rng(hash_combine(opts.seed, 0x7a1));
  refine(model, pool, cfg, rng);
  model.velocity.setZero();
  return model;
}

PretrainResult pretrain_experiment(const PretrainOptions& opts, WorldCache& worlds) {
  PretrainResult result;
  const TrainSet pool = offline_views(worlds, opts.views, opts.seed, opts.base.render);
  SegShape shape = opts.base.seg_shape;
  const auto probe = worlds.get(world_seeds(Split::Train).front());
  shape.width = opts.base.render.width;
  shape.appearance_dim = probe->appearance_dim();
  shape.classes = probe->class_count();
  auto pretrained = std::make_shared<const SegModel>(pretrain_model(pool, shape, opts));

  std::vector<View> own;
  for (std::size_t i = 0; i < std::min<std::size_t>(pool.size(), 500); ++i) own.push_back(pool[i].view);
  result.frozen_train_miou = miou(*pretrained, own);

  struct Condition {
    std::string name;
    bool refine;
    bool init;
  };
  const std::vector<Condition> conditions{
      {"pretrain-frozen", false, true}, {"scratch-active", true, false}, {"pretrain-active", true, true}};
  for (const auto& c : conditions) {
    BenchmarkOptions b;
    b.split = Split::Test;
    b.max_worlds = opts.max_test_worlds;
    b.workers = opts.workers;
    b.keep_records = false;
    b.base = opts.base;
    b.base.refine_enabled = c.refine;
    if (c.init) b.base.initial_model = pretrained;
    MethodSpec m;
    m.agent = opts.base.agent;
    m.perception = opts.base.perception;
    m.policy = opts.base.policy;
    m.flags = opts.base.flags;
    m.label = c.name;
    auto r = run_benchmark({m}, b, worlds);
    const auto s = summarize(r.rows).front();
    // A frozen model learns nothing from the agent's annotations.
    result.table.push_back(PretrainRow{c.name, s.miou, s.acc, c.refine ? s.n_ann : 0.0});
    result.rows.insert(result.rows.end(), r.rows.begin(), r.rows.end());
  }
  return result;
}

}  // namespace embal
