#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "embal/harness.hpp"
#include "embal/plot.hpp"
#include "embal/training.hpp"

using namespace embal;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<const GridWorld> load_world_arg(const std::string& arg) {
  if (fs::exists(arg)) {
    std::ifstream in(arg);
    return std::make_shared<const GridWorld>(GridWorld::load(in));
  }
  std::size_t used = 0;
  std::uint64_t seed = 0;
  try {
    seed = std::stoull(arg, &used);
  } catch (...) {
    used = 0;
  }
  if (used != arg.size() || arg.empty()) throw Error("--world must be a world file or a generator seed: " + arg);
  return std::make_shared<const GridWorld>(generate_world(seed));
}

void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  body(out);
  if (!out) throw Error("failed writing " + path);
}

std::string csv_path_with_suffix(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix + p.extension().string())).string();
}

AblationFlags flags_or_none(const std::string& s) {
  return s == "full" || s == "none" ? AblationFlags{} : parse_ablation_flags(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embal: embodied visual active learning in procedurally generated grid worlds"};
  app.require_subcommand(1);

  // gen-world
  auto* gen = app.add_subcommand("gen-world", "Generate a world and save it");
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "Generator seed")->required();
  gen->add_option("--out", gen_out, "Output world file")->required();

  // run
  auto* run = app.add_subcommand("run", "Run one episode and record it");
  std::string run_agent = "spacefill", run_world, run_regime = "steps:256", run_record, run_policy, run_flags;
  std::uint64_t run_start = 0;
  run->add_option("--agent", run_agent, "Agent id, optionally +perception (e.g. bounce+random)");
  run->add_option("--world", run_world, "World file or generator seed")->required();
  run->add_option("--start-seed", run_start, "Start pose seed")->required();
  run->add_option("--regime", run_regime, "steps:N or budget:N");
  run->add_option("--record", run_record, "Episode record JSON output");
  run->add_option("--policy", run_policy, "Policy checkpoint for rl or learnt perception");
  run->add_option("--flags", run_flags, "Ablation flags of the policy");

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "Evaluate methods on a world split");
  std::vector<std::string> bench_agents{"random", "rotate", "bounce", "frontier", "spacefill"};
  std::string bench_split = "test", bench_out = "results.csv", bench_regime = "steps:256", bench_policy,
              bench_curves, bench_flags;
  int bench_workers = 1, bench_max_worlds = 0;
  bench->add_option("--agents", bench_agents, "Methods to evaluate")->delimiter(',');
  bench->add_option("--split", bench_split, "train | val | test");
  bench->add_option("--out", bench_out, "Results CSV");
  bench->add_option("--curves", bench_curves, "Curve CSV (default: <out>_curves.csv)");
  bench->add_option("--regime", bench_regime, "steps:N or budget:N");
  bench->add_option("--policy", bench_policy, "Policy checkpoint for rl or learnt perception");
  bench->add_option("--flags", bench_flags, "Ablation flags of the policy");
  bench->add_option("--workers", bench_workers, "Concurrent episodes");
  bench->add_option("--max-worlds", bench_max_worlds, "Use only the first n worlds of the split");

  // train
  auto* train = app.add_subcommand("train", "Train a policy with PPO on the training worlds");
  TrainOptions topts;
  std::string train_out = "policy.ckpt", train_log, train_flags;
  train->add_option("--episodes", topts.episodes, "Training episodes");
  train->add_option("--workers", topts.workers, "Concurrent rollout workers");
  train->add_option("--out", train_out, "Best-validation policy checkpoint");
  train->add_option("--log", train_log, "Training log CSV (default: <out>.log.csv)");
  train->add_option("--seed", topts.seed, "Training seed");
  train->add_option("--agent", topts.agent, "rl, or a base agent for learnt perception");
  train->add_option("--flags", train_flags, "Ablation flags");
  train->add_option("--validate-every", topts.validate_every, "Validation interval in episodes");
  train->add_option("--validation-worlds", topts.validation_worlds, "Limit validation worlds");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate ablated policy variants");
  std::vector<std::string> ablate_variants{"full", "no_prop_features,no_collect", "no_explore_reward",
                                           "heuristic_perception_only"};
  TrainOptions aopts;
  aopts.episodes = 1000;
  std::string ablate_out = "ablation.csv", ablate_split = "val";
  int ablate_max_worlds = 0;
  ablate->add_option("--flags", ablate_variants,
                     "Variants; each a comma-separated flag set or 'full' (repeat the option per variant)");
  ablate->add_option("--episodes", aopts.episodes, "Training episodes per variant");
  ablate->add_option("--workers", aopts.workers, "Concurrent episodes");
  ablate->add_option("--seed", aopts.seed, "Training seed");
  ablate->add_option("--split", ablate_split, "Evaluation split");
  ablate->add_option("--max-worlds", ablate_max_worlds, "Use only the first n evaluation worlds");
  ablate->add_option("--out", ablate_out, "Ablation table CSV");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Offline pre-training experiment");
  PretrainOptions popts;
  popts.base.agent = "rl";
  std::string pre_out = "pretrain.csv", pre_policy;
  pre->add_option("--views", popts.views, "Offline annotated views");
  pre->add_option("--iterations", popts.iterations, "Cap on offline training iterations (default: the episode cap)");
  pre->add_option("--workers", popts.workers, "Concurrent episodes");
  pre->add_option("--max-worlds", popts.max_test_worlds, "Use only the first n test worlds");
  pre->add_option("--agent", popts.base.agent, "Agent used in the active conditions");
  pre->add_option("--policy", pre_policy, "Policy checkpoint when --agent rl");
  pre->add_option("--out", pre_out, "Table CSV");

  // plot
  auto* plot = app.add_subcommand("plot", "Plot mean mIoU curves to SVG");
  std::string plot_curves, plot_out = "fig.svg", plot_axis = "step", plot_title;
  plot->add_option("--curves", plot_curves, "Curve CSV file or a directory of *curves*.csv")->required();
  plot->add_option("--out", plot_out, "SVG output");
  plot->add_option("--axis", plot_axis, "step | annotations");
  plot->add_option("--title", plot_title, "Figure title");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const GridWorld w = generate_world(gen_seed);
      write_file(gen_out, [&](std::ostream& o) { w.save(o); });
      std::cout << "world " << gen_seed << ": " << w.width() << "x" << w.height() << " cells, "
                << w.free_cells().size() << " free -> " << gen_out << "\n";
    } else if (*run) {
      MethodSpec m = parse_method(run_agent);
      if (!run_flags.empty()) m.flags = parse_ablation_flags(run_flags);
      if (!run_policy.empty()) m.policy = std::make_shared<const PolicyModel>(load_policy_file(run_policy));
      EpisodeConfig cfg = episode_config(m, EpisodeConfig{}, load_world_arg(run_world), run_start);
      apply_regime(cfg, run_regime);
      const EpisodeRecord rec = run_episode(cfg);
      std::cout << std::fixed << std::setprecision(4) << method_name(cfg) << " world " << rec.world_seed
                << " start " << rec.start_seed << ": mIoU " << rec.final_miou << " acc " << rec.final_acc
                << " #ann " << rec.n_ann << " #coll " << rec.n_coll << " steps " << rec.n_steps << "\n";
      if (!run_record.empty()) write_file(run_record, [&](std::ostream& o) { o << to_json(rec) << "\n"; });
    } else if (*bench) {
      std::vector<MethodSpec> methods;
      std::shared_ptr<const PolicyModel> policy;
      if (!bench_policy.empty()) policy = std::make_shared<const PolicyModel>(load_policy_file(bench_policy));
      for (const auto& a : bench_agents) {
        MethodSpec m = parse_method(a);
        if (m.agent == "rl" || m.perception == "learnt") {
          if (!policy) throw Error(a + " needs --policy");
          m.policy = policy;
          m.flags = bench_flags.empty() ? AblationFlags{} : parse_ablation_flags(bench_flags);
        }
        methods.push_back(m);
      }
      BenchmarkOptions opts;
      opts.split = parse_split(bench_split);
      opts.workers = bench_workers;
      opts.max_worlds = bench_max_worlds;
      apply_regime(opts.base, bench_regime);
      WorldCache worlds;
      const auto t0 = std::chrono::steady_clock::now();
      const auto result = run_benchmark(methods, opts, worlds);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_file(bench_out, [&](std::ostream& o) { write_results_csv(o, result.rows); });
      const std::string curves = bench_curves.empty() ? csv_path_with_suffix(bench_out, "_curves") : bench_curves;
      write_file(curves, [&](std::ostream& o) { write_curves_csv(o, result.records, result.rows); });
      std::cout << format_summary(summarize(result.rows)) << result.rows.size() << " episodes in " << std::fixed
                << std::setprecision(1) << secs << " s -> " << bench_out << ", " << curves << "\n";
    } else if (*train) {
      topts.flags = train_flags.empty() ? AblationFlags{} : parse_ablation_flags(train_flags);
      WorldCache worlds;
      topts.on_log = [](const TrainLogRow& r) {
        if (!std::isnan(r.val_miou) || r.episode % 50 == 0)
          std::cout << "episode " << r.episode << " return " << std::fixed << std::setprecision(4)
                    << r.episode_return << " #ann " << r.n_ann << " #coll " << r.n_coll << " mIoU "
                    << r.final_miou << (std::isnan(r.val_miou) ? "" : " val mIoU " + std::to_string(r.val_miou))
                    << std::endl;
      };
      const TrainResult result = train_policy(topts, worlds);
      save_policy_file(result.best, train_out);
      const std::string log = train_log.empty() ? train_out + ".log.csv" : train_log;
      write_file(log, [&](std::ostream& o) { write_train_log_csv(o, result.log); });
      std::cout << "best validation mIoU " << result.best_val_miou << " at episode " << result.best_episode
                << " -> " << train_out << "\n";
    } else if (*ablate) {
      std::vector<AblationFlags> variants;
      for (const auto& v : ablate_variants) variants.push_back(flags_or_none(v));
      BenchmarkOptions eval;
      eval.split = parse_split(ablate_split);
      eval.workers = aopts.workers;
      eval.max_worlds = ablate_max_worlds;
      WorldCache worlds;
      const auto rows = ablation_suite(variants, aopts, eval, worlds);
      std::vector<MethodSummary> table;
      for (const auto& r : rows) table.push_back(r.summary);
      std::cout << format_summary(table);
      write_file(ablate_out, [&](std::ostream& o) {
        o << "variant,miou,acc,n_ann,n_coll,n_steps,episodes\n" << std::setprecision(10);
        for (const auto& r : rows)
          o << '"' << r.variant << "\"," << r.summary.miou << ',' << r.summary.acc << ',' << r.summary.n_ann << ','
            << r.summary.n_coll << ',' << r.summary.n_steps << ',' << r.summary.episodes << '\n';
      });
    } else if (*pre) {
      if (!pre_policy.empty()) popts.base.policy = std::make_shared<const PolicyModel>(load_policy_file(pre_policy));
      if (popts.base.agent == "rl" && !popts.base.policy)
        throw Error("pretrain: --agent rl needs --policy (or pick a baseline agent)");
      WorldCache worlds;
      const auto result = pretrain_experiment(popts, worlds);
      std::cout << std::fixed << std::setprecision(3);
      for (const auto& r : result.table)
        std::cout << std::left << std::setw(18) << r.condition << std::right << " mIoU " << r.miou << " acc "
                  << r.acc << " #ann " << std::setprecision(1) << r.n_ann << std::setprecision(3) << "\n";
      std::cout << "frozen model on its own training views: mIoU " << result.frozen_train_miou << "\n";
      write_file(pre_out, [&](std::ostream& o) {
        o << "condition,miou,acc,n_ann\n" << std::setprecision(10);
        for (const auto& r : result.table) o << r.condition << ',' << r.miou << ',' << r.acc << ',' << r.n_ann << '\n';
      });
    } else if (*plot) {
      std::vector<std::string> files;
      if (fs::is_directory(plot_curves)) {
        for (const auto& e : fs::directory_iterator(plot_curves))
          if (e.path().extension() == ".csv" && e.path().filename().string().find("curves") != std::string::npos)
            files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
      } else {
        files.push_back(plot_curves);
      }
      if (files.empty()) throw Error("no curve CSV files under " + plot_curves);
      std::vector<CurveRow> rows;
      for (const auto& f : files) {
        std::ifstream in(f);
        auto part = read_curves_csv(in);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      const CurveAxis axis = plot_axis == "annotations" ? CurveAxis::Annotations : CurveAxis::Step;
      if (plot_axis != "step" && plot_axis != "annotations") throw Error("--axis must be step or annotations");
      const auto series = mean_curves(rows, axis, axis == CurveAxis::Step ? 8 : 1);
      const std::string title = plot_title.empty() ? "Mean reference mIoU" : plot_title;
      write_file(plot_out, [&](std::ostream& o) {
        write_svg(o, series, title, axis == CurveAxis::Step ? "step" : "annotations", "mIoU");
      });
      std::cout << series.size() << " series -> " << plot_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
