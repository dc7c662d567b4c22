#include "ctree/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ctree/io.hpp"

namespace ctree::cli {

namespace fs = std::filesystem;
using io::json;

std::optional<double> spread_slope(const ValueSpreadTrace& trace, double tail_fraction) {
  const std::size_t n = trace.size();
  const auto tail = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * tail_fraction));
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t i = n - std::min(tail, n); i < n; ++i) {
    xs.push_back(static_cast<double>(i));
    ys.push_back(trace.values()[i]);
  }
  if (xs.size() < 2) return std::nullopt;
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

RunSummary run_training(const RunConfig& config, std::ostream& log) {
  const fs::path dir = config.out;
  fs::create_directories(dir / "checkpoints");
  io::write_file(dir / "config.resolved", serialize_config(config));

  std::ofstream metrics(dir / "metrics.csv", std::ios::binary | std::ios::trunc);
  if (!metrics) throw Error("cannot write " + (dir / "metrics.csv").string());
  metrics << io::metrics_header() << '\n';

  const int every = config.checkpoint_every;
  auto observer = [&](const IterationArtifacts& a) {
    metrics << io::metrics_row_csv(*a.metrics) << '\n';
    if (every > 0 && (a.iteration + 1) % every == 0) {
      io::write_checkpoint(dir / "checkpoints" / fmt::format("iter_{}.json", a.iteration + 1), *a.policy,
                           a.iteration + 1);
    }
    if (!config.export_trees && !config.export_dot) return;
    for (std::size_t b = 0; b < a.tasks->size(); ++b) {
      const auto& t = (*a.tasks)[b];
      if (!t.tree) continue;
      const auto j = io::tree_to_json(*t.tree, t.valuation ? &*t.valuation : nullptr);
      const auto stem = dir / "trees" / fmt::format("iter_{}_task_{}", a.iteration, b);
      if (config.export_trees) io::write_file(stem.string() + ".json", j.dump(2) + "\n");
      if (config.export_dot) io::write_file(stem.string() + ".dot", io::tree_to_dot(j));
    }
  };

  const auto result = train(config.train, observer);
  metrics.close();
  io::write_checkpoint(dir / "checkpoints" / "final.json", result.policy, config.train.hybrid.iterations);
  if (config.export_grafts) {
    const std::vector<GraftTuple> tuples(result.grafts.tuples().begin(), result.grafts.tuples().end());
    io::write_file(dir / "grafts.jsonl", io::grafts_to_jsonl(tuples));
  }

  RunSummary s;
  s.final_success_rate = result.final_eval.success_rate;
  s.final_mean_reward = result.final_eval.mean_reward;
  s.iterations = static_cast<int>(result.metrics.size());
  if (!result.metrics.empty()) {
    double sum = 0.0;
    for (const auto& r : result.metrics) sum += r.p_div;
    s.mean_p_div = sum / static_cast<double>(result.metrics.size());
  }
  s.spread_slope = spread_slope(result.spread_trace);

  json summary = {{"backend", to_string(config.train.backend)},
                  {"seed", config.train.seed},
                  {"iterations", s.iterations},
                  {"final_success_rate", s.final_success_rate},
                  {"final_mean_reward", s.final_mean_reward},
                  {"mean_p_div", s.mean_p_div},
                  {"graft_buffer_size", result.grafts.size()},
                  {"policy_digest", io::checkpoint_digest(result.policy)}};
  summary["spread_slope_last_half"] = s.spread_slope ? json(*s.spread_slope) : json(nullptr);
  io::write_file(dir / "summary.json", summary.dump(2) + "\n");

  log << fmt::format("{} seed {}: final success_rate {:.4f}, mean_reward {:.4f} over {} episodes -> {}\n",
                     to_string(config.train.backend), config.train.seed, result.final_eval.success_rate,
                     result.final_eval.mean_reward, result.final_eval.episodes, dir.string());
  return s;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return {m, xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0};
}

}  // namespace

std::vector<CompareRow> run_compare(const RunConfig& config, const std::vector<std::uint64_t>& seeds,
                                    std::ostream& out) {
  if (seeds.size() < 2) throw ConfigError("compare needs at least two seeds");
  std::vector<CompareRow> rows;
  const fs::path base = config.out;
  for (const auto backend : {AdvantageBackend::Grpo, AdvantageBackend::Tstar}) {
    for (const auto seed : seeds) {
      RunConfig c = config;
      c.train.backend = backend;
      c.train.seed = seed;
      c.out = (base / fmt::format("{}_seed{}", to_string(backend), seed)).string();
      rows.push_back({backend, seed, run_training(c, out)});
    }
  }

  std::string csv = "backend,seed,final_success_rate,spread_slope_last_half\n";
  for (const auto& r : rows) {
    csv += fmt::format("{},{},{},{}\n", to_string(r.backend), r.seed, r.summary.final_success_rate,
                       r.summary.spread_slope ? fmt::format("{}", *r.summary.spread_slope) : std::string("nan"));
  }
  io::write_file(base / "summary.csv", csv);

  for (const auto backend : {AdvantageBackend::Grpo, AdvantageBackend::Tstar}) {
    std::vector<double> xs;
    for (const auto& r : rows) {
      if (r.backend == backend) xs.push_back(r.summary.final_success_rate);
    }
    const auto [m, sd] = mean_std(xs);
    out << fmt::format("{}: final_success_rate {:.4f} ± {:.4f} (n={})\n", to_string(backend), m, sd, xs.size());
  }
  return rows;
}

namespace {

// Flags shared by every subcommand that resolves a RunConfig.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::pair<std::string, CLI::Option*>> overrides;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "config file (key = value lines)");
    const std::vector<std::pair<std::string, std::string>> flags = {
        {"--seed", "seed"},       {"--out", "out"},         {"--lambda", "lambda"},
        {"--delta", "delta"},     {"--eps-kl", "eps_kl"},   {"--gamma", "gamma"},
        {"--m", "m"},             {"--iterations", "iterations"}, {"--backend", "backend"},
        {"--kl-mode", "kl_mode"}, {"--rectifier", "rectifier"},   {"--env", "env"}};
    for (const auto& [flag, key] : flags) {
      auto* opt = app->add_option(flag, values[key], "override " + key);
      overrides.emplace_back(key, opt);
    }
    app->add_option("--set", sets, "override any key: --set key=value");
  }

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    apply_env_overrides(c);
    for (const auto& [key, opt] : overrides) {
      if (opt->count() > 0) set_config_value(c, key, values.at(key));
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      set_config_value(c, s.substr(0, eq), s.substr(eq + 1));
    }
    validate(c);
    return c;
  }
};

void bench(const RunConfig& base, int iterations, std::ostream& out) {
  struct Phases {
    double v[5] = {0, 0, 0, 0, 0};
    double total() const { return v[0] + v[1] + v[2] + v[3] + v[4]; }
  };
  auto measure = [&](AdvantageBackend backend) {
    TrainConfig c = base.train;
    c.backend = backend;
    c.hybrid.iterations = iterations;
    Phases p;
    for (const auto& r : train(c).metrics) {
      p.v[0] += r.wall_ms_rollout;
      p.v[1] += r.wall_ms_tree;
      p.v[2] += r.wall_ms_valuation;
      p.v[3] += r.wall_ms_graft;
      p.v[4] += r.wall_ms_update;
    }
    return p;
  };
  const auto grpo = measure(AdvantageBackend::Grpo);
  const auto tstar = measure(AdvantageBackend::Tstar);
  const char* names[5] = {"rollout", "tree", "valuation", "graft", "update"};
  out << fmt::format("{:<10} {:>12} {:>12}\n", "phase", "grpo_ms", "tstar_ms");
  for (int i = 0; i < 5; ++i) out << fmt::format("{:<10} {:>12.3f} {:>12.3f}\n", names[i], grpo.v[i], tstar.v[i]);
  out << fmt::format("{:<10} {:>12.3f} {:>12.3f}\n", "total", grpo.total(), tstar.total());
  const double overhead = grpo.total() > 0 ? (tstar.total() - grpo.total()) / grpo.total() : 0.0;
  out << fmt::format("overhead {:.1f}%\n", 100.0 * overhead);
}

int guarded(std::ostream& err, const std::function<int()>& body, bool input_errors_are_usage) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return input_errors_are_usage ? kUsageError : kRuntimeFailure;
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << '\n';
    return input_errors_are_usage ? kUsageError : kRuntimeFailure;
  } catch (const EmptyGroup& e) {
    err << "error: " << e.what() << '\n';
    return input_errors_are_usage ? kUsageError : kRuntimeFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"cognitive-tree credit assignment simulator", "ctree"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "run the training loop and write a run directory");
  ConfigFlags train_flags;
  train_flags.attach(train_cmd);

  auto* tree_cmd = app.add_subcommand("tree", "build or export cognitive trees");
  tree_cmd->require_subcommand(1);
  auto* tree_build = tree_cmd->add_subcommand("build", "trajectory JSONL -> tree JSON");
  std::string tb_input;
  std::string tb_output;
  double tb_gamma = 1.0;
  double tb_delta = kDefaultDelta;
  bool tb_check = false;
  tree_build->add_option("--input,-i", tb_input, "trajectory JSONL")->required();
  tree_build->add_option("--out,-o", tb_output, "output path (default stdout)");
  tree_build->add_option("--gamma", tb_gamma);
  tree_build->add_option("--delta", tb_delta);
  tree_build->add_flag("--check-oracle", tb_check, "fail unless Q equals the mean member reward (gamma = 1)");
  auto* tree_export = tree_cmd->add_subcommand("export", "tree JSON -> DOT");
  std::string te_input;
  std::string te_output;
  tree_export->add_option("--input,-i", te_input, "tree JSON")->required();
  tree_export->add_option("--out,-o", te_output, "output path (default stdout)");

  auto* graft_cmd = app.add_subcommand("graft", "trajectory JSONL -> graft JSONL");
  std::string g_input;
  std::string g_output;
  std::string g_rectifier = "oracle";
  double g_gamma = 1.0;
  double g_delta = kDefaultDelta;
  graft_cmd->add_option("--input,-i", g_input, "trajectory JSONL")->required();
  graft_cmd->add_option("--out,-o", g_output, "output path (default stdout)");
  graft_cmd->add_option("--rectifier", g_rectifier);
  graft_cmd->add_option("--gamma", g_gamma);
  graft_cmd->add_option("--delta", g_delta);

  auto* compare_cmd = app.add_subcommand("compare", "train grpo and tstar over several seeds");
  ConfigFlags compare_flags;
  compare_flags.attach(compare_cmd);
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  compare_cmd->add_option("--seeds", seeds, "seed list")->delimiter(',');

  auto* bench_cmd = app.add_subcommand("bench", "time each pipeline phase");
  ConfigFlags bench_flags;
  bench_flags.attach(bench_cmd);
  int bench_iterations = 5;
  bench_cmd->add_option("--bench-iterations", bench_iterations, "iterations per backend");

  auto* eval_cmd = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  ConfigFlags eval_flags;
  eval_flags.attach(eval_cmd);
  std::string checkpoint;
  int episodes = 0;
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--episodes", episodes, "default: one per task");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  if (train_cmd->parsed()) {
    return guarded(err, [&] {
      const auto config = train_flags.resolve();
      run_training(config, out);
      return kOk;
    }, true);
  }
  if (tree_build->parsed()) {
    return guarded(err, [&] {
      const auto ingested = io::ingest_tree(tb_input);
      const auto valuation = evaluate_tree(ingested.tree, ingested.group, tb_gamma, tb_delta);
      if (tb_check) {
        double worst = 0.0;
        for (std::size_t v = 0; v < ingested.tree.nodes.size(); ++v) {
          worst = std::max(worst, std::abs(valuation.q[v] - oracle_node_value(ingested.tree, static_cast<int>(v))));
        }
        err << fmt::format("max |Q - oracle| = {}\n", worst);
        if (worst != 0.0) return static_cast<int>(kRuntimeFailure);
      }
      const auto text = io::tree_to_json(ingested.tree, &valuation).dump(2) + "\n";
      if (tb_output.empty()) out << text;
      else io::write_file(tb_output, text);
      return static_cast<int>(kOk);
    }, true);
  }
  if (tree_export->parsed()) {
    return guarded(err, [&] {
      json j;
      try {
        j = io::read_json(te_input);
      } catch (const json::exception& e) {
        throw ParseError(0, e.what());
      }
      const auto dot = io::tree_to_dot(j);
      if (te_output.empty()) out << dot;
      else io::write_file(te_output, dot);
      return kOk;
    }, true);
  }
  if (graft_cmd->parsed()) {
    return guarded(err, [&] {
      Rectifier rectifier;
      try {
        rectifier.mode = rectifier_mode_from_string(g_rectifier);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
      const auto ingested = io::ingest_tree(g_input);
      const auto valuation = evaluate_tree(ingested.tree, ingested.group, g_gamma, g_delta);
      const auto dataset = build_graft_dataset(ingested.tree, valuation, rectifier, ingested.group.task, 0);
      const auto text = io::grafts_to_jsonl(dataset.tuples);
      if (g_output.empty()) out << text;
      else io::write_file(g_output, text);
      err << fmt::format("{} divergence points, {} tuples, {} degenerate pairs skipped\n",
                         dataset.stats.divergence_points, dataset.stats.emitted, dataset.stats.degenerate_skipped);
      return kOk;
    }, true);
  }
  if (compare_cmd->parsed()) {
    return guarded(err, [&] {
      run_compare(compare_flags.resolve(), seeds, out);
      return kOk;
    }, true);
  }
  if (bench_cmd->parsed()) {
    return guarded(err, [&] {
      bench(bench_flags.resolve(), bench_iterations, out);
      return kOk;
    }, true);
  }
  if (eval_cmd->parsed()) {
    return guarded(err, [&] {
      const auto config = eval_flags.resolve();
      PolicyParams policy;
      try {
        policy = io::read_checkpoint(checkpoint);
      } catch (const json::exception& e) {
        throw ParseError(0, e.what());
      }
      if (policy.env_kind != config.train.env_kind || policy.vocab_size != config.train.vocab_size()) {
        throw ConfigError("checkpoint does not match the configured environment");
      }
      const auto tasks = config.train.tasks();
      const int n = episodes > 0 ? episodes : static_cast<int>(tasks.size());
      const auto r = evaluate(policy, tasks, n, config.train.seed);
      out << fmt::format("success_rate {:.4f} mean_reward {:.4f} mean_steps {:.2f} episodes {}\n", r.success_rate,
                         r.mean_reward, r.mean_steps, r.episodes);
      return kOk;
    }, true);
  }
  return kUsageError;
}

}  // namespace ctree::cli
