// One PASS/FAIL line per criterion. Usage: acceptance [ids...] [--known-failure id]...
// Exit status counts failures outside the known-failure list.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "ctree/cli.hpp"
#include "ctree/config.hpp"
#include "ctree/io.hpp"
#include "ctree/optim.hpp"
#include "support.hpp"

using namespace ctree;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kIdentityTol = 1e-12;
constexpr double kVarianceRelTol = 0.15;
constexpr int kVarianceGroups = 2000;
constexpr int kVarianceM = 64;
constexpr double kMcSigmas = 3.0;
constexpr int kMcDraws = 10000;
constexpr double kFdStep = 1e-5;
constexpr double kFdRelTol = 1e-6;
constexpr double kLn2Tol = 1e-12;
constexpr int kSurgicalSteps = 50;
constexpr int kCompareSeeds = 5;
constexpr int kSlopeSeedsRequired = 4;

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // 0: no runtime bound
  std::function<Verdict()> body;
};

TaskSpec synth(int id, int vocab = kDefaultSynthVocab) {
  TaskSpec t;
  t.instance_id = id;
  t.synth_vocab = vocab;
  return t;
}

// Uniform probe, then random rows at every visited context.
PolicyParams randomized_policy(const TaskSpec& task, Rng& rng, double scale) {
  PolicyParams p(task.env_kind, static_cast<int>(decision_vocabulary(task.env_kind, task.synth_vocab).size()));
  const auto probe = sample_group(p, task, 8, rng.next_u64());
  for (const auto& tr : probe.trajectories) {
    for (const auto& s : tr.steps) {
      for (auto& x : p.mutable_row(s.step.context.context_id)) x = scale * (2.0 * rng.uniform() - 1.0);
    }
  }
  return p;
}

double variance(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size());
}

// ---------------------------------------------------------------------------

Verdict lemma_identity() {
  double worst_q = 0.0, worst_a = 0.0;
  std::size_t nodes = 0;
  for (int g = 0; g < 100; ++g) {
    Rng rng(derive_seed(101, static_cast<std::uint64_t>(g)));
    const auto task = synth(g % kSynthInstanceCount);
    const auto p = randomized_policy(task, rng, 2.0);
    const auto group = sample_group(p, task, 8, rng.next_u64());
    const auto tree = build_tree(group, &p, kDefaultEpsKl, KlMode::exact());
    const auto q = qtree_backup(tree, 1.0);
    const auto adv = tree_advantage(tree, q, group);
    const auto grpo = grpo_advantage(group);
    for (const auto& n : tree.nodes) {
      const auto v = static_cast<std::size_t>(n.node_id);
      worst_q = std::max(worst_q, std::abs(q[v] - oracle_node_value(tree, n.node_id)));
      double mean = 0.0;
      for (int i : n.traj_set) mean += grpo[static_cast<std::size_t>(i)];
      mean /= n.k();
      worst_a = std::max(worst_a, std::abs(adv[v] - mean));
      ++nodes;
    }
  }
  return {worst_q <= kIdentityTol && worst_a <= kIdentityTol,
          fmt::format("{} nodes in 100 groups, max |Q - oracle| = {:.3g}, max |A_tree - mean A_grpo| = {:.3g}", nodes,
                      worst_q, worst_a)};
}

// ---------------------------------------------------------------------------

struct SymmetricPair {
  int instance = -1;
  int a = -1, b = -1;
};

std::uint32_t swap_bits(std::uint32_t m, int a, int b) {
  const bool ba = m & (1u << a), bb = m & (1u << b);
  m &= ~((1u << a) | (1u << b));
  if (ba) m |= 1u << b;
  if (bb) m |= 1u << a;
  return m;
}

// An instance whose success family is invariant under swapping items a and b,
// with successes reachable through both.
SymmetricPair find_symmetric_pair() {
  for (int id = 0; id < kSynthInstanceCount; ++id) {
    const auto inst = synth_instance(synth(id));
    for (int a = 0; a < inst.items; ++a) {
      for (int b = a + 1; b < inst.items; ++b) {
        bool invariant = true, reachable = false;
        for (auto m : inst.success_sets) {
          invariant = invariant && inst.succeeds(swap_bits(m, a, b));
          reachable = reachable || (m & (1u << a));
        }
        if (invariant && reachable) return {id, a, b};
      }
    }
  }
  return {};
}

struct VarianceResult {
  double ratio = 0.0;
  int accepted = 0;
  int sampled = 0;
};

// Frozen policy: at the root, item a with probability k/M and b otherwise;
// uniform elsewhere. Rewards are then exchangeable across the group.
VarianceResult variance_ratio(const SymmetricPair& sp, int m, int k, int target_groups, std::uint64_t seed) {
  const auto task = synth(sp.instance);
  PolicyParams p(EnvKind::SynthBranch, kDefaultSynthVocab);
  const auto root = reset(task);
  auto& row = p.mutable_row(root.context_id);
  std::fill(row.begin(), row.end(), -60.0);
  row[static_cast<std::size_t>(sp.a)] = std::log(static_cast<double>(k) / m);
  row[static_cast<std::size_t>(sp.b)] = std::log(1.0 - static_cast<double>(k) / m);

  VarianceResult r;
  std::vector<double> tree_adv, member_adv;
  for (std::uint64_t i = 0; r.accepted < target_groups; ++i) {
    ++r.sampled;
    const auto g = sample_group(p, task, m, derive_seed(seed, static_cast<std::uint64_t>(k), i));
    int members = 0;
    for (const auto& t : g.trajectories) members += t.steps.front().step.decision.decision_id == sp.a ? 1 : 0;
    if (members != k) continue;
    const auto tree = build_tree(g, &p, kDefaultEpsKl, KlMode::exact());
    const auto val = evaluate_tree(tree, g, 1.0, kDefaultDelta);
    const auto grpo = grpo_advantage(g);
    for (int c : tree.children(0)) {
      const auto& node = tree.nodes[static_cast<std::size_t>(c)];
      if (node.decision_into_node.decision_id != sp.a) continue;
      if (node.k() != k) throw Error("designated node split unexpectedly");
      tree_adv.push_back(val.advantage[static_cast<std::size_t>(c)]);
      for (int t : node.traj_set) member_adv.push_back(grpo[static_cast<std::size_t>(t)]);
    }
    ++r.accepted;
  }
  r.ratio = variance(tree_adv) / variance(member_adv);
  return r;
}

Verdict variance_reduction() {
  const auto sp = find_symmetric_pair();
  if (sp.instance < 0) return {false, "no SynthBranch instance with a swap-symmetric success family"};
  bool pass = true;
  std::string detail = fmt::format("instance {} items ({},{}), M={}, {} groups per k:", sp.instance, sp.a, sp.b,
                                   kVarianceM, kVarianceGroups);
  for (int k : {2, 4}) {
    const auto r = variance_ratio(sp, kVarianceM, k, kVarianceGroups, 7);
    const double target = 1.0 / k;
    const bool ok = std::abs(r.ratio / target - 1.0) <= kVarianceRelTol;
    pass = pass && ok;
    const double finite_m = static_cast<double>(kVarianceM - k) / (k * (kVarianceM - 1.0));
    detail += fmt::format(" k={} ratio {:.4f} (target {:.4f}, finite-M {:.4f}, {} sampled){}", k, r.ratio, target,
                          finite_m, r.sampled, ok ? "" : " OUT");
  }
  // Informational: at M=8 the within-group correlation pulls the ratio to (M-k)/(k(M-1)).
  const auto m8 = variance_ratio(sp, 8, 4, 500, 11);
  detail += fmt::format("; info M=8 k=4 ratio {:.4f} vs (M-k)/(k(M-1)) = {:.4f}", m8.ratio, 4.0 / 28.0);
  return {pass, detail};
}

// ---------------------------------------------------------------------------

Verdict mc_kl_estimator() {
  Rng rng(303);
  int inside = 0;
  double worst_sigmas = 0.0;
  for (int pair = 0; pair < 20; ++pair) {
    const int vocab = 3 + static_cast<int>(rng.below(6));
    const auto p = testing::random_policy(EnvKind::SynthBranch, vocab, {1, 2}, rng, 1.5);
    const double exact = exact_kl(p, ContextId{1}, ContextId{2});
    // Standard error from the exact distribution of the log-ratio.
    const auto pa = action_distribution(p, ContextId{1});
    const auto pb = action_distribution(p, ContextId{2});
    double second = 0.0;
    for (std::size_t d = 0; d < pa.size(); ++d) {
      const double lr = std::log(pa[d] / pb[d]);
      second += pa[d] * lr * lr;
    }
    const double se = std::sqrt((second - exact * exact) / kMcDraws);
    Rng draws(derive_seed(303, static_cast<std::uint64_t>(pair)));
    const double est = mc_kl(p, ContextId{1}, ContextId{2}, kMcDraws, draws);
    const double sigmas = std::abs(est - exact) / se;
    worst_sigmas = std::max(worst_sigmas, sigmas);
    inside += sigmas <= kMcSigmas ? 1 : 0;
  }
  return {inside == 20, fmt::format("{}/20 pairs within {} SE, worst {:.2f} SE, K={}", inside, kMcSigmas, worst_sigmas,
                                    kMcDraws)};
}

// ---------------------------------------------------------------------------

Verdict gradient_check() {
  constexpr int kVocab = 18;
  Rng rng(404);
  const HybridConfig hc;
  std::vector<GroupSample> groups;
  PolicyParams policy(EnvKind::SynthBranch, kVocab);
  for (int t = 0; t < 3; ++t) {
    const auto task = synth(t, kVocab);
    const auto p = randomized_policy(task, rng, 1.0);
    for (const auto& [ctx, row] : p.logits) policy.logits[ctx] = row;
  }
  for (int t = 0; t < 3; ++t) groups.push_back(sample_group(policy, synth(t, kVocab), 8, rng.next_u64()));

  std::vector<ContextId> visited;
  for (const auto& g : groups) {
    for (const auto& tr : g.trajectories) {
      for (const auto& s : tr.steps) visited.push_back(s.step.context.context_id);
    }
  }
  std::sort(visited.begin(), visited.end());
  visited.erase(std::unique(visited.begin(), visited.end()), visited.end());
  if (visited.size() < 10) return {false, "fewer than 10 visited states"};
  std::vector<ContextId> states;
  for (int i = 0; i < 10; ++i) {
    const auto j = rng.below(visited.size());
    states.push_back(visited[j]);
    visited.erase(visited.begin() + static_cast<std::ptrdiff_t>(j));
  }

  std::vector<GroupTerm> terms;
  for (const auto& g : groups) {
    StepAdvantages adv;
    for (const auto& tr : g.trajectories) {
      adv.emplace_back();
      for (std::size_t s = 0; s < tr.steps.size(); ++s) adv.back().push_back(2.0 * rng.uniform() - 1.0);
    }
    terms.push_back({&g, std::move(adv)});
  }
  // Grafts at half of the states; the reference differs from the policy.
  std::vector<GraftTuple> tuples;
  PolicyParams ref = policy;
  for (int i = 0; i < 5; ++i) {
    GraftTuple t;
    t.context.context_id = states[static_cast<std::size_t>(i)];
    const int r = static_cast<int>(rng.below(kVocab));
    t.z_rect = Decision{r, "r", true};
    t.z_neg = Decision{(r + 1 + static_cast<int>(rng.below(kVocab - 1))) % kVocab, "n", true};
    tuples.push_back(t);
    for (auto& x : ref.mutable_row(t.context.context_id)) x += 0.5 * (2.0 * rng.uniform() - 1.0);
  }
  // Small move away from the sampling policy keeps every ratio inside the clip range.
  PolicyParams theta = policy;
  for (auto& [ctx, row] : theta.logits) {
    for (auto& x : row) x += 0.02 * (2.0 * rng.uniform() - 1.0);
  }

  const auto analytic = hybrid_loss_grad(theta, ref, terms, tuples, hc);
  double worst = 0.0;
  int checked = 0;
  for (int c = 0; c < 200; ++c) {
    const ContextId ctx = states[rng.below(states.size())];
    const int d = static_cast<int>(rng.below(kVocab));
    auto plus = theta, minus = theta;
    plus.mutable_row(ctx)[static_cast<std::size_t>(d)] += kFdStep;
    minus.mutable_row(ctx)[static_cast<std::size_t>(d)] -= kFdStep;
    const double fd = (hybrid_loss_grad(plus, ref, terms, tuples, hc).loss_total -
                       hybrid_loss_grad(minus, ref, terms, tuples, hc).loss_total) /
                      (2 * kFdStep);
    worst = std::max(worst, testing::rel_err(fd, analytic.grad.get(ctx, d)));
    ++checked;
  }
  return {worst < kFdRelTol, fmt::format("{} coordinates over 10 states (vocab {}), max relative error {:.3g}", checked,
                                         kVocab, worst)};
}

// ---------------------------------------------------------------------------

Verdict surgical_behavior() {
  Rng rng(505);
  const std::vector<ContextId> graft_ctx = {11, 12, 13, 14};
  const std::vector<ContextId> other_ctx = {21, 22, 23};
  std::vector<ContextId> all = graft_ctx;
  all.insert(all.end(), other_ctx.begin(), other_ctx.end());
  const auto start = testing::random_policy(EnvKind::SynthBranch, 6, all, rng);
  std::vector<GraftTuple> tuples;
  for (auto ctx : graft_ctx) {
    GraftTuple t;
    t.context.context_id = ctx;
    const int r = static_cast<int>(rng.below(6));
    t.z_rect = Decision{r, "r", true};
    t.z_neg = Decision{(r + 1 + static_cast<int>(rng.below(5))) % 6, "n", true};
    tuples.push_back(t);
  }
  const double beta = HybridConfig{}.beta;
  const double loss0 = surgical_loss_grad(start, start, tuples, beta).loss;
  const double ln2_err = std::abs(loss0 - std::log(2.0));

  PolicyParams p = start;
  std::vector<double> prev(tuples.size(), 0.0);
  bool increasing = true;
  for (int s = 0; s < kSurgicalSteps; ++s) {
    apply_gradient(p, surgical_loss_grad(p, start, tuples, beta).grad, 1.0);
    for (std::size_t i = 0; i < tuples.size(); ++i) {
      const double m = preference_margin(p, start, tuples[i].context.context_id, tuples[i].z_rect.decision_id,
                                         tuples[i].z_neg.decision_id);
      increasing = increasing && m > prev[i];
      prev[i] = m;
    }
  }
  bool masked = true;
  for (auto ctx : other_ctx) {
    const auto a = start.row(ctx), b = p.row(ctx);
    for (std::size_t d = 0; d < a.size(); ++d) masked = masked && std::bit_cast<std::uint64_t>(a[d]) == std::bit_cast<std::uint64_t>(b[d]);
  }
  const double min_margin = *std::min_element(prev.begin(), prev.end());
  return {increasing && masked && ln2_err <= kLn2Tol,
          fmt::format("margins strictly increasing over {} steps: {}, final min margin {:.4f}; |L(0) - ln2| = {:.3g}; "
                      "non-graft rows bit-identical: {}",
                      kSurgicalSteps, increasing, min_margin, ln2_err, masked)};
}

// ---------------------------------------------------------------------------

Verdict directional_improvement() {
  RunConfig config;  // defaults: SynthBranch, 160 iterations
  config.out = (fs::temp_directory_path() / "ctree_acceptance" / "compare").string();
  config.export_grafts = false;
  fs::remove_all(config.out);
  std::vector<std::uint64_t> seeds;
  for (int s = 1; s <= kCompareSeeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
  std::ostringstream log;
  const auto rows = cli::run_compare(config, seeds, log);

  double grpo = 0.0, tstar = 0.0;
  int non_increasing = 0;
  std::string slopes;
  for (const auto& r : rows) {
    if (r.backend == AdvantageBackend::Grpo) {
      grpo += r.summary.final_success_rate / kCompareSeeds;
      continue;
    }
    tstar += r.summary.final_success_rate / kCompareSeeds;
    const double slope = r.summary.spread_slope.value_or(0.0);
    non_increasing += slope <= 0.0 ? 1 : 0;
    slopes += fmt::format("{}{:+.2e}", slopes.empty() ? "" : ",", slope);
  }
  const bool success_ok = tstar >= grpo;
  const bool slope_ok = non_increasing >= kSlopeSeedsRequired;
  return {success_ok && slope_ok,
          fmt::format("mean final success tstar {:.4f} vs grpo {:.4f} ({}); spread slopes over last 50% [{}], "
                      "non-increasing in {}/{} seeds (need {})",
                      tstar, grpo, success_ok ? "ok" : "worse", slopes, non_increasing, kCompareSeeds,
                      kSlopeSeedsRequired)};
}

// ---------------------------------------------------------------------------

Verdict degenerate_groups() {
  int checked = 0;
  std::string failure;
  for (int seed = 0; seed < 50 && failure.empty(); ++seed) {
    Rng rng(derive_seed(707, static_cast<std::uint64_t>(seed)));
    const int id = seed % kSynthInstanceCount;
    const auto inst = synth_instance(synth(id));

    // All failure: a one-step horizon truncates every trajectory.
    auto short_task = synth(id);
    short_task.max_steps = 1;
    const auto fail_policy = randomized_policy(short_task, rng, 2.0);
    const auto fail_group = sample_group(fail_policy, short_task, 8, rng.next_u64());

    // All success: a policy pinned to a random success set.
    const auto set = inst.success_sets[rng.below(inst.success_sets.size())];
    std::vector<int> path;
    for (int a = 0; a < inst.items; ++a) {
      if (set & (1u << a)) path.push_back(a);
    }
    for (std::size_t i = path.size(); i > 1; --i) std::swap(path[i - 1], path[rng.below(i)]);
    auto win_policy = randomized_policy(synth(id), rng, 1.0);
    for (const auto& s : testing::play(synth(id), path).steps) {
      win_policy.mutable_row(s.step.context.context_id)[static_cast<std::size_t>(s.step.decision.decision_id)] = 40.0;
    }
    const auto win_group = sample_group(win_policy, synth(id), 8, rng.next_u64());

    for (const auto* g : {&fail_group, &win_group}) {
      const auto& policy = g == &fail_group ? fail_policy : win_policy;
      const double r0 = g->trajectories.front().reward;
      for (const auto& t : g->trajectories) {
        if (t.reward != r0) failure = fmt::format("seed {}: group not degenerate", seed);
      }
      const auto tree = build_tree(*g, &policy, kDefaultEpsKl, KlMode::exact());
      const auto val = evaluate_tree(tree, *g, 1.0, kDefaultDelta);
      for (double a : val.advantage) {
        if (a != 0.0) failure = fmt::format("seed {}: nonzero tree advantage", seed);
      }
      for (double a : grpo_advantage(*g)) {
        if (a != 0.0) failure = fmt::format("seed {}: nonzero GRPO advantage", seed);
      }
      if (!val.divergence.empty()) failure = fmt::format("seed {}: divergence set not empty", seed);
      const auto ds = build_graft_dataset(tree, val, Rectifier{}, g->task, 0);
      if (!ds.tuples.empty()) failure = fmt::format("seed {}: graft tuples emitted", seed);
      const auto surg = surgical_loss_grad(policy, policy, ds.tuples, 0.1);
      if (surg.loss != 0.0 || !surg.grad.entries().empty()) failure = fmt::format("seed {}: surgical term active", seed);
      // A full hybrid step leaves the policy untouched.
      const std::vector<GroupTerm> terms = {{g, broadcast_node_advantages(tree, val.advantage)}};
      const auto step = hybrid_step(policy, policy, terms, ds.tuples, HybridConfig{});
      if (step.policy.logits != policy.logits) failure = fmt::format("seed {}: policy moved", seed);
      ++checked;
    }
  }
  return {failure.empty(), failure.empty() ? fmt::format("{} degenerate groups (50 seeds, all-success and all-failure): "
                                                         "zero advantages, empty divergence, no-op surgical term",
                                                         checked)
                                           : failure};
}

// ---------------------------------------------------------------------------

struct RunDigests {
  std::string checkpoint;
  std::string metrics;
  std::vector<std::string> trees;
};

RunDigests digests_of(const TrainConfig& config) {
  RunDigests d;
  const auto result = train(config, [&](const IterationArtifacts& a) {
    for (const auto& t : *a.tasks) {
      if (t.tree) d.trees.push_back(io::tree_digest(*t.tree, t.valuation ? &*t.valuation : nullptr));
    }
  });
  d.checkpoint = io::checkpoint_digest(result.policy);
  d.metrics = io::metrics_digest(result.metrics);
  return d;
}

// Nodes, edges and divergence points; context feature strings are not part of
// the trajectory log.
nlohmann::json structural_json(nlohmann::json j) {
  for (auto& n : j.at("nodes")) n.at("context").erase("features");
  return {j.at("nodes"), j.at("edges"), j.at("divergence")};
}

Verdict determinism_round_trip() {
  RunConfig base;
  base.train.hybrid.iterations = 12;
  base.train.hybrid.batch_tasks = 8;
  // Two runs from the same resolved config text.
  const auto resolved = serialize_config(base);
  const auto a = digests_of(parse_config(resolved).train);
  const auto b = digests_of(parse_config(resolved).train);
  const bool same = a.checkpoint == b.checkpoint && a.metrics == b.metrics && a.trees == b.trees;

  // Export -> ingest on fresh groups and on the trained policy's checkpoint.
  bool round = true;
  Rng rng(808);
  PolicyParams p = randomized_policy(synth(3), rng, 2.0);
  for (int i = 0; i < 20 && round; ++i) {
    const auto g = sample_group(p, synth(i), 8, rng.next_u64());
    const auto jsonl = io::trajectories_to_jsonl(g);
    const auto back = io::parse_trajectories_jsonl(jsonl);
    round = round && io::trajectories_digest(back) == io::trajectories_digest(g);
    const auto tree = build_tree(g, &p, kDefaultEpsKl, KlMode::exact());
    const auto val = evaluate_tree(tree, g, 1.0, kDefaultDelta);
    const auto ingested = io::ingest_tree_text(jsonl);
    // SynthBranch merges are exact, so the offline rebuild matches.
    const auto ingested_val = evaluate_tree(ingested.tree, ingested.group, 1.0, kDefaultDelta);
    round = round && structural_json(io::tree_to_json(ingested.tree, &ingested_val)) ==
                         structural_json(io::tree_to_json(tree, &val));
    const auto loaded = io::tree_from_json(nlohmann::json::parse(io::tree_to_json(tree, &val).dump()));
    round = round && io::tree_digest(loaded.tree, &val) == io::tree_digest(tree, &val);
    const auto ds = build_graft_dataset(tree, val, Rectifier{RectifierMode::Template}, g.task, i);
    round = round && io::grafts_digest(io::parse_grafts_jsonl(io::grafts_to_jsonl(ds.tuples))) == io::grafts_digest(ds.tuples);
  }
  const auto ckpt = io::checkpoint_from_json(nlohmann::json::parse(io::checkpoint_to_json(p, 3).dump()));
  round = round && io::checkpoint_digest(ckpt) == io::checkpoint_digest(p);

  return {same && round, fmt::format("repeat runs identical (checkpoint {}, metrics {}, {} tree digests): {}; "
                                     "trajectory/tree/graft/checkpoint round trips preserve digests: {}",
                                     a.checkpoint, a.metrics, a.trees.size(), same, round)};
}

// ---------------------------------------------------------------------------

Verdict merge_ratio_sanity() {
  bool exact = true;
  int cases = 0;
  for (int m : {2, 3, 4, 8, 16}) {
    for (const auto& path : std::vector<std::vector<int>>{{0, 1}, {4, 0, 5, 1}, {4, 4, 4, 0, 1, 2}}) {
      const auto task = synth(9);
      std::vector<Trajectory> ts;
      for (int i = 0; i < m; ++i) ts.push_back(testing::play(task, path, i));
      GroupSample g;
      g.task = task;
      g.trajectories = std::move(ts);
      update_reward_stats(g);
      const PolicyParams u(EnvKind::SynthBranch, kDefaultSynthVocab);
      const auto s = tree_stats(build_tree(g, &u, kDefaultEpsKl, KlMode::exact()));
      exact = exact && s.merge_ratio == 1.0 - 1.0 / m;
      ++cases;
    }
  }

  const std::vector<double> grid = {4.0, 1.0, 0.25, 0.05, 0.01};
  Rng rng(909);
  int monotone = 0, strict = 0;
  const int groups = 30;
  for (int i = 0; i < groups; ++i) {
    TaskSpec task;
    task.env_kind = EnvKind::SokobanMini;
    task.instance_id = i % sokoban_instance_count();
    const auto p = randomized_policy(task, rng, 2.0);
    const auto g = sample_group(PolicyParams(EnvKind::SokobanMini, 5), task, 8, rng.next_u64());
    std::vector<double> ratios;
    for (double eps : grid) ratios.push_back(tree_stats(build_tree(g, &p, eps, KlMode::exact())).merge_ratio);
    bool ok = true;
    for (std::size_t k = 1; k < ratios.size(); ++k) ok = ok && ratios[k] <= ratios[k - 1];
    monotone += ok ? 1 : 0;
    strict += ratios.back() < ratios.front() ? 1 : 0;
  }
  return {exact && monotone == groups,
          fmt::format("merge_ratio == 1 - 1/M exactly in {}/{} identical-trajectory cases: {}; non-increasing over "
                      "eps_kl grid {{4,1,0.25,0.05,0.01}} in {}/{} Sokoban groups ({} with a strict drop)",
                      exact ? cases : 0, cases, exact, monotone, groups, strict)};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only, known;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--known-failure" && i + 1 < argc) {
      known.push_back(std::atoi(argv[++i]));
    } else {
      only.push_back(std::atoi(argv[i]));
    }
  }

  const std::vector<Criterion> criteria = {
      {1, "lemma-identity", 10, lemma_identity},
      {2, "variance-reduction", 120, variance_reduction},
      {3, "mc-kl-estimator", 30, mc_kl_estimator},
      {4, "gradient-check", 60, gradient_check},
      {5, "surgical-behavior", 0, surgical_behavior},
      {6, "directional-improvement", 900, directional_improvement},
      {7, "degenerate-groups", 0, degenerate_groups},
      {8, "determinism-round-trip", 0, determinism_round_trip},
      {9, "merge-ratio-sanity", 0, merge_ratio_sanity},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.body();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s == 0 || secs < c.budget_s;
    const bool pass = v.pass && in_time;
    const bool is_known = std::find(known.begin(), known.end(), c.id) != known.end();
    failures += pass || is_known ? 0 : 1;
    const std::string budget = c.budget_s == 0 ? "" : fmt::format(", budget {:.0f} s", c.budget_s);
    std::cout << fmt::format("{} criterion {} {}: {} [{:.2f} s{}{}]{}", pass ? "PASS" : "FAIL", c.id, c.name, v.detail,
                             secs, budget, in_time ? "" : ", over budget",
                             !pass && is_known ? " (known failure, see README)" : "")
              << std::endl;
  }
  return failures;
}
