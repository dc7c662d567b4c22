#include "ctree/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include <fmt/format.h>

namespace ctree {

std::string to_string(AdvantageBackend backend) { return backend == AdvantageBackend::Grpo ? "grpo" : "tstar"; }

AdvantageBackend backend_from_string(const std::string& s) {
  if (s == "grpo") return AdvantageBackend::Grpo;
  if (s == "tstar") return AdvantageBackend::Tstar;
  throw ConfigError("unknown advantage backend '" + s + "' (expected grpo or tstar)");
}

std::vector<TaskSpec> TrainConfig::tasks() const {
  std::vector<TaskSpec> out;
  for (int i = instance_first; i <= instance_last; ++i) {
    TaskSpec t;
    t.env_kind = env_kind;
    t.instance_id = i;
    t.max_steps = max_steps;
    t.seed = instance_seed;
    t.synth_vocab = synth_vocab;
    out.push_back(t);
  }
  return out;
}

int TrainConfig::vocab_size() const { return static_cast<int>(decision_vocabulary(env_kind, synth_vocab).size()); }

StepAdvantages broadcast_trajectory_advantages(const GroupSample& group, const std::vector<double>& advantages) {
  StepAdvantages out;
  for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
    out.emplace_back(group.trajectories[i].steps.size(), advantages[i]);
  }
  return out;
}

StepAdvantages broadcast_node_advantages(const CognitiveTree& tree, const std::vector<double>& node_advantages) {
  StepAdvantages out;
  for (const auto& nodes : tree.step_nodes) {
    std::vector<double> row;
    row.reserve(nodes.size());
    for (int v : nodes) row.push_back(node_advantages[static_cast<std::size_t>(v)]);
    out.push_back(std::move(row));
  }
  return out;
}

LossGrad grpo_loss_grad(const PolicyParams& policy, const GroupSample& group, const StepAdvantages& advantages,
                        double clip_eps) {
  LossGrad out;
  std::size_t n = 0;
  for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
    const auto& traj = group.trajectories[i];
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      ++n;
      const double adv = advantages[i][t];
      if (adv == 0.0) continue;
      const auto& s = traj.steps[t];
      const ContextId ctx = s.step.context.context_id;
      const int d = s.step.decision.decision_id;
      const auto logp = log_softmax(policy.row(ctx));
      const double ratio = std::exp(logp[static_cast<std::size_t>(d)] - s.logp_old);
      const double unclipped = ratio * adv;
      const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv;
      out.loss -= std::min(unclipped, clipped);
      if (unclipped <= clipped) {
        // d(-ratio * A) = -A * ratio * grad log pi
        const double coef = -adv * ratio;
        for (std::size_t a = 0; a < logp.size(); ++a) {
          const double score = (static_cast<int>(a) == d ? 1.0 : 0.0) - std::exp(logp[a]);
          out.grad.add(ctx, static_cast<int>(a), coef * score);
        }
      }
    }
  }
  if (n > 0) {
    out.loss /= static_cast<double>(n);
    out.grad.scale(1.0 / static_cast<double>(n));
  }
  out.grad.prune();
  return out;
}

LossGrad grpo_batch_loss_grad(const PolicyParams& policy, std::span<const GroupTerm> terms, double clip_eps) {
  LossGrad out;
  if (terms.empty()) return out;
  const double w = 1.0 / static_cast<double>(terms.size());
  for (const auto& term : terms) {
    auto part = grpo_loss_grad(policy, *term.group, term.advantages, clip_eps);
    out.loss += w * part.loss;
    out.grad.add_scaled(part.grad, w);
  }
  out.grad.prune();
  return out;
}

double preference_margin(const PolicyParams& policy, const PolicyParams& ref, ContextId context, int z_rect, int z_neg) {
  const auto lp = log_softmax(policy.row(context));
  const auto lr = log_softmax(ref.row(context));
  const auto r = static_cast<std::size_t>(z_rect);
  const auto n = static_cast<std::size_t>(z_neg);
  return (lp[r] - lr[r]) - (lp[n] - lr[n]);
}

namespace {

// -log sigmoid(x)
double softplus_neg(double x) { return x >= 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

SurgicalLossGrad surgical_loss_grad(const PolicyParams& policy, const PolicyParams& ref,
                                    std::span<const GraftTuple> tuples, double beta) {
  SurgicalLossGrad out;
  if (tuples.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(tuples.size());
  for (const auto& t : tuples) {
    const ContextId ctx = t.context.context_id;
    const double margin = preference_margin(policy, ref, ctx, t.z_rect.decision_id, t.z_neg.decision_id);
    out.loss += softplus_neg(beta * margin) * inv_n;
    out.margin_mean += margin * inv_n;
    // grad margin = grad log pi(z_rect) - grad log pi(z_neg) = e_rect - e_neg;
    // the softmax terms cancel, so only two entries of the row move.
    const double coef = -beta * sigmoid(-beta * margin) * inv_n;
    out.grad.add(ctx, t.z_rect.decision_id, coef);
    out.grad.add(ctx, t.z_neg.decision_id, -coef);
  }
  out.grad.prune();
  return out;
}

LossReport hybrid_loss_grad(const PolicyParams& policy, const PolicyParams& ref, std::span<const GroupTerm> terms,
                            std::span<const GraftTuple> tuples, const HybridConfig& config) {
  LossReport r;
  auto grpo = grpo_batch_loss_grad(policy, terms, config.clip_eps);
  auto surg = surgical_loss_grad(policy, ref, tuples, config.beta);
  r.loss_grpo = grpo.loss;
  r.loss_surgical = surg.loss;
  r.loss_total = grpo.loss + config.lambda * surg.loss;
  r.margin_mean = surg.margin_mean;
  r.grad = std::move(grpo.grad);
  r.grad.add_scaled(surg.grad, config.lambda);
  r.grad.prune();
  return r;
}

HybridStepResult hybrid_step(const PolicyParams& policy, const PolicyParams& ref, std::span<const GroupTerm> terms,
                             std::span<const GraftTuple> tuples, const HybridConfig& config) {
  HybridStepResult out;
  out.report = hybrid_loss_grad(policy, ref, terms, tuples, config);
  out.policy = policy;
  apply_gradient(out.policy, out.report.grad, config.lr);
  out.ref = ema_update(ref, out.policy, config.alpha_ema);
  return out;
}

EvalResult evaluate(const PolicyParams& policy, std::span<const TaskSpec> tasks, int episodes, std::uint64_t) {
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  if (tasks.empty()) throw ConfigError("evaluation needs at least one task");
  EvalResult r;
  r.episodes = episodes;
  double successes = 0.0, reward = 0.0, steps = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const auto env = make_environment(tasks[static_cast<std::size_t>(e) % tasks.size()]);
    const auto& vocab = env->vocabulary();
    Context ctx = env->reset();
    for (;;) {
      const int d = greedy_decision(policy, ctx.context_id);
      StepResult s = env->step(ctx, vocab[static_cast<std::size_t>(d)]);
      steps += 1.0;
      ctx = std::move(s.next);
      if (s.terminal) {
        reward += s.reward;
        if (s.reward >= 1.0) successes += 1.0;
        break;
      }
    }
  }
  r.success_rate = successes / episodes;
  r.mean_reward = reward / episodes;
  r.mean_steps = steps / episodes;
  return r;
}

PolicyParams initial_policy(const TrainConfig& config) { return PolicyParams(config.env_kind, config.vocab_size()); }

TrainResult train(const TrainConfig& config, const IterationObserver& observer) {
  return train(config, initial_policy(config), observer);
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

TrainResult train(const TrainConfig& config, PolicyParams policy, const IterationObserver& observer) {
  const auto& hc = config.hybrid;
  if (hc.iterations < 0) throw ConfigError("iterations must be non-negative");
  if (hc.batch_tasks < 1) throw ConfigError("batch_tasks must be at least 1");
  const auto tasks = config.tasks();
  if (tasks.empty()) throw ConfigError("instance range is empty");

  TrainResult result;
  result.grafts = GraftBuffer(config.graft_cap);
  PolicyParams ref = policy;
  std::set<std::pair<ContextId, int>> anchors_seen;
  const Rectifier rectifier{config.rectifier};
  const bool tstar = config.backend == AdvantageBackend::Tstar;

  for (int iter = 0; iter < hc.iterations; ++iter) {
    try {
      MetricsRow row;
      row.iteration = iter;
      const PolicyParams snapshot = policy;
      Rng task_rng(derive_seed(config.seed, static_cast<std::uint64_t>(Stream::TaskSampling), static_cast<std::uint64_t>(iter)));

      std::vector<TaskArtifacts> arts(static_cast<std::size_t>(hc.batch_tasks));
      auto t0 = Clock::now();
      double reward_sum = 0.0;
      for (int b = 0; b < hc.batch_tasks; ++b) {
        auto& a = arts[static_cast<std::size_t>(b)];
        a.task = tasks[task_rng.below(tasks.size())];
        const auto group_seed = derive_seed(config.seed, static_cast<std::uint64_t>(Stream::Rollout),
                                            static_cast<std::uint64_t>(iter), static_cast<std::uint64_t>(b));
        a.group = sample_group(snapshot, a.task, hc.group_size, group_seed);
        reward_sum += a.group.mean_reward;
      }
      row.mean_reward = reward_sum / hc.batch_tasks;
      row.wall_ms_rollout = ms_since(t0);

      std::vector<GroupTerm> terms(arts.size());
      std::vector<GraftTuple> new_tuples;
      if (tstar) {
        t0 = Clock::now();
        for (std::size_t b = 0; b < arts.size(); ++b) {
          KlMode mode;
          mode.kind = config.kl_kind;
          mode.samples = hc.mc_samples;
          mode.seed = derive_seed(config.seed, static_cast<std::uint64_t>(Stream::MonteCarloKl), static_cast<std::uint64_t>(iter), b);
          arts[b].tree = build_tree(arts[b].group, &snapshot, hc.eps_kl, mode);
        }
        row.wall_ms_tree = ms_since(t0);

        t0 = Clock::now();
        std::vector<DivergencePoint> all_div;
        int internal = 0;
        double merge_sum = 0.0;
        for (auto& a : arts) {
          a.valuation = evaluate_tree(*a.tree, a.group, hc.gamma, hc.delta);
          all_div.insert(all_div.end(), a.valuation->divergence.begin(), a.valuation->divergence.end());
          for (std::size_t v = 0; v < a.tree->nodes.size(); ++v) internal += a.tree->is_leaf(static_cast<int>(v)) ? 0 : 1;
          merge_sum += tree_stats(*a.tree).merge_ratio;
        }
        const auto spread = mean_spread(all_div);
        result.spread_trace.record_mean(spread);
        row.mean_value_spread = spread.value_or(0.0);
        row.n_divergent = static_cast<int>(all_div.size());
        row.p_div = internal > 0 ? static_cast<double>(all_div.size()) / internal : 0.0;
        row.merge_ratio = merge_sum / static_cast<double>(arts.size());
        row.wall_ms_valuation = ms_since(t0);

        t0 = Clock::now();
        for (auto& a : arts) {
          a.grafts = build_graft_dataset(*a.tree, *a.valuation, rectifier, a.task, iter);
          new_tuples.insert(new_tuples.end(), a.grafts.tuples.begin(), a.grafts.tuples.end());
          result.grafts.insert(a.grafts);
        }
        std::size_t reused = 0;
        for (const auto& t : new_tuples) reused += anchors_seen.contains({t.context.context_id, t.z_rect.decision_id}) ? 1 : 0;
        for (const auto& t : new_tuples) anchors_seen.insert({t.context.context_id, t.z_rect.decision_id});
        row.graft_count = static_cast<int>(new_tuples.size());
        row.anchor_reuse = new_tuples.empty() ? 0.0 : static_cast<double>(reused) / new_tuples.size();
        row.wall_ms_graft = ms_since(t0);

        for (std::size_t b = 0; b < arts.size(); ++b) {
          terms[b].group = &arts[b].group;
          terms[b].advantages = broadcast_node_advantages(*arts[b].tree, arts[b].valuation->advantage);
        }
      } else {
        result.spread_trace.record_mean(std::nullopt);
        for (std::size_t b = 0; b < arts.size(); ++b) {
          terms[b].group = &arts[b].group;
          terms[b].advantages = broadcast_trajectory_advantages(arts[b].group, grpo_advantage(arts[b].group));
        }
      }

      t0 = Clock::now();
      const std::vector<GraftTuple> buffer(result.grafts.tuples().begin(), result.grafts.tuples().end());
      auto step = hybrid_step(policy, ref, terms, buffer, hc);
      policy = std::move(step.policy);
      ref = std::move(step.ref);
      row.loss_grpo = step.report.loss_grpo;
      row.loss_surgical = step.report.loss_surgical;
      row.wall_ms_update = ms_since(t0);

      row.success_rate = evaluate(policy, tasks, static_cast<int>(tasks.size())).success_rate;
      result.metrics.push_back(row);
      if (observer) observer({iter, &result.metrics.back(), &policy, &arts});
    } catch (const Error& e) {
      throw Error(fmt::format("iteration {}: {}", iter, e.what()));
    }
  }

  result.policy = std::move(policy);
  result.ref = std::move(ref);
  result.final_eval = evaluate(result.policy, tasks, static_cast<int>(tasks.size()));
  return result;
}

}  // namespace ctree
