#include "ctree/rollout.hpp"

#include <bit>
#include <cmath>

#include <fmt/format.h>

namespace ctree {

void update_reward_stats(GroupSample& group) {
  const auto m = static_cast<double>(group.trajectories.size());
  double sum = 0.0;
  for (const auto& t : group.trajectories) sum += t.reward;
  group.mean_reward = sum / m;
  double ss = 0.0;
  for (const auto& t : group.trajectories) ss += (t.reward - group.mean_reward) * (t.reward - group.mean_reward);
  group.std_reward = std::sqrt(ss / m);
}

Trajectory sample_trajectory(const Environment& env, const PolicyParams& policy, int traj_index, Rng& rng) {
  Trajectory traj;
  traj.traj_index = traj_index;
  const auto& vocab = env.vocabulary();
  Context ctx = env.reset();
  for (int t = 0;; ++t) {
    const auto logp = log_softmax(policy.row(ctx.context_id));
    std::vector<double> probs(logp.size());
    for (std::size_t a = 0; a < logp.size(); ++a) probs[a] = std::exp(logp[a]);
    const int d = rng.categorical(probs);
    const Decision& decision = vocab.at(static_cast<std::size_t>(d));
    StepResult r = env.step(ctx, decision);
    traj.steps.push_back({Step{t, ctx, decision, r.observation}, logp[static_cast<std::size_t>(d)]});
    ctx = std::move(r.next);
    if (r.terminal) {
      traj.reward = r.reward;
      break;
    }
  }
  traj.final_context = std::move(ctx);
  return traj;
}

GroupSample sample_group(const PolicyParams& policy, const TaskSpec& task, int group_size, std::uint64_t seed) {
  if (group_size < 2) throw ConfigError("group size M must be at least 2");
  const auto env = make_environment(task);
  if (static_cast<int>(env->vocabulary().size()) != policy.vocab_size) {
    throw SchemaError(fmt::format("policy vocabulary {} does not match environment vocabulary {}", policy.vocab_size,
                                  env->vocabulary().size()));
  }
  GroupSample group;
  group.task = task;
  group.policy_snapshot_id = policy_digest(policy);
  group.trajectories.reserve(static_cast<std::size_t>(group_size));
  for (int i = 0; i < group_size; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(Stream::Rollout), static_cast<std::uint64_t>(i)));
    group.trajectories.push_back(sample_trajectory(*env, policy, i, rng));
  }
  update_reward_stats(group);
  return group;
}

std::vector<double> grpo_advantage(const GroupSample& group) {
  std::vector<double> adv(group.trajectories.size(), 0.0);
  if (group.std_reward == 0.0) return adv;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    adv[i] = (group.trajectories[i].reward - group.mean_reward) / group.std_reward;
  }
  return adv;
}

std::string policy_digest(const PolicyParams& policy) {
  std::uint64_t h = fnv1a(to_string(policy.env_kind));
  h = fnv1a(fmt::format("|{}|{:a}", policy.vocab_size, policy.default_logit), h);
  for (const auto& [id, row] : policy.logits) {
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(&id), sizeof id), h);
    for (double x : row) {
      const auto bits = std::bit_cast<std::uint64_t>(x);
      h = fnv1a(std::string_view(reinterpret_cast<const char*>(&bits), sizeof bits), h);
    }
  }
  return to_hex(h);
}

}  // namespace ctree
