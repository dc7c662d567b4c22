#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctree/env.hpp"
#include "ctree/policy.hpp"

namespace ctree {

struct SampledStep {
  Step step;
  // log pi_old(decision | context) recorded when the decision was drawn.
  double logp_old = 0.0;
};

struct Trajectory {
  int traj_index = 0;
  std::vector<SampledStep> steps;
  double reward = 0.0;
  // Context reached after the last step. Ingested logs may only know its id.
  Context final_context;

  // Context reached after step t: the next step's context, or final_context.
  const Context& context_after(std::size_t t) const {
    return t + 1 < steps.size() ? steps[t + 1].step.context : final_context;
  }
  int length() const { return static_cast<int>(steps.size()); }
};

struct GroupSample {
  TaskSpec task;
  std::vector<Trajectory> trajectories;
  std::string policy_snapshot_id;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  // Set when the group came from an external log whose task id does not name
  // a built-in task.
  std::string external_task_id;

  std::string task_id() const { return external_task_id.empty() ? task.task_id() : external_task_id; }
  int size() const { return static_cast<int>(trajectories.size()); }
};

// Mean and population standard deviation of the trajectory rewards.
void update_reward_stats(GroupSample& group);

Trajectory sample_trajectory(const Environment& env, const PolicyParams& policy, int traj_index, Rng& rng);

// Trajectory i draws from the stream derive_seed(seed, Rollout, i), so the
// result is independent of the order in which trajectories are produced.
GroupSample sample_group(const PolicyParams& policy, const TaskSpec& task, int group_size, std::uint64_t seed);

std::vector<double> grpo_advantage(const GroupSample& group);

// Digest of the policy table, used as the snapshot identifier.
std::string policy_digest(const PolicyParams& policy);

}  // namespace ctree
