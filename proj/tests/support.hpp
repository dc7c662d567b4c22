#pragma once

// Fixtures shared by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "ctree/cogtree.hpp"
#include "ctree/env.hpp"
#include "ctree/policy.hpp"
#include "ctree/rollout.hpp"

namespace ctree::testing {

struct StepSpec {
  ContextId ctx;  // context the decision is taken in
  int decision;
  bool modifying = true;
};

// Hand-built trajectory over opaque context ids; labels are "d{id}".
inline Trajectory make_trajectory(int index, const std::vector<StepSpec>& steps, ContextId final_ctx,
                                  double reward) {
  Trajectory tr;
  tr.traj_index = index;
  tr.reward = reward;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    SampledStep s;
    s.step.t = static_cast<int>(t);
    s.step.context.context_id = steps[t].ctx;
    s.step.context.depth = static_cast<int>(t);
    s.step.decision = {steps[t].decision, fmt::format("d{}", steps[t].decision), steps[t].modifying};
    s.step.observation = "obs";
    tr.steps.push_back(s);
  }
  tr.final_context.context_id = final_ctx;
  tr.final_context.depth = static_cast<int>(steps.size());
  return tr;
}

inline GroupSample make_group(std::vector<Trajectory> trajectories, std::string id = "fixture/0") {
  GroupSample g;
  g.external_task_id = std::move(id);
  g.trajectories = std::move(trajectories);
  update_reward_stats(g);
  return g;
}

// Plays a fixed decision sequence in the real environment.
inline Trajectory play(const TaskSpec& task, const std::vector<int>& decisions, int index = 0,
                       const PolicyParams* policy = nullptr) {
  const auto env = make_environment(task);
  Trajectory tr;
  tr.traj_index = index;
  Context c = env->reset();
  for (std::size_t t = 0; t < decisions.size(); ++t) {
    const auto& d = env->vocabulary().at(static_cast<std::size_t>(decisions[t]));
    const auto r = env->step(c, d);
    SampledStep s;
    s.step = {static_cast<int>(t), c, d, r.observation};
    if (policy) s.logp_old = log_prob(*policy, c, d);
    tr.steps.push_back(s);
    c = r.next;
    if (r.terminal) {
      tr.reward = r.reward;
      break;
    }
  }
  tr.final_context = c;
  return tr;
}

inline PolicyParams random_policy(EnvKind kind, int vocab, const std::vector<ContextId>& contexts, Rng& rng,
                                  double scale = 2.0) {
  PolicyParams p(kind, vocab);
  for (auto id : contexts) {
    auto& row = p.mutable_row(id);
    for (auto& x : row) x = scale * (2.0 * rng.uniform() - 1.0);
  }
  return p;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

}  // namespace ctree::testing
