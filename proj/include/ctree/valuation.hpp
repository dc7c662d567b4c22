#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "ctree/cogtree.hpp"
#include "ctree/rollout.hpp"

namespace ctree {

inline constexpr double kDefaultDelta = 0.3;

struct DivergencePoint {
  int node = 0;
  double spread = 0.0;
  int best_child = 0;
  int worst_child = 0;
  int t_div = 0;  // depth of the children, i.e. the step at which they differ
};

struct ValuationResult {
  std::vector<double> q;          // indexed by node_id
  std::vector<double> advantage;  // indexed by node_id
  double gamma = 1.0;
  std::vector<DivergencePoint> divergence;
};

struct BackupCounters {
  std::size_t edge_visits = 0;
  std::size_t node_visits = 0;
};

// Bottom-up Bellman backup. For a node where some trajectories end and others
// continue,
//   Q(v) = (1/k_v) * sum_{i ends at v} R_i + gamma * sum_c w(v->c) Q(c)
// with w(v->c) = |T(c)| / |T(v)|. At gamma = 1 this is the mean reward over T(v).
std::vector<double> qtree_backup(const CognitiveTree& tree, double gamma, BackupCounters* counters = nullptr);

// (Q(v) - mean) / std with the group's normalization; all zeros when std = 0.
std::vector<double> tree_advantage(const CognitiveTree& tree, const std::vector<double>& q, const GroupSample& group);
std::vector<double> tree_advantage(const std::vector<double>& q, double mean_reward, double std_reward);

// Mean terminal reward over T(v), computed from the per-trajectory rewards
// without touching the tree's edges.
double oracle_node_value(const CognitiveTree& tree, int node_id);

// Internal nodes with at least two children whose child Q spread exceeds
// delta, in (depth, node_id) order. Ties resolve to the smallest node id.
std::vector<DivergencePoint> divergence_set(const CognitiveTree& tree, const std::vector<double>& q, double delta);

ValuationResult evaluate_tree(const CognitiveTree& tree, const GroupSample& group, double gamma, double delta);

// Mean spread over a divergence set; nullopt when the set is empty.
std::optional<double> mean_spread(const std::vector<DivergencePoint>& divergence);

// Per-iteration mean value spread at divergence points. Iterations with an
// empty divergence set record 0 and are flagged.
class ValueSpreadTrace {
 public:
  void record(const std::vector<DivergencePoint>& divergence);
  void record_mean(std::optional<double> mean);

  const std::vector<double>& values() const { return values_; }
  const std::vector<bool>& empty_flags() const { return empty_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<double> values_;
  std::vector<bool> empty_;
};

}  // namespace ctree
