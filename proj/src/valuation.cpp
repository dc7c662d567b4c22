#include "ctree/valuation.hpp"

namespace ctree {

std::vector<double> qtree_backup(const CognitiveTree& tree, double gamma, BackupCounters* counters) {
  std::vector<double> q(tree.nodes.size(), 0.0);
  // Node ids increase with depth, so a reverse sweep visits children first.
  for (std::size_t v = tree.nodes.size(); v-- > 0;) {
    const auto& node = tree.nodes[v];
    const double k = static_cast<double>(node.k());
    double terminal = 0.0;
    for (int i : node.terminating) terminal += tree.rewards[static_cast<std::size_t>(i)];
    double continuation = 0.0;
    for (int e : tree.child_edges[v]) {
      const auto& edge = tree.edges[static_cast<std::size_t>(e)];
      continuation += edge.weight * q[static_cast<std::size_t>(edge.child)];
      if (counters) ++counters->edge_visits;
    }
    q[v] = terminal / k + gamma * continuation;
    if (counters) ++counters->node_visits;
  }
  return q;
}

std::vector<double> tree_advantage(const std::vector<double>& q, double mean_reward, double std_reward) {
  std::vector<double> adv(q.size(), 0.0);
  if (std_reward == 0.0) return adv;
  for (std::size_t v = 0; v < q.size(); ++v) adv[v] = (q[v] - mean_reward) / std_reward;
  return adv;
}

std::vector<double> tree_advantage(const CognitiveTree&, const std::vector<double>& q, const GroupSample& group) {
  return tree_advantage(q, group.mean_reward, group.std_reward);
}

double oracle_node_value(const CognitiveTree& tree, int node_id) {
  const auto& node = tree.nodes.at(static_cast<std::size_t>(node_id));
  double sum = 0.0;
  for (int i : node.traj_set) sum += tree.rewards[static_cast<std::size_t>(i)];
  return sum / static_cast<double>(node.traj_set.size());
}

std::vector<DivergencePoint> divergence_set(const CognitiveTree& tree, const std::vector<double>& q, double delta) {
  std::vector<DivergencePoint> out;
  for (std::size_t v = 0; v < tree.nodes.size(); ++v) {
    const auto& edges = tree.child_edges[v];
    if (edges.size() < 2) continue;
    int best = -1, worst = -1;
    for (int e : edges) {
      const int c = tree.edges[static_cast<std::size_t>(e)].child;
      // Children are visited in increasing id, so strict comparisons keep the
      // smallest id on ties.
      if (best < 0 || q[static_cast<std::size_t>(c)] > q[static_cast<std::size_t>(best)]) best = c;
      if (worst < 0 || q[static_cast<std::size_t>(c)] < q[static_cast<std::size_t>(worst)]) worst = c;
    }
    const double spread = q[static_cast<std::size_t>(best)] - q[static_cast<std::size_t>(worst)];
    if (spread > delta) {
      out.push_back({static_cast<int>(v), spread, best, worst, tree.nodes[static_cast<std::size_t>(best)].depth});
    }
  }
  return out;
}

ValuationResult evaluate_tree(const CognitiveTree& tree, const GroupSample& group, double gamma, double delta) {
  ValuationResult r;
  r.gamma = gamma;
  r.q = qtree_backup(tree, gamma);
  r.advantage = tree_advantage(tree, r.q, group);
  r.divergence = divergence_set(tree, r.q, delta);
  return r;
}

std::optional<double> mean_spread(const std::vector<DivergencePoint>& divergence) {
  if (divergence.empty()) return std::nullopt;
  double s = 0.0;
  for (const auto& d : divergence) s += d.spread;
  return s / static_cast<double>(divergence.size());
}

void ValueSpreadTrace::record(const std::vector<DivergencePoint>& divergence) { record_mean(mean_spread(divergence)); }

void ValueSpreadTrace::record_mean(std::optional<double> mean) {
  values_.push_back(mean.value_or(0.0));
  empty_.push_back(!mean.has_value());
}

}  // namespace ctree
