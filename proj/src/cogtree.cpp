#include "ctree/cogtree.hpp"

#include <algorithm>
#include <cassert>
#include <limits>
#include <map>
#include <set>

namespace ctree {

std::vector<int> CognitiveTree::children(int node) const {
  std::vector<int> out;
  for (int e : child_edges[static_cast<std::size_t>(node)]) out.push_back(edges[static_cast<std::size_t>(e)].child);
  return out;
}

int CognitiveTree::node_of(int traj_index, int t) const {
  return step_nodes.at(static_cast<std::size_t>(traj_index)).at(static_cast<std::size_t>(t));
}

double symmetric_kl(const PolicyParams* policy, ContextId ctx_i, ContextId ctx_j, const KlMode& mode) {
  if (ctx_i == ctx_j) return 0.0;
  switch (mode.kind) {
    case KlMode::Kind::ContextEquality:
      return std::numeric_limits<double>::infinity();
    case KlMode::Kind::Exact:
      return std::max(exact_kl(*policy, ctx_i, ctx_j), exact_kl(*policy, ctx_j, ctx_i));
    case KlMode::Kind::MonteCarlo: {
      // Streams keyed on the ordered context pair keep estimates independent
      // of the order in which pairs are tested.
      auto stream = static_cast<std::uint64_t>(Stream::MonteCarloKl);
      Rng fwd(derive_seed(mode.seed, stream, ctx_i, ctx_j));
      Rng bwd(derive_seed(mode.seed, stream, ctx_j, ctx_i));
      return std::max(mc_kl(*policy, ctx_i, ctx_j, mode.samples, fwd), mc_kl(*policy, ctx_j, ctx_i, mode.samples, bwd));
    }
  }
  return std::numeric_limits<double>::infinity();
}

bool compatibility_edge(const PolicyParams* policy, const TreeNode& node_i, const TreeNode& node_j, double eps_kl,
                        const KlMode& mode) {
  assert(node_i.depth == node_j.depth);
  if (node_i.modifying_history != node_j.modifying_history) return false;
  return symmetric_kl(policy, node_i.representative_context.context_id, node_j.representative_context.context_id,
                      mode) < eps_kl;
}

std::vector<std::vector<int>> merge_components(const CompatibilityGraph& graph) {
  UnionFind uf(graph.vertices.size());
  for (const auto& [a, b] : graph.edges) uf.unite(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  std::map<std::size_t, std::vector<int>> by_root;
  for (std::size_t i = 0; i < graph.vertices.size(); ++i) by_root[uf.find(i)].push_back(graph.vertices[i]);
  std::vector<std::vector<int>> out;
  for (auto& [_, members] : by_root) {
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

namespace {

// S(v) for trajectory i after step t, for every t.
std::vector<std::vector<int>> modifying_prefixes(const Trajectory& traj) {
  std::vector<std::vector<int>> out;
  std::set<int> acc;
  for (const auto& s : traj.steps) {
    if (s.step.decision.state_modifying) acc.insert(s.step.decision.decision_id);
    out.emplace_back(acc.begin(), acc.end());
  }
  return out;
}

}  // namespace

CognitiveTree build_tree(const GroupSample& group, const PolicyParams* policy, double eps_kl, const KlMode& mode) {
  if (group.trajectories.empty()) throw EmptyGroup("cannot build a tree from an empty group");
  if (mode.kind != KlMode::Kind::ContextEquality && policy == nullptr) {
    throw ConfigError("KL-based merging requires a policy");
  }
  const int m = group.size();
  CognitiveTree tree;
  tree.task_id = group.task_id();
  tree.policy_snapshot_id = group.policy_snapshot_id;
  std::vector<std::vector<std::vector<int>>> histories;
  for (const auto& t : group.trajectories) {
    tree.rewards.push_back(t.reward);
    tree.lengths.push_back(t.length());
    tree.step_nodes.emplace_back(t.steps.size(), -1);
    histories.push_back(modifying_prefixes(t));
  }

  TreeNode root;
  root.node_id = CognitiveTree::kRoot;
  root.depth = -1;
  root.decision_into_node = Decision{-1, "root", false};
  root.traj_set.resize(static_cast<std::size_t>(m));
  std::iota(root.traj_set.begin(), root.traj_set.end(), 0);
  const auto& first = group.trajectories.front();
  root.representative_context = first.steps.empty() ? first.final_context : first.steps.front().step.context;
  root.member_contexts = {root.representative_context.context_id};
  for (const auto& t : group.trajectories) {
    if (t.steps.empty()) root.terminating.push_back(t.traj_index);
  }
  tree.nodes.push_back(std::move(root));
  tree.parent.push_back(-1);

  std::vector<int> frontier{CognitiveTree::kRoot};
  for (int depth = 0; !frontier.empty(); ++depth) {
    struct Pending {
      int parent;
      TreeNode node;
    };
    std::vector<Pending> pending;
    for (int p : frontier) {
      std::vector<TreeNode> candidates;
      for (int i : tree.nodes[static_cast<std::size_t>(p)].traj_set) {
        const auto& traj = group.trajectories[static_cast<std::size_t>(i)];
        if (traj.length() <= depth) continue;
        const auto& s = traj.steps[static_cast<std::size_t>(depth)].step;
        TreeNode c;
        c.depth = depth;
        c.member_steps = {{i, depth}};
        c.representative_context = traj.context_after(static_cast<std::size_t>(depth));
        c.member_contexts = {c.representative_context.context_id};
        c.decision_into_node = s.decision;
        c.observation = s.observation;
        c.traj_set = {i};
        c.modifying_history = histories[static_cast<std::size_t>(i)][static_cast<std::size_t>(depth)];
        if (traj.length() == depth + 1) c.terminating = {i};
        candidates.push_back(std::move(c));
      }
      CompatibilityGraph graph;
      for (int a = 0; a < static_cast<int>(candidates.size()); ++a) {
        graph.vertices.push_back(a);
        for (int b = 0; b < a; ++b) {
          if (compatibility_edge(policy, candidates[static_cast<std::size_t>(b)], candidates[static_cast<std::size_t>(a)],
                                 eps_kl, mode)) {
            graph.edges.emplace_back(b, a);
          }
        }
      }
      for (const auto& comp : merge_components(graph)) {
        // Candidates are in traj_index order, so the first member is the
        // representative.
        TreeNode merged = std::move(candidates[static_cast<std::size_t>(comp.front())]);
        for (std::size_t q = 1; q < comp.size(); ++q) {
          auto& c = candidates[static_cast<std::size_t>(comp[q])];
          merged.member_steps.push_back(c.member_steps.front());
          merged.member_contexts.push_back(c.member_contexts.front());
          merged.traj_set.push_back(c.traj_set.front());
          merged.terminating.insert(merged.terminating.end(), c.terminating.begin(), c.terminating.end());
        }
        pending.push_back({p, std::move(merged)});
      }
    }
    std::sort(pending.begin(), pending.end(),
              [](const Pending& a, const Pending& b) { return a.node.traj_set.front() < b.node.traj_set.front(); });

    std::vector<int> next_frontier;
    for (auto& [p, node] : pending) {
      const int id = static_cast<int>(tree.nodes.size());
      node.node_id = id;
      for (const auto& ref : node.member_steps) {
        tree.step_nodes[static_cast<std::size_t>(ref.traj_index)][static_cast<std::size_t>(ref.t)] = id;
      }
      TreeEdge e;
      e.parent = p;
      e.child = id;
      e.traversal_set = node.traj_set;
      e.weight = static_cast<double>(node.k()) / static_cast<double>(tree.nodes[static_cast<std::size_t>(p)].k());
      tree.edges.push_back(std::move(e));
      tree.nodes.push_back(std::move(node));
      tree.parent.push_back(p);
      next_frontier.push_back(id);
    }
    frontier = std::move(next_frontier);
  }

  tree.child_edges.assign(tree.nodes.size(), {});
  for (std::size_t e = 0; e < tree.edges.size(); ++e) {
    tree.child_edges[static_cast<std::size_t>(tree.edges[e].parent)].push_back(static_cast<int>(e));
  }
  return tree;
}

TreeStats tree_stats(const CognitiveTree& tree) {
  TreeStats s;
  s.node_count = static_cast<int>(tree.nodes.size()) - 1;
  for (int len : tree.lengths) s.nodes_before += len;
  s.avg_depth = tree.lengths.empty() ? 0.0 : static_cast<double>(s.nodes_before) / static_cast<double>(tree.lengths.size());
  s.merge_ratio = s.nodes_before == 0 ? 0.0 : 1.0 - static_cast<double>(s.node_count) / static_cast<double>(s.nodes_before);
  return s;
}

}  // namespace ctree
