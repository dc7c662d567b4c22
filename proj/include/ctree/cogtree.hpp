#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "ctree/policy.hpp"
#include "ctree/rollout.hpp"

namespace ctree {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<int> rank_;
};

struct StepRef {
  int traj_index = 0;
  int t = 0;
  friend bool operator==(const StepRef&, const StepRef&) = default;
};

// A merged cognitive state. The node stands for the state reached after its
// decision, so representative_context is the post-decision context and
// modifying_history includes the node's own decision when it modifies state.
struct TreeNode {
  int node_id = 0;
  int depth = 0;
  std::vector<StepRef> member_steps;
  Context representative_context;
  std::vector<ContextId> member_contexts;
  Decision decision_into_node;
  std::string observation;
  std::vector<int> traj_set;           // T(v), sorted
  std::vector<int> modifying_history;  // S(v), sorted and unique
  std::vector<int> terminating;        // trajectories whose last step is this node

  int k() const { return static_cast<int>(traj_set.size()); }
};

struct TreeEdge {
  int parent = 0;
  int child = 0;
  double weight = 0.0;
  std::vector<int> traversal_set;
};

// Node 0 is the virtual root at depth -1 holding all trajectories; its
// representative context is the initial state s_0.
struct CognitiveTree {
  std::vector<TreeNode> nodes;
  std::vector<TreeEdge> edges;
  std::vector<std::vector<int>> child_edges;  // node -> edge indices, ordered by child id
  std::vector<int> parent;                    // node -> parent node (-1 for root)
  std::string task_id;
  std::string policy_snapshot_id;
  std::vector<double> rewards;   // terminal reward per trajectory
  std::vector<int> lengths;      // step count per trajectory

  static constexpr int kRoot = 0;

  const TreeNode& root() const { return nodes.front(); }
  int group_size() const { return static_cast<int>(rewards.size()); }
  bool is_leaf(int node) const { return child_edges[static_cast<std::size_t>(node)].empty(); }
  std::vector<int> children(int node) const;

  // Node visited by trajectory i at depth t.
  int node_of(int traj_index, int t) const;
  std::vector<std::vector<int>> step_nodes;  // [traj][t] -> node id
};

struct KlMode {
  enum class Kind { Exact, MonteCarlo, ContextEquality };
  Kind kind = Kind::Exact;
  int samples = 16;
  std::uint64_t seed = 0;

  static KlMode exact() { return {}; }
  static KlMode monte_carlo(int samples, std::uint64_t seed) { return {Kind::MonteCarlo, samples, seed}; }
  static KlMode context_equality() { return {Kind::ContextEquality, 0, 0}; }
};

inline constexpr double kDefaultEpsKl = 0.25;

struct CompatibilityGraph {
  std::vector<int> vertices;
  std::vector<std::pair<int, int>> edges;  // indices into vertices
};

// max(D(i||j), D(j||i)) under the chosen mode; 0 for identical contexts.
double symmetric_kl(const PolicyParams* policy, ContextId ctx_i, ContextId ctx_j, const KlMode& mode);

bool compatibility_edge(const PolicyParams* policy, const TreeNode& node_i, const TreeNode& node_j, double eps_kl,
                        const KlMode& mode);

// Connected components, each sorted, ordered by smallest member.
std::vector<std::vector<int>> merge_components(const CompatibilityGraph& graph);

// `policy` may be null only for KlMode::ContextEquality.
CognitiveTree build_tree(const GroupSample& group, const PolicyParams* policy, double eps_kl, const KlMode& mode);

struct TreeStats {
  double avg_depth = 0.0;  // mean trajectory length
  int node_count = 0;      // merged nodes, root excluded
  int nodes_before = 0;    // total steps across trajectories
  double merge_ratio = 0.0;
  int divergent_count = 0;  // filled in once a valuation exists
};

TreeStats tree_stats(const CognitiveTree& tree);

}  // namespace ctree
