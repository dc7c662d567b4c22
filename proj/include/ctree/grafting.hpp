#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "ctree/cogtree.hpp"
#include "ctree/policy.hpp"
#include "ctree/valuation.hpp"

namespace ctree {

enum class RectifierMode { Oracle, Template };

std::string to_string(RectifierMode mode);
RectifierMode rectifier_mode_from_string(const std::string& s);

// Stand-in for generating a corrected decision at a divergence point. Oracle
// returns the decision into the better child; Template does the same and also
// renders a contrastive rationale.
struct Rectifier {
  RectifierMode mode = RectifierMode::Oracle;
};

struct Rectification {
  Decision z_rect;
  std::string rationale;  // empty in Oracle mode
};

// Throws DegeneratePair when both children were reached by the same decision
// (or are the same node).
Rectification rectify(const Rectifier& rectifier, const Context& context, const TreeNode& v_plus,
                      const TreeNode& v_minus, double q_plus, double q_minus);

struct GraftTuple {
  TaskSpec task;
  Context context;  // shared parent state
  Decision z_rect;
  Decision z_neg;
  int t_div = 0;
  int source_node = 0;
  double spread = 0.0;
  std::string rationale;
  int iteration = 0;
};

struct GraftStats {
  std::size_t divergence_points = 0;
  std::size_t emitted = 0;
  std::size_t degenerate_skipped = 0;
};

struct GraftDataset {
  std::vector<GraftTuple> tuples;
  int iteration_tag = 0;
  GraftStats stats;
};

// One tuple per divergence point, deduplicated by (context_id, z_neg) with the
// later tuple winning. Needs no environment rollouts.
GraftDataset build_graft_dataset(const CognitiveTree& tree, const ValuationResult& valuation,
                                 const Rectifier& rectifier, const TaskSpec& task, int iteration = 0);

// Accumulated D_graft across iterations: never cleared, deduplicated by
// (context_id, z_neg) with the newest tuple winning, FIFO-capped.
class GraftBuffer {
 public:
  explicit GraftBuffer(std::size_t capacity = 4096) : capacity_(capacity) {}

  void insert(const GraftTuple& tuple);
  void insert(const GraftDataset& dataset);

  const std::deque<GraftTuple>& tuples() const { return tuples_; }
  std::size_t size() const { return tuples_.size(); }
  bool empty() const { return tuples_.empty(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<GraftTuple> tuples_;
};

struct GraftQuality {
  double valid_rate = 1.0;
  double success_rate = 1.0;
  std::size_t count = 0;
  bool vacuous = true;  // empty dataset
};

// Replays each tuple from its context with z_rect substituted, then follows
// the greedy policy until the episode ends.
GraftQuality graft_quality(const std::vector<GraftTuple>& tuples, const PolicyParams& policy);

// Fraction of each iteration's tuples whose (context_id, z_rect) appeared in
// an earlier iteration. The first iteration is 0.
std::vector<double> anchor_reuse(const std::vector<std::vector<GraftTuple>>& per_iteration);

}  // namespace ctree
