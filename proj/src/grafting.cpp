#include "ctree/grafting.hpp"

#include <algorithm>
#include <set>
#include <utility>

#include <fmt/format.h>

namespace ctree {

std::string to_string(RectifierMode mode) { return mode == RectifierMode::Oracle ? "oracle" : "template"; }

RectifierMode rectifier_mode_from_string(const std::string& s) {
  if (s == "oracle") return RectifierMode::Oracle;
  if (s == "template") return RectifierMode::Template;
  throw ConfigError("unknown rectifier '" + s + "' (expected oracle or template)");
}

Rectification rectify(const Rectifier& rectifier, const Context&, const TreeNode& v_plus, const TreeNode& v_minus,
                      double q_plus, double q_minus) {
  if (v_plus.node_id == v_minus.node_id || v_plus.decision_into_node.decision_id == v_minus.decision_into_node.decision_id) {
    throw DegeneratePair(fmt::format("nodes {} and {} share decision '{}'", v_plus.node_id, v_minus.node_id,
                                     v_plus.decision_into_node.label));
  }
  Rectification r;
  r.z_rect = v_plus.decision_into_node;
  if (rectifier.mode == RectifierMode::Template) {
    r.rationale = fmt::format("prefer {} over {}: downstream value {:.3f} vs {:.3f}", v_plus.decision_into_node.label,
                              v_minus.decision_into_node.label, q_plus, q_minus);
  }
  return r;
}

namespace {

void dedup_insert(std::vector<GraftTuple>& out, GraftTuple t) {
  std::erase_if(out, [&](const GraftTuple& o) {
    return o.context.context_id == t.context.context_id && o.z_neg.decision_id == t.z_neg.decision_id;
  });
  out.push_back(std::move(t));
}

}  // namespace

GraftDataset build_graft_dataset(const CognitiveTree& tree, const ValuationResult& valuation,
                                 const Rectifier& rectifier, const TaskSpec& task, int iteration) {
  GraftDataset ds;
  ds.iteration_tag = iteration;
  ds.stats.divergence_points = valuation.divergence.size();
  for (const auto& dp : valuation.divergence) {
    const auto& parent = tree.nodes.at(static_cast<std::size_t>(dp.node));
    const auto& plus = tree.nodes.at(static_cast<std::size_t>(dp.best_child));
    const auto& minus = tree.nodes.at(static_cast<std::size_t>(dp.worst_child));
    Rectification r;
    try {
      r = rectify(rectifier, parent.representative_context, plus, minus,
                  valuation.q[static_cast<std::size_t>(dp.best_child)], valuation.q[static_cast<std::size_t>(dp.worst_child)]);
    } catch (const DegeneratePair&) {
      ++ds.stats.degenerate_skipped;
      continue;
    }
    GraftTuple t;
    t.task = task;
    t.context = parent.representative_context;
    t.z_rect = r.z_rect;
    t.z_neg = minus.decision_into_node;
    t.t_div = dp.t_div;
    t.source_node = dp.node;
    t.spread = dp.spread;
    t.rationale = std::move(r.rationale);
    t.iteration = iteration;
    dedup_insert(ds.tuples, std::move(t));
  }
  ds.stats.emitted = ds.tuples.size();
  return ds;
}

void GraftBuffer::insert(const GraftTuple& tuple) {
  std::erase_if(tuples_, [&](const GraftTuple& o) {
    return o.context.context_id == tuple.context.context_id && o.z_neg.decision_id == tuple.z_neg.decision_id;
  });
  tuples_.push_back(tuple);
  while (tuples_.size() > capacity_) tuples_.pop_front();
}

void GraftBuffer::insert(const GraftDataset& dataset) {
  for (const auto& t : dataset.tuples) insert(t);
}

GraftQuality graft_quality(const std::vector<GraftTuple>& tuples, const PolicyParams& policy) {
  GraftQuality q;
  q.count = tuples.size();
  if (tuples.empty()) return q;
  q.vacuous = false;
  std::size_t valid = 0, success = 0;
  for (const auto& t : tuples) {
    const auto env = make_environment(t.task);
    const auto& vocab = env->vocabulary();
    const bool legal = t.z_rect.decision_id >= 0 && t.z_rect.decision_id < static_cast<int>(vocab.size()) &&
                       !t.context.state.empty() && !env->is_terminal(t.context);
    if (!legal || t.z_rect.decision_id == t.z_neg.decision_id) continue;
    ++valid;
    StepResult r = env->step(t.context, t.z_rect);
    while (!r.terminal) {
      const int d = greedy_decision(policy, r.next.context_id);
      r = env->step(r.next, vocab[static_cast<std::size_t>(d)]);
    }
    if (r.reward > 0.0) ++success;
  }
  q.valid_rate = static_cast<double>(valid) / static_cast<double>(tuples.size());
  q.success_rate = static_cast<double>(success) / static_cast<double>(tuples.size());
  return q;
}

std::vector<double> anchor_reuse(const std::vector<std::vector<GraftTuple>>& per_iteration) {
  std::vector<double> out;
  std::set<std::pair<ContextId, int>> seen;
  for (const auto& tuples : per_iteration) {
    std::size_t reused = 0;
    for (const auto& t : tuples) {
      if (seen.contains({t.context.context_id, t.z_rect.decision_id})) ++reused;
    }
    out.push_back(tuples.empty() ? 0.0 : static_cast<double>(reused) / static_cast<double>(tuples.size()));
    for (const auto& t : tuples) seen.insert({t.context.context_id, t.z_rect.decision_id});
  }
  return out;
}

}  // namespace ctree
