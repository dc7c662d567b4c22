#pragma once

#include <map>
#include <utility>
#include <vector>

#include "ctree/common.hpp"
#include "ctree/env.hpp"

namespace ctree {

using ProbVector = std::vector<double>;

// Tabular softmax policy. Rows are created lazily; a context without a row
// uses default_logit for every decision, i.e. the uniform distribution.
struct PolicyParams {
  EnvKind env_kind = EnvKind::SynthBranch;
  int vocab_size = 0;
  double default_logit = 0.0;
  std::map<ContextId, std::vector<double>> logits;

  PolicyParams() = default;
  PolicyParams(EnvKind kind, int vocab) : env_kind(kind), vocab_size(vocab) {}

  std::vector<double> row(ContextId id) const;
  std::vector<double>& mutable_row(ContextId id);
  double logit(ContextId id, int decision) const;

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

// Sparse gradient over (context_id, decision_id). Entries that are exactly
// zero are dropped by prune().
class GradientTable {
 public:
  using Key = std::pair<ContextId, int>;

  void add(ContextId ctx, int decision, double v);
  void add_scaled(const GradientTable& other, double scale);
  void scale(double s);
  double get(ContextId ctx, int decision) const;
  void prune();

  const std::map<Key, double>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::map<Key, double> entries_;
};

ProbVector action_distribution(const PolicyParams& params, const Context& context);
ProbVector action_distribution(const PolicyParams& params, ContextId context);
std::vector<double> log_softmax(std::span<const double> logits);

double log_prob(const PolicyParams& params, ContextId context, int decision);
inline double log_prob(const PolicyParams& params, const Context& context, const Decision& decision) {
  return log_prob(params, context.context_id, decision.decision_id);
}

double exact_kl(const PolicyParams& params, ContextId ctx_i, ContextId ctx_j);
double exact_kl(std::span<const double> p_logits, std::span<const double> q_logits);

// (1/K) sum_k log p(a_k)/q(a_k) with a_k ~ p.
double mc_kl(const PolicyParams& params, ContextId ctx_i, ContextId ctx_j, int samples, Rng& rng);

// Row of d log pi(decision|context) / d logit(context, d) = 1{d = decision} - pi(d|context).
GradientTable score_gradient(const PolicyParams& params, ContextId context, int decision);

PolicyParams ema_update(const PolicyParams& ref, const PolicyParams& current, double alpha);

// Plain gradient-descent update: params - lr * grad.
void apply_gradient(PolicyParams& params, const GradientTable& grad, double lr);

// Greedy choice: argmax with ties to the smallest decision id.
int greedy_decision(const PolicyParams& params, ContextId context);

}  // namespace ctree
