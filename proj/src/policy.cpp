#include "ctree/policy.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace ctree {

std::vector<double> PolicyParams::row(ContextId id) const {
  auto it = logits.find(id);
  if (it != logits.end()) return it->second;
  return std::vector<double>(static_cast<std::size_t>(vocab_size), default_logit);
}

std::vector<double>& PolicyParams::mutable_row(ContextId id) {
  auto it = logits.find(id);
  if (it == logits.end()) {
    it = logits.emplace(id, std::vector<double>(static_cast<std::size_t>(vocab_size), default_logit)).first;
  }
  return it->second;
}

double PolicyParams::logit(ContextId id, int decision) const {
  auto it = logits.find(id);
  if (it == logits.end()) return default_logit;
  return it->second.at(static_cast<std::size_t>(decision));
}

void GradientTable::add(ContextId ctx, int decision, double v) { entries_[{ctx, decision}] += v; }

void GradientTable::add_scaled(const GradientTable& other, double scale) {
  for (const auto& [k, v] : other.entries_) entries_[k] += scale * v;
}

void GradientTable::scale(double s) {
  for (auto& [k, v] : entries_) v *= s;
}

double GradientTable::get(ContextId ctx, int decision) const {
  auto it = entries_.find({ctx, decision});
  return it == entries_.end() ? 0.0 : it->second;
}

void GradientTable::prune() { std::erase_if(entries_, [](const auto& kv) { return kv.second == 0.0; }); }

std::vector<double> log_softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double x : logits) s += std::exp(x - m);
  const double lse = m + std::log(s);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

ProbVector action_distribution(const PolicyParams& params, ContextId context) {
  auto lp = log_softmax(params.row(context));
  for (double& x : lp) x = std::exp(x);
  return lp;
}

ProbVector action_distribution(const PolicyParams& params, const Context& context) {
  return action_distribution(params, context.context_id);
}

double log_prob(const PolicyParams& params, ContextId context, int decision) {
  return log_softmax(params.row(context)).at(static_cast<std::size_t>(decision));
}

double exact_kl(std::span<const double> p_logits, std::span<const double> q_logits) {
  const auto lp = log_softmax(p_logits);
  const auto lq = log_softmax(q_logits);
  double kl = 0.0;
  for (std::size_t a = 0; a < lp.size(); ++a) kl += std::exp(lp[a]) * (lp[a] - lq[a]);
  // Rounding can leave a tiny negative residue for near-identical rows.
  return std::max(kl, 0.0);
}

double exact_kl(const PolicyParams& params, ContextId ctx_i, ContextId ctx_j) {
  if (ctx_i == ctx_j) return 0.0;
  return exact_kl(params.row(ctx_i), params.row(ctx_j));
}

double mc_kl(const PolicyParams& params, ContextId ctx_i, ContextId ctx_j, int samples, Rng& rng) {
  assert(samples >= 1);
  const auto lp = log_softmax(params.row(ctx_i));
  const auto lq = log_softmax(params.row(ctx_j));
  std::vector<double> p(lp.size());
  for (std::size_t a = 0; a < lp.size(); ++a) p[a] = std::exp(lp[a]);
  double sum = 0.0;
  for (int k = 0; k < samples; ++k) {
    const auto a = static_cast<std::size_t>(rng.categorical(p));
    sum += lp[a] - lq[a];
  }
  return sum / samples;
}

GradientTable score_gradient(const PolicyParams& params, ContextId context, int decision) {
  const auto probs = action_distribution(params, context);
  GradientTable g;
  for (int d = 0; d < static_cast<int>(probs.size()); ++d) {
    g.add(context, d, (d == decision ? 1.0 : 0.0) - probs[static_cast<std::size_t>(d)]);
  }
  g.prune();
  return g;
}

PolicyParams ema_update(const PolicyParams& ref, const PolicyParams& current, double alpha) {
  PolicyParams out(ref.env_kind, ref.vocab_size);
  out.default_logit = alpha * ref.default_logit + (1.0 - alpha) * current.default_logit;
  auto blend = [&](ContextId id) {
    const auto r = ref.row(id);
    const auto c = current.row(id);
    std::vector<double> v(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) v[i] = alpha * r[i] + (1.0 - alpha) * c[i];
    out.logits[id] = std::move(v);
  };
  for (const auto& [id, _] : ref.logits) blend(id);
  for (const auto& [id, _] : current.logits) {
    if (!out.logits.contains(id)) blend(id);
  }
  return out;
}

void apply_gradient(PolicyParams& params, const GradientTable& grad, double lr) {
  for (const auto& [key, g] : grad.entries()) {
    auto& row = params.mutable_row(key.first);
    row.at(static_cast<std::size_t>(key.second)) -= lr * g;
  }
}

int greedy_decision(const PolicyParams& params, ContextId context) {
  const auto r = params.row(context);
  return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
}

}  // namespace ctree
