#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctree/cogtree.hpp"
#include "ctree/grafting.hpp"
#include "ctree/policy.hpp"
#include "ctree/rollout.hpp"
#include "ctree/valuation.hpp"

namespace ctree {

enum class AdvantageBackend { Grpo, Tstar };

std::string to_string(AdvantageBackend backend);
AdvantageBackend backend_from_string(const std::string& s);

struct HybridConfig {
  double lambda = 0.15;     // surgical weight
  double beta = 0.1;        // Bradley-Terry temperature
  double clip_eps = 0.2;
  double lr = 0.1;          // tabular logits; 5e-6 is the LLM-scale setting
  double alpha_ema = 0.95;
  double gamma = 1.0;
  double delta = kDefaultDelta;
  double eps_kl = kDefaultEpsKl;
  int group_size = 8;       // M
  int mc_samples = 16;      // K
  int iterations = 160;
  int batch_tasks = 32;
};

struct TrainConfig {
  HybridConfig hybrid;
  EnvKind env_kind = EnvKind::SynthBranch;
  int instance_first = 0;
  int instance_last = 15;
  int max_steps = 20;
  std::uint64_t instance_seed = 0;
  int synth_vocab = kDefaultSynthVocab;
  AdvantageBackend backend = AdvantageBackend::Tstar;
  KlMode::Kind kl_kind = KlMode::Kind::Exact;
  RectifierMode rectifier = RectifierMode::Oracle;
  std::size_t graft_cap = 4096;
  std::uint64_t seed = 1;

  std::vector<TaskSpec> tasks() const;
  int vocab_size() const;
};

// Per-step advantages, indexed [trajectory][t].
using StepAdvantages = std::vector<std::vector<double>>;

StepAdvantages broadcast_trajectory_advantages(const GroupSample& group, const std::vector<double>& advantages);
StepAdvantages broadcast_node_advantages(const CognitiveTree& tree, const std::vector<double>& node_advantages);

struct LossGrad {
  double loss = 0.0;
  GradientTable grad;
};

// Clipped surrogate averaged over every step of the group. Ratios use the
// log-probabilities cached at sampling time as pi_old.
LossGrad grpo_loss_grad(const PolicyParams& policy, const GroupSample& group, const StepAdvantages& advantages,
                        double clip_eps);

struct GroupTerm {
  const GroupSample* group = nullptr;
  StepAdvantages advantages;
};

// Mean of per-group surrogate losses.
LossGrad grpo_batch_loss_grad(const PolicyParams& policy, std::span<const GroupTerm> terms, double clip_eps);

double preference_margin(const PolicyParams& policy, const PolicyParams& ref, ContextId context, int z_rect, int z_neg);

struct SurgicalLossGrad {
  double loss = 0.0;
  GradientTable grad;
  double margin_mean = 0.0;
};

// -mean log sigmoid(beta * margin). The gradient only touches the rows of the
// tuples' contexts; ref is treated as a constant.
SurgicalLossGrad surgical_loss_grad(const PolicyParams& policy, const PolicyParams& ref,
                                    std::span<const GraftTuple> tuples, double beta);

struct LossReport {
  double loss_grpo = 0.0;
  double loss_surgical = 0.0;
  double loss_total = 0.0;
  GradientTable grad;
  double margin_mean = 0.0;
};

LossReport hybrid_loss_grad(const PolicyParams& policy, const PolicyParams& ref, std::span<const GroupTerm> terms,
                            std::span<const GraftTuple> tuples, const HybridConfig& config);

struct HybridStepResult {
  PolicyParams policy;
  PolicyParams ref;
  LossReport report;
};

// One descent step on L_grpo + lambda * L_surgical, then the EMA update of ref.
HybridStepResult hybrid_step(const PolicyParams& policy, const PolicyParams& ref, std::span<const GroupTerm> terms,
                             std::span<const GraftTuple> tuples, const HybridConfig& config);

struct EvalResult {
  double success_rate = 0.0;
  double mean_reward = 0.0;
  double mean_steps = 0.0;
  int episodes = 0;
};

// Greedy rollouts (argmax, ties to the smallest decision id), cycling through
// the task list until `episodes` have been played.
EvalResult evaluate(const PolicyParams& policy, std::span<const TaskSpec> tasks, int episodes, std::uint64_t seed = 0);

struct MetricsRow {
  int iteration = 0;
  double success_rate = 0.0;
  double mean_reward = 0.0;
  double loss_grpo = 0.0;
  double loss_surgical = 0.0;
  double mean_value_spread = 0.0;
  int n_divergent = 0;
  int graft_count = 0;
  double anchor_reuse = 0.0;
  double merge_ratio = 0.0;
  double wall_ms_rollout = 0.0;
  double wall_ms_tree = 0.0;
  double wall_ms_valuation = 0.0;
  double wall_ms_graft = 0.0;
  double wall_ms_update = 0.0;
  // Not a CSV column: divergent nodes over internal nodes.
  double p_div = 0.0;
};

struct TaskArtifacts {
  TaskSpec task;
  GroupSample group;
  std::optional<CognitiveTree> tree;
  std::optional<ValuationResult> valuation;
  GraftDataset grafts;
};

struct IterationArtifacts {
  int iteration = 0;
  const MetricsRow* metrics = nullptr;
  const PolicyParams* policy = nullptr;  // after the update
  const std::vector<TaskArtifacts>* tasks = nullptr;
};

struct TrainResult {
  PolicyParams policy;
  PolicyParams ref;
  std::vector<MetricsRow> metrics;
  ValueSpreadTrace spread_trace;
  GraftBuffer grafts;
  EvalResult final_eval;
};

using IterationObserver = std::function<void(const IterationArtifacts&)>;

PolicyParams initial_policy(const TrainConfig& config);

TrainResult train(const TrainConfig& config, const IterationObserver& observer = {});
TrainResult train(const TrainConfig& config, PolicyParams policy, const IterationObserver& observer = {});

}  // namespace ctree
