#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctree/cogtree.hpp"
#include "ctree/grafting.hpp"
#include "ctree/optim.hpp"
#include "ctree/policy.hpp"
#include "ctree/rollout.hpp"
#include "ctree/valuation.hpp"

namespace ctree::io {

using nlohmann::json;

// ---- trajectories (one JSON object per line) ------------------------------

json trajectory_to_json(const GroupSample& group, const Trajectory& traj);
std::string trajectories_to_jsonl(const GroupSample& group);
void write_trajectories_jsonl(const std::filesystem::path& path, const GroupSample& group);

// Throws ParseError (with line number), SchemaError, or EmptyGroup.
GroupSample parse_trajectories_jsonl(const std::string& text);
GroupSample read_trajectories_jsonl(const std::filesystem::path& path);

struct IngestResult {
  GroupSample group;
  CognitiveTree tree;
};

// Offline consolidation of external logs: no policy is available, so the KL
// predicate becomes exact context-id equality. The historical predicate is
// unchanged.
IngestResult ingest_tree(const std::filesystem::path& jsonl_path);
IngestResult ingest_tree_text(const std::string& jsonl_text);

// ---- trees ------------------------------------------------------------------

json tree_to_json(const CognitiveTree& tree, const ValuationResult* valuation = nullptr);

struct LoadedTree {
  CognitiveTree tree;
  std::optional<std::vector<double>> q;
  std::optional<std::vector<double>> advantage;
};

LoadedTree tree_from_json(const json& j);
std::string tree_to_dot(const json& tree_json);

json divergence_to_json(const std::vector<DivergencePoint>& divergence);

// ---- graft datasets ---------------------------------------------------------

json graft_to_json(const GraftTuple& tuple);
GraftTuple graft_from_json(const json& j);
std::string grafts_to_jsonl(const std::vector<GraftTuple>& tuples);
std::vector<GraftTuple> parse_grafts_jsonl(const std::string& text);

// ---- checkpoints -----------------------------------------------------------

json checkpoint_to_json(const PolicyParams& policy, int iteration);
PolicyParams checkpoint_from_json(const json& j, int* iteration = nullptr);
void write_checkpoint(const std::filesystem::path& path, const PolicyParams& policy, int iteration);
PolicyParams read_checkpoint(const std::filesystem::path& path, int* iteration = nullptr);

// ---- metrics ----------------------------------------------------------------

const std::vector<std::string>& metrics_columns();
std::string metrics_header();
std::string metrics_row_csv(const MetricsRow& row);

// ---- digests ----------------------------------------------------------------

std::string digest(const std::string& canonical);
std::string tree_digest(const CognitiveTree& tree, const ValuationResult* valuation = nullptr);
std::string checkpoint_digest(const PolicyParams& policy);
std::string trajectories_digest(const GroupSample& group);
std::string grafts_digest(const std::vector<GraftTuple>& tuples);
// Wall-clock columns vary between runs and are left out.
std::string metrics_digest(const std::vector<MetricsRow>& rows);

// ---- files ------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);
json read_json(const std::filesystem::path& path);

}  // namespace ctree::io
