#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ctree/optim.hpp"

namespace ctree {

// Everything needed to reproduce a run. Serialized as `key = value` lines;
// `#` starts a comment.
struct RunConfig {
  TrainConfig train;
  std::string out = "runs/default";
  int checkpoint_every = 20;  // 0 writes only the final checkpoint
  bool export_trees = false;
  bool export_dot = false;
  bool export_grafts = true;
};

// Ordered list of recognized keys.
const std::vector<std::string>& config_keys();

// Applies one key/value pair. Throws ConfigError for unknown keys or values
// that fail to parse.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

// Throws ConfigError with "line N" diagnostics.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Applies CTREE_<KEY> environment variables (e.g. CTREE_LAMBDA=0.2).
void apply_env_overrides(RunConfig& config);

std::string serialize_config(const RunConfig& config);

void validate(const RunConfig& config);

}  // namespace ctree
