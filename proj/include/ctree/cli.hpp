#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ctree/config.hpp"
#include "ctree/optim.hpp"

namespace ctree::cli {

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

// Entry point shared by the executable and the tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// OLS slope of the trace over the trailing `tail_fraction` of iterations
// (empty iterations count as 0); nullopt with fewer than two points.
std::optional<double> spread_slope(const ValueSpreadTrace& trace, double tail_fraction = 0.5);

struct RunSummary {
  double final_success_rate = 0.0;
  double final_mean_reward = 0.0;
  double mean_p_div = 0.0;
  std::optional<double> spread_slope;
  int iterations = 0;
};

// Trains per the config and writes the run directory. Used by `train` and
// `compare`.
RunSummary run_training(const RunConfig& config, std::ostream& log);

struct CompareRow {
  AdvantageBackend backend;
  std::uint64_t seed;
  RunSummary summary;
};

std::vector<CompareRow> run_compare(const RunConfig& config, const std::vector<std::uint64_t>& seeds,
                                    std::ostream& out);

}  // namespace ctree::cli
