#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alcr/config.hpp"

namespace alcr::cli {

/// Flag overrides for `run`; empty vectors fall back to the config grid.
struct RunOverrides {
  std::vector<std::string> variants;
  std::vector<double> budgets;
  std::vector<std::uint64_t> seeds;
  int refresh_period = 0;  // 0 keeps the config value
  int workers = 0;         // 0 keeps the config value
};

/// Command bodies behind the subcommands; each returns a process exit code
/// (0 success) and reports failures by throwing.
int cmd_synth(const RunConfig& cfg);
int cmd_train_initial(const RunConfig& cfg, std::uint64_t seed);
int cmd_score(const RunConfig& cfg, const std::string& metric, std::uint64_t seed);
int cmd_run(const RunConfig& cfg, const RunOverrides& overrides);
int cmd_report(const std::string& output_dir);

}  // namespace alcr::cli
