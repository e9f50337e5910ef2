#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "streamsim/error.hpp"
#include "streamsim/harness.hpp"
#include "streamsim/metrics.hpp"

namespace streamsim::cli {

/// Process exit codes. Stable contract for scripts.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitInfeasible = 3,
  kExitControlPlane = 4,
};

int exit_code_for(Errc code) noexcept;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

/// out/<arch>_<pattern>_<workload>_c<N>, lower-cased.
std::string output_dir_name(const ExperimentConfig& config);

struct RunOutcome {
  MetricsReport report;
  int exit_code = kExitOk;
};

/// Runs every repetition (seed, seed+1, ...) and merges them. Infeasible or
/// failed configurations come back as stub reports with the matching exit
/// code instead of throwing.
RunOutcome run_repetitions(const ExperimentConfig& config);

/// DTS counterpart of `config` used for overhead ratios.
ExperimentConfig baseline_config(const ExperimentConfig& config);

}  // namespace streamsim::cli
