#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mftp/config.hpp"
#include "mftp/error.hpp"

namespace mftp::cli {

struct CommandResult {
  std::vector<std::string> files;  // written, relative to the output directory
  std::vector<std::string> warnings;
};

/// estimates.csv, weights.csv, balance.csv, outcome.csv, fpca_bundle.csv,
/// summary.txt and, with a tau sweep, sweep.csv.
CommandResult run_analyze(const RunConfig& config);

/// truth.csv, scenario_results.csv, replications.csv, figure_mse.csv,
/// figure_ksweep.csv, figure_coverage.csv (coverage runs) and summary.txt.
CommandResult run_simulate(const RunConfig& config);

/// fpca_bundle.csv, spectrum.csv, decay.csv and summary.txt.
CommandResult run_fpca_diagnose(const RunConfig& config);

CommandResult run(const RunConfig& config);

/// 0 on success; 10 + the category's position in ErrorCategory otherwise.
int exit_code(ErrorCategory category) noexcept;
inline constexpr int kUsageExit = 2;

/// Full command line: parse flags and config, run, report. Errors are printed
/// to `err` as `mftp: error[<category>]: <message>`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mftp::cli
