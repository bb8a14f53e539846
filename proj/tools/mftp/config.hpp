#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mftp/estimators.hpp"
#include "mftp/fgrid.hpp"
#include "mftp/policy.hpp"
#include "mftp/simgen.hpp"

namespace mftp::cli {

enum class Command { analyze, simulate, fpca_diagnose };

std::string_view to_string(Command command) noexcept;
Command command_from_string(std::string_view name);

/// A window either in normalized time or in clock hours ("23:00").
struct WindowSpec {
  bool clock = false;
  double lo = 0.0;  // normalized time, or hours when clock
  double hi = 1.0;
};

struct PolicySpec {
  std::string kind = "identity";  // identity | scale_warp | window_threshold
  double tau = 1.0;
  double warp_exponent = 1.2;
  std::vector<WindowSpec> windows;
  double threshold = 0.0;
  bool renormalize = true;
};

struct KernelSpec {
  std::string kind = "squared_exponential";  // squared_exponential | matern | wiener
  std::optional<double> sigma;  // SE length; default 5 / T
  double nu = 1.5;
  double rho = 0.1;
};

struct SimulationSpec {
  std::optional<int> scenario;  // 1-4 fill outcome, tau and kernel; explicit keys still win
  std::vector<std::size_t> n_grid = {100, 200, 400, 800, 1600};
  std::vector<std::size_t> K_grid;  // default {K}
  std::size_t replications = 200;
  bool coverage = false;
  std::size_t bootstrap_B = 500;
  std::size_t oracle_draws = 2'000'000;
  std::optional<std::size_t> T;  // 100
  std::optional<std::size_t> p;  // 15
  std::optional<KernelSpec> kernel;
  std::optional<std::string> outcome;  // simple | complex
  std::optional<double> tau;
  std::optional<double> warp_exponent;
};

struct WeightSpec {
  std::string features = "linear";
  bool cap = true;
  double cap_percentile = 0.99;
  double hard_cap = 50.0;
  double ridge = 4.0;
};

struct RunConfig {
  Command command = Command::analyze;
  std::string input;
  std::string out = "mftp_out";
  std::uint64_t seed = 20240101;
  std::size_t threads = 1;
  std::optional<std::string> outcome_kind;  // continuous | binary; detected otherwise
  PolicySpec policy;
  std::vector<double> tau_sweep;
  std::optional<std::size_t> K;    // weighting components; default basis K
  std::optional<std::size_t> K_m;  // outcome components; default basis K
  double variance_fraction = 0.95;
  std::size_t folds = 2;
  std::size_t bootstrap = 500;
  double alpha = 0.05;
  std::vector<EstimatorKind> estimators = {std::begin(kAllEstimators), std::end(kAllEstimators)};
  std::optional<double> lambda;  // fixed ridge lambda; GCV otherwise
  WeightSpec weights;
  bool refit_fpca_in_bootstrap = false;
  bool per_fold_fpca = false;
  SimulationSpec simulation;
};

/// Builds a config from a JSON object. Unknown keys, wrong types and
/// out-of-range values raise a config error naming the key path.
RunConfig config_from_json(const nlohmann::json& doc, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

/// Range checks that need the final, merged config.
void validate(const RunConfig& config);

/// "HH:MM" or "HH" to hours.
double parse_clock(const std::string& text);

/// Policy for a grid. Clock windows need a grid whose domain is one day.
ModificationPolicy make_policy(const PolicySpec& spec, const TimeGrid& grid);

PipelineSpec make_pipeline(const RunConfig& config);
sim::SimConfig make_sim_config(const RunConfig& config);

}  // namespace mftp::cli
