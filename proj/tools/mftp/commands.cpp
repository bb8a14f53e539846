#include "mftp/commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include "mftp/csv_io.hpp"
#include "mftp/estimators.hpp"
#include "mftp/fpca.hpp"
#include "mftp/simgen.hpp"
#include "mftp/stats.hpp"
#include "mftp/weights.hpp"

namespace mftp::cli {

namespace fs = std::filesystem;

namespace {

class OutputDir {
 public:
  explicit OutputDir(const std::string& path) : root_(path) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw Error(ErrorCategory::io, "cannot create output directory " + path + ": " + ec.message());
  }

  // CSV with a schema line.
  std::ofstream csv(const std::string& name, const std::string& schema, CommandResult& result) const {
    auto out = open(name, result);
    out << "# mftp " << schema << " v1\n";
    return out;
  }

  std::ofstream open(const std::string& name, CommandResult& result) const {
    std::ofstream out(root_ / name);
    if (!out) throw Error(ErrorCategory::io, "cannot write " + (root_ / name).string());
    out << std::setprecision(17);
    result.files.push_back(name);
    return out;
  }

 private:
  fs::path root_;
};

std::string num(double x) { return format_double(x); }

// Fixed-width text for summaries.
std::string fixed(double x, int digits = 6) {
  if (!std::isfinite(x)) return format_double(x);
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << x;
  return os.str();
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

bool selected(const RunConfig& config, EstimatorKind kind) {
  for (auto k : config.estimators) {
    if (k == kind) return true;
  }
  return false;
}

std::optional<OutcomeKind> requested_kind(const RunConfig& config) {
  if (!config.outcome_kind) return std::nullopt;
  return *config.outcome_kind == "binary" ? OutcomeKind::binary : OutcomeKind::continuous;
}

void write_bundle(const OutputDir& dir, const FpcaModel& model, CommandResult& result) {
  auto out = dir.open("fpca_bundle.csv", result);
  write_fpca_bundle(model, out);
}

}  // namespace

int exit_code(ErrorCategory category) noexcept { return 10 + static_cast<int>(category); }

CommandResult run_analyze(const RunConfig& config) {
  validate(config);
  CommandResult result;
  const Dataset data = read_dataset_csv(config.input, requested_kind(config));
  const ModificationPolicy policy = make_policy(config.policy, data.grid());
  if (!config.tau_sweep.empty() && policy.kind() == PolicyKind::identity) {
    throw Error(ErrorCategory::config, "tau_sweep: the identity policy has no tau to sweep");
  }
  PipelineSpec spec = make_pipeline(config);
  auto basis = std::make_shared<const FpcaModel>(fit_fpca(data, spec.basis_rule));
  if (basis->K() == 0) throw Error(ErrorCategory::insufficient_data, "the treatment curves have no variation");
  if (spec.K == 0) spec.K = basis->K();

  const auto estimates = estimate_all(data, policy, spec, basis);
  const PreparedData prep = prepare(data, policy, spec, basis);
  const OutcomeModel outcome = fit_outcome(prep, spec);
  const WeightModel weights = fit_weights(prep, spec);
  const AugmentedDataset aug = build_augmented(prep.covariates, prep.observed, prep.shifted, prep.K);
  const BalanceReport balance = balance_diagnostics(weights, aug);

  const OutputDir dir(config.out);
  {
    auto out = dir.csv("estimates.csv", "estimates", result);
    out << "estimator,point,ci_lo,ci_hi,alpha,n,K,K_m,folds,bootstrap_B,bootstrap_skipped,weight_min,weight_max,ess,"
           "tail_residual,cap_hits,separation,plugin_se\n";
    for (const auto& e : estimates) {
      if (!selected(config, e.estimator)) continue;
      const auto& d = e.diagnostics;
      out << to_string(e.estimator) << ',' << num(e.point) << ',' << (e.ci ? num(e.ci->lo) : "") << ','
          << (e.ci ? num(e.ci->hi) : "") << ',' << num(e.alpha) << ',' << e.n << ',' << e.K << ',' << e.K_m << ','
          << e.folds << ',' << e.bootstrap_B << ',' << d.bootstrap_skipped << ',' << num(d.weight_min) << ','
          << num(d.weight_max) << ',' << num(d.ess) << ',' << num(d.tail_residual) << ',' << d.cap_hits << ','
          << (d.separation ? 1 : 0) << ',' << num(d.plugin_se) << '\n';
    }
  }
  {
    auto out = dir.csv("weights.csv", "weights", result);
    out << "id,raw_odds,capped,normalized\n";
    for (std::size_t i = 0; i < data.n(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      out << data.ids()[i] << ',' << num(weights.raw_odds(r)) << ',' << num(weights.fitted.capped(r)) << ','
          << num(weights.fitted.normalized(r)) << '\n';
    }
  }
  {
    auto out = dir.csv("balance.csv", "balance", result);
    out << "feature,smd_before,smd_after\n";
    for (const auto& row : balance.rows) {
      out << row.feature << ',' << num(row.smd_before) << ',' << num(row.smd_after) << '\n';
    }
  }
  {
    auto out = dir.csv("outcome.csv", "outcome", result);
    out << "term,coefficient\n";
    const auto& b = outcome.coefficients();
    out << "intercept," << num(b(0)) << '\n';
    for (std::size_t j = 0; j < outcome.components(); ++j) {
      out << "A_" << j + 1 << ',' << num(b(static_cast<Eigen::Index>(1 + j))) << '\n';
    }
    for (std::size_t k = 0; k < outcome.covariate_count(); ++k) {
      out << "X_" << k + 1 << ',' << num(b(static_cast<Eigen::Index>(1 + outcome.components() + k))) << '\n';
    }
  }
  write_bundle(dir, *basis, result);

  std::vector<std::vector<double>> sweep;
  if (!config.tau_sweep.empty()) {
    const std::vector<EstimatorKind> kinds(std::begin(kAllEstimators), std::end(kAllEstimators));
    auto out = dir.csv("sweep.csv", "sweep", result);
    out << "tau,estimator,point\n";
    for (double tau : config.tau_sweep) {
      const ModificationPolicy swept = policy.with_tau(tau);
      const auto points = point_estimates(prepare(data, swept, spec, basis), spec, kinds);
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        if (!selected(config, kinds[k])) continue;
        out << num(tau) << ',' << to_string(kinds[k]) << ',' << num(points[k]) << '\n';
      }
      sweep.push_back(points);
    }
  }

  for (const auto& e : estimates) {
    for (const auto& w : e.diagnostics.warnings) {
      if (std::find(result.warnings.begin(), result.warnings.end(), w) == result.warnings.end()) {
        result.warnings.push_back(w);
      }
    }
  }

  auto out = dir.open("summary.txt", result);
  out << "mftp analyze\n\n";
  out << "input: " << config.input << "\n";
  out << "subjects: " << data.n() << ", grid points: " << data.T() << ", covariates: " << data.p()
      << ", outcome: " << to_string(data.outcome_kind()) << "\n";
  out << "grid domain: [" << num(data.grid().domain_lo()) << ", " << num(data.grid().domain_hi()) << "]\n";
  out << "policy: " << policy.describe() << "\n\n";
  out << "basis: " << basis->J() << " components retained, K = " << basis->K() << " explains "
      << fixed(basis->eigenvalues().head(static_cast<Eigen::Index>(basis->K())).sum() / basis->total_variance(), 4)
      << " of the variance\n";
  out << "weighting K = " << prep.K << ", tail residual = " << fixed(tail_residual(*basis, prep.K)) << "\n";
  out << "outcome model: " << to_string(outcome.link()) << " link, K_m = " << outcome.components()
      << ", lambda = " << num(outcome.lambda());
  if (outcome.link() == Link::identity) out << ", R^2 = " << fixed(outcome.r_squared, 4);
  out << "\n";
  out << "weights: ESS = " << fixed(balance.ess, 1) << " of " << balance.n << ", range [" << fixed(balance.weight_min, 4)
      << ", " << fixed(balance.weight_max, 4) << "], cap hits = " << balance.cap_hits
      << (weights.separation ? ", separation flagged" : "") << "\n\n";
  out << std::left << std::setw(10) << "estimator" << std::right << std::setw(14) << "point" << std::setw(14) << "ci_lo"
      << std::setw(14) << "ci_hi" << "\n";
  for (const auto& e : estimates) {
    if (!selected(config, e.estimator)) continue;
    out << std::left << std::setw(10) << to_string(e.estimator) << std::right << std::setw(14) << fixed(e.point)
        << std::setw(14) << (e.ci ? fixed(e.ci->lo) : "-") << std::setw(14) << (e.ci ? fixed(e.ci->hi) : "-") << "\n";
  }
  for (const auto& e : estimates) {
    if (e.estimator == EstimatorKind::AIPW && selected(config, e.estimator)) {
      out << "AIPW plug-in SE: " << fixed(e.diagnostics.plugin_se) << "\n";
    }
  }
  if (!sweep.empty()) {
    out << "\ntau sweep (AIPW):";
    for (std::size_t t = 0; t < sweep.size(); ++t) out << " " << num(config.tau_sweep[t]) << "->" << fixed(sweep[t][3]);
    out << "\n";
  }
  if (!result.warnings.empty()) {
    out << "\nwarnings:\n";
    for (const auto& w : result.warnings) out << "  " << w << "\n";
  }
  return result;
}

CommandResult run_fpca_diagnose(const RunConfig& config) {
  validate(config);
  CommandResult result;
  const Dataset data = read_dataset_csv(config.input, requested_kind(config));
  const KRule rule = config.K ? KRule::fixed(*config.K) : KRule::variance_fraction(config.variance_fraction);
  const FpcaModel model = fit_fpca(data, rule);
  const OutputDir dir(config.out);
  write_bundle(dir, model, result);

  const Eigen::VectorXd& theta = model.eigenvalues();
  const double total = model.total_variance();
  {
    auto out = dir.csv("spectrum.csv", "spectrum", result);
    out << "j,eigenvalue,fraction,cumulative,tail_residual,gap\n";
    double cum = 0.0;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      cum += theta(j);
      const double gap = j + 1 < theta.size() ? theta(j) - theta(j + 1) : theta(j);
      out << j + 1 << ',' << num(theta(j)) << ',' << num(theta(j) / total) << ',' << num(cum / total) << ','
          << num(tail_residual(model, static_cast<std::size_t>(j + 1))) << ',' << num(gap) << '\n';
    }
  }
  std::optional<DecayReport> decay;
  std::string decay_error;
  try {
    decay = decay_diagnostic(model);
  } catch (const Error& e) {
    if (e.category() != ErrorCategory::diagnostic) throw;
    decay_error = e.what();
    result.warnings.push_back("decay diagnostic unavailable: " + decay_error);
  }
  {
    auto out = dir.csv("decay.csv", "decay", result);
    out << "law,slope,r_squared,k_first,k_last,preferred\n";
    if (decay) {
      const bool finite = decay->finite_rank;
      const auto pref = decay->preferred;
      out << "exponential," << num(decay->exponential_slope) << ',' << num(decay->exponential_r2) << ','
          << decay->k_first << ',' << decay->k_last << ',' << (pref == DecayLaw::exponential ? 1 : 0) << '\n';
      out << "polynomial," << num(decay->polynomial_slope) << ',' << num(decay->polynomial_r2) << ','
          << decay->k_first << ',' << decay->k_last << ',' << (pref == DecayLaw::polynomial ? 1 : 0) << '\n';
      if (finite) out << "finite_rank,,,,," << (pref == DecayLaw::finite_rank ? 1 : 0) << '\n';
    }
  }
  auto out = dir.open("summary.txt", result);
  out << "mftp fpca-diagnose\n\n";
  out << "input: " << config.input << "\n";
  out << "subjects: " << data.n() << ", grid points: " << data.T() << "\n";
  out << "retained components: " << model.J() << ", K = " << model.K() << "\n";
  out << "total variance: " << fixed(total) << ", below eigen-floor: " << num(model.discarded_variance()) << "\n";
  out << "\n" << std::setw(4) << "j" << std::setw(16) << "eigenvalue" << std::setw(12) << "cumulative" << "\n";
  double cum = 0.0;
  for (Eigen::Index j = 0; j < std::min<Eigen::Index>(theta.size(), 15); ++j) {
    cum += theta(j);
    out << std::setw(4) << j + 1 << std::setw(16) << fixed(theta(j), 8) << std::setw(12) << fixed(cum / total, 4)
        << "\n";
  }
  out << "\n";
  if (decay) {
    out << "decay law: " << to_string(decay->preferred) << "\n";
    if (!decay->finite_rank) {
      out << "  exponential: slope " << fixed(decay->exponential_slope, 4) << " per component, R^2 "
          << fixed(decay->exponential_r2, 4) << "\n";
      out << "  polynomial: log-log slope " << fixed(decay->polynomial_slope, 4) << ", R^2 "
          << fixed(decay->polynomial_r2, 4) << "\n";
      out << "  fitted over K = " << decay->k_first << ".." << decay->k_last << "\n";
    }
  } else {
    out << "decay law: unavailable (" << decay_error << ")\n";
  }
  return result;
}

CommandResult run_simulate(const RunConfig& config) {
  validate(config);
  CommandResult result;
  const sim::SimConfig sc = make_sim_config(config);
  const SimulationSpec& s = config.simulation;

  sim::ScenarioOptions opt;
  opt.n_grid = s.n_grid;
  opt.K_grid = s.K_grid.empty() ? std::vector<std::size_t>{sc.K} : s.K_grid;
  opt.replications = s.replications;
  opt.bootstrap = s.coverage;
  opt.bootstrap_B = s.bootstrap_B;
  opt.alpha = config.alpha;
  opt.folds = config.folds;
  opt.lambda = config.lambda ? LambdaRule::fixed(*config.lambda) : LambdaRule::gcv();
  opt.weights = make_pipeline(config).weights;
  opt.threads = config.threads;
  const sim::ScenarioResult r = sim::run_scenario(sc, opt);
  result.warnings = r.warnings;

  const OutputDir dir(config.out);
  {
    auto out = dir.csv("truth.csv", "truth", result);
    out << "scenario,truth,se,draws\n";
    out << sc.name << ',' << num(r.truth.mean) << ',' << num(r.truth.se) << ',' << r.truth.draws << '\n';
  }
  {
    auto out = dir.csv("scenario_results.csv", "scenario_results", result);
    out << "scenario,estimator,n,K,successes,bias,bias_se,mse,mse_se,sd,coverage,coverage_se,mean_ci_width\n";
    for (const auto& m : r.summaries) {
      if (!selected(config, m.estimator)) continue;
      out << sc.name << ',' << to_string(m.estimator) << ',' << m.n << ',' << m.K << ',' << m.successes << ','
          << num(m.bias) << ',' << num(m.bias_se) << ',' << num(m.mse) << ',' << num(m.mse_se) << ',' << num(m.sd)
          << ',' << (m.coverage ? num(*m.coverage) : "") << ',' << (m.coverage ? num(m.coverage_se) : "") << ','
          << (m.coverage ? num(m.mean_ci_width) : "") << '\n';
    }
  }
  {
    auto out = dir.csv("replications.csv", "replications", result);
    out << "n,rep,K,K_m,failed,OR,IPW_hajek,IPW_plain,AIPW,AIPW_ci_lo,AIPW_ci_hi,AIPW_plugin_se,error\n";
    const int a = sim::kind_index(EstimatorKind::AIPW);
    for (const auto& rec : r.records) {
      out << rec.n << ',' << rec.rep << ',' << rec.K << ',' << rec.K_m << ',' << (rec.failed ? 1 : 0);
      for (double e : rec.estimates) out << ',' << num(e);
      const auto& ci = rec.intervals[a];
      out << ',' << (ci ? num(ci->lo) : "") << ',' << (ci ? num(ci->hi) : "") << ',' << num(rec.aipw_plugin_se) << ','
          << sanitize(rec.error) << '\n';
    }
  }
  std::vector<std::string> slope_lines;
  {
    auto out = dir.csv("figure_mse.csv", "figure_mse", result);
    out << "estimator,K,n,log_n,mse,log_mse,slope\n";
    for (auto K : opt.K_grid) {
      for (auto kind : kAllEstimators) {
        if (!selected(config, kind)) continue;
        double slope = std::numeric_limits<double>::quiet_NaN();
        if (opt.n_grid.size() >= 4) {
          try {
            slope = sim::mse_slope(r, kind, K);
          } catch (const Error&) {
          }
          slope_lines.push_back(std::string(to_string(kind)) + " (K=" + std::to_string(K) + "): " + fixed(slope, 4));
        }
        for (auto n : opt.n_grid) {
          const auto& m = r.summary(kind, n, K);
          out << to_string(kind) << ',' << K << ',' << n << ',' << num(std::log(static_cast<double>(n))) << ','
              << num(m.mse) << ',' << num(m.mse > 0.0 ? std::log(m.mse) : std::numeric_limits<double>::quiet_NaN())
              << ',' << num(slope) << '\n';
        }
      }
    }
  }
  {
    auto out = dir.csv("figure_ksweep.csv", "figure_ksweep", result);
    out << "estimator,n,K,mse,mse_se\n";
    for (auto n : opt.n_grid) {
      for (auto kind : kAllEstimators) {
        if (!selected(config, kind)) continue;
        for (auto K : opt.K_grid) {
          const auto& m = r.summary(kind, n, K);
          out << to_string(kind) << ',' << n << ',' << K << ',' << num(m.mse) << ',' << num(m.mse_se) << '\n';
        }
      }
    }
  }
  if (s.coverage) {
    auto out = dir.csv("figure_coverage.csv", "figure_coverage", result);
    out << "scenario,estimator,n,K,coverage,coverage_se,mean_ci_width\n";
    for (const auto& m : r.summaries) {
      if (!m.coverage) continue;
      out << sc.name << ',' << to_string(m.estimator) << ',' << m.n << ',' << m.K << ',' << num(*m.coverage) << ','
          << num(m.coverage_se) << ',' << num(m.mean_ci_width) << '\n';
    }
  }

  auto out = dir.open("summary.txt", result);
  out << "mftp simulate\n\n";
  out << "scenario: " << sc.name << " (" << to_string(sc.outcome) << " outcome, " << sc.policy.describe() << ", "
      << sc.kernel.describe() << ", T = " << sc.T << ", p = " << sc.p << ")\n";
  out << "replications: " << s.replications << ", failures: " << r.failures << "\n";
  out << "truth: " << fixed(r.truth.mean) << " (Monte Carlo SE " << num(r.truth.se) << ", " << r.truth.draws
      << " draws)\n\n";
  out << std::left << std::setw(10) << "estimator" << std::right << std::setw(6) << "n" << std::setw(4) << "K"
      << std::setw(12) << "bias" << std::setw(12) << "bias_se" << std::setw(12) << "mse" << std::setw(10) << "coverage"
      << "\n";
  for (const auto& m : r.summaries) {
    if (!selected(config, m.estimator)) continue;
    out << std::left << std::setw(10) << to_string(m.estimator) << std::right << std::setw(6) << m.n << std::setw(4)
        << m.K << std::setw(12) << fixed(m.bias) << std::setw(12) << fixed(m.bias_se) << std::setw(12) << fixed(m.mse)
        << std::setw(10) << (m.coverage ? fixed(*m.coverage, 3) : "-") << "\n";
  }
  if (!slope_lines.empty()) {
    out << "\nlog-MSE vs log-n slopes:\n";
    for (const auto& l : slope_lines) out << "  " << l << "\n";
  }
  if (!result.warnings.empty()) {
    out << "\nwarnings:\n";
    for (const auto& w : result.warnings) out << "  " << w << "\n";
  }
  return result;
}

CommandResult run(const RunConfig& config) {
  switch (config.command) {
    case Command::analyze: return run_analyze(config);
    case Command::simulate: return run_simulate(config);
    case Command::fpca_diagnose: return run_fpca_diagnose(config);
  }
  throw Error(ErrorCategory::internal, "unhandled command");
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Causal effects of modified functional treatment policies"};
  app.set_version_flag("--version", "mftp 0.1.0");
  std::string command;
  std::string config_path;
  std::optional<std::string> input, out_dir, policy;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads, K, folds, bootstrap;
  std::optional<double> tau, alpha;
  app.add_option("command", command, "analyze, simulate or fpca-diagnose");
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--input", input, "input CSV");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "root seed");
  app.add_option("--threads", threads, "worker threads (0 = all cores)");
  app.add_option("--policy", policy, "policy kind: identity, scale_warp or window_threshold");
  app.add_option("--tau", tau, "policy tau");
  app.add_option("--K", K, "weighting components");
  app.add_option("--folds", folds, "cross-fitting folds");
  app.add_option("--bootstrap", bootstrap, "bootstrap resamples (0 = none)");
  app.add_option("--alpha", alpha, "1 - confidence level");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << "mftp 0.1.0\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "mftp: error[" << to_string(ErrorCategory::config) << "]: " << e.what() << "\n";
    return exit_code(ErrorCategory::config);
  }

  try {
    RunConfig config;
    if (!config_path.empty()) config = load_config(config_path);
    if (!command.empty()) {
      config.command = command_from_string(command);
    } else if (config_path.empty()) {
      err << app.help();
      return kUsageExit;
    }
    if (input) config.input = *input;
    if (out_dir) config.out = *out_dir;
    if (seed) config.seed = *seed;
    if (threads) config.threads = *threads;
    if (folds) config.folds = *folds;
    if (alpha) config.alpha = *alpha;
    if (config.command == Command::simulate) {
      if (policy) throw Error(ErrorCategory::config, "--policy: simulate takes its policy from the scenario");
      if (tau) config.simulation.tau = *tau;
      if (K) {
        config.K = *K;
        config.simulation.K_grid = {*K};
      }
      if (bootstrap) {
        config.simulation.coverage = *bootstrap > 0;
        if (*bootstrap > 0) config.simulation.bootstrap_B = *bootstrap;
      }
    } else {
      if (policy) config.policy.kind = *policy;
      if (tau) config.policy.tau = *tau;
      if (K) config.K = *K;
      if (bootstrap) config.bootstrap = *bootstrap;
    }
    const CommandResult result = run(config);
    for (const auto& w : result.warnings) err << "mftp: warning: " << w << "\n";
    out << "mftp " << to_string(config.command) << ": wrote";
    for (const auto& f : result.files) out << " " << f;
    out << " to " << config.out << "\n";
    return 0;
  } catch (const Error& e) {
    err << "mftp: error[" << to_string(e.category()) << "]: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    err << "mftp: error[" << to_string(ErrorCategory::internal) << "]: " << e.what() << "\n";
    return exit_code(ErrorCategory::internal);
  }
}

}  // namespace mftp::cli
