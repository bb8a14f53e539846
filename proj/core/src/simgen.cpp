#include "mftp/simgen.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mftp/glm.hpp"
#include "mftp/parallel.hpp"
#include "mftp/stats.hpp"

namespace mftp::sim {

namespace {

constexpr std::size_t kOracleChunk = 50'000;

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCategory::config, message);
}

double average(std::span<const double> v, std::size_t lo, std::size_t hi) {
  hi = std::min(hi, v.size());
  if (lo >= hi) {
    lo = 0;
    hi = v.size();
  }
  double s = 0.0;
  for (std::size_t j = lo; j < hi; ++j) s += v[j];
  return s / static_cast<double>(hi - lo);
}

// Indices of the "first 10" and "points 11-20" windows used by the covariates.
constexpr std::size_t kFirstHi = 10;
constexpr std::size_t kSecondLo = 10;
constexpr std::size_t kSecondHi = 20;

}  // namespace

Kernel Kernel::squared_exponential(double sigma) {
  require(std::isfinite(sigma) && sigma > 0.0, "squared-exponential kernel needs sigma > 0");
  Kernel k;
  k.kind = KernelKind::squared_exponential;
  k.length = sigma;
  return k;
}

Kernel Kernel::matern(double nu, double rho) {
  require(nu == 0.5 || nu == 1.5 || nu == 2.5, "Matern kernel supports nu in {0.5, 1.5, 2.5}");
  require(std::isfinite(rho) && rho > 0.0, "Matern kernel needs rho > 0");
  Kernel k;
  k.kind = KernelKind::matern;
  k.nu = nu;
  k.length = rho;
  return k;
}

Kernel Kernel::wiener() {
  Kernel k;
  k.kind = KernelKind::wiener;
  return k;
}

double Kernel::operator()(double s, double t) const {
  const double d = std::abs(s - t);
  switch (kind) {
    case KernelKind::squared_exponential: return std::exp(sign * d * d / (2.0 * length * length));
    case KernelKind::matern: {
      const double r = d / length;
      if (nu == 0.5) return std::exp(-r);
      if (nu == 1.5) return (1.0 + std::sqrt(3.0) * r) * std::exp(-std::sqrt(3.0) * r);
      return (1.0 + std::sqrt(5.0) * r + 5.0 * r * r / 3.0) * std::exp(-std::sqrt(5.0) * r);
    }
    case KernelKind::wiener: return std::min(s, t);
  }
  return 0.0;
}

std::string Kernel::describe() const {
  std::ostringstream os;
  switch (kind) {
    case KernelKind::squared_exponential: os << "squared_exponential(sigma=" << length << ")"; break;
    case KernelKind::matern: os << "matern(nu=" << nu << ", rho=" << length << ")"; break;
    case KernelKind::wiener: os << "wiener"; break;
  }
  return os.str();
}

Eigen::MatrixXd kernel_matrix(const Kernel& kernel, const TimeGrid& grid) {
  const auto t = grid.points();
  const auto T = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd k(T, T);
  for (Eigen::Index a = 0; a < T; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) {
      k(a, b) = k(b, a) = kernel(t[static_cast<std::size_t>(a)], t[static_cast<std::size_t>(b)]);
    }
  }
  return k;
}

GpSampler::GpSampler(const Kernel& kernel, const TimeGrid& grid) {
  const auto T = static_cast<Eigen::Index>(grid.size());
  if (kernel.kind == KernelKind::wiener) {
    // Cumulative independent increments: the lower-triangular factor of min(s, t).
    const auto t = grid.points();
    factor_ = Eigen::MatrixXd::Zero(T, T);
    double prev = 0.0;
    for (Eigen::Index k = 0; k < T; ++k) {
      const double step = std::sqrt(std::max(0.0, t[static_cast<std::size_t>(k)] - prev));
      prev = t[static_cast<std::size_t>(k)];
      factor_.col(k).tail(T - k).setConstant(step);
    }
    return;
  }
  Eigen::MatrixXd k = kernel_matrix(kernel, grid);
  const double mean_diag = k.diagonal().mean();
  for (double jitter : {0.0, 1e-10, 1e-8, 1e-6, 1e-4}) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter * mean_diag;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(kj);
    if (eig.info() != Eigen::Success) continue;
    const Eigen::VectorXd lambda = eig.eigenvalues();
    const double top = lambda(T - 1);
    if (!(top > 0.0) || lambda(0) < -1e-10 * top) continue;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = T - 1; j >= 0; --j) {
      if (lambda(j) > 1e-13 * top) keep.push_back(j);
    }
    factor_.resize(T, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
      auto v = eig.eigenvectors().col(keep[c]);
      // Fixed sign so the factor does not depend on the eigensolver's choice.
      const double s = v.sum() < 0.0 ? -1.0 : 1.0;
      factor_.col(static_cast<Eigen::Index>(c)) = s * std::sqrt(lambda(keep[c])) * v;
    }
    jitter_ = jitter * mean_diag;
    return;
  }
  throw Error(ErrorCategory::numeric, "kernel matrix for " + kernel.describe() +
                                          " is not positive semidefinite even after jitter 1e-4 x mean diagonal");
}

CurveMatrix GpSampler::sample(std::size_t n, Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), factor_.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = normal(rng);
  }
  CurveMatrix out = z * factor_.transpose();
  return out;
}

CurveMatrix sample_gp(const Kernel& kernel, const TimeGrid& grid, std::size_t n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  return GpSampler(kernel, grid).sample(n, rng);
}

std::vector<double> default_mean_function(const TimeGrid& grid) {
  std::vector<double> a0;
  for (double t : grid.points()) {
    a0.push_back(2.0 + std::sin(2.0 * std::numbers::pi * t) + 0.5 * std::sin(4.0 * std::numbers::pi * t));
  }
  return a0;
}

Eigen::MatrixXd gen_covariates(const CurveMatrix& curves, std::size_t p, Rng& rng,
                               std::optional<double> bernoulli_scale) {
  require(p % 3 == 0, "covariate dimension p must be divisible by 3, got " + std::to_string(p));
  const std::size_t per = p / 3;
  const auto n = curves.rows();
  std::vector<double> first(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) first[static_cast<std::size_t>(i)] = average(row_span(curves, i), 0, kFirstHi);
  double scale = 0.0;
  if (bernoulli_scale) {
    scale = *bernoulli_scale;
  } else if (n > 0) {
    scale = *std::max_element(first.begin(), first.end());
  }
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(p));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto curve = row_span(curves, i);
    const double mu = average(curve, 0, curve.size());
    const double ratio = scale > 0.0 ? first[static_cast<std::size_t>(i)] / scale : 0.0;
    const double prob = std::clamp(std::isfinite(ratio) ? ratio : 0.0, 0.0, 1.0);
    const double rate = std::floor(std::abs(average(curve, kSecondLo, kSecondHi) / 3.0));
    Eigen::Index c = 0;
    for (std::size_t k = 0; k < per; ++k) x(i, c++) = mu + normal(rng);
    std::bernoulli_distribution bern(prob);
    for (std::size_t k = 0; k < per; ++k) x(i, c++) = bern(rng) ? 1.0 : 0.0;
    if (rate > 0.0) {
      std::poisson_distribution<long> pois(rate);
      for (std::size_t k = 0; k < per; ++k) x(i, c++) = static_cast<double>(pois(rng));
    } else {
      for (std::size_t k = 0; k < per; ++k) x(i, c++) = 0.0;
    }
  }
  return x;
}

Eigen::MatrixXd gen_covariates(const CurveMatrix& curves, std::size_t p, std::uint64_t seed,
                               std::optional<double> bernoulli_scale) {
  auto rng = make_rng(seed);
  return gen_covariates(curves, p, rng, bernoulli_scale);
}

std::string_view to_string(OutcomeModelKind kind) noexcept { return kind == OutcomeModelKind::complex ? "complex" : "simple"; }

std::vector<double> beta_t(const TimeGrid& grid) {
  std::vector<double> b;
  for (double t : grid.points()) b.push_back(0.084 - (t - 0.5) * (t - 0.5));
  return b;
}

Eigen::VectorXd draw_beta_x(std::size_t p, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::VectorXd b(static_cast<Eigen::Index>(p));
  for (Eigen::Index k = 0; k < b.size(); ++k) b(k) = unif(rng);
  return b;
}

Eigen::VectorXd eta_a(const CurveMatrix& curves, const TimeGrid& grid) {
  const auto beta = beta_t(grid);
  const auto w = grid.weights();
  Eigen::VectorXd bw(static_cast<Eigen::Index>(beta.size()));
  for (std::size_t j = 0; j < beta.size(); ++j) bw(static_cast<Eigen::Index>(j)) = beta[j] * w[j];
  if (curves.cols() != bw.size()) throw_dimension("eta_a curves", grid.size(), static_cast<std::size_t>(curves.cols()));
  return curves * bw;
}

Eigen::VectorXd mean_outcome(OutcomeModelKind kind, const Eigen::VectorXd& eta, const Eigen::MatrixXd& covariates,
                             const Eigen::VectorXd& beta_x) {
  if (covariates.rows() != eta.size()) throw_dimension("mean_outcome rows", static_cast<std::size_t>(eta.size()), static_cast<std::size_t>(covariates.rows()));
  if (covariates.cols() != beta_x.size()) throw_dimension("mean_outcome beta_x", static_cast<std::size_t>(covariates.cols()), static_cast<std::size_t>(beta_x.size()));
  const Eigen::VectorXd eta_x = covariates * beta_x;
  if (kind == OutcomeModelKind::simple) {
    return eta + eta_x / std::sqrt(static_cast<double>(covariates.cols()));
  }
  require(covariates.cols() >= 3, "complex outcome model needs p >= 3");
  Eigen::VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double l = std::log(std::max(std::abs(eta(i)), 1e-8));
    const double x3 = covariates(i, 2);
    mu(i) = -2.0 * l * l + eta(i) * covariates(i, 0) + eta_x(i) + covariates(i, 1) * x3 * x3 / 5.0;
  }
  return mu;
}

Eigen::VectorXd gen_outcome(const CurveMatrix& curves, const TimeGrid& grid, const Eigen::MatrixXd& covariates,
                            OutcomeModelKind kind, const Eigen::VectorXd& beta_x, Rng& rng) {
  Eigen::VectorXd y = mean_outcome(kind, eta_a(curves, grid), covariates, beta_x);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += normal(rng);
  return y;
}

void SimConfig::validate() const {
  require(n >= 20, "simulation needs n >= 20");
  require(T >= 10, "simulation needs T >= 10");
  require(p % 3 == 0, "covariate dimension p must be divisible by 3");
  require(outcome == OutcomeModelKind::simple || p >= 3, "complex outcome model needs p >= 3");
  if (kernel.kind != KernelKind::wiener) require(kernel.length > 0.0, "kernel length must be > 0");
  if (mean) require(mean->size() == T, "mean function length must equal T");
  require(oracle_draws >= 1000, "oracle needs at least 1000 draws");
}

SimConfig scenario_config(int scenario, std::uint64_t root_seed) {
  require(scenario >= 1 && scenario <= 4, "scenario must be 1, 2, 3 or 4");
  SimConfig c;
  c.name = "scenario" + std::to_string(scenario);
  c.T = 100;
  c.p = 15;
  c.kernel = Kernel::squared_exponential(5.0 / static_cast<double>(c.T));
  c.outcome = scenario <= 2 ? OutcomeModelKind::simple : OutcomeModelKind::complex;
  const double tau = scenario % 2 == 1 ? 1.0 : 0.8;
  c.policy = ModificationPolicy::scale_warp(tau, 1.2);
  c.K = 4;
  c.seed = derive_seed(root_seed, {tag("scenario"), static_cast<std::uint64_t>(scenario)});
  return c;
}

SimModel::SimModel(const SimConfig& config)
    : grid(config.grid()),
      mean(config.mean ? *config.mean : default_mean_function(grid)),
      sampler(config.kernel, grid),
      beta_x(draw_beta_x(config.p, derive_seed(config.seed, {tag("beta_x")}))) {
  config.validate();
  // Population stand-in for the sample maximum of the first-10 averages:
  // mean + 3 sd of that average under the Gaussian process.
  const std::size_t m = std::min(kFirstHi, grid.size());
  double mu = 0.0;
  for (std::size_t j = 0; j < m; ++j) mu += mean[j];
  mu /= static_cast<double>(m);
  const Eigen::MatrixXd f = sampler.factor().topRows(static_cast<Eigen::Index>(m));
  const Eigen::RowVectorXd avg = f.colwise().mean();
  const double sd = avg.norm();
  bernoulli_scale = mu + 3.0 * sd;
  if (!(bernoulli_scale > 0.0)) bernoulli_scale = 1.0;
}

SimulatedData generate(const SimConfig& config, const SimModel& model, std::size_t n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  CurveMatrix curves = model.sampler.sample(n, rng);
  for (Eigen::Index i = 0; i < curves.rows(); ++i) {
    for (Eigen::Index j = 0; j < curves.cols(); ++j) curves(i, j) += model.mean[static_cast<std::size_t>(j)];
  }
  Eigen::MatrixXd x = gen_covariates(curves, config.p, rng, model.bernoulli_scale);
  Eigen::VectorXd mu = mean_outcome(config.outcome, eta_a(curves, model.grid), x, model.beta_x);
  Eigen::VectorXd y = mu;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += normal(rng);
  const CurveMatrix shifted = apply_policy(config.policy, model.grid, curves, &x);
  Eigen::VectorXd mu_q = mean_outcome(config.outcome, eta_a(shifted, model.grid), x, model.beta_x);
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i + 1));
  return {Dataset(model.grid, std::move(curves), std::move(x), std::move(y), OutcomeKind::continuous, std::move(ids)),
          std::move(mu), std::move(mu_q)};
}

SimulatedData generate(const SimConfig& config, std::uint64_t seed) {
  const SimModel model(config);
  return generate(config, model, config.n, seed);
}

Dataset generate_dataset(const SimConfig& config, std::uint64_t seed) { return generate(config, seed).data; }

OracleResult oracle_truth(const SimConfig& config, std::uint64_t seed, std::size_t threads) {
  const SimModel model(config);
  const std::size_t total = config.oracle_draws;
  const std::size_t chunks = (total + kOracleChunk - 1) / kOracleChunk;
  std::vector<double> sums(chunks, 0.0), squares(chunks, 0.0);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t m = std::min(kOracleChunk, total - c * kOracleChunk);
    auto rng = make_rng(derive_seed(seed, {tag("oracle"), c}));
    CurveMatrix curves = model.sampler.sample(m, rng);
    for (Eigen::Index i = 0; i < curves.rows(); ++i) {
      for (Eigen::Index j = 0; j < curves.cols(); ++j) curves(i, j) += model.mean[static_cast<std::size_t>(j)];
    }
    const Eigen::MatrixXd x = gen_covariates(curves, config.p, rng, model.bernoulli_scale);
    const CurveMatrix shifted = apply_policy(config.policy, model.grid, curves, &x);
    const Eigen::VectorXd mu = mean_outcome(config.outcome, eta_a(shifted, model.grid), x, model.beta_x);
    // Chunk statistics are centered on the chunk mean to keep the pooled variance accurate.
    const double mean = mu.mean();
    sums[c] = mean * static_cast<double>(m);
    squares[c] = (mu.array() - mean).square().sum();
  });
  double sum = 0.0;
  for (double s : sums) sum += s;
  const double mean = sum / static_cast<double>(total);
  double ss = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t m = std::min(kOracleChunk, total - c * kOracleChunk);
    const double d = sums[c] / static_cast<double>(m) - mean;
    ss += squares[c] + static_cast<double>(m) * d * d;
  }
  const double var = ss / static_cast<double>(total - 1);
  return {mean, std::sqrt(var / static_cast<double>(total)), total};
}

int kind_index(EstimatorKind kind) noexcept {
  switch (kind) {
    case EstimatorKind::OR: return 0;
    case EstimatorKind::IPW_hajek: return 1;
    case EstimatorKind::IPW_plain: return 2;
    case EstimatorKind::AIPW: return 3;
  }
  return 3;
}

const EstimatorSummary& ScenarioResult::summary(EstimatorKind kind, std::size_t n, std::size_t K) const {
  for (const auto& s : summaries) {
    if (s.estimator == kind && s.n == n && s.K == K) return s;
  }
  throw Error(ErrorCategory::internal, "no summary for " + std::string(to_string(kind)) + " at n=" + std::to_string(n) +
                                           ", K=" + std::to_string(K));
}

ScenarioResult run_scenario(const SimConfig& config, const ScenarioOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  const std::vector<std::size_t> ns = options.n_grid.empty() ? std::vector<std::size_t>{config.n} : options.n_grid;
  const std::vector<std::size_t> Ks = options.K_grid.empty() ? std::vector<std::size_t>{config.K} : options.K_grid;
  const std::size_t reps = options.replications.value_or(config.replications);
  require(reps >= 1, "replications must be >= 1");
  for (auto n : ns) require(n >= 20, "simulation needs n >= 20");
  if (options.bootstrap) require(options.bootstrap_B >= 100, "bootstrap needs B >= 100");

  ScenarioResult result;
  result.config = config;
  result.truth = options.truth ? *options.truth
                               : oracle_truth(config, derive_seed(config.seed, {tag("oracle")}), options.threads);
  const SimModel model(config);

  const std::size_t tasks = ns.size() * reps;
  std::vector<std::vector<ReplicationRecord>> slots(tasks);
  parallel_for(tasks, options.threads, [&](std::size_t task) {
    const std::size_t n = ns[task / reps];
    const std::size_t rep = task % reps;
    auto& out = slots[task];
    for (auto K : Ks) {
      ReplicationRecord r;
      r.n = n;
      r.rep = rep;
      r.K = K;
      out.push_back(r);
    }
    try {
      const auto sim = generate(config, model, n, derive_seed(config.seed, {tag("data"), n, rep}));
      PipelineSpec spec;
      spec.K_m = config.K_m;
      spec.folds = options.folds;
      spec.lambda = options.lambda;
      spec.weights = options.weights;
      spec.bootstrap_B = options.bootstrap_B;
      spec.alpha = options.alpha;
      spec.threads = 1;
      auto basis = std::make_shared<const FpcaModel>(fit_fpca(sim.data, spec.basis_rule));
      for (std::size_t k = 0; k < Ks.size(); ++k) {
        auto& r = out[k];
        spec.K = Ks[k];
        spec.seed = derive_seed(config.seed, {tag("estimate"), n, rep, Ks[k]});
        const auto prep = prepare(sim.data, config.policy, spec, basis);
        r.K_m = prep.K_m;
        const auto outcome = fit_outcome(prep, spec);
        const auto weights = fit_weights(prep, spec);
        r.estimates[0] = estimate_or(prep, outcome).point;
        r.estimates[1] = estimate_ipw(prep, weights, IpwMode::hajek).point;
        r.estimates[2] = estimate_ipw(prep, weights, IpwMode::plain).point;
        const auto aipw = estimate_aipw(prep, spec);
        r.estimates[3] = aipw.point;
        r.aipw_plugin_se = aipw.diagnostics.plugin_se;
        if (options.bootstrap) {
          const auto boot = bootstrap(prep, spec, options.bootstrap_kinds);
          for (std::size_t b = 0; b < options.bootstrap_kinds.size(); ++b) {
            r.intervals[kind_index(options.bootstrap_kinds[b])] = boot.intervals[b];
          }
        }
      }
    } catch (const Error& err) {
      for (auto& r : out) {
        r.failed = true;
        r.error = std::string(to_string(err.category())) + ": " + err.what();
      }
    }
  });

  for (auto& slot : slots) {
    for (auto& r : slot) result.records.push_back(std::move(r));
  }
  std::size_t failed_tasks = 0;
  std::string first_error;
  for (const auto& slot : slots) {
    if (!slot.empty() && slot.front().failed) {
      ++failed_tasks;
      if (first_error.empty()) first_error = slot.front().error;
    }
  }
  result.failures = failed_tasks;
  if (static_cast<double>(failed_tasks) > options.max_failure_fraction * static_cast<double>(tasks)) {
    std::ostringstream os;
    os << config.name << ": " << failed_tasks << " of " << tasks << " replications failed (limit "
       << options.max_failure_fraction * 100.0 << "%); first failure: " << first_error;
    throw Error(ErrorCategory::scenario, os.str());
  }
  if (failed_tasks > 0) {
    result.warnings.push_back(std::to_string(failed_tasks) + " replications failed; first failure: " + first_error);
  }

  double smallest_sd = std::numeric_limits<double>::infinity();
  for (auto n : ns) {
    for (auto K : Ks) {
      for (auto kind : kAllEstimators) {
        const int idx = kind_index(kind);
        std::vector<double> err, sq;
        std::size_t covered = 0, with_ci = 0;
        double width = 0.0;
        for (const auto& r : result.records) {
          if (r.n != n || r.K != K || r.failed) continue;
          const double e = r.estimates[idx] - result.truth.mean;
          err.push_back(e);
          sq.push_back(e * e);
          if (r.intervals[idx]) {
            ++with_ci;
            width += r.intervals[idx]->hi - r.intervals[idx]->lo;
            if (r.intervals[idx]->lo <= result.truth.mean && result.truth.mean <= r.intervals[idx]->hi) ++covered;
          }
        }
        EstimatorSummary s;
        s.estimator = kind;
        s.n = n;
        s.K = K;
        s.successes = err.size();
        if (!err.empty()) {
          const double m = static_cast<double>(err.size());
          s.bias = stats::mean(err);
          s.mse = stats::mean(sq);
          s.sd = std::sqrt(stats::variance(err));
          s.bias_se = s.sd / std::sqrt(m);
          s.mse_se = std::sqrt(stats::variance(sq) / m);
          smallest_sd = std::min(smallest_sd, s.sd);
        }
        if (with_ci > 0) {
          const double c = static_cast<double>(covered) / static_cast<double>(with_ci);
          s.coverage = c;
          s.coverage_se = std::sqrt(c * (1.0 - c) / static_cast<double>(with_ci));
          s.mean_ci_width = width / static_cast<double>(with_ci);
        }
        result.summaries.push_back(s);
      }
    }
  }
  if (std::isfinite(smallest_sd) && result.truth.se >= 0.1 * smallest_sd) {
    std::ostringstream os;
    os << "oracle SE " << result.truth.se << " is not below 10% of the smallest estimator SD " << smallest_sd
       << "; increase oracle_draws";
    result.warnings.push_back(os.str());
  }
  result.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

double mse_slope(std::span<const double> ns, std::span<const double> mses) {
  if (ns.size() != mses.size()) throw_dimension("mse_slope", ns.size(), mses.size());
  if (ns.size() < 4) throw Error(ErrorCategory::config, "mse_slope needs at least 4 sample sizes, got " + std::to_string(ns.size()));
  std::vector<double> x, y;
  for (std::size_t k = 0; k < ns.size(); ++k) {
    if (!(mses[k] > 0.0) || !(ns[k] > 0.0)) {
      throw Error(ErrorCategory::internal, "nonpositive MSE or n at index " + std::to_string(k));
    }
    x.push_back(std::log(ns[k]));
    y.push_back(std::log(mses[k]));
  }
  return stats::least_squares_line(x, y).slope;
}

double mse_slope(const ScenarioResult& result, EstimatorKind kind, std::size_t K) {
  std::vector<double> ns, mses;
  for (const auto& s : result.summaries) {
    if (s.estimator == kind && s.K == K) {
      ns.push_back(static_cast<double>(s.n));
      mses.push_back(s.mse);
    }
  }
  return mse_slope(ns, mses);
}

Dataset generate_activity_dataset(const ActivityConfig& config) {
  require(config.n >= 20, "activity dataset needs n >= 20");
  require(config.step_minutes >= 1 && 1440 % config.step_minutes == 0, "step_minutes must divide 1440");
  require(config.p >= 2, "activity dataset needs p >= 2");
  const std::size_t T = 1440 / config.step_minutes;
  std::vector<double> minutes;
  for (std::size_t j = 0; j < T; ++j) minutes.push_back(static_cast<double>(j * config.step_minutes));
  TimeGrid grid(minutes, 0.0, 1440.0);

  // Diurnal profile in activity units: quiet night, active day.
  std::vector<double> profile(T);
  for (std::size_t j = 0; j < T; ++j) {
    const double h = minutes[j] / 60.0;
    double day = 0.0;
    if (h >= 6.0 && h <= 23.0) {
      const double s = std::sin(std::numbers::pi * (h - 6.0) / 17.0);
      day = s * s;
    }
    profile[j] = 1.5 + 16.0 * day;
  }

  auto rng = make_rng(derive_seed(config.seed, {tag("activity")}));
  const GpSampler sampler(Kernel::squared_exponential(0.04), grid);
  const CurveMatrix g = sampler.sample(config.n, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  CurveMatrix curves(static_cast<Eigen::Index>(config.n), static_cast<Eigen::Index>(T));
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(config.n), static_cast<Eigen::Index>(config.p));
  Eigen::VectorXd y(static_cast<Eigen::Index>(config.n));
  const auto in_night = [&](std::size_t j) {
    const double h = minutes[j] / 60.0;
    return h >= 23.0 || h < 6.0;
  };
  for (Eigen::Index i = 0; i < curves.rows(); ++i) {
    const double u = 0.25 * normal(rng);         // overall activity level
    const double night_u = 0.35 * normal(rng);   // extra nighttime activity
    double night = 0.0, day = 0.0;
    std::size_t night_n = 0;
    for (std::size_t j = 0; j < T; ++j) {
      const double bump = in_night(j) ? night_u : 0.0;
      const double v = profile[j] * std::exp(0.35 * g(i, static_cast<Eigen::Index>(j)) + u + bump);
      curves(i, static_cast<Eigen::Index>(j)) = v;
      if (in_night(j)) {
        night += v;
        ++night_n;
      } else {
        day += v;
      }
    }
    night /= static_cast<double>(std::max<std::size_t>(1, night_n));
    day /= static_cast<double>(std::max<std::size_t>(1, T - night_n));
    // Covariates: an age-like score tied to activity level, a binary group, then noise columns.
    x(i, 0) = -2.0 * u + 1.5 * night_u + normal(rng);
    x(i, 1) = coin(rng) ? 1.0 : 0.0;
    for (Eigen::Index k = 2; k < x.cols(); ++k) x(i, k) = normal(rng);
    const double eta = -1.2 + 0.5 * (night - 2.0) - 0.04 * (day - 12.0) + 0.4 * x(i, 0) + 0.3 * x(i, 1);
    std::bernoulli_distribution event(glm::logistic_fn(eta));
    y(i) = event(rng) ? 1.0 : 0.0;
  }
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < config.n; ++i) ids.push_back("p" + std::to_string(i + 1));
  return Dataset(grid, std::move(curves), std::move(x), std::move(y), OutcomeKind::binary, std::move(ids));
}

}  // namespace mftp::sim
