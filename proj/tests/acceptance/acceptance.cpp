// Runs the eight acceptance checks end to end and prints one PASS/FAIL line
// for each. Exit status is 0 when every failing check is listed in
// --allow-red, 1 otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "mftp/commands.hpp"
#include "mftp/csv_io.hpp"
#include "mftp/estimators.hpp"
#include "mftp/fpca.hpp"
#include "mftp/parallel.hpp"
#include "mftp/simgen.hpp"
#include "mftp/stats.hpp"

using namespace mftp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::size_t g_threads = 0;

std::string fmt(double x, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << x;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mftp_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mftp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

// 1. Identity policy: OR, Hajek IPW and AIPW all return the sample mean.
Outcome identity_coherence() {
  const auto t0 = std::chrono::steady_clock::now();
  auto rng = make_rng(derive_seed(1, {tag("identity")}));
  std::uniform_int_distribution<std::size_t> size(50, 500);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    auto cfg = sim::scenario_config(1 + rep % 4);
    cfg.n = size(rng);
    const Dataset d = sim::generate_dataset(cfg, derive_seed(2, {static_cast<std::uint64_t>(rep)}));
    PipelineSpec spec;
    spec.bootstrap_B = 0;
    spec.seed = static_cast<std::uint64_t>(rep);
    const auto est = estimate_all(d, ModificationPolicy::identity(), spec);
    const double ybar = d.outcomes().mean();
    for (const auto& e : est) {
      if (e.estimator == EstimatorKind::IPW_plain) continue;
      worst = std::max(worst, std::abs(e.point - ybar));
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-6 && elapsed < 60.0,
          "max |estimate - ybar| = " + fmt(worst, 3) + " over 50 datasets in " + fmt(elapsed, 3) + " s"};
}

sim::ScenarioResult run(int scenario, std::vector<std::size_t> ns, std::vector<std::size_t> Ks, bool bootstrap) {
  const auto cfg = sim::scenario_config(scenario);
  sim::ScenarioOptions opt;
  opt.n_grid = std::move(ns);
  opt.K_grid = std::move(Ks);
  opt.replications = 200;
  opt.bootstrap = bootstrap;
  opt.bootstrap_B = 500;
  opt.threads = g_threads;
  return sim::run_scenario(cfg, opt);
}

// 2. AIPW root-n rate, IPW slower in scenario 2, OR bias in scenario 3.
Outcome root_n_slope() {
  const std::vector<std::size_t> ns = {100, 200, 400, 800, 1600};
  bool pass = true;
  std::ostringstream detail;
  for (int s = 1; s <= 3; ++s) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run(s, ns, {4}, false);
    const double aipw = sim::mse_slope(r, EstimatorKind::AIPW, 4);
    const bool in_range = aipw >= -1.15 && aipw <= -0.85;
    pass = pass && in_range;
    detail << "S" << s << " AIPW slope " << fmt(aipw, 3) << (in_range ? "" : " (outside [-1.15, -0.85])");
    if (s == 2) {
      const double ipw = sim::mse_slope(r, EstimatorKind::IPW_hajek, 4);
      pass = pass && ipw > aipw;
      detail << ", IPW slope " << fmt(ipw, 3);
    }
    if (s == 3) {
      const auto& o = r.summary(EstimatorKind::OR, 1600, 4);
      const auto& a = r.summary(EstimatorKind::AIPW, 1600, 4);
      const double margin = std::abs(o.bias) - std::abs(a.bias);
      const double se = std::hypot(o.bias_se, a.bias_se);
      pass = pass && margin > 3.0 * se;
      detail << ", n=1600 |bias| OR " << fmt(std::abs(o.bias), 3) << " vs AIPW " << fmt(std::abs(a.bias), 3)
             << " (margin " << fmt(margin / se, 3) << " SE)";
    }
    detail << " [" << fmt(seconds_since(t0), 3) << " s]; ";
  }
  return {pass, detail.str()};
}

// 3. Percentile bootstrap coverage of AIPW at n = 800.
Outcome coverage() {
  bool pass = true;
  std::ostringstream detail;
  for (int s : {1, 3}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run(s, {800}, {4}, true);
    const auto& a = r.summary(EstimatorKind::AIPW, 800, 4);
    const double cov = a.coverage.value_or(0.0);
    const bool ok = cov >= 0.90 && cov <= 0.98;
    pass = pass && ok;
    detail << "S" << s << " coverage " << fmt(cov, 3) << " +- " << fmt(a.coverage_se, 2) << " (bias "
           << fmt(a.bias, 3) << ", sd " << fmt(a.sd, 3) << ") [" << fmt(seconds_since(t0), 3) << " s]; ";
  }
  return {pass, detail.str()};
}

// 4. IPW MSE falls as K grows.
Outcome k_sweep() {
  const std::vector<std::size_t> Ks = {2, 3, 4, 5, 6, 7, 8};
  const auto r = run(3, {1600}, Ks, false);
  std::vector<double> k, mse;
  std::ostringstream detail;
  detail << "IPW MSE by K:";
  for (auto K : Ks) {
    k.push_back(static_cast<double>(K));
    mse.push_back(r.summary(EstimatorKind::IPW_hajek, 1600, K).mse);
    detail << " " << K << ":" << fmt(mse.back(), 3);
  }
  const double rho = stats::spearman(k, mse);
  detail << "; Spearman " << fmt(rho, 3);
  return {rho < 0.0, detail.str()};
}

// 5. Tail decay laws for Wiener and squared-exponential curves.
Outcome eigen_decay() {
  const auto wgrid = TimeGrid::uniform(200);
  const auto wiener = fit_fpca(wgrid, sim::sample_gp(sim::Kernel::wiener(), wgrid, 4000, 51));
  const auto wr = decay_diagnostic(wiener);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  const double analytic = (0.5 - 4.0 / pi2 - 4.0 / (9.0 * pi2)) / 0.5;
  const double ratio = tail_residual(wiener, 2) / wiener.total_variance();
  const auto sgrid = TimeGrid::uniform(100);
  const auto se = fit_fpca(sgrid, sim::sample_gp(sim::Kernel::squared_exponential(0.05), sgrid, 2000, 52));
  const auto sr = decay_diagnostic(se);
  const bool slope_ok = wr.polynomial_slope >= -1.25 && wr.polynomial_slope <= -0.75;
  const bool ratio_ok = std::abs(ratio - analytic) <= 0.15 * analytic;
  const bool se_ok = sr.preferred == DecayLaw::exponential;
  return {slope_ok && ratio_ok && se_ok,
          "Wiener log-log slope " + fmt(wr.polynomial_slope, 3) + ", Delta_2 ratio " + fmt(ratio, 4) + " vs " +
              fmt(analytic, 4) + "; SE kernel prefers " + std::string(to_string(sr.preferred))};
}

// 6. Mean-shift of a Gaussian score: the classifier recovers the log density ratio.
Outcome gaussian_ratio() {
  const double delta = 0.3;
  const std::size_t n = 5000;
  auto rng = make_rng(61);
  std::normal_distribution<double> z(0.0, 1.0);
  PreparedData prep;
  prep.observed.resize(n, 1);
  prep.covariates.resize(n, 1);
  prep.y.resize(n);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    prep.covariates(i, 0) = z(rng);
    prep.observed(i, 0) = z(rng);
    prep.y(i) = prep.observed(i, 0) + z(rng);
  }
  prep.shifted = prep.observed.array() + delta;
  prep.K = 1;
  prep.K_m = 1;
  PipelineSpec spec;
  spec.K = 1;
  const auto w = fit_weights(prep, spec);
  const double slope = w.coefficients()(2);
  const auto e = estimate_ipw(prep, w, IpwMode::hajek);
  // mu^q = E[A + delta] = delta.
  const Eigen::VectorXd resid = (w.fitted.normalized.array() * (prep.y.array() - e.point)).matrix();
  const double se = std::sqrt(stats::variance({resid.data(), n}) / static_cast<double>(n));
  const bool pass = std::abs(slope - delta) <= 0.05 && std::abs(e.point - delta) <= 3.0 * se;
  return {pass, "log-odds slope " + fmt(slope, 4) + ", IPW " + fmt(e.point, 4) + " vs " + fmt(delta, 2) + " (" +
                    fmt(std::abs(e.point - delta) / se, 3) + " MC SE)"};
}

// 7. Two independent oracle evaluations agree.
Outcome oracle_consistency() {
  bool pass = true;
  std::ostringstream detail;
  for (int s = 1; s <= 4; ++s) {
    const auto cfg = sim::scenario_config(s);
    const auto a = sim::oracle_truth(cfg, derive_seed(cfg.seed, {tag("oracle-a")}), g_threads);
    const auto b = sim::oracle_truth(cfg, derive_seed(cfg.seed, {tag("oracle-b")}), g_threads);
    const double z = std::abs(a.mean - b.mean) / std::hypot(a.se, b.se);
    pass = pass && z < 4.0;
    detail << "S" << s << " " << fmt(a.mean, 6) << " vs " << fmt(b.mean, 6) << " (" << fmt(z, 3) << " SE); ";
  }
  return {pass, detail.str()};
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    const auto other = b / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
      why = entry.path().filename().string() + " differs";
      return false;
    }
  }
  for (const auto& entry : fs::directory_iterator(b)) files -= fs::exists(a / entry.path().filename()) ? 1 : 0;
  if (files != 0) {
    why = "file sets differ";
    return false;
  }
  return true;
}

// 8. Every command reproduces its outputs byte for byte.
Outcome determinism() {
  const auto data_dir = scratch("data");
  auto cfg = sim::scenario_config(2);
  cfg.n = 300;
  {
    std::ofstream out(data_dir / "sim.csv");
    cli::write_dataset_csv(sim::generate_dataset(cfg, 81), out);
  }
  const std::string input = (data_dir / "sim.csv").string();
  const std::string threads = std::to_string(resolve_threads(g_threads));
  std::vector<std::pair<std::string, std::function<std::vector<std::string>(const fs::path&)>>> runs = {
      {"analyze",
       [&](const fs::path& out) {
         return std::vector<std::string>{"analyze", "--input", input, "--out", out.string(), "--policy", "scale_warp",
                                         "--tau", "0.8", "--bootstrap", "200", "--threads", threads};
       }},
      {"fpca-diagnose",
       [&](const fs::path& out) {
         return std::vector<std::string>{"fpca-diagnose", "--input", input, "--out", out.string()};
       }},
      {"simulate", [&](const fs::path& out) {
         const auto conf = out.parent_path() / (out.filename().string() + ".json");
         std::ofstream c(conf);
         c << R"({"command": "simulate", "out": ")" << out.string() << R"(", "threads": )" << threads
           << R"(, "simulation": {"scenario": 2, "n_grid": [100, 200, 400, 800], "replications": 10,
              "oracle_draws": 20000, "coverage": true, "bootstrap_B": 100}})";
         c.close();
         return std::vector<std::string>{"--config", conf.string()};
       }}};
  std::ostringstream detail;
  bool pass = true;
  for (const auto& [name, args] : runs) {
    const auto a = scratch(name + "_a");
    const auto b = scratch(name + "_b");
    const int ca = cli(args(a));
    const int cb = cli(args(b));
    std::string why;
    const bool ok = ca == 0 && cb == 0 && same_tree(a, b, why);
    if (ca != 0 || cb != 0) why = "exit codes " + std::to_string(ca) + ", " + std::to_string(cb);
    pass = pass && ok;
    detail << name << (ok ? " identical" : " NOT identical (" + why + ")") << "; ";
  }
  return {pass, detail.str()};
}

// Stand-in for the application study: the nighttime threshold policy on
// synthetic activity curves preserves daily totals and yields a tau sweep.
Outcome application_substitute() {
  const Dataset d = sim::generate_activity_dataset({});
  const auto pol = ModificationPolicy::window_threshold(clock_windows(23.0, 6.0), 10.0, 0.3, true);
  const CurveMatrix q = apply_policy(pol, d.grid(), d.curves());
  double worst = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const double before = integral(row_span(d.curves(), i), d.grid());
    const double after = integral(row_span(q, i), d.grid());
    worst = std::max(worst, std::abs(after - before) / std::abs(before));
  }
  const auto dir = scratch("application");
  {
    std::ofstream out(dir / "activity.csv");
    cli::write_dataset_csv(d, out);
  }
  const auto conf = dir / "config.json";
  {
    std::ofstream c(conf);
    c << R"({"command": "analyze", "input": ")" << (dir / "activity.csv").string() << R"(", "out": ")"
      << (dir / "out").string() << R"(", "bootstrap": 0,
      "policy": {"kind": "window_threshold", "tau": 0.3, "threshold": 10, "windows": ["23:00-06:00"]},
      "tau_sweep": [1.0, 0.8, 0.6, 0.4, 0.3]})";
  }
  if (cli({"--config", conf.string()}) != 0) return {false, "analyze on activity data failed"};
  // OR points along the sweep, in the order written.
  std::ifstream in(dir / "out" / "sweep.csv");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::vector<double> tau, orv;
  while (std::getline(in, line)) {
    const auto cells = cli::split_csv_line(line);
    if (cells.size() == 3 && cells[1] == "OR") {
      tau.push_back(std::stod(cells[0]));
      orv.push_back(std::stod(cells[2]));
    }
  }
  bool monotone = orv.size() == 5;
  for (std::size_t k = 1; monotone && k < orv.size(); ++k) monotone = tau[k] < tau[k - 1] && orv[k] <= orv[k - 1];
  std::ostringstream detail;
  detail << "max relative integral change " << fmt(worst, 3) << "; OR sweep";
  for (std::size_t k = 0; k < orv.size(); ++k) detail << " " << fmt(tau[k], 2) << ":" << fmt(orv[k], 4);
  return {worst <= 1e-10 && monotone, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mftp acceptance checks"};
  std::string allow_red_text;
  std::string only_text;
  app.add_option("--allow-red", allow_red_text, "comma-separated criteria whose failure is tolerated");
  app.add_option("--only", only_text, "comma-separated criteria to run (default all)");
  app.add_option("--threads", g_threads, "worker threads (0 = all cores)");
  CLI11_PARSE(app, argc, argv);

  const auto parse_list = [](const std::string& text) {
    std::set<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.insert(std::stoi(item));
    }
    return out;
  };
  const auto allow_red = parse_list(allow_red_text);
  const auto only = parse_list(only_text);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"identity-policy coherence", identity_coherence},
      {"double-robust root-n slope", root_n_slope},
      {"AIPW bootstrap coverage", coverage},
      {"K-sweep trend", k_sweep},
      {"eigen-decay oracles", eigen_decay},
      {"Gaussian density-ratio oracle", gaussian_ratio},
      {"oracle consistency", oracle_consistency},
      {"determinism", determinism},
  };

  int unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail;
    if (!o.pass && allow_red.count(id)) std::cout << " (known red)";
    std::cout << std::endl;
    if (!o.pass && !allow_red.count(id)) ++unexpected;
  }
  if (only.empty() || only.count(0)) {
    Outcome o;
    try {
      o = application_substitute();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " - application substitute: " << o.detail << std::endl;
    if (!o.pass) ++unexpected;
  }
  fs::remove_all(fs::temp_directory_path() / ("mftp_acceptance_" + std::to_string(::getpid())));
  return unexpected == 0 ? 0 : 1;
}
