#include "mftp/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <string_view>

#include "mftp/error.hpp"
#include "mftp/random.hpp"

namespace mftp::cli {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw Error(ErrorCategory::config, (path.empty() ? std::string("config") : path) + ": " + message);
}

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      fail(join(path, item.key()), "unknown key");
    }
  }
}

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(path, "expected a finite number");
  return x;
}

std::uint64_t as_u64(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() < 0) fail(path, "expected a nonnegative integer");
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  fail(path, "expected a nonnegative integer");
}

std::size_t as_count(const json& v, const std::string& path) { return static_cast<std::size_t>(as_u64(v, path)); }

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

template <class F>
auto as_list(const json& v, const std::string& path, F item) {
  if (!v.is_array()) fail(path, "expected an array");
  std::vector<decltype(item(v, path))> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(item(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

WindowSpec parse_window(const json& v, const std::string& path) {
  WindowSpec w;
  if (v.is_string()) {
    // "23:00-06:00"
    const std::string s = v.get<std::string>();
    const auto dash = s.find('-');
    if (dash == std::string::npos) fail(path, "expected \"HH:MM-HH:MM\"");
    try {
      w.clock = true;
      w.lo = parse_clock(s.substr(0, dash));
      w.hi = parse_clock(s.substr(dash + 1));
    } catch (const Error& e) {
      fail(path, e.what());
    }
    return w;
  }
  if (!v.is_array() || v.size() != 2) fail(path, "expected [lo, hi] or \"HH:MM-HH:MM\"");
  if (v[0].is_string() && v[1].is_string()) {
    w.clock = true;
    try {
      w.lo = parse_clock(v[0].get<std::string>());
      w.hi = parse_clock(v[1].get<std::string>());
    } catch (const Error& e) {
      fail(path, e.what());
    }
    return w;
  }
  w.lo = as_double(v[0], path + "[0]");
  w.hi = as_double(v[1], path + "[1]");
  return w;
}

void read_policy(const json& obj, const std::string& path, PolicySpec& p) {
  if (obj.is_string()) {
    p.kind = obj.get<std::string>();
    return;
  }
  check_keys(obj, path, {"kind", "tau", "warp_exponent", "windows", "threshold", "renormalize"});
  if (obj.contains("kind")) p.kind = as_string(obj["kind"], join(path, "kind"));
  if (obj.contains("tau")) p.tau = as_double(obj["tau"], join(path, "tau"));
  if (obj.contains("warp_exponent")) p.warp_exponent = as_double(obj["warp_exponent"], join(path, "warp_exponent"));
  if (obj.contains("windows")) p.windows = as_list(obj["windows"], join(path, "windows"), parse_window);
  if (obj.contains("threshold")) p.threshold = as_double(obj["threshold"], join(path, "threshold"));
  if (obj.contains("renormalize")) p.renormalize = as_bool(obj["renormalize"], join(path, "renormalize"));
}

void read_weights(const json& obj, const std::string& path, WeightSpec& w) {
  check_keys(obj, path, {"features", "cap", "cap_percentile", "hard_cap", "ridge"});
  if (obj.contains("features")) w.features = as_string(obj["features"], join(path, "features"));
  if (obj.contains("cap")) w.cap = as_bool(obj["cap"], join(path, "cap"));
  if (obj.contains("cap_percentile")) w.cap_percentile = as_double(obj["cap_percentile"], join(path, "cap_percentile"));
  if (obj.contains("hard_cap")) w.hard_cap = as_double(obj["hard_cap"], join(path, "hard_cap"));
  if (obj.contains("ridge")) w.ridge = as_double(obj["ridge"], join(path, "ridge"));
}

KernelSpec read_kernel(const json& obj, const std::string& path) {
  KernelSpec k;
  check_keys(obj, path, {"kind", "sigma", "nu", "rho"});
  if (obj.contains("kind")) k.kind = as_string(obj["kind"], join(path, "kind"));
  if (obj.contains("sigma")) k.sigma = as_double(obj["sigma"], join(path, "sigma"));
  if (obj.contains("nu")) k.nu = as_double(obj["nu"], join(path, "nu"));
  if (obj.contains("rho")) k.rho = as_double(obj["rho"], join(path, "rho"));
  return k;
}

void read_simulation(const json& obj, const std::string& path, SimulationSpec& s) {
  check_keys(obj, path,
             {"scenario", "n_grid", "K_grid", "replications", "coverage", "bootstrap_B", "oracle_draws", "T", "p",
              "kernel", "outcome", "tau", "warp_exponent"});
  if (obj.contains("scenario")) {
    const auto& v = obj["scenario"];
    const std::string key = join(path, "scenario");
    if (v.is_string()) {
      const std::string text = v.get<std::string>();
      if (text.size() != 1 || text[0] < '1' || text[0] > '4') fail(key, "expected 1, 2, 3 or 4");
      s.scenario = text[0] - '0';
    } else {
      s.scenario = static_cast<int>(as_u64(v, key));
    }
  }
  if (obj.contains("n_grid")) s.n_grid = as_list(obj["n_grid"], join(path, "n_grid"), as_count);
  if (obj.contains("K_grid")) s.K_grid = as_list(obj["K_grid"], join(path, "K_grid"), as_count);
  if (obj.contains("replications")) s.replications = as_count(obj["replications"], join(path, "replications"));
  if (obj.contains("coverage")) s.coverage = as_bool(obj["coverage"], join(path, "coverage"));
  if (obj.contains("bootstrap_B")) s.bootstrap_B = as_count(obj["bootstrap_B"], join(path, "bootstrap_B"));
  if (obj.contains("oracle_draws")) s.oracle_draws = as_count(obj["oracle_draws"], join(path, "oracle_draws"));
  if (obj.contains("T")) s.T = as_count(obj["T"], join(path, "T"));
  if (obj.contains("p")) s.p = as_count(obj["p"], join(path, "p"));
  if (obj.contains("kernel")) s.kernel = read_kernel(obj["kernel"], join(path, "kernel"));
  if (obj.contains("outcome")) s.outcome = as_string(obj["outcome"], join(path, "outcome"));
  if (obj.contains("tau")) s.tau = as_double(obj["tau"], join(path, "tau"));
  if (obj.contains("warp_exponent")) s.warp_exponent = as_double(obj["warp_exponent"], join(path, "warp_exponent"));
}

void check_range(bool ok, const std::string& path, const std::string& message) {
  if (!ok) fail(path, message);
}

void validate_window(const WindowSpec& w, const std::string& path) {
  if (w.clock) {
    check_range(w.lo >= 0.0 && w.lo <= 24.0 && w.hi >= 0.0 && w.hi <= 24.0 && w.lo != w.hi, path,
                "clock window needs distinct hours in [0, 24]");
  } else {
    check_range(w.lo >= 0.0 && w.lo < w.hi && w.hi <= 1.0, path, "window needs 0 <= lo < hi <= 1");
  }
}

}  // namespace

std::string_view to_string(Command command) noexcept {
  switch (command) {
    case Command::analyze: return "analyze";
    case Command::simulate: return "simulate";
    case Command::fpca_diagnose: return "fpca-diagnose";
  }
  return "analyze";
}

Command command_from_string(std::string_view name) {
  if (name == "analyze") return Command::analyze;
  if (name == "simulate") return Command::simulate;
  if (name == "fpca-diagnose") return Command::fpca_diagnose;
  fail("command", "unknown command '" + std::string(name) + "'");
}

double parse_clock(const std::string& text) {
  const auto colon = text.find(':');
  const std::string hh = text.substr(0, colon);
  const std::string mm = colon == std::string::npos ? "0" : text.substr(colon + 1);
  const auto digits = [](const std::string& s) {
    return !s.empty() && s.size() <= 2 && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  if (!digits(hh) || !digits(mm)) throw Error(ErrorCategory::config, "bad clock time '" + text + "'");
  const int h = std::stoi(hh);
  const int m = std::stoi(mm);
  if (h > 24 || m > 59 || (h == 24 && m != 0)) throw Error(ErrorCategory::config, "bad clock time '" + text + "'");
  return h + m / 60.0;
}

RunConfig config_from_json(const json& doc, RunConfig c) {
  check_keys(doc, "",
             {"command", "input", "out", "seed", "threads", "outcome_kind", "policy", "tau_sweep", "K", "K_m",
              "variance_fraction", "folds", "bootstrap", "alpha", "estimators", "lambda", "weights",
              "refit_fpca_in_bootstrap", "per_fold_fpca", "simulation"});
  if (doc.contains("command")) c.command = command_from_string(as_string(doc["command"], "command"));
  if (doc.contains("input")) c.input = as_string(doc["input"], "input");
  if (doc.contains("out")) c.out = as_string(doc["out"], "out");
  if (doc.contains("seed")) c.seed = as_u64(doc["seed"], "seed");
  if (doc.contains("threads")) c.threads = as_count(doc["threads"], "threads");
  if (doc.contains("outcome_kind")) c.outcome_kind = as_string(doc["outcome_kind"], "outcome_kind");
  if (doc.contains("policy")) read_policy(doc["policy"], "policy", c.policy);
  if (doc.contains("tau_sweep")) c.tau_sweep = as_list(doc["tau_sweep"], "tau_sweep", as_double);
  if (doc.contains("K")) c.K = as_count(doc["K"], "K");
  if (doc.contains("K_m")) c.K_m = as_count(doc["K_m"], "K_m");
  if (doc.contains("variance_fraction")) c.variance_fraction = as_double(doc["variance_fraction"], "variance_fraction");
  if (doc.contains("folds")) c.folds = as_count(doc["folds"], "folds");
  if (doc.contains("bootstrap")) c.bootstrap = as_count(doc["bootstrap"], "bootstrap");
  if (doc.contains("alpha")) c.alpha = as_double(doc["alpha"], "alpha");
  if (doc.contains("estimators")) {
    c.estimators = as_list(doc["estimators"], "estimators", [](const json& v, const std::string& path) {
      const std::string name = as_string(v, path);
      try {
        return estimator_from_string(name);
      } catch (const Error&) {
        fail(path, "unknown estimator '" + name + "'");
      }
    });
  }
  if (doc.contains("lambda")) {
    const auto& v = doc["lambda"];
    if (v.is_string()) {
      if (v.get<std::string>() != "gcv") fail("lambda", "expected \"gcv\" or a number");
      c.lambda.reset();
    } else {
      c.lambda = as_double(v, "lambda");
    }
  }
  if (doc.contains("weights")) read_weights(doc["weights"], "weights", c.weights);
  if (doc.contains("refit_fpca_in_bootstrap")) {
    c.refit_fpca_in_bootstrap = as_bool(doc["refit_fpca_in_bootstrap"], "refit_fpca_in_bootstrap");
  }
  if (doc.contains("per_fold_fpca")) c.per_fold_fpca = as_bool(doc["per_fold_fpca"], "per_fold_fpca");
  if (doc.contains("simulation")) read_simulation(doc["simulation"], "simulation", c.simulation);
  return c;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::io, "cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCategory::config, path + ": malformed JSON: " + e.what());
  }
  return config_from_json(doc, std::move(base));
}

void validate(const RunConfig& c) {
  if (c.command != Command::simulate) check_range(!c.input.empty(), "input", "an input CSV is required");
  check_range(!c.out.empty(), "out", "an output directory is required");
  check_range(c.folds >= 2 && c.folds <= 10, "folds", "must be in [2, 10]");
  check_range(c.bootstrap == 0 || c.bootstrap >= 100, "bootstrap", "must be 0 or at least 100");
  check_range(c.alpha > 0.0 && c.alpha < 1.0, "alpha", "must be in (0, 1)");
  check_range(c.variance_fraction > 0.0 && c.variance_fraction <= 1.0, "variance_fraction", "must be in (0, 1]");
  check_range(!c.K || *c.K >= 1, "K", "must be at least 1");
  check_range(!c.K_m || *c.K_m >= 1, "K_m", "must be at least 1");
  check_range(!c.lambda || *c.lambda >= 0.0, "lambda", "must be >= 0");
  check_range(!c.estimators.empty(), "estimators", "must name at least one estimator");
  check_range(!c.outcome_kind || *c.outcome_kind == "continuous" || *c.outcome_kind == "binary", "outcome_kind",
              "expected \"continuous\" or \"binary\"");

  const PolicySpec& p = c.policy;
  check_range(p.kind == "identity" || p.kind == "scale_warp" || p.kind == "window_threshold", "policy.kind",
              "expected identity, scale_warp or window_threshold");
  check_range(p.tau > 0.0, "policy.tau", "must be > 0");
  check_range(p.warp_exponent > 0.0, "policy.warp_exponent", "must be > 0");
  if (p.kind == "window_threshold") {
    check_range(!p.windows.empty(), "policy.windows", "window_threshold needs at least one window");
    for (std::size_t i = 0; i < p.windows.size(); ++i) {
      validate_window(p.windows[i], "policy.windows[" + std::to_string(i) + "]");
    }
  }
  for (std::size_t i = 0; i < c.tau_sweep.size(); ++i) {
    check_range(c.tau_sweep[i] > 0.0, "tau_sweep[" + std::to_string(i) + "]", "must be > 0");
  }

  const WeightSpec& w = c.weights;
  try {
    (void)feature_map_from_string(w.features);
  } catch (const Error&) {
    fail("weights.features", "expected linear, quadratic or pairwise");
  }
  check_range(w.cap_percentile > 0.0 && w.cap_percentile <= 1.0, "weights.cap_percentile", "must be in (0, 1]");
  check_range(w.hard_cap > 1.0, "weights.hard_cap", "must be > 1");
  check_range(w.ridge >= 0.0, "weights.ridge", "must be >= 0");

  if (c.command == Command::simulate) {
    const SimulationSpec& s = c.simulation;
    check_range(!s.scenario || (*s.scenario >= 1 && *s.scenario <= 4), "simulation.scenario",
                "expected 1, 2, 3 or 4");
    check_range(!s.n_grid.empty(), "simulation.n_grid", "must not be empty");
    for (std::size_t n : s.n_grid) check_range(n >= 20, "simulation.n_grid", "every n must be >= 20");
    for (std::size_t k : s.K_grid) check_range(k >= 1, "simulation.K_grid", "every K must be >= 1");
    check_range(s.replications >= 10, "simulation.replications", "must be at least 10");
    check_range(!s.coverage || s.bootstrap_B >= 100, "simulation.bootstrap_B", "must be at least 100");
    check_range(s.oracle_draws >= 1000, "simulation.oracle_draws", "must be at least 1000");
    check_range(!s.T || *s.T >= 10, "simulation.T", "must be >= 10");
    check_range(!s.p || *s.p % 3 == 0, "simulation.p", "must be divisible by 3");
    check_range(!s.outcome || *s.outcome == "simple" || *s.outcome == "complex", "simulation.outcome",
                "expected simple or complex");
    check_range(!s.tau || *s.tau > 0.0, "simulation.tau", "must be > 0");
    check_range(!s.warp_exponent || *s.warp_exponent > 0.0, "simulation.warp_exponent", "must be > 0");
    if (s.kernel) {
      const KernelSpec& k = *s.kernel;
      check_range(k.kind == "squared_exponential" || k.kind == "matern" || k.kind == "wiener", "simulation.kernel.kind",
                  "expected squared_exponential, matern or wiener");
      check_range(!k.sigma || *k.sigma > 0.0, "simulation.kernel.sigma", "must be > 0");
      check_range(k.kind != "matern" || k.nu == 0.5 || k.nu == 1.5 || k.nu == 2.5, "simulation.kernel.nu",
                  "must be 0.5, 1.5 or 2.5");
      check_range(k.rho > 0.0, "simulation.kernel.rho", "must be > 0");
    }
    check_range(c.policy.kind == "identity" && c.tau_sweep.empty(), "policy",
                "simulate takes its policy from simulation.tau and simulation.warp_exponent");
  }
}

ModificationPolicy make_policy(const PolicySpec& spec, const TimeGrid& grid) {
  if (spec.kind == "identity") return ModificationPolicy::identity();
  if (spec.kind == "scale_warp") return ModificationPolicy::scale_warp(spec.tau, spec.warp_exponent);
  if (spec.kind != "window_threshold") fail("policy.kind", "unknown policy kind '" + spec.kind + "'");
  const bool day_grid = grid.domain_lo() == 0.0 && grid.domain_hi() == 1440.0;
  std::vector<Window> windows;
  for (const WindowSpec& w : spec.windows) {
    if (w.clock) {
      if (!day_grid) fail("policy.windows", "clock-time windows need an input with '# time_units=clock'");
      for (const Window& part : clock_windows(w.lo, w.hi)) windows.push_back(part);
    } else {
      windows.push_back({w.lo, w.hi});
    }
  }
  return ModificationPolicy::window_threshold(std::move(windows), spec.threshold, spec.tau, spec.renormalize);
}

PipelineSpec make_pipeline(const RunConfig& c) {
  PipelineSpec spec;
  spec.K = c.K.value_or(0);
  spec.K_m = c.K_m;
  spec.basis_rule = KRule::variance_fraction(c.variance_fraction);
  spec.folds = c.folds;
  spec.lambda = c.lambda ? LambdaRule::fixed(*c.lambda) : LambdaRule::gcv();
  if (c.outcome_kind) spec.link = *c.outcome_kind == "binary" ? Link::logit : Link::identity;
  spec.weights.features = feature_map_from_string(c.weights.features);
  spec.weights.cap = c.weights.cap ? CapRule{true, c.weights.cap_percentile, c.weights.hard_cap} : CapRule::none();
  spec.weights.ridge = c.weights.ridge;
  spec.seed = c.seed;
  spec.bootstrap_B = c.bootstrap;
  spec.alpha = c.alpha;
  spec.refit_fpca_in_bootstrap = c.refit_fpca_in_bootstrap;
  spec.per_fold_fpca = c.per_fold_fpca;
  spec.threads = c.threads;
  return spec;
}

sim::SimConfig make_sim_config(const RunConfig& c) {
  const SimulationSpec& s = c.simulation;
  sim::SimConfig cfg;
  if (s.scenario) {
    cfg = sim::scenario_config(*s.scenario, c.seed);
  } else {
    cfg.name = "custom";
    cfg.seed = derive_seed(c.seed, {tag("scenario"), 0});
  }
  if (s.T) cfg.T = *s.T;
  if (s.p) cfg.p = *s.p;
  if (s.outcome) cfg.outcome = *s.outcome == "complex" ? sim::OutcomeModelKind::complex : sim::OutcomeModelKind::simple;
  const KernelSpec k = s.kernel.value_or(KernelSpec{});
  if (s.kernel || s.T || !s.scenario) {
    if (k.kind == "matern") {
      cfg.kernel = sim::Kernel::matern(k.nu, k.rho);
    } else if (k.kind == "wiener") {
      cfg.kernel = sim::Kernel::wiener();
    } else {
      cfg.kernel = sim::Kernel::squared_exponential(k.sigma.value_or(5.0 / static_cast<double>(cfg.T)));
    }
  }
  const double tau = s.tau.value_or(cfg.policy.kind() == PolicyKind::scale_warp ? cfg.policy.tau() : 1.0);
  const double exponent =
      s.warp_exponent.value_or(cfg.policy.kind() == PolicyKind::scale_warp ? cfg.policy.warp_exponent() : 1.2);
  cfg.policy = ModificationPolicy::scale_warp(tau, exponent);
  cfg.n = s.n_grid.front();
  cfg.K = c.K.value_or(cfg.K);
  cfg.K_m = c.K_m;
  cfg.replications = s.replications;
  cfg.oracle_draws = s.oracle_draws;
  cfg.validate();
  return cfg;
}

}  // namespace mftp::cli
