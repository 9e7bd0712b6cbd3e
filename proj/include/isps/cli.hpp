// SPDX-License-Identifier: Apache-2.0
/*!
  \file
  \brief Command-line surface: configuration, per-system budgets, report
  persistence and the subcommands of the isps_cli tool.
*/
#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "isps/axioms.hpp"
#include "isps/benchmarks.hpp"
#include "isps/estimators.hpp"
#include "isps/falsify.hpp"
#include "isps/prolongation.hpp"

namespace isps::cli {

inline constexpr int kExitConsistent = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFalsified = 2;
inline constexpr int kExitInconclusive = 3;

inline const std::vector<std::string>& property_names() {
  static const std::vector<std::string> names{"brs", "lim", "ulim", "uag", "ugb", "cuag", "isps", "iss"};
  return names;
}

inline int exit_code(Status s) {
  switch (s) {
    case Status::consistent:
      return kExitConsistent;
    case Status::falsified:
      return kExitFalsified;
    case Status::inconclusive:
      return kExitInconclusive;
  }
  return kExitUsage;
}

/// Everything a run needs. Unset numeric overrides are 0 or empty.
struct RunConfig {
  std::string command;
  std::string system;
  std::string property = "isps";
  std::string set = "catalog";
  std::string out = "isps-out";
  std::string certificate;
  std::uint64_t seed = 0;
  int budget = 0;
  double horizon = 0.0;
  unsigned workers = 1;
  bool record_runtime = false;
  double eps = 1.0;
  double gain = 2.0;
  double bound = 0.0;
  double tolerance = 1e-3;
  double falsify_tolerance = 1e-6;
  int segments = 8;
  int restarts = 20;
  std::size_t max_evaluations = 10000;
  int n_states = 0;
  int n_inputs = 0;
  int n_validation = 0;
  double observation_step = 0.0;
  std::vector<double> radii;
  std::vector<double> epsilons;
  std::vector<double> input_levels;
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  double d = parse_double(key, v);
  if (d != std::floor(d) || d < 0) throw ConfigError("key '" + key + "' expects a nonnegative integer");
  return static_cast<long long>(d);
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw ConfigError("key '" + key + "' expects a comma-separated list");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "' expects true or false");
}

}  // namespace detail

/// Applies one key=value pair; unknown keys are configuration errors.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  if (key == "system") c.system = v;
  else if (key == "property") c.property = v;
  else if (key == "set") c.set = v;
  else if (key == "out") c.out = v;
  else if (key == "certificate") c.certificate = v;
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, v));
  else if (key == "budget") c.budget = static_cast<int>(parse_int(key, v));
  else if (key == "horizon") c.horizon = parse_double(key, v);
  else if (key == "workers") c.workers = static_cast<unsigned>(parse_int(key, v));
  else if (key == "record_runtime") c.record_runtime = parse_bool(key, v);
  else if (key == "eps") c.eps = parse_double(key, v);
  else if (key == "gain") c.gain = parse_double(key, v);
  else if (key == "bound") c.bound = parse_double(key, v);
  else if (key == "tolerance") c.tolerance = parse_double(key, v);
  else if (key == "falsify_tolerance") c.falsify_tolerance = parse_double(key, v);
  else if (key == "segments") c.segments = static_cast<int>(parse_int(key, v));
  else if (key == "restarts") c.restarts = static_cast<int>(parse_int(key, v));
  else if (key == "max_evaluations") c.max_evaluations = static_cast<std::size_t>(parse_int(key, v));
  else if (key == "n_states") c.n_states = static_cast<int>(parse_int(key, v));
  else if (key == "n_inputs") c.n_inputs = static_cast<int>(parse_int(key, v));
  else if (key == "n_validation") c.n_validation = static_cast<int>(parse_int(key, v));
  else if (key == "observation_step") c.observation_step = parse_double(key, v);
  else if (key == "radii") c.radii = parse_list(key, v);
  else if (key == "epsilons") c.epsilons = parse_list(key, v);
  else if (key == "input_levels") c.input_levels = parse_list(key, v);
  else throw ConfigError("unknown configuration key '" + key + "'");
}

/// Flat `key = value` lines; `#` starts a comment.
inline void load_config(RunConfig& c, std::istream& in) {
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
    apply_setting(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline void validate(const RunConfig& c) {
  if (c.workers < 1) throw ConfigError("workers must be at least 1");
  if (!(c.eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(c.gain > 0.0)) throw ConfigError("gain must be positive");
  if (c.horizon < 0.0 || c.bound < 0.0 || c.observation_step < 0.0) {
    throw ConfigError("horizon, bound and observation_step must be nonnegative");
  }
  if (!(c.tolerance >= 0.0) || !(c.falsify_tolerance >= 0.0)) throw ConfigError("tolerances must be nonnegative");
  const auto& p = property_names();
  if (std::find(p.begin(), p.end(), c.property) == p.end()) {
    std::string list;
    for (const auto& n : p) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown property '" + c.property + "'; valid properties: " + list);
  }
}

/*!
  Budget for a catalog entry: defaults by system kind, `budget` scales the
  per-node state count, and explicit keys override single fields.
*/
inline SampleBudget make_budget(const CatalogEntry& e, const RunConfig& c) {
  SampleBudget b;
  if (e.resolution > 0) {
    b.n_states = 2;
    b.n_inputs = 2;
    b.n_validation = 48;
    b.time_horizon = 3.0;
    b.radii = {0.5, 1.0, 2.0};
    b.input_levels = {0.5, 1.0, 2.0, 4.0};
  } else {
    b.n_validation = 1000;
  }
  if (c.budget > 0) b.n_states = c.budget;
  if (c.horizon > 0.0) b.time_horizon = c.horizon;
  if (c.n_states > 0) b.n_states = c.n_states;
  if (c.n_inputs > 0) b.n_inputs = c.n_inputs;
  if (c.n_validation > 0) b.n_validation = c.n_validation;
  if (c.observation_step > 0.0) b.observation_step = c.observation_step;
  if (!c.radii.empty()) b.radii = c.radii;
  if (!c.epsilons.empty()) b.epsilons = c.epsilons;
  if (!c.input_levels.empty()) b.input_levels = c.input_levels;
  b.seed = c.seed;
  b.workers = c.workers;
  b.validate();
  return b;
}

/*!
  Set specs: `catalog` (the entry's invariant set), `origin`,
  `point:x1,x2,...`, `ball:R` (centered at the origin), `ball:R:x1,x2,...`
  or `file:<path>` (JSON as written in reports).
*/
inline BoundedSetApprox parse_set(const std::string& spec, const CatalogEntry& e) {
  const auto& sys = e.system;
  auto coords = [&](const std::string& s) {
    auto v = detail::parse_list("set", s);
    if (v.size() != sys.state_dim) {
      throw ConfigError("set '" + spec + "' has " + std::to_string(v.size()) +
                        " coordinates, system state dimension is " + std::to_string(sys.state_dim));
    }
    return StateVector(std::move(v), sys.norm);
  };
  if (spec == "catalog") return e.invariant_set;
  if (spec == "origin") return BoundedSetApprox::origin(sys.state_dim, sys.norm);
  if (spec.rfind("point:", 0) == 0) return BoundedSetApprox::point(coords(spec.substr(6)));
  if (spec.rfind("ball:", 0) == 0) {
    std::string rest = spec.substr(5);
    auto colon = rest.find(':');
    double r = detail::parse_double("set", rest.substr(0, colon));
    if (!(r >= 0.0)) throw ConfigError("ball radius must be nonnegative");
    StateVector center = colon == std::string::npos ? StateVector::zeros(sys.state_dim, sys.norm)
                                                    : coords(rest.substr(colon + 1));
    return BoundedSetApprox::ball(std::move(center), r);
  }
  if (spec.rfind("file:", 0) == 0) {
    std::ifstream in(spec.substr(5));
    if (!in) throw ConfigError("cannot open set file '" + spec.substr(5) + "'");
    auto a = bounded_set_from_json(nlohmann::json::parse(in));
    if (a.dimension() != sys.state_dim) throw ConfigError("set file dimension does not match the system");
    return a;
  }
  throw ConfigError("unknown set spec '" + spec + "'; use catalog, origin, point:..., ball:R[:center] or file:path");
}

//------------------------------------------------------------------------//
// Reports
//------------------------------------------------------------------------//

/// Result of one (system, property) run before it is written.
struct Outcome {
  std::string property;
  Verdict verdict;
  nlohmann::json parameters = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
  std::optional<TauTable> table;
  std::string key_parameters;
};

struct SummaryRow {
  std::string system, property, set, verdict, parameters;
};

inline std::string csv_field(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline void write_summary(const std::filesystem::path& dir, const std::vector<SummaryRow>& rows) {
  std::ofstream os(dir / "summary.csv");
  os << "system,property,set,verdict,parameters\n";
  for (const auto& r : rows) {
    os << csv_field(r.system) << ',' << csv_field(r.property) << ',' << csv_field(r.set) << ','
       << csv_field(r.verdict) << ',' << csv_field(r.parameters) << '\n';
  }
}

inline std::size_t sample_count(const nlohmann::json& ev) {
  std::size_t n = 0;
  for (const char* k : {"samples", "fit_samples", "validation_samples", "evaluations"}) {
    if (ev.contains(k) && ev[k].is_number_unsigned()) n += ev[k].get<std::size_t>();
  }
  return n;
}

/*!
  Writes <stem>.json and, when present, <stem>_tau.csv and
  <stem>_witness.csv (the witness trajectory on [0, t]).
*/
inline void write_report(const std::filesystem::path& dir, const std::string& stem,
                         const RunConfig& cfg, const CatalogEntry& e, const Outcome& o,
                         std::optional<double> runtime) {
  std::filesystem::create_directories(dir);
  nlohmann::json j{{"property", o.property},
                   {"system", e.system.name},
                   {"set", cfg.set},
                   {"verdict", to_string(o.verdict.status)},
                   {"parameters", o.parameters},
                   {"evidence", o.verdict.evidence},
                   {"samples", sample_count(o.verdict.evidence)},
                   {"seed", cfg.seed},
                   {"runtime_s", runtime ? nlohmann::json(*runtime) : nlohmann::json(nullptr)}};
  for (const auto& [k, v] : o.extra.items()) j[k] = v;
  if (o.verdict.witness) j["witness"] = *o.verdict.witness;
  std::ofstream(dir / (stem + ".json")) << j.dump(2) << '\n';
  if (o.table) {
    std::ofstream os(dir / (stem + "_tau.csv"));
    write_tau_csv(os, *o.table);
  }
  if (o.verdict.witness) {
    const Witness& w = *o.verdict.witness;
    std::vector<double> times;
    const double dt = std::max(w.t / 400.0, std::min(0.05, w.t));
    for (double t = 0.0; t < w.t; t += dt) times.push_back(t);
    times.push_back(w.t);
    try {
      auto xs = e.system.trajectory(times, w.x0, w.u);
      std::ofstream os(dir / (stem + "_witness.csv"));
      write_trajectory_csv(os, times, xs);
    } catch (const DivergenceError&) {
      // trajectory leaves the representable range before t; the JSON witness still replays
    }
  }
}

//------------------------------------------------------------------------//
// Property runners
//------------------------------------------------------------------------//

inline std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline Outcome run_property(const CatalogEntry& e, const BoundedSetApprox& a,
                            const std::string& property, const SampleBudget& b,
                            const RunConfig& cfg) {
  const ControlSystem& sys = e.system;
  FitOptions fo;
  fo.tolerance = cfg.tolerance;
  Outcome o;
  o.property = property;
  o.parameters = {{"budget", b}, {"tolerance", cfg.tolerance}};
  auto gamma = ComparisonFunction::linear(cfg.gain);
  auto cert_outcome = [&](FitResult f) {
    o.verdict = std::move(f.verdict);
    if (f.certificate) {
      o.extra["certificate"] = *f.certificate;
      o.key_parameters = "c=" + fmt(f.certificate->c) + ";offset=" + fmt(f.certificate->offset) +
                         ";gamma(1)=" + fmt(f.certificate->gamma(1.0)) +
                         ";residual=" + fmt(f.certificate->residual_max);
    }
  };
  if (property == "brs") {
    double c = cfg.bound > 0.0 ? cfg.bound : b.max_radius();
    o.parameters["C"] = c;
    o.parameters["tau"] = b.time_horizon;
    BrsResult r = check_brs(sys, c, b.time_horizon, b);
    o.verdict = std::move(r.verdict);
    o.key_parameters = "C=" + fmt(c) + ";reach_sup=" + fmt(r.reach_sup);
  } else if (property == "lim") {
    o.parameters["gain"] = cfg.gain;
    o.verdict = check_lim(sys, a, gamma, b);
    o.key_parameters = "gain=" + fmt(cfg.gain);
  } else if (property == "ulim" || property == "uag") {
    o.parameters["gain"] = cfg.gain;
    TauResult r = property == "ulim" ? estimate_ulim(sys, a, gamma, b) : check_uag(sys, a, gamma, b);
    o.verdict = std::move(r.verdict);
    o.table = r.table;
    double worst = 0.0;
    for (double v : r.table.tau) worst = std::max(worst, v);
    o.key_parameters = "gain=" + fmt(cfg.gain) + ";max_tau=" + fmt(worst);
  } else if (property == "ugb") {
    UgbResult r = check_ugb(sys, a, b, fo);
    o.verdict = std::move(r.verdict);
    if (r.certificate) {
      o.extra["certificate"] = *r.certificate;
      o.key_parameters = "c=" + fmt(r.certificate->c) + ";sigma(1)=" + fmt(r.certificate->sigma(1.0));
    }
  } else if (property == "cuag") {
    cert_outcome(fit_cuag(sys, a, b, fo));
  } else if (property == "isps") {
    cert_outcome(fit_isps(sys, a, b, fo));
  } else if (property == "iss") {
    cert_outcome(check_iss_wrt_set(sys, a, b, fo));
  } else {
    throw ConfigError("unknown property '" + property + "'");
  }
  return o;
}

inline Outcome run_axioms(const CatalogEntry& e, const RunConfig& cfg) {
  int samples = cfg.budget > 0 ? cfg.budget : (e.resolution >= 32 ? 3 : 20);
  double horizon = cfg.horizon > 0.0 ? cfg.horizon : (e.resolution >= 64 ? 1.0 : 3.0);
  Outcome o;
  o.property = "axioms";
  o.parameters = {{"sample_budget", samples}, {"horizon", horizon}};
  o.verdict = check_axioms(e.system, samples, horizon, cfg.seed);
  o.key_parameters = "samples=" + std::to_string(samples);
  return o;
}

inline Outcome run_prolong(const CatalogEntry& e, const BoundedSetApprox& a, const SampleBudget& b,
                           const RunConfig& cfg) {
  Outcome o;
  o.property = "prolong";
  o.parameters = {{"eps", cfg.eps}, {"budget", b}};
  FitOptions fo;
  fo.tolerance = cfg.tolerance;
  FitResult f = fit_isps(e.system, a, b, fo);
  if (!f.verdict.consistent()) {
    o.verdict = std::move(f.verdict);
    o.verdict.evidence["stopped_at"] = "fit_isps";
    return o;
  }
  const auto& gamma = f.certificate->gamma;
  SampleBudget ub = b;
  ub.epsilons = {cfg.eps / 2.0, cfg.eps};
  ub.radii = {cfg.eps, 2.0 * cfg.eps};
  TauResult ulim = estimate_ulim(e.system, a, gamma, ub);
  o.table = ulim.table;
  if (!ulim.verdict.consistent()) {
    o.verdict = std::move(ulim.verdict);
    o.verdict.evidence["stopped_at"] = "ulim";
    return o;
  }
  ProlongationSet p = build_prolongation(e.system, a, cfg.eps, gamma, ulim.table, b);
  Verdict inv = check_prolongation_invariance(e.system, p, b);
  OffsetResult off = offset_constant(p, cfg.seed);
  o.extra["prolongation"] = p;
  o.extra["offset_constant"] = off.value;
  o.extra["nonconvex"] = off.nonconvex;
  o.key_parameters = "eps=" + fmt(cfg.eps) + ";cloud_norm=" + fmt(p.cloud.norm()) +
                     ";horizon=" + fmt(p.horizon_used) + ";C=" + fmt(off.value);
  if (!p.horizon_justified && inv.consistent()) {
    o.verdict = Verdict::inconclusive_with({{"property", "prolong"},
                                            {"reason", "return statistic below threshold"},
                                            {"return_fraction", p.return_fraction}});
  } else {
    o.verdict = std::move(inv);
  }
  return o;
}

inline Outcome run_pipeline(const CatalogEntry& e, const SampleBudget& b, const RunConfig& cfg) {
  Outcome o;
  o.property = "pipeline";
  o.parameters = {{"eps", cfg.eps}, {"budget", b}};
  FitOptions fo;
  fo.tolerance = cfg.tolerance;
  PipelineReport r = theorem2_pipeline(e.system, cfg.eps, b, e.resolution == 0, fo);
  o.verdict = std::move(r.verdict);
  o.extra["legs"] = r.legs;
  if (r.prolongation) o.extra["cloud_norm"] = r.prolongation->cloud.norm();
  o.key_parameters = "eps=" + fmt(cfg.eps) + ";legs=" + std::to_string(r.legs.size());
  return o;
}

inline Outcome run_falsify(const CatalogEntry& e, const SampleBudget& b, const RunConfig& cfg,
                           bool set_given) {
  if (cfg.certificate.empty()) throw ConfigError("falsify needs --certificate <file>");
  std::ifstream in(cfg.certificate);
  if (!in) throw ConfigError("cannot open certificate file '" + cfg.certificate + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("certificate file is not JSON: ") + ex.what());
  }
  if (j.contains("certificate")) j = j["certificate"];
  GainCertificate g;
  try {
    g = certificate_from_json(j);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed certificate: ") + ex.what());
  }
  if (set_given || !j.contains("set")) g.set_A = parse_set(cfg.set, e);
  if (g.set_A.dimension() != e.system.state_dim) throw ConfigError("certificate set dimension mismatch");
  FalsificationProblem p{e.system, g};
  p.horizon = b.time_horizon;
  p.state_radius = b.max_radius();
  p.input_level = b.max_level();
  p.segments = cfg.segments;
  p.restarts = cfg.restarts;
  p.max_evaluations = cfg.max_evaluations;
  // a validated certificate only claims the bound up to its recorded residual
  p.tolerance = std::max(cfg.falsify_tolerance, g.residual_max + 10.0 * e.system.flow_tolerance);
  p.observation_step = b.observation_step;
  p.seed = cfg.seed;
  p.workers = cfg.workers;
  FalsifyOutcome r = falsify(p);
  Outcome o;
  o.property = "falsify";
  o.parameters = {{"horizon", p.horizon},     {"state_radius", p.state_radius},
                  {"input_level", p.input_level}, {"segments", p.segments},
                  {"restarts", p.restarts},   {"max_evaluations", p.max_evaluations},
                  {"tolerance", p.tolerance}};
  o.verdict = std::move(r.verdict);
  o.extra["certificate"] = g;
  o.key_parameters = "best_residual=" + fmt(r.best_residual) + ";evaluations=" + std::to_string(r.evaluations);
  return o;
}

//------------------------------------------------------------------------//
// Entry point
//------------------------------------------------------------------------//

namespace detail {

inline std::string expected_for(const CatalogEntry& e, const std::string& property) {
  if (property == "brs") return e.forward_complete ? "consistent" : "falsified";
  if (property == "iss") return "-";
  return e.isps ? "consistent" : "falsified";
}

}  // namespace detail

/*!
  Exit codes: 0 all consistent, 2 a falsification was found, 3 inconclusive,
  1 usage or configuration error.
*/
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Sampled ISpS analysis of control systems"};
  app.require_subcommand(1);
  RunConfig flags;
  std::string config_path;
  bool record_runtime = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", flags.seed, "base random seed");
    sub->add_option("--budget", flags.budget, "initial states per radius node (axioms: samples)");
    sub->add_option("--horizon", flags.horizon, "time horizon T");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--config", config_path, "key = value configuration file");
    sub->add_option("--workers", flags.workers, "worker threads");
    sub->add_flag("--record-runtime", record_runtime, "store wall-clock runtime in reports");
  };
  auto* axioms = app.add_subcommand("axioms", "check the control-system axioms");
  axioms->add_option("system", flags.system)->required();
  common(axioms);
  auto* analyze = app.add_subcommand("analyze", "check one stability property");
  analyze->add_option("system", flags.system)->required();
  analyze->add_option("--property", flags.property, "brs|lim|ulim|uag|ugb|cuag|isps|iss");
  analyze->add_option("--set", flags.set, "catalog|origin|point:..|ball:R[:center]|file:path");
  analyze->add_option("--gain", flags.gain, "slope of the linear gain used by lim/ulim/uag");
  analyze->add_option("--bound", flags.bound, "BRS bound C");
  common(analyze);
  auto* prolong = app.add_subcommand("prolong", "build and check a prolongation set");
  prolong->add_option("system", flags.system)->required();
  prolong->add_option("--eps", flags.eps, "epsilon");
  prolong->add_option("--set", flags.set, "base set");
  common(prolong);
  auto* pipeline = app.add_subcommand("pipeline", "bounded invariant set pipeline");
  pipeline->add_option("system", flags.system)->required();
  pipeline->add_option("--eps", flags.eps, "epsilon");
  common(pipeline);
  auto* fals = app.add_subcommand("falsify", "search for a counterexample to a certificate");
  fals->add_option("system", flags.system)->required();
  fals->add_option("--certificate", flags.certificate, "certificate or report JSON")->required();
  fals->add_option("--set", flags.set, "override the certificate's set");
  common(fals);
  auto* bench = app.add_subcommand("bench", "catalog x property matrix");
  common(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e, out, err);
    return rc == 0 ? kExitConsistent : kExitUsage;
  }
  CLI::App* sub = app.get_subcommands().front();

  RunConfig cfg;
  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config file '" + config_path + "'");
      load_config(cfg, in);
    }
    // explicit flags override the file
    auto given = [&](const char* name) { return sub->get_option_no_throw(name) != nullptr && sub->count(name) > 0; };
    cfg.command = sub->get_name();
    if (!flags.system.empty()) cfg.system = flags.system;
    if (given("--property")) cfg.property = flags.property;
    if (given("--set")) cfg.set = flags.set;
    if (given("--gain")) cfg.gain = flags.gain;
    if (given("--bound")) cfg.bound = flags.bound;
    if (given("--eps")) cfg.eps = flags.eps;
    if (given("--certificate")) cfg.certificate = flags.certificate;
    if (given("--seed")) cfg.seed = flags.seed;
    if (given("--budget")) cfg.budget = flags.budget;
    if (given("--horizon")) cfg.horizon = flags.horizon;
    if (given("--out")) cfg.out = flags.out;
    if (given("--workers")) cfg.workers = flags.workers;
    if (record_runtime) cfg.record_runtime = true;
    validate(cfg);

    std::vector<CatalogEntry> entries;
    if (cfg.command == "bench") {
      for (auto& e : catalog()) entries.push_back(std::move(e));
    } else {
      entries.push_back(find_system(cfg.system));
    }
    // schema checks before any simulation
    for (const auto& e : entries) {
      (void)make_budget(e, cfg);
      (void)parse_set(cfg.set, e);
    }

    std::filesystem::path dir(cfg.out);
    std::filesystem::create_directories(dir);
    std::vector<SummaryRow> rows;
    bool any_falsified = false, any_inconclusive = false;
    std::size_t mismatches = 0;
    for (const auto& e : entries) {
      SampleBudget b = make_budget(e, cfg);
      BoundedSetApprox a = parse_set(cfg.set, e);
      std::vector<std::string> props;
      if (cfg.command == "analyze") props = {cfg.property};
      else if (cfg.command == "bench") props = property_names();
      else props = {cfg.command};
      for (const auto& prop : props) {
        auto start = std::chrono::steady_clock::now();
        Outcome o;
        if (prop == "axioms") o = run_axioms(e, cfg);
        else if (prop == "prolong") o = run_prolong(e, a, b, cfg);
        else if (prop == "pipeline") o = run_pipeline(e, b, cfg);
        else if (prop == "falsify") o = run_falsify(e, b, cfg, sub->count("--set") > 0);
        else o = run_property(e, a, prop, b, cfg);
        std::optional<double> runtime;
        if (cfg.record_runtime) {
          runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        std::string stem = cfg.command == "analyze" || cfg.command == "bench"
                                ? e.system.name + "_" + prop
                                : cfg.command + "_" + e.system.name;
        write_report(dir, stem, cfg, e, o, runtime);
        std::string status = to_string(o.verdict.status);
        any_falsified = any_falsified || o.verdict.falsified();
        any_inconclusive = any_inconclusive || o.verdict.status == Status::inconclusive;
        rows.push_back({e.system.name, prop, cfg.set, status, o.key_parameters});
        if (cfg.command == "bench") {
          std::string want = detail::expected_for(e, prop);
          bool match = want == "-" || want == status;
          if (!match) ++mismatches;
          out << e.system.name << ' ' << prop << ' ' << status << " (expected " << want << ")"
              << (match ? "" : " MISMATCH") << '\n';
        } else {
          out << e.system.name << ' ' << prop << ": " << status;
          if (!o.key_parameters.empty()) out << " [" << o.key_parameters << "]";
          out << '\n';
        }
      }
    }
    write_summary(dir, rows);
    if (cfg.command == "bench") out << "mismatches: " << mismatches << '\n';
    if (any_falsified) return kExitFalsified;
    if (any_inconclusive) return kExitInconclusive;
    return kExitConsistent;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace isps::cli
