// SPDX-License-Identifier: Apache-2.0
/*!
  \file
  \brief Sampled checkers and certificate fitters for BRS, LIM, ULIM, UAG,
  UGB, CUAG, ISpS, s-invariance, robust s-invariance and ISS w.r.t. a set.

  Every "consistent" verdict means that no violation was found within the
  sample budget. Falsified verdicts carry a witness that re-simulation
  reproduces (see replay_witness).
*/
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "isps/comparison.hpp"
#include "isps/errors.hpp"
#include "isps/parallel.hpp"
#include "isps/sampling.hpp"
#include "isps/system.hpp"
#include "isps/verdict.hpp"

namespace isps {

struct SampleBudget {
  int n_states = 8;       //!< initial states per radius node
  int n_inputs = 4;       //!< inputs per (state, level) pair
  int n_validation = 256; //!< fresh probes used to validate fitted certificates
  double time_horizon = 20.0;
  double observation_step = 0.25;
  std::vector<double> radii{0.5, 1.0, 2.0, 4.0};
  std::vector<double> epsilons{0.1, 0.25, 0.5, 1.0};
  std::vector<double> input_levels{0.25, 0.5, 1.0, 2.0, 4.0};
  std::uint64_t seed = 0;
  unsigned workers = 1;

  void validate() const {
    if (n_states < 1 || n_inputs < 1 || n_validation < 1) {
      throw ConfigError("sample counts must be positive");
    }
    if (!(time_horizon > 0.0) || !(observation_step > 0.0)) {
      throw ConfigError("time horizon and observation step must be positive");
    }
    auto positive_sorted = [](const std::vector<double>& v, const char* what) {
      if (v.empty()) throw ConfigError(std::string(what) + " grid is empty");
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] > 0.0) || !std::isfinite(v[i])) {
          throw ConfigError(std::string(what) + " grid must be positive");
        }
        if (i > 0 && !(v[i] > v[i - 1])) {
          throw ConfigError(std::string(what) + " grid must be strictly increasing");
        }
      }
    };
    positive_sorted(radii, "radius");
    positive_sorted(epsilons, "epsilon");
    positive_sorted(input_levels, "input level");
  }

  double max_radius() const { return radii.back(); }
  double max_level() const { return input_levels.back(); }
};

inline void to_json(nlohmann::json& j, const SampleBudget& b) {
  j = nlohmann::json{{"n_states", b.n_states},
                     {"n_inputs", b.n_inputs},
                     {"n_validation", b.n_validation},
                     {"time_horizon", b.time_horizon},
                     {"observation_step", b.observation_step},
                     {"radii", b.radii},
                     {"epsilons", b.epsilons},
                     {"input_levels", b.input_levels},
                     {"seed", b.seed}};
}

//------------------------------------------------------------------------//
// Trajectory bundles
//------------------------------------------------------------------------//

/// One sampled (x0, u) pair with r0 = ||x0||_A and level = ||u||.
struct Probe {
  StateVector x0;
  InputSignal u;
  double r0 = 0.0;
  double level = 0.0;
};

/// Distances ||phi(t_k, x0, u)||_A on the observation grid.
struct Run {
  Probe probe;
  std::vector<double> dist;
  bool diverged = false;
  double diverged_at = 0.0;
  double diverged_norm = 0.0;
};

inline Probe make_probe(const BoundedSetApprox& a, StateVector x0, InputSignal u) {
  Probe p{std::move(x0), std::move(u), 0.0, 0.0};
  p.r0 = a.distance(p.x0);
  p.level = p.u.sup_norm();
  return p;
}

inline std::vector<Run> run_bundle(const ControlSystem& sys, const BoundedSetApprox& a,
                                   std::vector<Probe> probes, std::span<const double> times,
                                   unsigned workers) {
  std::vector<Run> runs(probes.size());
  parallel_for(probes.size(), workers, [&](std::size_t i) {
    Run r;
    r.probe = std::move(probes[i]);
    try {
      auto xs = sys.trajectory(times, r.probe.x0, r.probe.u);
      r.dist.reserve(xs.size());
      for (const auto& x : xs) {
        if (!x.is_finite()) throw DivergenceError(times[r.dist.size()], x.norm());
        r.dist.push_back(a.distance(x));
      }
    } catch (const DivergenceError& e) {
      r.diverged = true;
      r.diverged_at = e.time();
      r.diverged_norm = e.norm();
    }
    runs[i] = std::move(r);
  });
  return runs;
}

inline const Run* first_diverged(const std::vector<Run>& runs) {
  for (const auto& r : runs) {
    if (r.diverged) return &r;
  }
  return nullptr;
}

inline Verdict divergence_verdict(const Run& r, const std::string& property) {
  Witness w{r.diverged_at, r.probe.x0, r.probe.u, r.diverged_norm, "divergence"};
  return Verdict::falsified_by(
      std::move(w), {{"property", property}, {"reason", "divergence guard tripped"}});
}

namespace detail {

inline constexpr InputKind kPresetCycle[] = {InputKind::constant, InputKind::bang_bang,
                                             InputKind::random, InputKind::zero_tail};

inline std::uint64_t stream_id(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return (a << 40) ^ (b << 20) ^ c;
}

}  // namespace detail

/*!
  Probes at the fitting nodes: for every radius in {0} u radii, n_states
  initial states at exactly that distance from A; each gets the zero input
  and n_inputs inputs of sup-norm exactly equal to every level node (presets
  cycle through constant, bang-bang, random and zero-tail).
*/
inline std::vector<Probe> node_probes(const ControlSystem& sys, const BoundedSetApprox& a,
                                      const SampleBudget& b, double horizon, std::uint64_t seed) {
  std::vector<double> radii{0.0};
  radii.insert(radii.end(), b.radii.begin(), b.radii.end());
  std::size_t cells = cells_for(horizon, sys.input_step);
  std::vector<Probe> out;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    for (int s = 0; s < b.n_states; ++s) {
      Rng rng = make_rng(seed, detail::stream_id(1, i, static_cast<std::uint64_t>(s)));
      StateVector x0 = sample_near_set(a, radii[i], rng);
      out.push_back(make_probe(a, x0, InputSignal::zero(sys.input_dim, sys.input_step)));
      for (std::size_t l = 0; l < b.input_levels.size(); ++l) {
        for (int k = 0; k < b.n_inputs; ++k) {
          Rng urng = make_rng(seed, detail::stream_id(2 + i, l, static_cast<std::uint64_t>(s * 64 + k)));
          InputKind kind = detail::kPresetCycle[static_cast<std::size_t>(k) % 4];
          out.push_back(make_probe(
              a, x0, sample_input(sys.input_dim, sys.input_step, cells, b.input_levels[l], kind, urng)));
        }
      }
    }
  }
  return out;
}

/// Fresh probes with ||x0||_A uniform on [0, r_max] and levels uniform on [0, level_max].
inline std::vector<Probe> random_probes(const ControlSystem& sys, const BoundedSetApprox& a,
                                        int n, double r_max, double level_max, double horizon,
                                        std::uint64_t seed) {
  std::size_t cells = cells_for(horizon, sys.input_step);
  std::vector<Probe> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng = make_rng(seed, detail::stream_id(7, 0, static_cast<std::uint64_t>(i)));
    double r = uniform(rng, 0.0, r_max);
    StateVector x0 = sample_near_set(a, r, rng);
    InputKind kind;
    switch (i % 8) {
      case 0:
        kind = InputKind::zero;
        break;
      case 1:
        kind = InputKind::constant;
        break;
      case 2:
        kind = InputKind::bang_bang;
        break;
      case 3:
        kind = InputKind::zero_tail;
        break;
      default:
        kind = InputKind::random;
    }
    double level = uniform(rng, 0.0, level_max);
    out.push_back(make_probe(a, x0, sample_input(sys.input_dim, sys.input_step, cells, level, kind, rng)));
  }
  return out;
}

//------------------------------------------------------------------------//
// Unbounded growth and witness replay
//------------------------------------------------------------------------//

/*!
  Escalation test used when a property cannot be established: constant
  maximal inputs from states on and around A are simulated to T, 2T, 4T and
  8T. The distance counts as growing when every increment exceeds a noise
  floor and is at least 0.75 times the previous one (linear and logarithmic
  growth pass, exponential convergence does not). A growing trajectory or a
  tripped divergence guard yields a falsified verdict whose witness is the
  8T state.
*/
inline std::optional<Verdict> growth_test(const ControlSystem& sys, const BoundedSetApprox& a,
                                          const SampleBudget& b, const std::string& property) {
  const double horizon = b.time_horizon;
  std::vector<double> times{horizon, 2 * horizon, 4 * horizon, 8 * horizon};
  std::size_t cells = cells_for(8 * horizon, sys.input_step);
  const StateVector& base = a.points().front();
  std::vector<Probe> probes;
  for (double sign_x : {0.0, 1.0, -1.0}) {
    std::vector<double> c(base.coords().begin(), base.coords().end());
    c[0] += sign_x * (a.inflation() + b.max_radius());
    StateVector x0(std::move(c), sys.norm);
    for (double sign_u : {1.0, -1.0}) {
      std::vector<double> v(sys.input_dim, 0.0);
      if (!v.empty()) v[0] = sign_u * b.max_level();
      std::vector<double> flat;
      for (std::size_t k = 0; k < cells; ++k) flat.insert(flat.end(), v.begin(), v.end());
      probes.push_back(make_probe(a, x0, InputSignal(sys.input_step, sys.input_dim, flat)));
    }
  }
  auto runs = run_bundle(sys, a, probes, times, b.workers);
  if (const Run* r = first_diverged(runs)) return divergence_verdict(*r, property);
  for (const auto& r : runs) {
    const auto& d = r.dist;
    double floor = 1e-6 * (1.0 + d[0]) + 10.0 * sys.flow_tolerance;
    double i1 = d[1] - d[0], i2 = d[2] - d[1], i3 = d[3] - d[2];
    if (i1 > floor && i2 > floor && i3 > floor && i2 >= 0.75 * i1 && i3 >= 0.75 * i2) {
      Witness w{times.back(), r.probe.x0, r.probe.u, d.back(), "unbounded_growth"};
      return Verdict::falsified_by(std::move(w), {{"property", property},
                                                  {"reason", "distance to the set keeps growing"},
                                                  {"growth_times", times},
                                                  {"growth_distances", d}});
    }
  }
  return std::nullopt;
}

//------------------------------------------------------------------------//
// Certificates
//------------------------------------------------------------------------//

/*!
  ||phi(t, x, u)||_A <= beta(||x||_A + offset, t) + gamma(||u||) + c.
  ISpS certificates have offset 0; CUAG certificates have c = 0.
*/
struct GainCertificate {
  KLFunction beta = KLFunction::linear_exponential(1.0, 1.0);
  ComparisonFunction gamma = ComparisonFunction::identity();
  double c = 0.0;
  double offset = 0.0;
  BoundedSetApprox set_A = BoundedSetApprox::origin(1);
  double residual_max = 0.0;
  int samples_validated = 0;
  std::uint64_t fit_seed = 0;
  std::uint64_t validation_seed = 0;
  int refit_rounds = 0;

  double bound(double r, double t, double level) const {
    return beta(r + offset, t) + gamma(level) + c;
  }
};

inline void to_json(nlohmann::json& j, const GainCertificate& g) {
  j = nlohmann::json{{"beta", g.beta},
                     {"gamma", g.gamma},
                     {"c", g.c},
                     {"offset", g.offset},
                     {"set", g.set_A},
                     {"residual_max", g.residual_max},
                     {"samples_validated", g.samples_validated},
                     {"fit_seed", g.fit_seed},
                     {"validation_seed", g.validation_seed},
                     {"refit_rounds", g.refit_rounds}};
}

inline GainCertificate certificate_from_json(const nlohmann::json& j) {
  GainCertificate g;
  g.beta = kl_function_from_json(j.at("beta"));
  g.gamma = comparison_function_from_json(j.at("gamma"));
  if (g.gamma.function_class() != FunctionClass::Kinf) throw DataError("gamma must be Kinf");
  g.c = j.value("c", 0.0);
  g.offset = j.value("offset", 0.0);
  if (j.contains("set")) g.set_A = bounded_set_from_json(j.at("set"));
  g.residual_max = j.value("residual_max", 0.0);
  g.samples_validated = j.value("samples_validated", 0);
  g.fit_seed = j.value("fit_seed", std::uint64_t{0});
  g.validation_seed = j.value("validation_seed", std::uint64_t{0});
  g.refit_rounds = j.value("refit_rounds", 0);
  return g;
}

/// Worst (dist - bound) over a bundle: (residual, run index, time index).
struct ResidualReport {
  double residual = -std::numeric_limits<double>::infinity();
  std::size_t run = 0;
  std::size_t time = 0;
};

inline ResidualReport certificate_residual(const GainCertificate& g, const std::vector<Run>& runs,
                                           std::span<const double> times) {
  ResidualReport rep;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    double gl = g.gamma(r.probe.level) + g.c;
    for (std::size_t k = 0; k < r.dist.size(); ++k) {
      double v = r.dist[k] - g.beta(r.probe.r0 + g.offset, times[k]) - gl;
      if (v > rep.residual) rep = {v, i, k};
    }
  }
  return rep;
}

/*!
  Re-simulates a witness. For certificate violations the return value is
  ||phi||_A - bound, otherwise ||phi(t)||_A (or the norm at which the
  divergence guard trips).
*/
inline double replay_witness(const ControlSystem& sys, const BoundedSetApprox& a, const Witness& w,
                             const GainCertificate* cert = nullptr) {
  if (w.kind == "divergence" || w.kind == "forward_completeness") {
    try {
      StateVector x = sys.flow(w.t, w.x0, w.u);
      return x.norm();
    } catch (const DivergenceError& e) {
      return e.norm();
    }
  }
  double d = a.distance(sys.flow(w.t, w.x0, w.u));
  if (cert == nullptr) return d;
  return d - cert->bound(cert->set_A.distance(w.x0), w.t, w.u.sup_norm());
}

/*!
  Certificate w.r.t. another bounded set: with a = ||x||_{A2} and
  b = ||A1|| + ||A2||, ||x||_{A1} <= a + b and the weak triangle inequality
  give beta'(r, t) = beta(2r, t) and c' = c + b + beta(2b, 0).
*/
inline GainCertificate transfer_certificate(const GainCertificate& g, const BoundedSetApprox& a2) {
  if (g.offset != 0.0) throw PreconditionError("transfer expects an ISpS certificate (offset 0)");
  GainCertificate out = g;
  double b = g.set_A.norm() + a2.norm();
  out.beta = g.beta.argument_scaled(2.0);
  out.c = g.c + b + g.beta(2.0 * b, 0.0);
  out.set_A = a2;
  return out;
}

//------------------------------------------------------------------------//
// Envelope fitting helpers
//------------------------------------------------------------------------//

namespace detail {

inline std::size_t first_index_at_or_after(std::span<const double> times, double t) {
  return static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), t - 1e-12) -
                                  times.begin());
}

inline double late_max(const Run& r, std::size_t from) {
  double m = 0.0;
  for (std::size_t k = from; k < r.dist.size(); ++k) m = std::max(m, r.dist[k]);
  return m;
}

/// Strictly increasing Kinf function through (0, 0) and (x_i, inflation * y_i).
inline ComparisonFunction kinf_envelope(const std::vector<double>& xs, std::vector<double> ys,
                                        double inflation) {
  double y_max = 0.0;
  for (double& y : ys) {
    y = std::max(0.0, y) * inflation;
    y_max = std::max(y_max, y);
  }
  for (std::size_t i = 1; i < ys.size(); ++i) ys[i] = std::max(ys[i], ys[i - 1]);
  const double min_slope = 1e-9 * (1.0 + y_max / xs.back());
  std::vector<Knot> k{{0.0, 0.0}};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double v = std::max(ys[i], k.back().value + min_slope * (xs[i] - k.back().r));
    k.push_back({xs[i], v});
  }
  const Knot& p = k[k.size() - 2];
  const Knot& q = k.back();
  double tail = std::max(min_slope, (q.value - p.value) / (q.r - p.r));
  return ComparisonFunction::k_class(std::move(k), tail);
}

/// 0, dt, 2dt, 4dt, ... < T, and T.
inline std::vector<double> omega_times(double horizon, double dt) {
  std::vector<double> t{0.0};
  for (double s = dt; s < horizon - 1e-12; s *= 2.0) t.push_back(s);
  t.push_back(horizon);
  return t;
}

/*!
  omega(r_i, t_j) = sup of excess over runs with r0 <= r_i - offset and grid
  times t >= t_{j-1}, so that beta's decreasing interpolation between
  t_{j-1} and t_j still dominates.
*/
template <typename Excess>
OmegaGrid omega_grid(const std::vector<Run>& runs, std::span<const double> times,
                     const std::vector<double>& radii, double offset,
                     const std::vector<double>& t_nodes, Excess excess) {
  OmegaGrid g;
  for (double r : radii) g.radii.push_back(r + offset);
  g.times = t_nodes;
  g.values.assign(radii.size() * t_nodes.size(), 0.0);
  std::vector<std::size_t> start(t_nodes.size());
  for (std::size_t j = 0; j < t_nodes.size(); ++j) {
    start[j] = first_index_at_or_after(times, j == 0 ? 0.0 : t_nodes[j - 1]);
  }
  for (const auto& r : runs) {
    std::vector<double> suffix(r.dist.size() + 1, 0.0);
    for (std::size_t k = r.dist.size(); k-- > 0;) {
      suffix[k] = std::max(suffix[k + 1], excess(r, k));
    }
    for (std::size_t i = 0; i < radii.size(); ++i) {
      if (r.probe.r0 > radii[i] * (1.0 + 1e-12) + 1e-12) continue;
      for (std::size_t j = 0; j < t_nodes.size(); ++j) {
        g.at(i, j) = std::max(g.at(i, j), suffix[std::min(start[j], r.dist.size())]);
      }
    }
  }
  return g;
}

}  // namespace detail

//------------------------------------------------------------------------//
// ISpS / CUAG / ISS certificate fitting
//------------------------------------------------------------------------//

struct FitOptions {
  double tolerance = 1e-3;
  int max_rounds = 5;
  double inflation = 1.05;
  //! Offsets tried (in order) by fit_cuag.
  std::vector<double> offset_grid{0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0};
};

struct FitResult {
  Verdict verdict;
  std::optional<GainCertificate> certificate;
};

namespace detail {

enum class FitMode { isps, iss, cuag };

inline const char* to_string(FitMode m) {
  switch (m) {
    case FitMode::isps:
      return "isps";
    case FitMode::iss:
      return "iss";
    case FitMode::cuag:
      return "cuag";
  }
  return "?";
}

struct FitData {
  std::vector<double> times;
  std::vector<Run> runs;
  std::vector<double> val_times;
  std::vector<Run> val_runs;
  std::uint64_t val_seed = 0;
};

inline std::optional<Verdict> simulate_fit_data(const ControlSystem& sys, const BoundedSetApprox& a,
                                                const SampleBudget& b, const std::string& property,
                                                FitData& data) {
  const double horizon = b.time_horizon;
  if (auto g = growth_test(sys, a, b, property)) return g;
  data.times = time_grid(horizon, b.observation_step);
  data.runs = run_bundle(sys, a, node_probes(sys, a, b, horizon, b.seed), data.times, b.workers);
  if (const Run* r = first_diverged(data.runs)) return divergence_verdict(*r, property);
  data.val_seed = mix_seed(b.seed, 0x76616c6964ULL);
  data.val_times = time_grid(2.0 * horizon, b.observation_step);
  data.val_runs = run_bundle(sys, a,
                             random_probes(sys, a, b.n_validation, b.max_radius(), b.max_level(),
                                           2.0 * horizon, data.val_seed),
                             data.val_times, b.workers);
  if (const Run* r = first_diverged(data.val_runs)) return divergence_verdict(*r, property);
  return std::nullopt;
}

inline Witness residual_witness(const FitData& d, const ResidualReport& rep) {
  const Run& r = d.val_runs[rep.run];
  return Witness{d.val_times[rep.time], r.probe.x0, r.probe.u, rep.residual, "certificate_violation"};
}

inline FitResult fit_impl(const ControlSystem& sys, const BoundedSetApprox& a,
                          const SampleBudget& b, const FitOptions& opt, FitMode mode) {
  b.validate();
  const std::string property = to_string(mode);
  FitData d;
  if (auto v = simulate_fit_data(sys, a, b, property, d)) return {*v, std::nullopt};

  const double horizon = b.time_horizon;
  const std::size_t late = first_index_at_or_after(d.times, 0.5 * horizon);

  // c from zero-input runs only
  double c = 0.0;
  if (mode == FitMode::isps) {
    for (const auto& r : d.runs) {
      if (r.probe.level == 0.0) c = std::max(c, late_max(r, late));
    }
  }
  // gamma from the late excess over c
  std::vector<double> excess(b.input_levels.size(), 0.0);
  for (const auto& r : d.runs) {
    if (mode != FitMode::isps && r.probe.level == 0.0) continue;
    double e = late_max(r, late) - c;
    for (std::size_t l = 0; l < b.input_levels.size(); ++l) {
      if (r.probe.level <= b.input_levels[l] * (1.0 + 1e-12)) excess[l] = std::max(excess[l], e);
    }
  }
  ComparisonFunction gamma = kinf_envelope(b.input_levels, excess, opt.inflation);

  // states inside A with positive transient excess cannot be covered by beta(0, t) = 0
  if (mode == FitMode::isps) {
    double e0 = 0.0;
    for (const auto& r : d.runs) {
      if (r.probe.r0 > 0.0) continue;
      for (double v : r.dist) e0 = std::max(e0, v - gamma(r.probe.level) - c);
    }
    c += std::max(0.0, e0);
  }

  const auto t_nodes = omega_times(horizon, b.observation_step);
  std::vector<double> offsets{0.0};
  if (mode == FitMode::cuag) offsets = opt.offset_grid;

  ResidualReport last;
  nlohmann::json attempts = nlohmann::json::array();
  for (double offset : offsets) {
    std::vector<double> radii;
    if (offset > 0.0) radii.push_back(0.0);
    radii.insert(radii.end(), b.radii.begin(), b.radii.end());
    auto ex = [&](const Run& r, std::size_t k) {
      return r.dist[k] - gamma(r.probe.level) - c;
    };
    std::optional<KLFunction> beta;
    try {
      beta = kl_majorize(omega_grid(d.runs, d.times, radii, offset, t_nodes, ex));
    } catch (const DataError& e) {
      attempts.push_back({{"offset", offset}, {"rejected", e.what()}});
      continue;
    }
    GainCertificate g{*beta, gamma, c, offset, a, 0.0, b.n_validation,
                      b.seed, d.val_seed, 0};
    for (int round = 0; round <= opt.max_rounds; ++round) {
      last = certificate_residual(g, d.val_runs, d.val_times);
      if (last.residual <= opt.tolerance) {
        g.residual_max = std::max(0.0, last.residual);
        g.refit_rounds = round;
        nlohmann::json ev{{"property", property},
                          {"certificate", g},
                          {"fit_samples", d.runs.size()},
                          {"validation_samples", d.val_runs.size()},
                          {"validation_horizon", 2.0 * horizon}};
        if (!attempts.empty()) ev["rejected_offsets"] = attempts;
        return {Verdict::consistent_with(std::move(ev)), g};
      }
      if (round == opt.max_rounds) break;
      if (mode == FitMode::isps) g.c += last.residual;
      g.beta = g.beta.scaled(opt.inflation);
      g.gamma = g.gamma.scaled(opt.inflation);
    }
    attempts.push_back({{"offset", offset}, {"final_residual", last.residual}});
  }
  // the certificate family could not be validated: escalate before giving up
  if (auto v = growth_test(sys, a, b, property)) return {*v, std::nullopt};
  nlohmann::json ev{{"property", property},
                    {"reason", "validation residual above tolerance after refits"},
                    {"attempts", attempts},
                    {"tolerance", opt.tolerance}};
  if (std::isfinite(last.residual) && !d.val_runs.empty()) {
    ev["worst_sample"] = residual_witness(d, last);
  }
  return {Verdict::inconclusive_with(std::move(ev)), std::nullopt};
}

}  // namespace detail

/*!
  Fits ||phi(t,x,u)||_A <= beta(||x||_A, t) + gamma(||u||) + c.

  c is the late (t >= T/2) zero-input distance; gamma is the 5%-inflated
  envelope of the late excess over c at each input-level node; beta is the
  KL majorant of the transient excess over gamma + c. Validation runs fresh
  probes to 2T; residuals above tolerance add the residual to c and inflate
  beta and gamma by 5%, for at most max_rounds rounds.
*/
inline FitResult fit_isps(const ControlSystem& sys, const BoundedSetApprox& a,
                          const SampleBudget& b, const FitOptions& opt = {}) {
  return detail::fit_impl(sys, a, b, opt, detail::FitMode::isps);
}

/// fit_isps with c = 0 (an ISS certificate).
inline FitResult fit_iss(const ControlSystem& sys, const BoundedSetApprox& a,
                         const SampleBudget& b, const FitOptions& opt = {}) {
  return detail::fit_impl(sys, a, b, opt, detail::FitMode::iss);
}

/// beta(||x||_A + C, t) + gamma(||u||) with C the first offset-grid value that validates.
inline FitResult fit_cuag(const ControlSystem& sys, const BoundedSetApprox& a,
                          const SampleBudget& b, const FitOptions& opt = {}) {
  return detail::fit_impl(sys, a, b, opt, detail::FitMode::cuag);
}

//------------------------------------------------------------------------//
// BRS
//------------------------------------------------------------------------//

struct BrsResult {
  Verdict verdict;
  double reach_sup = 0.0;
};

/*!
  sup ||phi(t, x, u)|| over ||x|| <= C, ||u|| <= C, t in [0, tau]: Latin
  hypercube over (||x||, ||u||) plus corner presets, then coordinate ascent
  on the best probes.
*/
inline BrsResult check_brs(const ControlSystem& sys, double bound, double tau,
                           const SampleBudget& b) {
  if (!(bound > 0.0)) throw PreconditionError("BRS bound C must be positive");
  if (!(tau >= 0.0)) throw PreconditionError("BRS horizon must be nonnegative");
  auto origin = BoundedSetApprox::origin(sys.state_dim, sys.norm);
  auto times = tau > 0.0 ? time_grid(tau, std::min(b.observation_step, tau)) : std::vector<double>{0.0};
  std::size_t cells = std::max<std::size_t>(1, cells_for(tau, sys.input_step));

  std::vector<Probe> probes;
  for (double sx : {1.0, -1.0}) {
    for (double su : {1.0, -1.0, 0.0}) {
      StateVector x = StateVector::zeros(sys.state_dim, sys.norm);
      x.mutable_coords()[0] = sx * bound;
      std::vector<double> flat;
      for (std::size_t k = 0; k < cells; ++k) {
        for (std::size_t i = 0; i < sys.input_dim; ++i) flat.push_back(i == 0 ? su * bound : 0.0);
      }
      probes.push_back(make_probe(origin, x, InputSignal(sys.input_step, sys.input_dim, flat)));
    }
  }
  const int n = std::max(1, b.n_states * b.n_inputs);
  Rng perm = make_rng(b.seed, detail::stream_id(11, 0, 0));
  std::vector<int> strata(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) strata[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    auto j = static_cast<int>(uniform(perm, 0.0, i + 1.0));
    std::swap(strata[static_cast<std::size_t>(i)], strata[static_cast<std::size_t>(std::min(j, i))]);
  }
  for (int i = 0; i < n; ++i) {
    Rng rng = make_rng(b.seed, detail::stream_id(12, 0, static_cast<std::uint64_t>(i)));
    double fr = (i + uniform(rng)) / n;
    double fl = (strata[static_cast<std::size_t>(i)] + uniform(rng)) / n;
    auto dir = sample_direction(sys.state_dim, sys.norm, rng);
    std::vector<double> c(sys.state_dim);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = fr * bound * dir[k];
    InputKind kind = detail::kPresetCycle[static_cast<std::size_t>(i) % 4];
    probes.push_back(make_probe(origin, StateVector(std::move(c), sys.norm),
                                sample_input(sys.input_dim, sys.input_step, cells, fl * bound, kind, rng)));
  }
  auto runs = run_bundle(sys, origin, probes, times, b.workers);
  if (const Run* r = first_diverged(runs)) return {divergence_verdict(*r, "brs"), std::numeric_limits<double>::infinity()};

  auto peak = [](const Run& r) { return *std::max_element(r.dist.begin(), r.dist.end()); };
  double sup = 0.0;
  for (const auto& r : runs) sup = std::max(sup, peak(r));

  // local ascent on the four best probes: scale x0 and u toward the bound
  std::vector<std::size_t> order(runs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return peak(runs[i]) > peak(runs[j]); });
  std::size_t ascents = std::min<std::size_t>(4, order.size());
  std::vector<double> improved(ascents, 0.0);
  parallel_for(ascents, b.workers, [&](std::size_t q) {
    Probe p = runs[order[q]].probe;
    double best = peak(runs[order[q]]);
    double step = 0.25;
    for (int it = 0; it < 12 && step > 1e-3; ++it) {
      bool moved = false;
      for (int coord = 0; coord < 2; ++coord) {
        for (double sgn : {1.0, -1.0}) {
          Probe c = p;
          if (coord == 0) {
            double nx = c.x0.norm();
            double target = std::clamp(nx + sgn * step * bound, 0.0, bound);
            if (nx > 0.0) c.x0 *= target / nx;
          } else {
            double lv = c.u.sup_norm();
            double target = std::clamp(lv + sgn * step * bound, 0.0, bound);
            if (lv > 0.0) {
              std::vector<double> flat(c.u.flat_values().begin(), c.u.flat_values().end());
              for (double& v : flat) v *= target / lv;
              c.u = InputSignal(c.u.grid_step(), c.u.dim(), std::move(flat));
            }
          }
          try {
            auto xs = sys.trajectory(times, c.x0, c.u);
            double m = 0.0;
            for (const auto& x : xs) m = std::max(m, x.norm());
            if (m > best) {
              best = m;
              p = c;
              moved = true;
            }
          } catch (const DivergenceError&) {
            best = std::numeric_limits<double>::infinity();
            return;
          }
        }
      }
      if (!moved) step *= 0.5;
    }
    improved[q] = best;
  });
  for (double v : improved) sup = std::max(sup, v);
  if (!std::isfinite(sup)) {
    return {Verdict::falsified_by(Witness{tau, probes.front().x0, probes.front().u, sup, "divergence"},
                                  {{"property", "brs"}, {"reason", "divergence during ascent"}}),
            sup};
  }
  return {Verdict::consistent_with({{"property", "brs"},
                                    {"C", bound},
                                    {"tau", tau},
                                    {"reach_sup", sup},
                                    {"samples", runs.size()}}),
          sup};
}

//------------------------------------------------------------------------//
// ULIM, LIM, UAG
//------------------------------------------------------------------------//

/// First-attainment (ULIM) or settling (UAG) times per (eps, r) node, eps-major.
struct TauTable {
  std::vector<double> eps;
  std::vector<double> radii;
  std::vector<double> tau;
  std::vector<int> samples;
  double horizon = 0.0;

  double at(std::size_t i, std::size_t j) const { return tau[i * radii.size() + j]; }
  double& at(std::size_t i, std::size_t j) { return tau[i * radii.size() + j]; }

  bool complete() const {
    return std::all_of(tau.begin(), tau.end(), [](double v) { return std::isfinite(v); });
  }

  TauGrid as_tau_grid() const {
    if (!complete()) throw ConfigError("tau table has unresolved nodes");
    return TauGrid{eps, radii, tau};
  }
};

inline void to_json(nlohmann::json& j, const TauTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < t.eps.size(); ++i) {
    for (std::size_t k = 0; k < t.radii.size(); ++k) {
      double v = t.at(i, k);
      rows.push_back({{"eps", t.eps[i]},
                      {"r", t.radii[k]},
                      {"tau", std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr)}});
    }
  }
  j = nlohmann::json{{"horizon", t.horizon}, {"nodes", rows}};
}

/// CSV with header eps,r,tau (unresolved nodes print "inf").
inline void write_tau_csv(std::ostream& os, const TauTable& t) {
  os << "eps,r,tau\n";
  auto old = os.precision(17);
  for (std::size_t i = 0; i < t.eps.size(); ++i) {
    for (std::size_t k = 0; k < t.radii.size(); ++k) {
      os << t.eps[i] << ',' << t.radii[k] << ',';
      double v = t.at(i, k);
      if (std::isfinite(v)) {
        os << v;
      } else {
        os << "inf";
      }
      os << '\n';
    }
  }
  os.precision(old);
}

struct TauResult {
  Verdict verdict;
  TauTable table;
};

struct AttainmentOptions {
  //! Runs without attainment that get re-simulated on the 8T horizon.
  std::size_t max_escalations = 16;
};

namespace detail {

enum class TimeKind { first_attainment, settling };

// Grid index of first attainment / settling, or npos.
inline std::size_t event_index(const std::vector<double>& dist, double target, TimeKind kind) {
  constexpr auto npos = static_cast<std::size_t>(-1);
  if (kind == TimeKind::first_attainment) {
    for (std::size_t k = 0; k < dist.size(); ++k) {
      if (dist[k] <= target) return k;
    }
    return npos;
  }
  if (dist.empty() || dist.back() > target) return npos;
  std::size_t k = dist.size();
  while (k > 0 && dist[k - 1] <= target) --k;
  return k;
}

/// Probes for ULIM / UAG tables: per radius node, states at exactly that
/// distance plus states uniformly inside; zero input plus level-stratified presets.
inline std::vector<Probe> table_probes(const ControlSystem& sys, const BoundedSetApprox& a,
                                       const SampleBudget& b, std::uint64_t seed) {
  std::size_t cells = cells_for(b.time_horizon, sys.input_step);
  std::vector<Probe> out;
  for (std::size_t i = 0; i < b.radii.size(); ++i) {
    for (int s = 0; s < b.n_states; ++s) {
      Rng rng = make_rng(seed, stream_id(21, i, static_cast<std::uint64_t>(s)));
      double r = s % 2 == 0 ? b.radii[i] : uniform(rng, 0.0, b.radii[i]);
      StateVector x0 = sample_near_set(a, r, rng);
      out.push_back(make_probe(a, x0, InputSignal::zero(sys.input_dim, sys.input_step)));
      for (int k = 0; k < b.n_inputs; ++k) {
        Rng urng = make_rng(seed, stream_id(22 + i, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(k)));
        double level = b.max_level() * (k + uniform(urng)) / b.n_inputs;
        InputKind kind = kPresetCycle[static_cast<std::size_t>(k) % 4];
        out.push_back(make_probe(a, x0, sample_input(sys.input_dim, sys.input_step, cells, level, kind, urng)));
      }
    }
  }
  return out;
}

inline TauResult tau_table(const ControlSystem& sys, const BoundedSetApprox& a,
                           const ComparisonFunction& gamma, const SampleBudget& b,
                           TimeKind kind, const std::string& property,
                           const AttainmentOptions& opt) {
  b.validate();
  if (gamma.function_class() != FunctionClass::Kinf) throw ClassError("gamma must be Kinf");
  auto probes = table_probes(sys, a, b, b.seed);
  if (probes.empty()) throw ConfigError("empty sample set");
  auto times = time_grid(b.time_horizon, b.observation_step);
  auto runs = run_bundle(sys, a, probes, times, b.workers);
  TauTable table{b.epsilons, b.radii,
                 std::vector<double>(b.epsilons.size() * b.radii.size(), 0.0),
                 std::vector<int>(b.radii.size(), 0), b.time_horizon};
  if (const Run* r = first_diverged(runs)) return {divergence_verdict(*r, property), table};

  // per-run event time for each eps, escalating unresolved runs to 8T
  constexpr auto npos = static_cast<std::size_t>(-1);
  std::vector<std::vector<double>> ev(runs.size(), std::vector<double>(b.epsilons.size()));
  std::vector<std::pair<std::size_t, std::size_t>> unresolved;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (std::size_t e = 0; e < b.epsilons.size(); ++e) {
      double target = b.epsilons[e] + gamma(runs[i].probe.level);
      std::size_t k = event_index(runs[i].dist, target, kind);
      ev[i][e] = k == npos ? std::numeric_limits<double>::infinity() : times[k];
      if (k == npos) unresolved.emplace_back(i, e);
    }
  }
  std::size_t escalated = 0;
  if (!unresolved.empty() && unresolved.size() <= opt.max_escalations * b.epsilons.size()) {
    auto long_times = time_grid(8.0 * b.time_horizon, b.observation_step);
    std::vector<std::size_t> ids;
    for (const auto& [i, e] : unresolved) {
      if (ids.empty() || ids.back() != i) ids.push_back(i);
    }
    if (ids.size() > opt.max_escalations) ids.resize(opt.max_escalations);
    std::vector<Probe> longer;
    for (std::size_t i : ids) {
      Probe p = runs[i].probe;
      // extend the input: the sampled signal ends at T and is zero afterwards
      longer.push_back(p);
    }
    auto long_runs = run_bundle(sys, a, longer, long_times, b.workers);
    if (const Run* r = first_diverged(long_runs)) return {divergence_verdict(*r, property), table};
    for (std::size_t q = 0; q < ids.size(); ++q) {
      std::size_t i = ids[q];
      for (std::size_t e = 0; e < b.epsilons.size(); ++e) {
        if (std::isfinite(ev[i][e])) continue;
        double target = b.epsilons[e] + gamma(runs[i].probe.level);
        std::size_t k = event_index(long_runs[q].dist, target, kind);
        if (k != npos) {
          ev[i][e] = long_times[k];
          ++escalated;
        }
      }
    }
  }

  bool all = true;
  std::optional<std::size_t> candidate;
  for (std::size_t e = 0; e < b.epsilons.size(); ++e) {
    for (std::size_t j = 0; j < b.radii.size(); ++j) {
      double m = 0.0;
      int count = 0;
      for (std::size_t i = 0; i < runs.size(); ++i) {
        if (runs[i].probe.r0 > b.radii[j] * (1.0 + 1e-12) + 1e-12) continue;
        ++count;
        m = std::max(m, ev[i][e]);
        if (!std::isfinite(ev[i][e]) && !candidate) candidate = i;
      }
      table.at(e, j) = m;
      if (e == 0) table.samples[j] = count;
      if (!std::isfinite(m)) all = false;
    }
  }
  nlohmann::json evidence{{"property", property},
                          {"table", table},
                          {"samples", runs.size()},
                          {"escalated_resolutions", escalated}};
  if (all) return {Verdict::consistent_with(std::move(evidence)), table};
  if (auto g = growth_test(sys, a, b, property)) {
    g->evidence["table"] = table;
    return {*g, table};
  }
  const Run& r = runs[*candidate];
  evidence["reason"] = "horizon exhausted without attainment";
  evidence["candidate"] = Witness{8.0 * b.time_horizon, r.probe.x0, r.probe.u, r.dist.back(),
                                  "no_attainment"};
  return {Verdict::inconclusive_with(std::move(evidence)), table};
}

}  // namespace detail

/*!
  tau_hat(eps, r) = max over probes with ||x0||_A <= r of the first grid time
  with ||phi||_A <= eps + gamma(||u||). Runs that never attain are
  re-simulated to 8T; if some still do not, the growth test decides between
  falsified and inconclusive.
*/
inline TauResult estimate_ulim(const ControlSystem& sys, const BoundedSetApprox& a,
                               const ComparisonFunction& gamma, const SampleBudget& b,
                               const AttainmentOptions& opt = {}) {
  return detail::tau_table(sys, a, gamma, b, detail::TimeKind::first_attainment, "ulim", opt);
}

/// Like estimate_ulim but the bound must hold from tau_hat to the end of the horizon.
inline TauResult check_uag(const ControlSystem& sys, const BoundedSetApprox& a,
                           const ComparisonFunction& gamma, const SampleBudget& b,
                           const AttainmentOptions& opt = {}) {
  return detail::tau_table(sys, a, gamma, b, detail::TimeKind::settling, "uag", opt);
}

/*!
  Per-trajectory attainment only: every probe (||x0||_A uniform up to the
  largest radius) must come eps + gamma(||u||) close to A for every eps.
*/
inline Verdict check_lim(const ControlSystem& sys, const BoundedSetApprox& a,
                         const ComparisonFunction& gamma, const SampleBudget& b,
                         const AttainmentOptions& opt = {}) {
  b.validate();
  if (gamma.function_class() != FunctionClass::Kinf) throw ClassError("gamma must be Kinf");
  int n = b.n_states * (b.n_inputs + 1) * static_cast<int>(b.radii.size());
  auto probes = random_probes(sys, a, n, b.max_radius(), b.max_level(), b.time_horizon,
                              mix_seed(b.seed, 0x6c696dULL));
  auto times = time_grid(b.time_horizon, b.observation_step);
  auto runs = run_bundle(sys, a, probes, times, b.workers);
  if (const Run* r = first_diverged(runs)) return divergence_verdict(*r, "lim");
  constexpr auto npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> missing;
  std::vector<double> worst(b.epsilons.size(), 0.0);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    bool miss = false;
    for (std::size_t e = 0; e < b.epsilons.size(); ++e) {
      std::size_t k = detail::event_index(runs[i].dist, b.epsilons[e] + gamma(runs[i].probe.level),
                                          detail::TimeKind::first_attainment);
      if (k == npos) {
        miss = true;
      } else {
        worst[e] = std::max(worst[e], times[k]);
      }
    }
    if (miss) missing.push_back(i);
  }
  std::size_t resolved = 0;
  if (!missing.empty() && missing.size() <= opt.max_escalations) {
    auto long_times = time_grid(8.0 * b.time_horizon, b.observation_step);
    std::vector<Probe> longer;
    for (std::size_t i : missing) longer.push_back(runs[i].probe);
    auto long_runs = run_bundle(sys, a, longer, long_times, b.workers);
    if (const Run* r = first_diverged(long_runs)) return divergence_verdict(*r, "lim");
    std::vector<std::size_t> still;
    for (std::size_t q = 0; q < missing.size(); ++q) {
      bool ok = true;
      for (std::size_t e = 0; e < b.epsilons.size(); ++e) {
        std::size_t k = detail::event_index(long_runs[q].dist,
                                            b.epsilons[e] + gamma(long_runs[q].probe.level),
                                            detail::TimeKind::first_attainment);
        if (k == npos) {
          ok = false;
        } else {
          worst[e] = std::max(worst[e], long_times[k]);
        }
      }
      if (ok) {
        ++resolved;
      } else {
        still.push_back(missing[q]);
      }
    }
    missing = std::move(still);
  }
  nlohmann::json evidence{{"property", "lim"},
                          {"samples", runs.size()},
                          {"max_attainment_time", worst},
                          {"epsilons", b.epsilons},
                          {"escalated_resolutions", resolved}};
  if (missing.empty()) return Verdict::consistent_with(std::move(evidence));
  if (auto g = growth_test(sys, a, b, "lim")) return *g;
  const Run& r = runs[missing.front()];
  evidence["reason"] = "horizon exhausted without attainment";
  evidence["candidate"] =
      Witness{b.time_horizon, r.probe.x0, r.probe.u, r.dist.back(), "no_attainment"};
  return Verdict::inconclusive_with(std::move(evidence));
}

//------------------------------------------------------------------------//
// UGB
//------------------------------------------------------------------------//

/// sigma(||x||_A) + gamma(||u||) + c, and the equivalent sigma1(||x||_A + c) + gamma(||u||).
struct UgbCertificate {
  ComparisonFunction sigma = ComparisonFunction::identity();
  ComparisonFunction gamma = ComparisonFunction::identity();
  double c = 0.0;
  ComparisonFunction sigma1 = ComparisonFunction::identity();
  double residual_max = 0.0;
  bool lemma1_form_valid = false;
};

inline void to_json(nlohmann::json& j, const UgbCertificate& u) {
  j = nlohmann::json{{"sigma", u.sigma},          {"gamma", u.gamma},
                     {"c", u.c},                  {"sigma1", u.sigma1},
                     {"residual_max", u.residual_max},
                     {"lemma1_form_valid", u.lemma1_form_valid}};
}

struct UgbResult {
  Verdict verdict;
  std::optional<UgbCertificate> certificate;
};

inline UgbResult check_ugb(const ControlSystem& sys, const BoundedSetApprox& a,
                           const SampleBudget& b, const FitOptions& opt = {}) {
  b.validate();
  detail::FitData d;
  if (auto v = detail::simulate_fit_data(sys, a, b, "ugb", d)) return {*v, std::nullopt};
  const std::size_t late = detail::first_index_at_or_after(d.times, 0.5 * b.time_horizon);
  double c = 0.0;
  for (const auto& r : d.runs) {
    if (r.probe.level == 0.0) c = std::max(c, detail::late_max(r, late));
  }
  std::vector<double> excess(b.input_levels.size(), 0.0);
  for (const auto& r : d.runs) {
    double e = detail::late_max(r, late) - c;
    for (std::size_t l = 0; l < b.input_levels.size(); ++l) {
      if (r.probe.level <= b.input_levels[l] * (1.0 + 1e-12)) excess[l] = std::max(excess[l], e);
    }
  }
  auto gamma = detail::kinf_envelope(b.input_levels, excess, opt.inflation);
  double e0 = 0.0;
  std::vector<double> sup_excess(b.radii.size(), 0.0);
  for (const auto& r : d.runs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : r.dist) m = std::max(m, v - gamma(r.probe.level) - c);
    if (r.probe.r0 == 0.0) e0 = std::max(e0, m);
    for (std::size_t i = 0; i < b.radii.size(); ++i) {
      if (r.probe.r0 <= b.radii[i] * (1.0 + 1e-12) + 1e-12) {
        sup_excess[i] = std::max(sup_excess[i], m);
      }
    }
  }
  c += std::max(0.0, e0);
  UgbCertificate cert;
  cert.sigma = detail::kinf_envelope(b.radii, sup_excess, opt.inflation);
  cert.gamma = gamma;
  cert.c = c;
  double residual = 0.0;
  for (int round = 0; round <= opt.max_rounds; ++round) {
    residual = -std::numeric_limits<double>::infinity();
    for (const auto& r : d.val_runs) {
      double bound = cert.sigma(r.probe.r0) + cert.gamma(r.probe.level) + cert.c;
      for (double v : r.dist) residual = std::max(residual, v - bound);
    }
    if (residual <= opt.tolerance) break;
    if (round == opt.max_rounds) {
      if (auto g = growth_test(sys, a, b, "ugb")) return {*g, std::nullopt};
      return {Verdict::inconclusive_with({{"property", "ugb"},
                                          {"reason", "validation residual above tolerance"},
                                          {"final_residual", residual}}),
              std::nullopt};
    }
    cert.c += residual;
    cert.sigma = cert.sigma.scaled(opt.inflation);
    cert.gamma = cert.gamma.scaled(opt.inflation);
  }
  cert.residual_max = std::max(0.0, residual);
  cert.sigma1 = add(cert.sigma, ComparisonFunction::identity());
  // sigma1(r + c) = sigma(r + c) + r + c >= sigma(r) + c on every validation probe
  bool ok = true;
  for (const auto& r : d.val_runs) {
    double lhs_bound = cert.sigma1(r.probe.r0 + cert.c) + cert.gamma(r.probe.level);
    double form1 = cert.sigma(r.probe.r0) + cert.gamma(r.probe.level) + cert.c;
    if (lhs_bound < form1 - 1e-12) ok = false;
    for (double v : r.dist) {
      if (v > lhs_bound + cert.residual_max + 1e-12) ok = false;
    }
  }
  cert.lemma1_form_valid = ok;
  nlohmann::json ev{{"property", "ugb"},
                    {"certificate", cert},
                    {"validation_samples", d.val_runs.size()}};
  if (!ok) {
    return {Verdict::inconclusive_with({{"property", "ugb"},
                                        {"reason", "split sigma form does not dominate"},
                                        {"certificate", cert}}),
            cert};
  }
  return {Verdict::consistent_with(std::move(ev)), cert};
}

//------------------------------------------------------------------------//
// Invariance
//------------------------------------------------------------------------//

inline double membership_slack(const ControlSystem& sys, const BoundedSetApprox& a) {
  return a.max_inflation() * 1e-3 + sys.flow_tolerance;
}

/*!
  Initial states from A (cloud points, interior of the inflation balls and
  their boundary shell), inputs with sup-norm <= s; any state farther than
  membership_slack from A falsifies.
*/
inline Verdict check_s_invariance(const ControlSystem& sys, const BoundedSetApprox& a, double s,
                                  const SampleBudget& b) {
  if (!(s >= 0.0)) throw PreconditionError("s must be nonnegative");
  b.validate();
  const double slack = membership_slack(sys, a);
  std::size_t cells = cells_for(b.time_horizon, sys.input_step);
  std::vector<Probe> probes;
  int n = b.n_states * b.n_inputs;
  for (int i = 0; i < n; ++i) {
    Rng rng = make_rng(b.seed, detail::stream_id(31, 0, static_cast<std::uint64_t>(i)));
    std::size_t ci = static_cast<std::size_t>(i) % a.component_count();
    const auto& part = a.component(ci);
    const auto& pts = part.points();
    auto pi = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(pts.size())));
    const StateVector& base = pts[std::min(pi, pts.size() - 1)];
    double frac = i % 3 == 0 ? 1.0 : (i % 3 == 1 ? 0.0 : uniform(rng));
    auto dir = sample_direction(base.size(), base.norm_kind(), rng);
    std::vector<double> c(base.coords().begin(), base.coords().end());
    for (std::size_t k = 0; k < c.size(); ++k) c[k] += frac * part.inflation() * dir[k];
    InputKind kind = s > 0.0 ? detail::kPresetCycle[static_cast<std::size_t>(i) % 4] : InputKind::zero;
    double level = (i / 4) % 2 == 0 ? s : uniform(rng, 0.0, s);
    probes.push_back(make_probe(a, StateVector(std::move(c), base.norm_kind()),
                                sample_input(sys.input_dim, sys.input_step, cells, level, kind, rng)));
  }
  auto times = time_grid(b.time_horizon, b.observation_step);
  auto runs = run_bundle(sys, a, probes, times, b.workers);
  if (const Run* r = first_diverged(runs)) return divergence_verdict(*r, "s_invariance");
  double worst = 0.0;
  for (const auto& r : runs) {
    for (std::size_t k = 0; k < r.dist.size(); ++k) {
      worst = std::max(worst, r.dist[k]);
      if (r.dist[k] > slack) {
        return Verdict::falsified_by(Witness{times[k], r.probe.x0, r.probe.u, r.dist[k], "exit"},
                                     {{"property", "s_invariance"}, {"s", s}, {"slack", slack}});
      }
    }
  }
  return Verdict::consistent_with({{"property", "s_invariance"},
                                   {"s", s},
                                   {"slack", slack},
                                   {"max_distance", worst},
                                   {"samples", runs.size()}});
}

struct RobustInvarianceResult {
  Verdict verdict;
  double delta = 0.0;
};

/*!
  Largest sampled delta in (0, eps] with ||x||_A <= delta, ||u|| <= delta,
  t in [0, h] => ||phi||_A <= eps. The normalized draws are shared by all
  candidate deltas, so the test is a fixed family scaled by delta. Halving
  from eps down to 1e-6 finds a passing delta, then bisection refines it.
*/
inline RobustInvarianceResult check_robust_s_invariance(const ControlSystem& sys,
                                                        const BoundedSetApprox& a, double s,
                                                        double eps, double h,
                                                        const SampleBudget& b) {
  if (!(eps > 0.0) || !(h > 0.0)) throw PreconditionError("eps and h must be positive");
  SampleBudget inv = b;
  inv.time_horizon = h;
  Verdict pre = check_s_invariance(sys, a, s, inv);
  if (!pre.consistent()) return {pre, 0.0};

  const int n = b.n_states * b.n_inputs;
  struct Draw {
    const BoundedSetApprox* part;
    std::size_t point;
    std::vector<double> dir;
    double frac;
    InputKind kind;
    std::uint64_t input_seed;
  };
  std::vector<Draw> draws;
  for (int i = 0; i < n; ++i) {
    Rng rng = make_rng(b.seed, detail::stream_id(41, 0, static_cast<std::uint64_t>(i)));
    const auto& part = a.component(static_cast<std::size_t>(i) % a.component_count());
    auto pi = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(part.points().size())));
    Draw d{&part, std::min(pi, part.points().size() - 1),
           sample_direction(sys.state_dim, sys.norm, rng), i % 2 == 0 ? 1.0 : uniform(rng),
           detail::kPresetCycle[static_cast<std::size_t>(i) % 4],
           detail::stream_id(42, 0, static_cast<std::uint64_t>(i))};
    draws.push_back(std::move(d));
  }
  const double dt = std::min(b.observation_step, h / 20.0);
  auto times = time_grid(h, dt);
  std::size_t cells = cells_for(h, sys.input_step);
  auto probes_for = [&](double delta) {
    std::vector<Probe> out;
    for (const auto& d : draws) {
      const StateVector& base = d.part->points()[d.point];
      std::vector<double> c(base.coords().begin(), base.coords().end());
      double radius = d.part->inflation() + d.frac * delta;
      for (std::size_t k = 0; k < c.size(); ++k) c[k] += radius * d.dir[k];
      Rng urng = make_rng(b.seed, d.input_seed);
      out.push_back(make_probe(a, StateVector(std::move(c), sys.norm),
                               sample_input(sys.input_dim, sys.input_step, cells, delta, d.kind, urng)));
    }
    return out;
  };
  // returns the worst violating run, if any
  auto test = [&](double delta) -> std::optional<Witness> {
    auto runs = run_bundle(sys, a, probes_for(delta), times, b.workers);
    for (const auto& r : runs) {
      if (r.diverged) return Witness{r.diverged_at, r.probe.x0, r.probe.u, r.diverged_norm, "divergence"};
      for (std::size_t k = 0; k < r.dist.size(); ++k) {
        if (r.dist[k] > eps) return Witness{times[k], r.probe.x0, r.probe.u, r.dist[k], "robustness"};
      }
    }
    return std::nullopt;
  };

  double lo = 0.0, hi = eps;
  std::optional<Witness> last_fail;
  for (double delta = eps; delta >= 1e-6; delta *= 0.5) {
    auto w = test(delta);
    if (!w) {
      lo = delta;
      break;
    }
    last_fail = std::move(w);
    hi = delta;
  }
  if (lo == 0.0) {
    return {Verdict::falsified_by(*last_fail, {{"property", "robust_s_invariance"},
                                               {"eps", eps},
                                               {"h", h},
                                               {"reason", "no admissible delta down to 1e-6"}}),
            0.0};
  }
  if (lo < eps) {
    for (int it = 0; it < 8; ++it) {
      double mid = 0.5 * (lo + hi);
      if (test(mid)) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
  }
  return {Verdict::consistent_with({{"property", "robust_s_invariance"},
                                    {"s", s},
                                    {"eps", eps},
                                    {"h", h},
                                    {"delta", lo},
                                    {"samples_per_delta", n}}),
          lo};
}

//------------------------------------------------------------------------//
// ISS w.r.t. a set
//------------------------------------------------------------------------//

/*!
  ISS w.r.t. A holds iff the system is CUAG w.r.t. A and A is robustly
  0-invariant. Runs 0-invariance, fit_cuag and robust 0-invariance (eps =
  smallest budget epsilon, h = 1); when all are consistent an ISS
  certificate (c = 0) is fitted.
*/
inline FitResult check_iss_wrt_set(const ControlSystem& sys, const BoundedSetApprox& a,
                                   const SampleBudget& b, const FitOptions& opt = {}) {
  nlohmann::json legs = nlohmann::json::object();
  auto stop = [&](const char* leg, Verdict v) {
    legs[leg] = v;
    v.evidence = {{"property", "iss"}, {"failed_leg", leg}, {"legs", legs}};
    return FitResult{std::move(v), std::nullopt};
  };
  Verdict inv = check_s_invariance(sys, a, 0.0, b);
  if (!inv.consistent()) return stop("zero_invariance", std::move(inv));
  legs["zero_invariance"] = to_string(inv.status);
  FitResult cuag = fit_cuag(sys, a, b, opt);
  if (!cuag.verdict.consistent()) return stop("cuag", std::move(cuag.verdict));
  legs["cuag"] = {{"status", "consistent"}, {"offset", cuag.certificate->offset}};
  auto robust = check_robust_s_invariance(sys, a, 0.0, b.epsilons.front(), 1.0, b);
  if (!robust.verdict.consistent()) return stop("robust_zero_invariance", std::move(robust.verdict));
  legs["robust_zero_invariance"] = {{"status", "consistent"}, {"delta", robust.delta}};
  FitResult iss = fit_iss(sys, a, b, opt);
  if (!iss.verdict.consistent()) return stop("iss_certificate", std::move(iss.verdict));
  legs["iss_certificate"] = "consistent";
  iss.verdict.evidence["legs"] = legs;
  iss.verdict.evidence["property"] = "iss";
  return iss;
}

//------------------------------------------------------------------------//
// Lipschitz flow
//------------------------------------------------------------------------//

/*!
  max ||phi(t,x,u) - phi(t,y,u)|| / ||x - y|| over t in [0, h], x, y in
  ball(0, r), ||u|| <= r: half the pairs are close (||x - y|| = 1e-3 r),
  half arbitrary.
*/
inline double estimate_lipschitz(const ControlSystem& sys, double r, double h,
                                 const SampleBudget& b) {
  if (!(r > 0.0) || !(h > 0.0)) throw PreconditionError("radius and horizon must be positive");
  const int n = b.n_states * b.n_inputs;
  auto times = time_grid(h, std::min(b.observation_step, h / 10.0));
  std::size_t cells = cells_for(h, sys.input_step);
  std::vector<double> ratio(static_cast<std::size_t>(n), 0.0);
  parallel_for(static_cast<std::size_t>(n), b.workers, [&](std::size_t i) {
    Rng rng = make_rng(b.seed, detail::stream_id(51, 0, i));
    auto d1 = sample_direction(sys.state_dim, sys.norm, rng);
    std::vector<double> x(sys.state_dim), y(sys.state_dim);
    double rx = uniform(rng, 0.0, r);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = rx * d1[k];
    auto d2 = sample_direction(sys.state_dim, sys.norm, rng);
    if (i % 2 == 0) {
      for (std::size_t k = 0; k < y.size(); ++k) y[k] = x[k] + 1e-3 * r * d2[k];
    } else {
      double ry = uniform(rng, 0.0, r);
      for (std::size_t k = 0; k < y.size(); ++k) y[k] = ry * d2[k];
    }
    InputSignal u = sample_input(sys.input_dim, sys.input_step, cells, uniform(rng, 0.0, r),
                                 detail::kPresetCycle[i % 4], rng);
    StateVector sx(x, sys.norm), sy(y, sys.norm);
    double gap = distance(sx, sy);
    if (gap == 0.0) return;
    auto px = sys.trajectory(times, sx, u);
    auto py = sys.trajectory(times, sy, u);
    double m = 0.0;
    for (std::size_t k = 0; k < px.size(); ++k) m = std::max(m, distance(px[k], py[k]) / gap);
    ratio[i] = m;
  });
  return *std::max_element(ratio.begin(), ratio.end());
}

}  // namespace isps
