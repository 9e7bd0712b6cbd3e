// SPDX-License-Identifier: Apache-2.0
/*!
  \file
  \brief Reachable-set prolongations A_{eps,gamma} = {phi(t, x, u): x in
  B_eps(A), ||u|| <= gamma^{-1}(eps/2)} as sampled point clouds, and the
  constructions built on them.
*/
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "isps/comparison.hpp"
#include "isps/errors.hpp"
#include "isps/estimators.hpp"
#include "isps/parallel.hpp"
#include "isps/sampling.hpp"
#include "isps/system.hpp"
#include "isps/verdict.hpp"

namespace isps {

/*!
  cloud = B_eps(A) (exact, as A inflated by eps) united with the sampled
  trajectory states that lie outside it. The sampled part is inflated by
  slack plus the fill distance measured on held-out trajectories.
*/
struct ProlongationSet {
  BoundedSetApprox base_A;
  double epsilon = 0.0;
  ComparisonFunction gamma = ComparisonFunction::identity();
  double horizon_used = 0.0;
  BoundedSetApprox cloud;
  double input_level = 0.0;  //!< gamma^{-1}(eps/2)
  double slack = 0.0;        //!< flow_tolerance + 1% of eps
  double fill_distance = 0.0;
  double return_fraction = 1.0;
  bool horizon_justified = true;
  std::size_t sampled_points = 0;  //!< before down-sampling
  std::size_t trajectories = 0;
};

inline void to_json(nlohmann::json& j, const ProlongationSet& p) {
  j = nlohmann::json{{"base_set", p.base_A},
                     {"epsilon", p.epsilon},
                     {"gamma", p.gamma},
                     {"horizon_used", p.horizon_used},
                     {"input_level", p.input_level},
                     {"slack", p.slack},
                     {"fill_distance", p.fill_distance},
                     {"return_fraction", p.return_fraction},
                     {"horizon_justified", p.horizon_justified},
                     {"sampled_points", p.sampled_points},
                     {"trajectories", p.trajectories},
                     {"cloud_norm", p.cloud.norm()},
                     {"cloud", p.cloud}};
}

struct ProlongationOptions {
  //! Double the horizon once when fewer than return_threshold of the runs return.
  bool adapt_horizon = true;
  double return_threshold = 0.99;
  std::size_t max_points = 100000;
  //! Trajectories: n_states * n_inputs * trajectory_factor.
  int trajectory_factor = 4;
};

/*!
  Greedy farthest-point selection of k indices, starting from index 0. Ties
  go to the lowest index.
*/
inline std::vector<std::size_t> farthest_point_indices(const std::vector<StateVector>& pts,
                                                       std::size_t k) {
  std::vector<std::size_t> out;
  if (pts.empty() || k == 0) return out;
  k = std::min(k, pts.size());
  std::vector<double> d(pts.size(), std::numeric_limits<double>::infinity());
  std::size_t cur = 0;
  for (std::size_t n = 0; n < k; ++n) {
    out.push_back(cur);
    std::size_t next = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      d[i] = std::min(d[i], distance(pts[i], pts[cur]));
      if (d[i] > best) {
        best = d[i];
        next = i;
      }
    }
    cur = next;
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace detail {

struct CloudSample {
  std::vector<StateVector> outside;  // states with ||x||_{B_eps(A)} > 0
  std::size_t returned = 0;
  std::size_t runs = 0;
};

// Trajectories from B_eps(A) under inputs with sup-norm <= level.
inline CloudSample sample_cloud(const ControlSystem& sys, const BoundedSetApprox& core,
                                const BoundedSetApprox& a, double eps, double level,
                                const ComparisonFunction& gamma, double horizon, int n,
                                std::uint64_t seed, unsigned workers) {
  const double dt = std::min(sys.input_step, horizon / 50.0);
  auto times = time_grid(horizon, dt);
  std::size_t cells = cells_for(horizon, sys.input_step);
  std::vector<std::vector<StateVector>> outside(static_cast<std::size_t>(n));
  std::vector<char> returned(static_cast<std::size_t>(n), 0);
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    Rng rng = make_rng(seed, stream_id(61, 0, i));
    double r = i % 2 == 0 ? eps : uniform(rng, 0.0, eps);
    StateVector x0 = sample_near_set(a, r, rng);
    double lv = i % 4 < 2 ? level : uniform(rng, 0.0, level);
    InputKind kind = level > 0.0 ? kPresetCycle[(i / 2) % 4] : InputKind::zero;
    InputSignal u = sample_input(sys.input_dim, sys.input_step, cells, lv, kind, rng);
    auto xs = sys.trajectory(times, x0, u);
    double target = eps / 2.0 + gamma(u.sup_norm());
    for (std::size_t k = 0; k < xs.size(); ++k) {
      if (!xs[k].is_finite()) throw DivergenceError(times[k], xs[k].norm());
      if (k > 0 && a.distance(xs[k]) <= target) returned[i] = 1;
      if (core.distance(xs[k]) > 0.0) outside[i].push_back(xs[k]);
    }
  });
  CloudSample s;
  s.runs = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i < outside.size(); ++i) {
    s.returned += returned[i] ? 1 : 0;
    for (auto& x : outside[i]) s.outside.push_back(std::move(x));
  }
  return s;
}

}  // namespace detail

/*!
  Builds the cloud on [0, horizon]. The return statistic is the fraction of
  runs that re-enter B_{eps/2 + gamma(||u||)}(A) after t = 0; below
  return_threshold the horizon is doubled once, and if that is still not
  enough horizon_justified is false.
*/
inline ProlongationSet build_prolongation(const ControlSystem& sys, const BoundedSetApprox& a,
                                          double eps, const ComparisonFunction& gamma,
                                          double horizon, const SampleBudget& b,
                                          const ProlongationOptions& opt = {}) {
  if (!(eps > 0.0)) throw PreconditionError("epsilon must be positive");
  if (!(horizon > 0.0)) throw PreconditionError("prolongation horizon must be positive");
  if (gamma.function_class() != FunctionClass::Kinf) throw ClassError("gamma must be Kinf");
  b.validate();
  ProlongationSet p{a, eps, gamma, horizon, a.inflated(eps)};
  p.input_level = invert(gamma)(eps / 2.0);
  p.slack = sys.flow_tolerance + 0.01 * eps;
  const BoundedSetApprox core = a.inflated(eps);
  const int n = b.n_states * b.n_inputs * opt.trajectory_factor;

  detail::CloudSample s;
  for (int attempt = 0; attempt < 2; ++attempt) {
    s = detail::sample_cloud(sys, core, a, eps, p.input_level, gamma, p.horizon_used, n,
                             b.seed, b.workers);
    p.return_fraction = static_cast<double>(s.returned) / static_cast<double>(s.runs);
    p.horizon_justified = p.return_fraction >= opt.return_threshold;
    if (p.horizon_justified || !opt.adapt_horizon || attempt == 1) break;
    p.horizon_used *= 2.0;
  }
  p.trajectories = s.runs;
  p.sampled_points = s.outside.size();
  if (s.outside.empty()) return p;

  std::vector<StateVector> pts = std::move(s.outside);
  if (pts.size() > opt.max_points) {
    std::vector<StateVector> kept;
    for (std::size_t i : farthest_point_indices(pts, opt.max_points)) kept.push_back(pts[i]);
    pts = std::move(kept);
  }
  BoundedSetApprox raw(pts, 0.0);
  // fill distance of the raw cloud, measured on held-out runs
  auto held = detail::sample_cloud(sys, core, a, eps, p.input_level, gamma, p.horizon_used,
                                   std::max(4, n / 4), mix_seed(b.seed, 0x68656c64ULL), b.workers);
  double fill = 0.0;
  for (const auto& x : held.outside) fill = std::max(fill, raw.distance(x));
  p.fill_distance = fill;
  p.cloud = core.united(BoundedSetApprox(std::move(pts), p.slack + 1.1 * fill));
  return p;
}

/*!
  Horizon from a ULIM table: the smoothed tau(eps, eps), which reads the
  table on [eps/2, eps] x [eps, 2eps].
*/
inline double prolongation_horizon(const TauTable& ulim, double eps, double min_horizon) {
  if (!ulim.complete()) throw ConfigError("ULIM table has unresolved nodes");
  SmoothedTau tau(ulim.as_tau_grid());
  if (!tau.covers(eps, eps)) {
    throw ConfigError("ULIM table does not cover eps in [" + std::to_string(eps / 2) + ", " +
                      std::to_string(eps) + "] and r in [" + std::to_string(eps) + ", " +
                      std::to_string(2 * eps) + "]");
  }
  return std::max(min_horizon, tau(eps, eps));
}

inline ProlongationSet build_prolongation(const ControlSystem& sys, const BoundedSetApprox& a,
                                          double eps, const ComparisonFunction& gamma,
                                          const TauTable& ulim, const SampleBudget& b,
                                          const ProlongationOptions& opt = {}) {
  return build_prolongation(sys, a, eps, gamma,
                            prolongation_horizon(ulim, eps, b.observation_step), b, opt);
}

/// gamma^{-1}(eps/2)-invariance and 0-invariance of the cloud; falsified if either fails.
inline Verdict check_prolongation_invariance(const ControlSystem& sys, const ProlongationSet& p,
                                             const SampleBudget& b) {
  Verdict vs = check_s_invariance(sys, p.cloud, p.input_level, b);
  Verdict v0 = check_s_invariance(sys, p.cloud, 0.0, b);
  nlohmann::json ev{{"property", "prolongation_invariance"},
                    {"s", p.input_level},
                    {"s_invariance", to_string(vs.status)},
                    {"zero_invariance", to_string(v0.status)}};
  if (vs.falsified()) return Verdict::falsified_by(*vs.witness, std::move(ev));
  if (v0.falsified()) return Verdict::falsified_by(*v0.witness, std::move(ev));
  return Verdict::consistent_with(std::move(ev));
}

struct OffsetResult {
  double value = 0.0;
  bool nonconvex = false;
  std::size_t probes = 0;
};

/*!
  Smallest C with ||x||_A <= ||x||_P + C on probes placed on P's points, on
  its inflation shells and in a box around P. Also runs a midpoint
  spot-check: if midpoints of point pairs leave P by more than the slack,
  the cloud is flagged non-convex.
*/
inline OffsetResult offset_constant(const BoundedSetApprox& a, const BoundedSetApprox& p,
                                    std::uint64_t seed = 0, int n = 2000) {
  const double slack = p.max_inflation() * 1e-3 + 1e-12;
  for (const auto& x : a.points()) {
    if (p.distance(x) > slack) throw ConfigError("set A is not contained in the prolongation cloud");
  }
  OffsetResult out;
  auto probe = [&](const StateVector& x) {
    out.value = std::max(out.value, a.distance(x) - p.distance(x));
    ++out.probes;
  };
  for (std::size_t c = 0; c < p.component_count(); ++c) {
    for (const auto& x : p.component(c).points()) probe(x);
  }
  Rng rng = make_rng(seed, 71);
  const double span = p.norm() + a.norm() + 1.0;
  for (int i = 0; i < n; ++i) {
    probe(sample_near_set(p, i % 2 == 0 ? 0.0 : uniform(rng, 0.0, span), rng));
  }
  for (int i = 0; i < n / 4; ++i) {
    StateVector x = sample_near_set(p, 0.0, rng);
    StateVector y = sample_near_set(p, 0.0, rng);
    StateVector mid = 0.5 * (x + y);
    if (p.distance(mid) > slack) {
      out.nonconvex = true;
      break;
    }
  }
  return out;
}

inline OffsetResult offset_constant(const ProlongationSet& p, std::uint64_t seed = 0) {
  return offset_constant(p.base_A, p.cloud, seed);
}

struct FepsProfile {
  double epsilon = 0.0;
  std::vector<double> s;
  std::vector<double> f;
  ComparisonFunction sigma = ComparisonFunction::identity();
  double slack = 0.0;
  bool zero_up_to_eps = true;
};

inline void to_json(nlohmann::json& j, const FepsProfile& p) {
  j = nlohmann::json{{"epsilon", p.epsilon}, {"s", p.s},         {"f", p.f},
                     {"sigma", p.sigma},     {"slack", p.slack}, {"zero_up_to_eps", p.zero_up_to_eps}};
}

/*!
  f(s) = sup over the s-cloud of the distance to the eps-cloud, probed on
  cloud points and shell samples of every component. A decrease beyond slack
  throws ConsistencyError; sigma is a Kinf majorant of f on the grid.
*/
inline FepsProfile f_eps_profile(const ControlSystem& sys, const BoundedSetApprox& a,
                                 const ComparisonFunction& gamma, double eps,
                                 std::vector<double> s_grid, double horizon,
                                 const SampleBudget& b, const ProlongationOptions& opt = {}) {
  if (s_grid.empty()) throw ConfigError("s grid is empty");
  std::sort(s_grid.begin(), s_grid.end());
  if (!(s_grid.front() > 0.0)) throw ConfigError("s grid must be positive");
  ProlongationSet pe = build_prolongation(sys, a, eps, gamma, horizon, b, opt);
  FepsProfile out;
  out.epsilon = eps;
  out.s = s_grid;
  out.slack = pe.slack;
  for (double s : s_grid) {
    ProlongationSet ps = build_prolongation(sys, a, s, gamma, horizon, b, opt);
    double f = 0.0;
    for (std::size_t c = 0; c < ps.cloud.component_count(); ++c) {
      for (const auto& x : ps.cloud.component(c).points()) f = std::max(f, pe.cloud.distance(x));
    }
    Rng rng = make_rng(b.seed, detail::stream_id(81, 0, out.f.size()));
    for (int i = 0; i < 400; ++i) f = std::max(f, pe.cloud.distance(sample_near_set(ps.cloud, 0.0, rng)));
    out.f.push_back(f);
  }
  for (std::size_t i = 1; i < out.f.size(); ++i) {
    if (out.f[i] < out.f[i - 1] - out.slack) {
      throw ConsistencyError("f_eps decreases between s = " + std::to_string(out.s[i - 1]) +
                             " and s = " + std::to_string(out.s[i]));
    }
  }
  for (std::size_t i = 0; i < out.s.size(); ++i) {
    if (out.s[i] <= eps && out.f[i] > out.slack) out.zero_up_to_eps = false;
  }
  out.sigma = detail::kinf_envelope(out.s, out.f, 1.0);
  return out;
}

//------------------------------------------------------------------------//
// Bounded invariant set pipeline
//------------------------------------------------------------------------//

struct PipelineReport {
  Verdict verdict;
  nlohmann::json legs = nlohmann::json::array();
  std::optional<GainCertificate> certificate;
  std::optional<ProlongationSet> prolongation;
};

/*!
  Late zero-input states of trajectories started on the radius nodes,
  inflated by the fill distance of a held-out set of such states (at least
  100 flow tolerances).
*/
inline BoundedSetApprox attractor_estimate(const ControlSystem& sys, const SampleBudget& b) {
  auto origin = BoundedSetApprox::origin(sys.state_dim, sys.norm);
  auto collect = [&](std::uint64_t seed, int n) {
    std::vector<Probe> probes;
    for (int i = 0; i < n; ++i) {
      Rng rng = make_rng(seed, detail::stream_id(91, 0, static_cast<std::uint64_t>(i)));
      double r = b.radii[static_cast<std::size_t>(i) % b.radii.size()];
      probes.push_back(make_probe(origin, sample_near_set(origin, uniform(rng, 0.0, r), rng),
                                  InputSignal::zero(sys.input_dim, sys.input_step)));
    }
    std::vector<double> times;
    for (double t : time_grid(b.time_horizon, b.observation_step)) {
      if (t >= 0.5 * b.time_horizon) times.push_back(t);
    }
    std::vector<StateVector> pts;
    for (const auto& p : probes) {
      for (auto& x : sys.trajectory(times, p.x0, p.u)) pts.push_back(std::move(x));
    }
    return pts;
  };
  auto pts = collect(b.seed, b.n_states * static_cast<int>(b.radii.size()));
  BoundedSetApprox raw(pts, 0.0);
  double fill = 100.0 * sys.flow_tolerance;
  for (const auto& x : collect(mix_seed(b.seed, 0x6174ULL), b.n_states)) fill = std::max(fill, raw.distance(x));
  return BoundedSetApprox(std::move(pts), 1.1 * fill);
}

/*!
  Lipschitz flow estimate, ISpS fit w.r.t. the origin, ULIM table around the
  attractor estimate, prolongation at eps, its invariance, robust
  0-invariance, ISS w.r.t. the cloud and (for ODEs) UAG w.r.t. the cloud.
  Stops at the first leg that is not consistent.
*/
inline PipelineReport theorem2_pipeline(const ControlSystem& sys, double eps,
                                        const SampleBudget& b, bool finite_dimensional = true,
                                        const FitOptions& fit = {},
                                        const ProlongationOptions& opt = {}) {
  PipelineReport rep;
  auto leg = [&](const std::string& name, const Verdict& v, nlohmann::json extra = {}) {
    nlohmann::json j{{"leg", name}, {"verdict", to_string(v.status)}};
    if (v.witness) j["witness"] = *v.witness;
    if (!v.consistent()) j["evidence"] = v.evidence;
    if (!extra.is_null()) j["details"] = std::move(extra);
    rep.legs.push_back(std::move(j));
    if (!v.consistent()) {
      rep.verdict = v;
      rep.verdict.evidence = {{"property", "pipeline"}, {"stopped_at", name}, {"legs", rep.legs}};
      return false;
    }
    return true;
  };

  double l1 = estimate_lipschitz(sys, b.max_radius(), 1.0, b);
  SampleBudget twice = b;
  twice.n_states *= 2;
  double l2 = estimate_lipschitz(sys, b.max_radius(), 1.0, twice);
  bool stable = std::isfinite(l1) && std::isfinite(l2) && std::abs(l2 - l1) <= 0.2 * l1;
  Verdict lip = stable ? Verdict::consistent_with()
                       : Verdict::inconclusive_with({{"reason", "Lipschitz estimate unstable"}});
  if (!leg("lipschitz", lip, {{"L", l1}, {"L_doubled", l2}})) return rep;

  auto origin = BoundedSetApprox::origin(sys.state_dim, sys.norm);
  FitResult f = fit_isps(sys, origin, b, fit);
  if (!leg("fit_isps", f.verdict, f.certificate ? nlohmann::json(*f.certificate) : nlohmann::json{}))
    return rep;
  rep.certificate = f.certificate;
  const ComparisonFunction& gamma = f.certificate->gamma;

  BoundedSetApprox base = attractor_estimate(sys, b);
  SampleBudget ub = b;
  ub.epsilons = {eps / 2.0, eps};
  ub.radii = {eps, 2.0 * eps};
  TauResult ulim = estimate_ulim(sys, base, gamma, ub);
  if (!leg("ulim", ulim.verdict, ulim.table)) return rep;

  ProlongationSet p = build_prolongation(sys, base, eps, gamma, ulim.table, b, opt);
  rep.prolongation = p;
  Verdict built = p.horizon_justified
                      ? Verdict::consistent_with()
                      : Verdict::inconclusive_with({{"reason", "return statistic below threshold"},
                                                    {"return_fraction", p.return_fraction}});
  if (!leg("build_prolongation", built,
           {{"horizon_used", p.horizon_used},
            {"return_fraction", p.return_fraction},
            {"cloud_norm", p.cloud.norm()},
            {"sampled_points", p.sampled_points}}))
    return rep;

  if (!leg("prolongation_invariance", check_prolongation_invariance(sys, p, b))) return rep;
  auto robust = check_robust_s_invariance(sys, p.cloud, 0.0, b.epsilons.front(), 1.0, b);
  if (!leg("robust_zero_invariance", robust.verdict, {{"delta", robust.delta}})) return rep;
  FitResult iss = check_iss_wrt_set(sys, p.cloud, b, fit);
  if (!leg("iss_wrt_cloud", iss.verdict,
           iss.certificate ? nlohmann::json(*iss.certificate) : nlohmann::json{}))
    return rep;
  if (finite_dimensional) {
    TauResult uag = check_uag(sys, p.cloud, gamma, b);
    if (!leg("compact_uag", uag.verdict, uag.table)) return rep;
  }
  rep.verdict = Verdict::consistent_with({{"property", "pipeline"},
                                          {"legs", rep.legs},
                                          {"cloud_norm", p.cloud.norm()},
                                          {"offset_constant", offset_constant(p, b.seed).value}});
  return rep;
}

}  // namespace isps
