// SPDX-License-Identifier: Apache-2.0
/*!
  \file
  \brief Sampled check of the control-system axioms: identity, cocycle,
  causality, continuity in time, and finiteness of the flow.
*/
#pragma once

#include <cmath>
#include <limits>
#include <cstdint>
#include <string>

#include "isps/errors.hpp"
#include "isps/sampling.hpp"
#include "isps/system.hpp"
#include "isps/verdict.hpp"

namespace isps {

struct AxiomCheckOptions {
  double state_radius = 2.0;
  double input_level = 1.0;
};

namespace detail {

inline constexpr int kContinuityLevels = 7;

inline StateVector checked_flow(const ControlSystem& sys, double t, const StateVector& x,
                                const InputSignal& u) {
  StateVector y = sys.flow(t, x, u);
  if (!y.is_finite()) throw DivergenceError(t, std::numeric_limits<double>::infinity());
  return y;
}

}  // namespace detail

/*!
  Draws `sample_budget` random (t, h, x, u) tuples and checks

  - identity: phi(0, x, u) == x exactly;
  - causality: replacing u after t (by zero or by another input) leaves
    phi(t, x, u) unchanged within flow_tolerance;
  - cocycle: phi(h, phi(t, x, u), u(. + t)) vs phi(t + h, x, u) within
    10 * flow_tolerance, with t on the input grid;
  - continuity: ||phi(t + d, x, u) - phi(t, x, u)|| shrinks at least by half
    when d shrinks eightfold (up to 10 * flow_tolerance), probed at
    d = d0 / 8^6 with d0 = min(0.01, input_step / 4).

  A non-finite state or a tripped divergence guard falsifies forward
  completeness.
*/
inline Verdict check_axioms(const ControlSystem& sys, int sample_budget, double horizon,
                            std::uint64_t seed, const AxiomCheckOptions& opt = {}) {
  if (sample_budget < 1) throw PreconditionError("axiom check needs a sample budget >= 1");
  if (!(horizon > 0.0)) throw PreconditionError("axiom check needs a positive horizon");
  const double tol = sys.flow_tolerance;
  const double step = sys.input_step;
  double max_cocycle = 0.0, max_causal = 0.0, max_cont_ratio = 0.0;

  for (int i = 0; i < sample_budget; ++i) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(i));
    auto dir = sample_direction(sys.state_dim, sys.norm, rng);
    double radius = uniform(rng, 0.0, opt.state_radius);
    std::vector<double> xc(sys.state_dim);
    for (std::size_t k = 0; k < xc.size(); ++k) xc[k] = radius * dir[k];
    StateVector x(std::move(xc), sys.norm);
    std::size_t cells = cells_for(2.0 * horizon, step);
    InputSignal u =
        sample_input(sys.input_dim, step, cells, uniform(rng, 0.0, opt.input_level),
                     InputKind::random, rng);
    InputSignal v =
        sample_input(sys.input_dim, step, cells, opt.input_level, InputKind::random, rng);
    auto grid_points = static_cast<std::size_t>(std::floor(horizon / step + 1e-9));
    double t = step * static_cast<double>(
                          static_cast<std::size_t>(uniform(rng, 0.0, grid_points + 1.0)));
    double h = uniform(rng, 0.0, horizon);

    auto fail = [&](const std::string& kind, double at, double violation) {
      Witness w{at, x, u, violation, kind};
      nlohmann::json ev{{"axiom", kind}, {"sample", i}, {"t", t}, {"h", h}};
      return Verdict::falsified_by(std::move(w), std::move(ev));
    };

    try {
      StateVector x0 = detail::checked_flow(sys, 0.0, x, u);
      if (!(x0 == x)) return fail("identity", 0.0, distance(x0, x));

      StateVector xt = detail::checked_flow(sys, t, x, u);
      double causal = std::max(distance(detail::checked_flow(sys, t, x, truncate(u, t)), xt),
                               distance(detail::checked_flow(sys, t, x, concat(u, v, t)), xt));
      max_causal = std::max(max_causal, causal);
      if (causal > tol) return fail("causality", t, causal);

      StateVector lhs = detail::checked_flow(sys, h, xt, shift(u, t));
      StateVector rhs = detail::checked_flow(sys, t + h, x, u);
      double cocycle = distance(lhs, rhs);
      max_cocycle = std::max(max_cocycle, cocycle);
      if (cocycle > 10.0 * tol) return fail("cocycle", t + h, cocycle);


      // stiff systems only reach the linear regime at very small d, so the
      // ratio is taken between the two smallest increments
      double d = std::min(1e-2, step / 4.0) / std::pow(8.0, detail::kContinuityLevels - 1);
      double inc_prev = distance(detail::checked_flow(sys, t + 8.0 * d, x, u), xt);
      double inc = distance(detail::checked_flow(sys, t + d, x, u), xt);
      if (inc_prev > 10.0 * tol) max_cont_ratio = std::max(max_cont_ratio, inc / inc_prev);
      if (inc > 0.5 * inc_prev + 10.0 * tol) return fail("continuity", t, inc);
    } catch (const DivergenceError& e) {
      return fail("forward_completeness", e.time(), e.norm());
    }
  }
  return Verdict::consistent_with({{"samples", sample_budget},
                                   {"horizon", horizon},
                                   {"max_cocycle_defect", max_cocycle},
                                   {"max_causality_defect", max_causal},
                                   {"max_continuity_ratio", max_cont_ratio},
                                   {"flow_tolerance", tol}});
}

}  // namespace isps
