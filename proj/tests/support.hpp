// SPDX-License-Identifier: Apache-2.0
// Planted-defect test doubles wrapping a healthy system.
#pragma once

#include "isps/benchmarks.hpp"

namespace isps::doubles {

/// phi(t, x, u) = 2 * phi_base(t, x, u): breaks the identity axiom.
inline ControlSystem identity_breaking(ControlSystem base) {
  auto f = base.flow;
  base.name += "-identity-breaking";
  base.flow = [f](double t, const StateVector& x, const InputSignal& u) { return 2.0 * f(t, x, u); };
  base.sampled_flow = nullptr;
  return base;
}

/// Adds 0.01 t ||u||: the state at t depends on input values after t.
inline ControlSystem causality_breaking(ControlSystem base) {
  auto f = base.flow;
  base.name += "-causality-breaking";
  base.flow = [f](double t, const StateVector& x, const InputSignal& u) {
    StateVector y = f(t, x, u);
    for (auto& c : y.mutable_coords()) c += 0.01 * t * u.sup_norm();
    return y;
  };
  base.sampled_flow = nullptr;
  return base;
}

/// Pushes every state starting outside ball(0, radius) out by one unit for t > 0.
inline ControlSystem discontinuous(ControlSystem base, double radius) {
  auto f = base.flow;
  base.name += "-discontinuous";
  base.flow = [f, radius](double t, const StateVector& x, const InputSignal& u) {
    StateVector y = f(t, x, u);
    double n = x.norm();
    if (t > 0.0 && n > radius) {
      for (std::size_t i = 0; i < y.size(); ++i) y.mutable_coords()[i] += x[i] / n;
    }
    return y;
  };
  base.sampled_flow = nullptr;
  return base;
}

}  // namespace isps::doubles
