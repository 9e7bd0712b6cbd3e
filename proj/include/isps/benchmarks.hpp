// SPDX-License-Identifier: Apache-2.0
/*!
  \file
  \brief Fixed-substep RK4 realization of ODE flows and the benchmark
  catalog with known stability status.
*/
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "isps/errors.hpp"
#include "isps/system.hpp"

namespace isps {

/// dx = f(x, u)
using OdeRhs =
    std::function<void(std::span<const double> x, std::span<const double> u, std::span<double> dx)>;

/*!
  x' = f(x, u) integrated by the classic fourth-order Runge-Kutta method.

  Every input cell [k dt, (k+1) dt) is split into m = ceil(dt / max_substep)
  equal substeps, so substeps never straddle an input switch and the input
  is constant inside each substep. A requested time inside a substep is
  reached by one partial step from the substep start; the main march is
  unaffected, which makes single-time and batched evaluation agree exactly.
*/
struct OdeSystem {
  std::string name;
  std::string description;
  std::size_t dim = 1;
  std::size_t input_dim = 1;
  Norm norm = Norm::euclidean;
  OdeRhs rhs;
  double max_substep = 0.01;
  double divergence_guard = 1e12;
  double flow_tolerance = 1e-9;
  double input_step = 0.5;

  std::vector<StateVector> integrate_at(std::span<const double> times, const StateVector& x0,
                                        const InputSignal& u) const {
    if (x0.size() != dim) throw ShapeError("initial state has the wrong dimension for " + name);
    if (u.dim() != input_dim) throw ShapeError("input has the wrong dimension for " + name);
    if (!x0.is_finite()) throw DomainError("initial state must be finite");
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!(times[i] >= 0.0)) throw DomainError("integration time must be nonnegative");
      if (i > 0 && times[i] < times[i - 1]) throw DomainError("requested times must be sorted");
    }
    std::vector<StateVector> out;
    out.reserve(times.size());
    std::vector<double> x(x0.coords().begin(), x0.coords().end());
    std::vector<double> scratch(5 * dim);
    std::vector<double> partial(dim);
    const double dt = u.grid_step();
    const auto m = static_cast<std::size_t>(std::max(1.0, std::ceil(dt / max_substep - 1e-9)));
    const double h = dt / static_cast<double>(m);

    std::size_t next = 0;
    auto emit_at_start = [&](double t0) {
      while (next < times.size() && std::abs(times[next] - t0) <= 1e-12 * std::max(1.0, t0)) {
        out.emplace_back(x, norm);
        ++next;
      }
    };
    for (std::size_t cell = 0; next < times.size(); ++cell) {
      auto uc = u.cell(cell);
      for (std::size_t j = 0; j < m && next < times.size(); ++j) {
        double t0 = static_cast<double>(cell) * dt + static_cast<double>(j) * h;
        double t1 = static_cast<double>(cell) * dt + static_cast<double>(j + 1) * h;
        emit_at_start(t0);
        while (next < times.size() && times[next] < t1 &&
               std::abs(times[next] - t1) > 1e-12 * std::max(1.0, t1)) {
          partial = x;
          rk4_step(partial, uc, times[next] - t0, scratch);
          guard(partial, times[next]);
          out.emplace_back(partial, norm);
          ++next;
        }
        if (next >= times.size()) break;
        rk4_step(x, uc, h, scratch);
        guard(x, t1);
      }
    }
    return out;
  }

  StateVector integrate(double t, const StateVector& x0, const InputSignal& u) const {
    double times[1] = {t};
    return integrate_at(times, x0, u).front();
  }

  ControlSystem as_control_system() const {
    auto self = std::make_shared<const OdeSystem>(*this);
    ControlSystem sys;
    sys.name = name;
    sys.description = description;
    sys.state_dim = dim;
    sys.input_dim = input_dim;
    sys.norm = norm;
    sys.flow_tolerance = flow_tolerance;
    sys.input_step = input_step;
    sys.flow = [self](double t, const StateVector& x, const InputSignal& u) {
      return self->integrate(t, x, u);
    };
    sys.sampled_flow = [self](std::span<const double> ts, const StateVector& x,
                              const InputSignal& u) { return self->integrate_at(ts, x, u); };
    return sys;
  }

 private:
  void rk4_step(std::vector<double>& x, std::span<const double> u, double h,
                std::vector<double>& s) const {
    const std::size_t n = dim;
    std::span<double> k1(s.data(), n), k2(s.data() + n, n), k3(s.data() + 2 * n, n),
        k4(s.data() + 3 * n, n), tmp(s.data() + 4 * n, n);
    rhs(x, u, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
    rhs(tmp, u, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
    rhs(tmp, u, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
    rhs(tmp, u, k4);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
  }

  void guard(const std::vector<double>& x, double t) const {
    double nx = vector_norm(x, norm);
    if (!std::isfinite(nx) || nx > divergence_guard) throw DivergenceError(t, nx);
  }
};

//------------------------------------------------------------------------//
// Catalog
//------------------------------------------------------------------------//

/*!
  A catalog system with its documented status. `invariant_set` is a bounded
  0-invariant set the system is expected to be CUAG/ULIM with respect to
  (when it is ISpS); `expected_c_origin` is the practical offset w.r.t. the
  origin under zero input.
*/
struct CatalogEntry {
  ControlSystem system;
  OdeSystem ode;
  bool iss_wrt_origin = false;
  bool isps = false;
  bool forward_complete = true;
  BoundedSetApprox invariant_set = BoundedSetApprox::origin(1);
  double expected_c_origin = 0.0;
  std::string status;
  std::string oracle;
  //! Spatial resolution for method-of-lines entries, 0 for plain ODEs.
  std::size_t resolution = 0;
};

namespace benchmarks {

inline OdeSystem scalar(std::string name, std::string description,
                        std::function<double(double, double)> f) {
  OdeSystem s;
  s.name = std::move(name);
  s.description = std::move(description);
  s.rhs = [f = std::move(f)](std::span<const double> x, std::span<const double> u,
                             std::span<double> dx) { dx[0] = f(x[0], u[0]); };
  return s;
}

inline OdeSystem linear() {
  return scalar("linear", "x' = -x + u", [](double x, double u) { return -x + u; });
}

inline OdeSystem biased() {
  return scalar("biased", "x' = -x + u + 1", [](double x, double u) { return -x + u + 1.0; });
}

inline OdeSystem integrator() {
  return scalar("integrator", "x' = u", [](double, double u) { return u; });
}

inline OdeSystem saturated_bias() {
  return scalar("saturated-bias", "x' = -x + sat(u) + 1, sat clips to [-1, 1]",
                [](double x, double u) { return -x + std::clamp(u, -1.0, 1.0) + 1.0; });
}

/// Polar form r' = r (1 - r + u), theta' = 1.
inline OdeSystem planar_limit_cycle() {
  OdeSystem s;
  s.name = "planar-limit-cycle";
  s.description = "polar r' = r(1 - r) + u r, theta' = 1 (Cartesian realization)";
  s.dim = 2;
  s.rhs = [](std::span<const double> x, std::span<const double> u, std::span<double> dx) {
    double r = std::hypot(x[0], x[1]);
    double g = 1.0 - r + u[0];
    dx[0] = g * x[0] - x[1];
    dx[1] = g * x[1] + x[0];
  };
  return s;
}

/*!
  Method-of-lines reaction-diffusion x_t = x_ss - x^3 + u on [0, 1] with
  homogeneous Dirichlet boundary, N interior nodes, spatially uniform scalar
  input and the sup norm. The substep respects the explicit RK4 stability
  bound of the second-difference operator.
*/
inline OdeSystem reaction_diffusion(std::size_t n) {
  if (n < 2) throw DomainError("reaction-diffusion needs at least two interior nodes");
  OdeSystem s;
  s.name = "reaction-diffusion-" + std::to_string(n);
  s.description = "x_t = x_ss - x^3 + u on [0,1], Dirichlet, N=" + std::to_string(n);
  s.dim = n;
  s.norm = Norm::sup;
  const double dx = 1.0 / static_cast<double>(n + 1);
  const double inv_dx2 = 1.0 / (dx * dx);
  s.rhs = [n, inv_dx2](std::span<const double> x, std::span<const double> u,
                       std::span<double> out) {
    for (std::size_t i = 0; i < n; ++i) {
      double left = i > 0 ? x[i - 1] : 0.0;
      double right = i + 1 < n ? x[i + 1] : 0.0;
      out[i] = (left - 2.0 * x[i] + right) * inv_dx2 - x[i] * x[i] * x[i] + u[0];
    }
  };
  s.max_substep = std::min(0.01, 2.0 / (4.0 * inv_dx2 + 100.0));
  s.input_step = 0.25;
  s.flow_tolerance = 1e-8;
  return s;
}

/// Dense second-difference matrix used by the reaction-diffusion entries.
inline std::vector<double> laplacian_matrix(std::size_t n) {
  const double dx = 1.0 / static_cast<double>(n + 1);
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    a[i * n + i] = -2.0 / (dx * dx);
    if (i > 0) a[i * n + i - 1] = 1.0 / (dx * dx);
    if (i + 1 < n) a[i * n + i + 1] = 1.0 / (dx * dx);
  }
  return a;
}

inline CatalogEntry entry(OdeSystem ode, bool iss, bool isps, BoundedSetApprox inv, double c,
                          std::string status, std::string oracle, std::size_t resolution = 0) {
  CatalogEntry e{ode.as_control_system(), ode, iss, isps, true, std::move(inv), c,
                 std::move(status), std::move(oracle), resolution};
  return e;
}

inline CatalogEntry reaction_diffusion_entry(std::size_t n) {
  return entry(reaction_diffusion(n), true, true, BoundedSetApprox::origin(n, Norm::sup), 0.0,
               "ISS w.r.t. {0}",
               "fine-grid simulation at N=128 as reference; linear part is dissipative",
               n);
}

}  // namespace benchmarks

/// Names accepted by find_system beyond the catalog itself.
inline const char* kReferenceSystem = "reaction-diffusion-128";

inline std::vector<CatalogEntry> catalog() {
  using namespace benchmarks;
  std::vector<CatalogEntry> c;
  c.push_back(entry(linear(), true, true, BoundedSetApprox::origin(1), 0.0, "ISS w.r.t. {0}",
                    "|x(t)| <= exp(-t)|x0| + ||u||"));
  c.push_back(entry(biased(), false, true, BoundedSetApprox::point({1.0}), 1.0,
                    "ISpS with c = 1; ISS w.r.t. {1}, not w.r.t. {0}",
                    "y = x - 1 satisfies y' = -y + u"));
  c.push_back(entry(integrator(), false, false, BoundedSetApprox::origin(1), 0.0,
                    "BRS but not ISpS", "u = delta gives x(t) = x0 + delta t"));
  c.push_back(entry(saturated_bias(), false, true, BoundedSetApprox::point({1.0}), 1.0,
                    "ISpS (bounded forcing)", "y = x - 1 satisfies y' = -y + sat(u)"));
  c.push_back(entry(planar_limit_cycle(), false, true,
                    BoundedSetApprox::ball(StateVector{0.0, 0.0}, 1.0), 1.0,
                    "ISpS; attracting unit circle, closed unit disc is 0-invariant",
                    "radial comparison r' = r(1 - r + u) gives r(t) <= max(r0, 1 + ||u||)"));
  for (std::size_t n : {16u, 32u, 64u}) c.push_back(reaction_diffusion_entry(n));
  return c;
}

inline std::vector<std::string> catalog_names() {
  std::vector<std::string> names;
  for (const auto& e : catalog()) names.push_back(e.system.name);
  return names;
}

inline CatalogEntry find_system(const std::string& name) {
  if (name == kReferenceSystem) return benchmarks::reaction_diffusion_entry(128);
  for (auto& e : catalog()) {
    if (e.system.name == name) return e;
  }
  std::string valid;
  for (const auto& n : catalog_names()) valid += (valid.empty() ? "" : ", ") + n;
  valid += std::string(", ") + kReferenceSystem;
  throw ConfigError("unknown system '" + name + "'; valid systems: " + valid);
}

/// Machine-readable catalog manifest.
inline nlohmann::json catalog_manifest() {
  nlohmann::json systems = nlohmann::json::array();
  for (const auto& e : catalog()) {
    systems.push_back({{"name", e.system.name},
                       {"description", e.system.description},
                       {"state_dim", e.system.state_dim},
                       {"input_dim", e.system.input_dim},
                       {"norm", to_string(e.system.norm)},
                       {"status", e.status},
                       {"iss_wrt_origin", e.iss_wrt_origin},
                       {"isps", e.isps},
                       {"forward_complete", e.forward_complete},
                       {"invariant_set", e.invariant_set},
                       {"oracle", e.oracle},
                       {"flow_tolerance", e.system.flow_tolerance},
                       {"max_substep", e.ode.max_substep}});
  }
  return {{"systems", systems}, {"reference", kReferenceSystem}};
}

}  // namespace isps
