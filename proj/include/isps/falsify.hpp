// SPDX-License-Identifier: Apache-2.0
/*!
  \file
  \brief Counterexample search against a candidate certificate
  beta(||x||_A + C, t) + gamma(||u||) + c.
*/
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "isps/estimators.hpp"
#include "isps/parallel.hpp"
#include "isps/sampling.hpp"
#include "isps/system.hpp"
#include "isps/verdict.hpp"

namespace isps {

/*!
  Search space: x0 = a point of A plus an offset of norm <= inflation +
  state_radius, and a piecewise-constant input with `segments` equal
  pieces on [0, horizon], each of norm <= input_level.
*/
struct FalsificationProblem {
  ControlSystem system;
  GainCertificate candidate;
  double horizon = 20.0;
  double state_radius = 4.0;
  double input_level = 4.0;
  int segments = 8;
  int restarts = 20;
  std::size_t max_evaluations = 10000;
  double tolerance = 1e-6;
  double observation_step = 0.25;
  std::uint64_t seed = 0;
  unsigned workers = 1;

  void validate() const {
    if (segments < 1 || segments > 64) throw ConfigError("segments must be in [1, 64]");
    if (restarts < 1) throw ConfigError("restarts must be positive");
    if (max_evaluations < static_cast<std::size_t>(restarts)) {
      throw ConfigError("evaluation budget smaller than the number of restarts");
    }
    for (double v : {horizon, observation_step}) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("search bounds must be finite and positive");
    }
    for (double v : {state_radius, input_level, tolerance}) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("search bounds must be finite");
    }
  }
};

struct FalsifyOutcome {
  Verdict verdict;
  double best_residual = 0.0;
  std::size_t evaluations = 0;
};

namespace detail {

struct SearchPoint {
  std::vector<double> offset;  // state_dim
  std::vector<double> input;   // segments * input_dim
};

inline void project(std::vector<double>& v, Norm norm, double radius) {
  double n = vector_norm(v, norm);
  if (n > radius && n > 0.0) {
    for (double& c : v) c *= radius / n;
  }
}

struct Evaluation {
  double residual = -std::numeric_limits<double>::infinity();
  double t = 0.0;
  StateVector x0;
  InputSignal u;
  bool diverged = false;
};

}  // namespace detail

/*!
  Maximizes v(t, x0, u) = ||phi(t,x0,u)||_A - bound by coordinate search with
  halving steps from `restarts` starting points (restart 0: farthest state
  with constant maximal input, restart 1: a point of A with zero input, the
  rest random). A restart stops as soon as v > tolerance. The reported
  witness is the maximum over (residual, lowest restart index).
*/
inline FalsifyOutcome falsify(const FalsificationProblem& pr) {
  pr.validate();
  const ControlSystem& sys = pr.system;
  const GainCertificate& cert = pr.candidate;
  const BoundedSetApprox& a = cert.set_A;
  const StateVector& base = a.points().front();
  const double x_max = a.inflation() + pr.state_radius;
  const std::size_t nx = sys.state_dim, nu = sys.input_dim;
  const auto k = static_cast<std::size_t>(pr.segments);
  const double seg = pr.horizon / pr.segments;
  const auto times = time_grid(pr.horizon, std::min(pr.observation_step, pr.horizon));
  const std::size_t per_restart = pr.max_evaluations / static_cast<std::size_t>(pr.restarts);

  auto realize = [&](const detail::SearchPoint& p) {
    std::vector<double> c(base.coords().begin(), base.coords().end());
    for (std::size_t i = 0; i < nx; ++i) c[i] += p.offset[i];
    std::vector<std::vector<double>> cells(k, std::vector<double>(nu));
    for (std::size_t s = 0; s < k; ++s) {
      for (std::size_t i = 0; i < nu; ++i) cells[s][i] = p.input[s * nu + i];
    }
    return std::pair{StateVector(std::move(c), sys.norm), InputSignal::from_cells(seg, cells)};
  };
  auto evaluate = [&](const detail::SearchPoint& p) {
    detail::Evaluation e;
    auto [x0, u] = realize(p);
    double r0 = a.distance(x0), level = u.sup_norm();
    try {
      auto xs = sys.trajectory(times, x0, u);
      for (std::size_t j = 0; j < xs.size(); ++j) {
        if (!xs[j].is_finite()) throw DivergenceError(times[j], xs[j].norm());
        double v = a.distance(xs[j]) - cert.bound(r0, times[j], level);
        if (v > e.residual) {
          e.residual = v;
          e.t = times[j];
        }
      }
    } catch (const DivergenceError& d) {
      e.residual = std::numeric_limits<double>::infinity();
      e.t = d.time();
      e.diverged = true;
    }
    e.x0 = std::move(x0);
    e.u = std::move(u);
    return e;
  };
  auto clamp = [&](detail::SearchPoint& p) {
    detail::project(p.offset, sys.norm, x_max);
    for (std::size_t s = 0; s < k; ++s) {
      std::vector<double> v(p.input.begin() + static_cast<std::ptrdiff_t>(s * nu),
                            p.input.begin() + static_cast<std::ptrdiff_t>((s + 1) * nu));
      detail::project(v, Norm::euclidean, pr.input_level);
      std::copy(v.begin(), v.end(), p.input.begin() + static_cast<std::ptrdiff_t>(s * nu));
    }
  };

  std::vector<detail::Evaluation> best(static_cast<std::size_t>(pr.restarts));
  std::vector<std::size_t> used(best.size(), 0);
  parallel_for(best.size(), pr.workers, [&](std::size_t r) {
    Rng rng = make_rng(pr.seed, 0xfa15ULL + r);
    detail::SearchPoint p{std::vector<double>(nx, 0.0), std::vector<double>(k * nu, 0.0)};
    if (r == 0) {
      p.offset[0] = x_max;
      for (std::size_t s = 0; s < k; ++s) p.input[s * nu] = pr.input_level;
    } else if (r > 1) {
      auto dir = sample_direction(nx, sys.norm, rng);
      double rad = uniform(rng, 0.0, x_max);
      for (std::size_t i = 0; i < nx; ++i) p.offset[i] = rad * dir[i];
      for (std::size_t s = 0; s < k; ++s) {
        auto ud = sample_direction(nu, Norm::euclidean, rng);
        double lv = uniform(rng, 0.0, pr.input_level);
        for (std::size_t i = 0; i < nu; ++i) p.input[s * nu + i] = lv * ud[i];
      }
    }
    detail::Evaluation cur = evaluate(p);
    std::size_t n = 1;
    std::vector<double> step(nx + k * nu);
    for (std::size_t i = 0; i < step.size(); ++i) {
      step[i] = 0.25 * (i < nx ? std::max(x_max, 1e-3) : std::max(pr.input_level, 1e-3));
    }
    const double min_step = 1e-4 * step.front();
    while (n < per_restart && !(cur.residual > pr.tolerance)) {
      bool moved = false;
      for (std::size_t i = 0; i < step.size() && n < per_restart; ++i) {
        for (double sgn : {1.0, -1.0}) {
          if (n >= per_restart) break;
          detail::SearchPoint q = p;
          double& c = i < nx ? q.offset[i] : q.input[i - nx];
          c += sgn * step[i];
          clamp(q);
          detail::Evaluation e = evaluate(q);
          ++n;
          if (e.residual > cur.residual) {
            cur = std::move(e);
            p = std::move(q);
            moved = true;
            break;
          }
        }
        if (cur.residual > pr.tolerance) break;
      }
      if (!moved) {
        bool tiny = true;
        for (double& s : step) {
          s *= 0.5;
          tiny = tiny && s < min_step;
        }
        if (tiny) break;
      }
    }
    best[r] = std::move(cur);
    used[r] = n;
  });

  std::size_t arg = 0;
  for (std::size_t r = 1; r < best.size(); ++r) {
    if (best[r].residual > best[arg].residual) arg = r;
  }
  std::size_t evals = 0;
  for (std::size_t n : used) evals += n;
  detail::Evaluation& w = best[arg];
  nlohmann::json ev{{"property", "falsify"},
                    {"best_residual", std::isfinite(w.residual) ? nlohmann::json(w.residual)
                                                                : nlohmann::json("inf")},
                    {"restart", arg},
                    {"evaluations", evals},
                    {"tolerance", pr.tolerance},
                    {"horizon", pr.horizon},
                    {"segments", pr.segments}};
  if (w.residual > pr.tolerance) {
    double violation = w.residual;
    std::string kind = "certificate_violation";
    if (w.diverged) {
      kind = "divergence";
      try {
        violation = sys.flow(w.t, w.x0, w.u).norm();
      } catch (const DivergenceError& d) {
        violation = d.norm();
      }
    }
    return {Verdict::falsified_by(Witness{w.t, w.x0, w.u, violation, kind}, std::move(ev)),
            w.residual, evals};
  }
  return {Verdict::consistent_with(std::move(ev)), w.residual, evals};
}

}  // namespace isps
