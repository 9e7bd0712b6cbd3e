// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "isps/parallel.hpp"
#include "isps/system.hpp"

namespace isps {

/// Unit vector w.r.t. the given norm.
inline std::vector<double> sample_direction(std::size_t dim, Norm norm, Rng& rng) {
  std::vector<double> v(dim);
  if (dim == 0) return v;
  if (norm == Norm::sup) {
    for (double& c : v) c = uniform(rng, -1.0, 1.0);
    auto k = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(dim)));
    v[std::min(k, dim - 1)] = uniform(rng) < 0.5 ? -1.0 : 1.0;
    return v;
  }
  double n = 0.0;
  do {
    n = 0.0;
    for (double& c : v) {
      c = standard_normal(rng);
      n += c * c;
    }
  } while (n == 0.0);
  n = std::sqrt(n);
  for (double& c : v) c /= n;
  return v;
}

/// A point x with ||x||_A <= dist_to_set: base point + (inflation + dist) * direction.
///
/// For united sets a component is drawn first, uniformly by index; the
/// distance to the union can then be smaller than requested.
inline StateVector sample_near_set(const BoundedSetApprox& set, double dist_to_set, Rng& rng) {
  std::size_t nc = set.component_count();
  auto ci = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(nc)));
  const BoundedSetApprox& part = set.component(std::min(ci, nc - 1));
  const auto& pts = part.points();
  auto k = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(pts.size())));
  const StateVector& base = pts[std::min(k, pts.size() - 1)];
  auto dir = sample_direction(base.size(), base.norm_kind(), rng);
  std::vector<double> c(base.coords().begin(), base.coords().end());
  double radius = part.inflation() + dist_to_set;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += radius * dir[i];
  return StateVector(std::move(c), base.norm_kind());
}

enum class InputKind { zero, constant, random, bang_bang, zero_tail };

inline const char* to_string(InputKind k) {
  switch (k) {
    case InputKind::zero:
      return "zero";
    case InputKind::constant:
      return "constant";
    case InputKind::random:
      return "random";
    case InputKind::bang_bang:
      return "bang_bang";
    case InputKind::zero_tail:
      return "zero_tail";
  }
  return "?";
}

/*!
  Input of sup-norm exactly `level` (random kind: at most `level`) on
  `cells` cells of width `step`, zero afterwards.

  constant holds level * d for a random unit direction d; bang_bang flips
  the sign of that value at a random period; random draws every cell
  uniformly in the ball of radius level; zero_tail is random up to a random
  cut and zero afterwards.
*/
inline InputSignal sample_input(std::size_t dim, double step, std::size_t cells, double level,
                                InputKind kind, Rng& rng) {
  if (dim == 0 || kind == InputKind::zero || level <= 0.0) return InputSignal::zero(dim, step);
  std::vector<double> flat;
  flat.reserve(cells * dim);
  auto dir = sample_direction(dim, Norm::euclidean, rng);
  switch (kind) {
    case InputKind::constant:
      for (std::size_t k = 0; k < cells; ++k) {
        for (double d : dir) flat.push_back(level * d);
      }
      break;
    case InputKind::bang_bang: {
      auto period = static_cast<std::size_t>(1 + uniform(rng, 0.0, 6.0));
      double sign = uniform(rng) < 0.5 ? -1.0 : 1.0;
      for (std::size_t k = 0; k < cells; ++k) {
        if (k > 0 && k % period == 0) sign = -sign;
        for (double d : dir) flat.push_back(sign * level * d);
      }
      break;
    }
    case InputKind::random:
    case InputKind::zero_tail: {
      std::size_t cut = cells;
      if (kind == InputKind::zero_tail) {
        cut = static_cast<std::size_t>(uniform(rng, 1.0, static_cast<double>(cells) + 1.0));
      }
      for (std::size_t k = 0; k < cut; ++k) {
        auto v = sample_direction(dim, Norm::euclidean, rng);
        double radius = level * std::pow(uniform(rng), 1.0 / static_cast<double>(dim));
        for (double c : v) flat.push_back(radius * c);
      }
      // pin the norm at the requested level on one cell
      if (cut > 0) {
        for (std::size_t i = 0; i < dim; ++i) flat[i] = level * dir[i];
      }
      break;
    }
    case InputKind::zero:
      break;
  }
  return InputSignal(step, dim, std::move(flat));
}

inline std::size_t cells_for(double horizon, double step) {
  return static_cast<std::size_t>(std::ceil(horizon / step - 1e-9));
}

}  // namespace isps
