// SPDX-License-Identifier: Apache-2.0
/*!
  \file
  \brief Piecewise-linear comparison functions (classes K, K-infinity, L),
  factorized KL bounds, and the two monotone constructions used by the
  certificate fitters: KL majorization of a sampled transient bound and the
  double-average smoothing of sampled attainment times.
*/
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "isps/errors.hpp"

namespace isps {

enum class FunctionClass { K, Kinf, L };

inline const char* to_string(FunctionClass c) {
  switch (c) {
    case FunctionClass::K:
      return "K";
    case FunctionClass::Kinf:
      return "Kinf";
    case FunctionClass::L:
      return "L";
  }
  return "?";
}

inline FunctionClass function_class_from_string(const std::string& s) {
  if (s == "K") return FunctionClass::K;
  if (s == "Kinf") return FunctionClass::Kinf;
  if (s == "L") return FunctionClass::L;
  throw DataError("unknown comparison function class '" + s + "'");
}

struct Knot {
  double r = 0.0;
  double value = 0.0;

  friend bool operator==(const Knot&, const Knot&) = default;
};

/*!
  Piecewise-linear monotone function on the nonnegative half-line.

  K and Kinf functions start at (0, 0), are strictly increasing on their
  knots and continue linearly with a positive slope beyond the last knot.
  L functions are strictly decreasing and positive on their knots, start at
  t = 0 and continue as value * exp(-rate * (t - t_last)).
*/
class ComparisonFunction {
 public:
  static ComparisonFunction k_class(std::vector<Knot> knots, double tail_slope,
                                    FunctionClass tag = FunctionClass::Kinf) {
    if (tag == FunctionClass::L) throw ClassError("k_class called with class L");
    return ComparisonFunction(tag, std::move(knots), tail_slope);
  }

  static ComparisonFunction l_class(std::vector<Knot> knots, double tail_rate) {
    return ComparisonFunction(FunctionClass::L, std::move(knots), tail_rate);
  }

  //! r -> slope * r
  static ComparisonFunction linear(double slope) {
    return k_class({{0.0, 0.0}}, slope);
  }

  static ComparisonFunction identity() { return linear(1.0); }

  //! t -> value0 * exp(-rate * t)
  static ComparisonFunction exponential_decay(double value0, double rate) {
    return l_class({{0.0, value0}}, rate);
  }

  FunctionClass function_class() const noexcept { return class_; }
  bool is_k_family() const noexcept { return class_ != FunctionClass::L; }
  const std::vector<Knot>& knots() const noexcept { return knots_; }
  //! Linear tail slope (K family) or exponential tail rate (L).
  double tail_parameter() const noexcept { return tail_; }

  double operator()(double r) const {
    if (!(r >= 0.0)) {
      throw DomainError("comparison function evaluated at negative or NaN argument");
    }
    const Knot& last = knots_.back();
    if (r >= last.r) {
      if (class_ == FunctionClass::L) {
        return last.value * std::exp(-tail_ * (r - last.r));
      }
      return last.value + tail_ * (r - last.r);
    }
    auto it = std::upper_bound(knots_.begin(), knots_.end(), r,
                               [](double x, const Knot& k) { return x < k.r; });
    const Knot& hi = *it;
    const Knot& lo = *(it - 1);
    double w = (r - lo.r) / (hi.r - lo.r);
    return lo.value + w * (hi.value - lo.value);
  }

  //! Multiplies every value by factor > 0 (class preserved).
  ComparisonFunction scaled(double factor) const {
    if (!(factor > 0.0)) throw DomainError("scale factor must be positive");
    std::vector<Knot> k = knots_;
    for (auto& kn : k) kn.value *= factor;
    double tail = class_ == FunctionClass::L ? tail_ : tail_ * factor;
    return ComparisonFunction(class_, std::move(k), tail);
  }

  //! r -> f(factor * r). K family only.
  ComparisonFunction argument_scaled(double factor) const {
    if (class_ == FunctionClass::L) throw ClassError("argument_scaled needs a K-family function");
    if (!(factor > 0.0)) throw DomainError("scale factor must be positive");
    std::vector<Knot> k = knots_;
    for (auto& kn : k) kn.r /= factor;
    return ComparisonFunction(class_, std::move(k), tail_ * factor);
  }

  friend bool operator==(const ComparisonFunction&, const ComparisonFunction&) = default;

 private:
  ComparisonFunction(FunctionClass c, std::vector<Knot> knots, double tail)
      : class_(c), knots_(std::move(knots)), tail_(tail) {
    validate();
  }

  void validate() const {
    if (knots_.empty()) throw DataError("comparison function needs at least one knot");
    for (const auto& k : knots_) {
      if (!std::isfinite(k.r) || !std::isfinite(k.value) || k.r < 0.0 || k.value < 0.0) {
        throw DataError("comparison function knots must be finite and nonnegative");
      }
    }
    if (!(std::isfinite(tail_) && tail_ > 0.0)) {
      throw DataError("comparison function tail parameter must be finite and positive");
    }
    if (knots_.front().r != 0.0) throw DataError("first knot must sit at argument 0");
    for (std::size_t i = 1; i < knots_.size(); ++i) {
      if (!(knots_[i].r > knots_[i - 1].r)) {
        throw DataError("knot arguments must be strictly increasing");
      }
    }
    if (class_ == FunctionClass::L) {
      for (std::size_t i = 1; i < knots_.size(); ++i) {
        if (!(knots_[i].value < knots_[i - 1].value)) {
          throw DataError("class L knots must be strictly decreasing");
        }
      }
      if (!(knots_.back().value > 0.0)) throw DataError("class L values must stay positive");
    } else {
      if (knots_.front().value != 0.0) throw DataError("class K function must vanish at 0");
      for (std::size_t i = 1; i < knots_.size(); ++i) {
        if (!(knots_[i].value > knots_[i - 1].value)) {
          throw DataError("class K knots must be strictly increasing");
        }
      }
    }
  }

  FunctionClass class_;
  std::vector<Knot> knots_;
  double tail_;
};

namespace detail {

inline void require_k_family(const ComparisonFunction& f, const ComparisonFunction& g,
                             const char* op) {
  if (!f.is_k_family() || !g.is_k_family()) {
    throw ClassError(std::string(op) + " is only defined for K-family functions");
  }
}

inline FunctionClass join_unbounded(const ComparisonFunction& f, const ComparisonFunction& g) {
  return (f.function_class() == FunctionClass::Kinf || g.function_class() == FunctionClass::Kinf)
             ? FunctionClass::Kinf
             : FunctionClass::K;
}

// Sorted, exactly-deduplicated breakpoints; near-duplicates are merged so
// that the rebuilt knots stay strictly increasing.
inline std::vector<double> merge_breakpoints(std::vector<double> pts) {
  std::sort(pts.begin(), pts.end());
  std::vector<double> out;
  for (double p : pts) {
    if (out.empty() || p - out.back() > 1e-14 * std::max(1.0, std::abs(p))) out.push_back(p);
  }
  return out;
}

// Largest x with f(x) <= y for a K-family f (f strictly increasing).
inline double preimage(const ComparisonFunction& f, double y) {
  const auto& k = f.knots();
  if (y >= k.back().value) return k.back().r + (y - k.back().value) / f.tail_parameter();
  auto it = std::upper_bound(k.begin(), k.end(), y,
                             [](double v, const Knot& kn) { return v < kn.value; });
  const Knot& hi = *it;
  const Knot& lo = *(it - 1);
  return lo.r + (y - lo.value) / (hi.value - lo.value) * (hi.r - lo.r);
}

inline ComparisonFunction rebuild_k(const std::vector<double>& pts,
                                    const std::function<double(double)>& eval, double tail,
                                    FunctionClass tag) {
  std::vector<Knot> knots;
  knots.reserve(pts.size() + 1);
  knots.push_back({0.0, 0.0});
  for (double p : pts) {
    if (p <= 0.0) continue;
    double v = eval(p);
    if (v > knots.back().value && p > knots.back().r) knots.push_back({p, v});
  }
  return ComparisonFunction::k_class(std::move(knots), tail, tag);
}

}  // namespace detail

//! Inverse of a K-infinity function, obtained by swapping knot coordinates.
inline ComparisonFunction invert(const ComparisonFunction& f) {
  if (f.function_class() != FunctionClass::Kinf) {
    throw ClassError(std::string("invert requires a Kinf function, got ") +
                     to_string(f.function_class()));
  }
  std::vector<Knot> swapped;
  swapped.reserve(f.knots().size());
  for (const auto& k : f.knots()) swapped.push_back({k.value, k.r});
  return ComparisonFunction::k_class(std::move(swapped), 1.0 / f.tail_parameter());
}

//! r -> f(g(r)). The breakpoint set is g's knots plus g-preimages of f's knots,
//! so the piecewise-linear result is exact.
inline ComparisonFunction compose(const ComparisonFunction& f, const ComparisonFunction& g) {
  detail::require_k_family(f, g, "compose");
  std::vector<double> pts;
  for (const auto& k : g.knots()) pts.push_back(k.r);
  for (const auto& k : f.knots()) {
    if (k.r > 0.0) pts.push_back(detail::preimage(g, k.r));
  }
  pts = detail::merge_breakpoints(std::move(pts));
  FunctionClass tag = (f.function_class() == FunctionClass::Kinf &&
                       g.function_class() == FunctionClass::Kinf)
                          ? FunctionClass::Kinf
                          : FunctionClass::K;
  return detail::rebuild_k(pts, [&](double r) { return f(g(r)); },
                           f.tail_parameter() * g.tail_parameter(), tag);
}

inline ComparisonFunction pointwise_max(const ComparisonFunction& f, const ComparisonFunction& g) {
  detail::require_k_family(f, g, "pointwise_max");
  std::vector<double> pts;
  for (const auto& k : f.knots()) pts.push_back(k.r);
  for (const auto& k : g.knots()) pts.push_back(k.r);
  pts = detail::merge_breakpoints(std::move(pts));
  // Crossings strictly between breakpoints, plus one in the linear tails.
  std::vector<double> crossings;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    double a = f(pts[i - 1]) - g(pts[i - 1]);
    double b = f(pts[i]) - g(pts[i]);
    if ((a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0)) {
      crossings.push_back(pts[i - 1] + a / (a - b) * (pts[i] - pts[i - 1]));
    }
  }
  double last = pts.back();
  double diff = f(last) - g(last);
  double dslope = f.tail_parameter() - g.tail_parameter();
  if (dslope != 0.0) {
    double x = last - diff / dslope;
    if (x > last) crossings.push_back(x);
  }
  pts.insert(pts.end(), crossings.begin(), crossings.end());
  pts = detail::merge_breakpoints(std::move(pts));
  return detail::rebuild_k(pts, [&](double r) { return std::max(f(r), g(r)); },
                           std::max(f.tail_parameter(), g.tail_parameter()),
                           detail::join_unbounded(f, g));
}

inline ComparisonFunction add(const ComparisonFunction& f, const ComparisonFunction& g) {
  detail::require_k_family(f, g, "add");
  std::vector<double> pts;
  for (const auto& k : f.knots()) pts.push_back(k.r);
  for (const auto& k : g.knots()) pts.push_back(k.r);
  pts = detail::merge_breakpoints(std::move(pts));
  return detail::rebuild_k(pts, [&](double r) { return f(r) + g(r); },
                           f.tail_parameter() + g.tail_parameter(),
                           detail::join_unbounded(f, g));
}

/*!
  Factorized KL bound beta(r, t) = sigma(r) * decay(t) with sigma in K-infinity
  and decay in L, decay(0) = 1.
*/
class KLFunction {
 public:
  KLFunction(ComparisonFunction sigma, ComparisonFunction decay)
      : sigma_(std::move(sigma)), decay_(std::move(decay)) {
    if (sigma_.function_class() != FunctionClass::Kinf) {
      throw ClassError("KL sigma factor must be Kinf");
    }
    if (decay_.function_class() != FunctionClass::L) {
      throw ClassError("KL decay factor must be class L");
    }
    if (std::abs(decay_.knots().front().value - 1.0) > 1e-12) {
      throw DataError("KL decay factor must be normalized to decay(0) = 1");
    }
  }

  //! r * exp(-rate * t)
  static KLFunction linear_exponential(double gain, double rate) {
    return KLFunction(ComparisonFunction::linear(gain),
                      ComparisonFunction::exponential_decay(1.0, rate));
  }

  double operator()(double r, double t) const { return sigma_(r) * decay_(t); }

  const ComparisonFunction& sigma() const noexcept { return sigma_; }
  const ComparisonFunction& decay() const noexcept { return decay_; }

  KLFunction scaled(double factor) const { return KLFunction(sigma_.scaled(factor), decay_); }

  //! (r, t) -> beta(factor * r, t)
  KLFunction argument_scaled(double factor) const {
    return KLFunction(sigma_.argument_scaled(factor), decay_);
  }

  friend bool operator==(const KLFunction&, const KLFunction&) = default;

 private:
  ComparisonFunction sigma_;
  ComparisonFunction decay_;
};

//------------------------------------------------------------------------//
// KL majorization of a sampled transient bound
//------------------------------------------------------------------------//

/// Samples omega(radii[i], times[j]) stored row-major (radius-major).
struct OmegaGrid {
  std::vector<double> radii;
  std::vector<double> times;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * times.size() + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * times.size() + j]; }
};

struct KLMajorizeOptions {
  double sigma_inflation = 1.01;
  //! Lower bound on the exponential tail rate; <= 0 selects ln 2 / t_last.
  double min_tail_rate = 0.0;
  int max_inflation_rounds = 2000;
};

namespace detail {

inline void require_strictly_increasing(const std::vector<double>& v, const char* what) {
  if (v.empty()) throw DataError(std::string(what) + " axis is empty");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]) || v[i] < 0.0) {
      throw DataError(std::string(what) + " axis must be finite and nonnegative");
    }
    if (i > 0 && !(v[i] > v[i - 1])) {
      throw DataError(std::string(what) + " axis must be strictly increasing");
    }
  }
}

inline std::string node_pair(std::size_t i, std::size_t j, std::size_t k, std::size_t l, double a,
                             double b) {
  std::ostringstream os;
  os.precision(17);
  os << "(" << i << "," << j << ")=" << a << " vs (" << k << "," << l << ")=" << b;
  return os.str();
}

}  // namespace detail

/*!
  Returns a factorized KL function dominating omega at every grid node.

  sigma is the r-envelope omega(r, t_0) inflated by 1.01 and made strictly
  increasing; decay is the normalized upper envelope of omega / sigma over
  the radii, continued by an exponential tail whose rate matches the last two
  decay knots. Domination is then verified node by node, inflating sigma
  until it holds.
*/
inline KLFunction kl_majorize(const OmegaGrid& omega, const KLMajorizeOptions& opt = {}) {
  detail::require_strictly_increasing(omega.radii, "radius");
  detail::require_strictly_increasing(omega.times, "time");
  const std::size_t nr = omega.radii.size();
  const std::size_t nt = omega.times.size();
  if (omega.values.size() != nr * nt) throw DataError("omega grid has the wrong number of values");
  for (double v : omega.values) {
    if (!std::isfinite(v) || v < 0.0) throw DataError("omega values must be finite and nonnegative");
  }
  for (std::size_t i = 0; i < nr; ++i) {
    for (std::size_t j = 0; j < nt; ++j) {
      if (i + 1 < nr && omega.at(i, j) > omega.at(i + 1, j)) {
        throw DataError("omega not nondecreasing in r: " +
                        detail::node_pair(i, j, i + 1, j, omega.at(i, j), omega.at(i + 1, j)));
      }
      if (j + 1 < nt && omega.at(i, j) < omega.at(i, j + 1)) {
        throw DataError("omega not nonincreasing in t: " +
                        detail::node_pair(i, j, i, j + 1, omega.at(i, j), omega.at(i, j + 1)));
      }
    }
  }
  if (omega.radii.front() == 0.0 && omega.at(0, 0) > 0.0) {
    throw DataError("omega(0, t) > 0 cannot be dominated by a class-KL function");
  }

  // sigma
  double s_max = 0.0;
  for (std::size_t i = 0; i < nr; ++i) s_max = std::max(s_max, omega.at(i, 0));
  const double r_max = omega.radii.back();
  const double min_slope = 1e-9 * (1.0 + (r_max > 0.0 ? s_max / r_max : 0.0));
  std::vector<Knot> sk{{0.0, 0.0}};
  for (std::size_t i = 0; i < nr; ++i) {
    double r = omega.radii[i];
    if (r == 0.0) continue;
    double v = std::max(opt.sigma_inflation * omega.at(i, 0),
                        sk.back().value + min_slope * (r - sk.back().r));
    sk.push_back({r, v});
  }
  double sigma_tail = min_slope;
  if (sk.size() >= 2) {
    const Knot& a = sk[sk.size() - 2];
    const Knot& b = sk.back();
    sigma_tail = std::max(min_slope, (b.value - a.value) / (b.r - a.r));
  } else {
    sigma_tail = std::max(min_slope, 1.0);
  }
  auto sigma = ComparisonFunction::k_class(std::move(sk), sigma_tail);

  // decay
  std::vector<double> t = omega.times;
  std::vector<double> d(nt, 0.0);
  for (std::size_t j = 0; j < nt; ++j) {
    for (std::size_t i = 0; i < nr; ++i) {
      double s = sigma(omega.radii[i]);
      if (s > 0.0) d[j] = std::max(d[j], omega.at(i, j) / s);
    }
  }
  if (t.front() > 0.0) {
    t.insert(t.begin(), 0.0);
    d.insert(d.begin(), 1.0);
  } else {
    d.front() = 1.0;
  }
  constexpr double floor_value = 1e-12;
  d.back() = std::max(d.back(), floor_value);
  for (std::size_t j = d.size() - 1; j-- > 1;) {
    d[j] = std::max(d[j], d[j + 1] * (1.0 + 1e-9) + 1e-300);
  }
  std::vector<Knot> dk;
  dk.reserve(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) dk.push_back({t[j], d[j]});
  double min_rate = opt.min_tail_rate;
  if (min_rate <= 0.0) min_rate = t.back() > 0.0 ? std::log(2.0) / t.back() : 1.0;
  double rate = min_rate;
  if (dk.size() >= 2) {
    const Knot& a = dk[dk.size() - 2];
    const Knot& b = dk.back();
    rate = std::max(min_rate, std::log(a.value / b.value) / (b.r - a.r));
  }
  auto decay = ComparisonFunction::l_class(std::move(dk), rate);

  KLFunction beta(std::move(sigma), std::move(decay));
  for (int round = 0; round <= opt.max_inflation_rounds; ++round) {
    bool ok = true;
    for (std::size_t i = 0; i < nr && ok; ++i) {
      for (std::size_t j = 0; j < nt; ++j) {
        if (beta(omega.radii[i], omega.times[j]) < omega.at(i, j)) {
          ok = false;
          break;
        }
      }
    }
    if (ok) return beta;
    beta = beta.scaled(opt.sigma_inflation);
  }
  throw DataError("kl_majorize failed to reach domination");
}

//------------------------------------------------------------------------//
// Double-average smoothing of attainment times
//------------------------------------------------------------------------//

/// Samples tau(eps[i], radii[j]) stored eps-major.
struct TauGrid {
  std::vector<double> eps;
  std::vector<double> radii;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * radii.size() + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * radii.size() + j]; }
};

/*!
  tau(eps, R) = 2/(eps R) * int_R^{2R} int_{eps/2}^{eps} tau_tilde,
  with tau_tilde the bilinear interpolant of the (possibly perturbed) grid.
*/
class SmoothedTau {
 public:
  static constexpr double kStrictnessDelta = 1e-9;
  static constexpr double kRelativeQuadratureTol = 1e-8;

  explicit SmoothedTau(TauGrid grid) : grid_(std::move(grid)) {
    detail::require_strictly_increasing(grid_.eps, "epsilon");
    detail::require_strictly_increasing(grid_.radii, "radius");
    if (grid_.eps.front() <= 0.0 || grid_.radii.front() <= 0.0) {
      throw DataError("tau grid axes must be positive");
    }
    const std::size_t ne = grid_.eps.size(), nr = grid_.radii.size();
    if (grid_.values.size() != ne * nr) throw DataError("tau grid has the wrong number of values");
    for (double v : grid_.values) {
      if (!std::isfinite(v)) throw DataError("tau grid values must be finite");
    }
    bool strict = true;
    for (std::size_t i = 0; i < ne; ++i) {
      for (std::size_t j = 0; j < nr; ++j) {
        if (i + 1 < ne) {
          if (grid_.at(i, j) < grid_.at(i + 1, j)) {
            throw DataError("tau grid not nonincreasing in eps: " +
                            detail::node_pair(i, j, i + 1, j, grid_.at(i, j), grid_.at(i + 1, j)));
          }
          if (grid_.at(i, j) == grid_.at(i + 1, j)) strict = false;
        }
        if (j + 1 < nr) {
          if (grid_.at(i, j) > grid_.at(i, j + 1)) {
            throw DataError("tau grid not nondecreasing in R: " +
                            detail::node_pair(i, j, i, j + 1, grid_.at(i, j), grid_.at(i, j + 1)));
          }
          if (grid_.at(i, j) == grid_.at(i, j + 1)) strict = false;
        }
      }
    }
    if (!strict) {
      // delta * (R - eps) shifted by delta * eps_max so the perturbation is >= 0.
      const double shift = kStrictnessDelta * grid_.eps.back();
      for (std::size_t i = 0; i < ne; ++i) {
        for (std::size_t j = 0; j < nr; ++j) {
          grid_.at(i, j) += kStrictnessDelta * (grid_.radii[j] - grid_.eps[i]) + shift;
        }
      }
      perturbed_ = true;
    }
  }

  bool perturbed() const noexcept { return perturbed_; }
  const TauGrid& grid() const noexcept { return grid_; }

  //! Bilinear interpolant of the stored (possibly perturbed) grid.
  double tilde(double eps, double radius) const {
    auto [i, we] = locate(grid_.eps, eps);
    auto [j, wr] = locate(grid_.radii, radius);
    const std::size_t i1 = std::min(i + 1, grid_.eps.size() - 1);
    const std::size_t j1 = std::min(j + 1, grid_.radii.size() - 1);
    double a = grid_.at(i, j) * (1.0 - wr) + grid_.at(i, j1) * wr;
    double b = grid_.at(i1, j) * (1.0 - wr) + grid_.at(i1, j1) * wr;
    return a * (1.0 - we) + b * we;
  }

  bool covers(double eps, double radius) const {
    return eps > 0.0 && radius > 0.0 && eps / 2.0 >= grid_.eps.front() &&
           eps <= grid_.eps.back() && radius >= grid_.radii.front() &&
           2.0 * radius <= grid_.radii.back();
  }

  double operator()(double eps, double radius) const {
    if (!covers(eps, radius)) {
      std::ostringstream os;
      os << "double-average stencil [" << eps / 2 << "," << eps << "]x[" << radius << ","
         << 2 * radius << "] not covered by the tau grid";
      throw ExtentError(os.str());
    }
    auto ex = breakpoints(grid_.eps, eps / 2.0, eps);
    auto rx = breakpoints(grid_.radii, radius, 2.0 * radius);
    double coarse = trapezoid(ex, rx);
    for (int level = 0; level < 12; ++level) {
      ex = bisect(ex);
      rx = bisect(rx);
      double fine = trapezoid(ex, rx);
      if (std::abs(fine - coarse) <= kRelativeQuadratureTol * std::abs(fine)) {
        return fine * 2.0 / (eps * radius);
      }
      coarse = fine;
    }
    return coarse * 2.0 / (eps * radius);
  }

 private:
  static std::pair<std::size_t, double> locate(const std::vector<double>& axis, double x) {
    if (axis.size() == 1 || x <= axis.front()) return {0, 0.0};
    if (x >= axis.back()) return {axis.size() - 1, 0.0};
    auto it = std::upper_bound(axis.begin(), axis.end(), x);
    std::size_t i = static_cast<std::size_t>(it - axis.begin()) - 1;
    return {i, (x - axis[i]) / (axis[i + 1] - axis[i])};
  }

  static std::vector<double> breakpoints(const std::vector<double>& axis, double lo, double hi) {
    std::vector<double> pts{lo};
    for (double a : axis) {
      if (a > lo && a < hi) pts.push_back(a);
    }
    pts.push_back(hi);
    return pts;
  }

  static std::vector<double> bisect(const std::vector<double>& pts) {
    std::vector<double> out;
    out.reserve(2 * pts.size());
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      out.push_back(pts[i]);
      out.push_back(0.5 * (pts[i] + pts[i + 1]));
    }
    out.push_back(pts.back());
    return out;
  }

  double trapezoid(const std::vector<double>& ex, const std::vector<double>& rx) const {
    double total = 0.0;
    std::vector<double> row(rx.size());
    std::vector<double> prev(rx.size());
    for (std::size_t i = 0; i < ex.size(); ++i) {
      for (std::size_t j = 0; j < rx.size(); ++j) row[j] = tilde(ex[i], rx[j]);
      if (i > 0) {
        double de = ex[i] - ex[i - 1];
        for (std::size_t j = 1; j < rx.size(); ++j) {
          double dr = rx[j] - rx[j - 1];
          total += 0.25 * de * dr * (prev[j - 1] + prev[j] + row[j - 1] + row[j]);
        }
      }
      std::swap(row, prev);
    }
    return total;
  }

  TauGrid grid_;
  bool perturbed_ = false;
};

inline SmoothedTau monotone_smooth_tau(TauGrid grid) { return SmoothedTau(std::move(grid)); }

//------------------------------------------------------------------------//
// Averages of increasing functions
//------------------------------------------------------------------------//

/// (1/t) * int_0^t f for a sampled, strictly increasing piecewise-linear f.
inline double lemma2_average(std::span<const Knot> samples, double t) {
  if (!(t > 0.0)) throw DomainError("average horizon must be positive");
  if (samples.size() < 2 || samples.front().r != 0.0 || samples.back().r < t) {
    throw ExtentError("samples must cover [0, t]");
  }
  double total = 0.0;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const Knot& a = samples[i - 1];
    const Knot& b = samples[i];
    if (!(b.r > a.r)) throw DataError("sample abscissae must be strictly increasing");
    if (!(b.value > a.value)) {
      throw PreconditionError("sampled function is not strictly increasing");
    }
    if (a.r >= t) break;
    double hi = std::min(b.r, t);
    double fhi = a.value + (hi - a.r) / (b.r - a.r) * (b.value - a.value);
    total += 0.5 * (a.value + fhi) * (hi - a.r);
  }
  return total / t;
}

/// (1/t) * int_0^t f by composite trapezoid, doubled until the relative
/// change drops below rel_tol.
inline double lemma2_average(const std::function<double(double)>& f, double t,
                             double rel_tol = 1e-11) {
  if (!(t > 0.0)) throw DomainError("average horizon must be positive");
  std::size_t n = 16;
  std::vector<double> vals(n + 1);
  for (std::size_t i = 0; i <= n; ++i) vals[i] = f(t * static_cast<double>(i) / n);
  auto check = [&] {
    for (std::size_t i = 1; i < vals.size(); ++i) {
      if (!(vals[i] > vals[i - 1])) {
        throw PreconditionError("function is not strictly increasing on [0, t]");
      }
    }
  };
  check();
  auto integrate = [&] {
    double s = 0.5 * (vals.front() + vals.back());
    for (std::size_t i = 1; i < n; ++i) s += vals[i];
    return s * t / static_cast<double>(n);
  };
  double prev = integrate();
  while (n < (std::size_t{1} << 24)) {
    std::vector<double> next(2 * n + 1);
    for (std::size_t i = 0; i <= n; ++i) next[2 * i] = vals[i];
    for (std::size_t i = 0; i < n; ++i) {
      next[2 * i + 1] = f(t * (static_cast<double>(2 * i + 1) / (2.0 * n)));
    }
    vals = std::move(next);
    n *= 2;
    check();
    double cur = integrate();
    if (std::abs(cur - prev) <= rel_tol * std::abs(cur)) return cur / t;
    prev = cur;
  }
  return prev / t;
}

//------------------------------------------------------------------------//
// JSON
//------------------------------------------------------------------------//

inline void to_json(nlohmann::json& j, const ComparisonFunction& f) {
  nlohmann::json knots = nlohmann::json::array();
  for (const auto& k : f.knots()) knots.push_back({k.r, k.value});
  j = nlohmann::json{
      {"class", to_string(f.function_class())},
      {"knots", std::move(knots)},
      {"tail",
       {{"kind", f.function_class() == FunctionClass::L ? "exponential" : "linear"},
        {"param", f.tail_parameter()}}}};
}

inline ComparisonFunction comparison_function_from_json(const nlohmann::json& j) {
  FunctionClass c = function_class_from_string(j.at("class").get<std::string>());
  std::vector<Knot> knots;
  for (const auto& k : j.at("knots")) knots.push_back({k.at(0).get<double>(), k.at(1).get<double>()});
  const auto& tail = j.at("tail");
  std::string kind = tail.at("kind").get<std::string>();
  double param = tail.at("param").get<double>();
  if (c == FunctionClass::L) {
    if (kind != "exponential") throw DataError("class L needs an exponential tail");
    return ComparisonFunction::l_class(std::move(knots), param);
  }
  if (kind != "linear") throw DataError("class K needs a linear tail");
  return ComparisonFunction::k_class(std::move(knots), param, c);
}

inline void to_json(nlohmann::json& j, const KLFunction& b) {
  j = nlohmann::json{{"sigma", b.sigma()}, {"decay", b.decay()}};
}

inline KLFunction kl_function_from_json(const nlohmann::json& j) {
  return KLFunction(comparison_function_from_json(j.at("sigma")),
                    comparison_function_from_json(j.at("decay")));
}

}  // namespace isps
