// SPDX-License-Identifier: Apache-2.0
/*!
  \file
  \brief State vectors, piecewise-constant input signals, point-cloud
  approximations of bounded sets, and the evaluable control-system triple.
*/
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "isps/errors.hpp"

namespace isps {

enum class Norm { euclidean, sup };

inline const char* to_string(Norm n) { return n == Norm::sup ? "sup" : "euclidean"; }

inline Norm norm_from_string(const std::string& s) {
  if (s == "sup") return Norm::sup;
  if (s == "euclidean") return Norm::euclidean;
  throw DataError("unknown norm '" + s + "'");
}

inline double vector_norm(std::span<const double> v, Norm n) {
  double acc = 0.0;
  if (n == Norm::sup) {
    for (double x : v) acc = std::max(acc, std::abs(x));
    return acc;
  }
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

inline double vector_distance(std::span<const double> a, std::span<const double> b, Norm n) {
  double acc = 0.0;
  if (n == Norm::sup) {
    for (std::size_t i = 0; i < a.size(); ++i) acc = std::max(acc, std::abs(a[i] - b[i]));
    return acc;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

/// Finite-dimensional state with an attached norm.
class StateVector {
 public:
  StateVector() = default;
  explicit StateVector(std::vector<double> coords, Norm norm = Norm::euclidean)
      : coords_(std::move(coords)), norm_(norm) {}
  StateVector(std::initializer_list<double> coords) : coords_(coords) {}

  static StateVector zeros(std::size_t n, Norm norm = Norm::euclidean) {
    return StateVector(std::vector<double>(n, 0.0), norm);
  }

  std::size_t size() const noexcept { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }
  double& operator[](std::size_t i) { return coords_[i]; }
  std::span<const double> coords() const noexcept { return coords_; }
  std::vector<double>& mutable_coords() noexcept { return coords_; }
  Norm norm_kind() const noexcept { return norm_; }

  double norm() const { return vector_norm(coords_, norm_); }

  bool is_finite() const {
    return std::all_of(coords_.begin(), coords_.end(), [](double x) { return std::isfinite(x); });
  }

  StateVector& operator+=(const StateVector& o) {
    check_same(o);
    for (std::size_t i = 0; i < size(); ++i) coords_[i] += o.coords_[i];
    return *this;
  }
  StateVector& operator-=(const StateVector& o) {
    check_same(o);
    for (std::size_t i = 0; i < size(); ++i) coords_[i] -= o.coords_[i];
    return *this;
  }
  StateVector& operator*=(double s) {
    for (double& x : coords_) x *= s;
    return *this;
  }
  friend StateVector operator+(StateVector a, const StateVector& b) { return a += b; }
  friend StateVector operator-(StateVector a, const StateVector& b) { return a -= b; }
  friend StateVector operator*(double s, StateVector a) { return a *= s; }

  friend bool operator==(const StateVector& a, const StateVector& b) {
    return a.coords_ == b.coords_;
  }

 private:
  void check_same(const StateVector& o) const {
    if (o.size() != size()) throw ShapeError("state dimension mismatch");
  }

  std::vector<double> coords_;
  Norm norm_ = Norm::euclidean;
};

inline double distance(const StateVector& a, const StateVector& b) {
  if (a.size() != b.size()) throw ShapeError("state dimension mismatch");
  return vector_distance(a.coords(), b.coords(), a.norm_kind());
}

//------------------------------------------------------------------------//
// Input signals
//------------------------------------------------------------------------//

/*!
  Piecewise-constant input on a uniform grid: value k holds on
  [k * step, (k + 1) * step); beyond the stored cells the signal is zero.
  The signal norm is the sup over cells of the Euclidean norm of the value.
*/
class InputSignal {
 public:
  InputSignal() = default;

  InputSignal(double grid_step, std::size_t dim, std::vector<double> flat_values)
      : step_(grid_step), dim_(dim), values_(std::move(flat_values)), zeros_(dim, 0.0) {
    if (!(step_ > 0.0) || !std::isfinite(step_)) throw DomainError("grid step must be positive");
    if (dim_ == 0 ? !values_.empty() : values_.size() % dim_ != 0) {
      throw ShapeError("input values are not a whole number of cells");
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw DataError("input values must be finite");
    }
  }

  //! One value vector per cell.
  static InputSignal from_cells(double grid_step, const std::vector<std::vector<double>>& cells) {
    std::size_t dim = cells.empty() ? 0 : cells.front().size();
    std::vector<double> flat;
    for (const auto& c : cells) {
      if (c.size() != dim) throw ShapeError("inconsistent input cell dimension");
      flat.insert(flat.end(), c.begin(), c.end());
    }
    return InputSignal(grid_step, dim, std::move(flat));
  }

  static InputSignal zero(std::size_t dim, double grid_step) {
    return InputSignal(grid_step, dim, {});
  }

  //! value on [0, duration), zero afterwards (duration rounded up to the grid).
  static InputSignal constant(std::vector<double> value, double grid_step, double duration) {
    std::size_t dim = value.size();
    auto cells = static_cast<std::size_t>(std::ceil(duration / grid_step - 1e-9));
    std::vector<double> flat;
    flat.reserve(cells * dim);
    for (std::size_t k = 0; k < cells; ++k) flat.insert(flat.end(), value.begin(), value.end());
    return InputSignal(grid_step, dim, std::move(flat));
  }

  double grid_step() const noexcept { return step_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t cells() const noexcept { return dim_ == 0 ? 0 : values_.size() / dim_; }
  double duration() const noexcept { return static_cast<double>(cells()) * step_; }
  std::span<const double> flat_values() const noexcept { return values_; }

  std::span<const double> cell(std::size_t k) const {
    if (k >= cells()) return zeros_;
    return std::span<const double>(values_).subspan(k * dim_, dim_);
  }

  //! Cell index containing time s (s >= 0), with grid-point tolerance.
  std::size_t cell_index(double s) const {
    return static_cast<std::size_t>(std::floor(s / step_ + 1e-9));
  }

  std::span<const double> value_at(double s) const { return cell(cell_index(s)); }

  double sup_norm() const {
    double m = 0.0;
    for (std::size_t k = 0; k < cells(); ++k) m = std::max(m, vector_norm(cell(k), Norm::euclidean));
    return m;
  }

  friend bool operator==(const InputSignal& a, const InputSignal& b) {
    return a.step_ == b.step_ && a.dim_ == b.dim_ && a.values_ == b.values_;
  }

 private:
  double step_ = 1.0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
  std::vector<double> zeros_;
};

/// u(. + tau) with tau rounded down to the grid.
inline InputSignal shift(const InputSignal& u, double tau) {
  if (!(tau >= 0.0)) throw DomainError("shift amount must be nonnegative");
  std::size_t k = u.cell_index(tau);
  if (k >= u.cells()) return InputSignal::zero(u.dim(), u.grid_step());
  auto flat = u.flat_values();
  return InputSignal(u.grid_step(), u.dim(),
                     std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(k * u.dim()),
                                         flat.end()));
}

/// Resamples onto a grid with the given step; cell k takes u's value at k * step.
inline InputSignal resample(const InputSignal& u, double step) {
  if (step == u.grid_step()) return u;
  auto cells = static_cast<std::size_t>(std::ceil(u.duration() / step - 1e-9));
  std::vector<double> flat;
  flat.reserve(cells * u.dim());
  for (std::size_t k = 0; k < cells; ++k) {
    auto v = u.value_at(static_cast<double>(k) * step);
    flat.insert(flat.end(), v.begin(), v.end());
  }
  return InputSignal(step, u.dim(), std::move(flat));
}

/*!
  u1 on [0, t), u2(. - t) afterwards; t is rounded down to the grid.
  Signals on different grids are first resampled to the finer one.
*/
inline InputSignal concat(const InputSignal& u1, const InputSignal& u2, double t) {
  if (!(t >= 0.0)) throw DomainError("concatenation time must be nonnegative");
  if (u1.dim() != u2.dim()) throw ShapeError("input dimension mismatch in concat");
  double step = std::min(u1.grid_step(), u2.grid_step());
  InputSignal a = resample(u1, step);
  InputSignal b = resample(u2, step);
  std::size_t k = a.cell_index(t);
  std::vector<double> flat;
  flat.reserve((k + b.cells()) * a.dim());
  for (std::size_t i = 0; i < k; ++i) {
    auto v = a.cell(i);
    flat.insert(flat.end(), v.begin(), v.end());
  }
  auto rest = b.flat_values();
  flat.insert(flat.end(), rest.begin(), rest.end());
  // A zero tail is the canonical representation of trailing zero cells.
  while (!flat.empty() && a.dim() > 0) {
    bool zero = std::all_of(flat.end() - static_cast<std::ptrdiff_t>(a.dim()), flat.end(),
                            [](double x) { return x == 0.0; });
    if (!zero) break;
    flat.resize(flat.size() - a.dim());
  }
  return InputSignal(step, a.dim(), std::move(flat));
}

/// concat(u, 0, t)
inline InputSignal truncate(const InputSignal& u, double t) {
  return concat(u, InputSignal::zero(u.dim(), u.grid_step()), t);
}

//------------------------------------------------------------------------//
// Bounded sets as inflated point clouds
//------------------------------------------------------------------------//

namespace detail {

// Bucketed k-d tree over a flat coordinate array. Axis gaps lower-bound both
// the Euclidean and the sup distance, so one pruning rule serves both norms.
class KdTree {
 public:
  KdTree(std::vector<double> coords, std::size_t dim, Norm norm)
      : coords_(std::move(coords)), dim_(dim), norm_(norm) {
    std::size_t n = dim_ == 0 ? 0 : coords_.size() / dim_;
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (n > 0) build(0, n);
  }

  //! (index, distance) of the nearest stored point.
  std::pair<std::size_t, double> nearest(std::span<const double> q) const {
    std::pair<std::size_t, double> best{0, std::numeric_limits<double>::infinity()};
    if (!nodes_.empty()) search(0, q, best);
    return best;
  }

 private:
  struct Node {
    std::size_t begin, end;
    std::size_t axis = 0;
    double split = 0.0;
    int left = -1, right = -1;
  };
  static constexpr std::size_t kLeaf = 12;

  std::span<const double> point(std::size_t i) const {
    return std::span<const double>(coords_).subspan(i * dim_, dim_);
  }

  int build(std::size_t begin, std::size_t end) {
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= kLeaf || dim_ == 0) return id;
    std::size_t axis = 0;
    double widest = -1.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t i = begin; i < end; ++i) {
        double v = coords_[order_[i] * dim_ + d];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > widest) {
        widest = hi - lo;
        axis = d;
      }
    }
    if (widest <= 0.0) return id;
    std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       return coords_[a * dim_ + axis] < coords_[b * dim_ + axis];
                     });
    double split = coords_[order_[mid] * dim_ + axis];
    int l = build(begin, mid);
    int r = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].axis = axis;
    nodes_[static_cast<std::size_t>(id)].split = split;
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  void search(int id, std::span<const double> q, std::pair<std::size_t, double>& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.left < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        double d = vector_distance(q, point(order_[i]), norm_);
        if (d < best.second || (d == best.second && order_[i] < best.first)) {
          best = {order_[i], d};
        }
      }
      return;
    }
    double gap = q[node.axis] - node.split;
    int near = gap < 0.0 ? node.left : node.right;
    int far = gap < 0.0 ? node.right : node.left;
    search(near, q, best);
    if (std::abs(gap) <= best.second) search(far, q, best);
  }

  std::vector<double> coords_;
  std::size_t dim_;
  Norm norm_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace detail

/*!
  Union of closed balls of radius `inflation` around finitely many points.
  ||A|| = max_p ||p|| + inflation.
*/
class BoundedSetApprox {
 public:
  BoundedSetApprox(std::vector<StateVector> points, double inflation = 0.0)
      : points_(std::move(points)), inflation_(inflation) {
    if (points_.empty()) throw DataError("bounded set approximation needs at least one point");
    if (!(inflation_ >= 0.0) || !std::isfinite(inflation_)) {
      throw DomainError("inflation must be finite and nonnegative");
    }
    dim_ = points_.front().size();
    norm_kind_ = points_.front().norm_kind();
    std::vector<double> flat;
    flat.reserve(points_.size() * dim_);
    norm_ = 0.0;
    for (const auto& p : points_) {
      if (p.size() != dim_) throw ShapeError("point cloud dimension mismatch");
      if (!p.is_finite()) throw DataError("point cloud coordinates must be finite");
      flat.insert(flat.end(), p.coords().begin(), p.coords().end());
      norm_ = std::max(norm_, vector_norm(p.coords(), norm_kind_));
    }
    norm_ += inflation_;
    own_norm_ = norm_;
    index_ = std::make_shared<const detail::KdTree>(std::move(flat), dim_, norm_kind_);
  }

  static BoundedSetApprox point(StateVector p) { return BoundedSetApprox({std::move(p)}, 0.0); }

  static BoundedSetApprox ball(StateVector center, double radius) {
    return BoundedSetApprox({std::move(center)}, radius);
  }

  static BoundedSetApprox origin(std::size_t dim, Norm norm = Norm::euclidean) {
    return point(StateVector::zeros(dim, norm));
  }

  std::size_t dimension() const noexcept { return dim_; }
  Norm norm_kind() const noexcept { return norm_kind_; }
  const std::vector<StateVector>& points() const noexcept { return points_; }
  double inflation() const noexcept { return inflation_; }
  //! max_p ||p|| + inflation
  double norm() const noexcept { return norm_; }

  //! (index of nearest point, distance to that point center).
  std::pair<std::size_t, double> nearest(const StateVector& x) const {
    if (x.size() != dim_) throw ShapeError("state dimension does not match the set");
    return index_->nearest(x.coords());
  }

  //! max(0, min_p ||x - p|| - inflation), minimized over united components.
  double distance(const StateVector& x) const {
    double d = std::max(0.0, nearest(x).second - inflation_);
    for (const auto& e : extras_) d = std::min(d, e.distance(x));
    return d;
  }

  //! Inflates every component by eps.
  BoundedSetApprox inflated(double eps) const {
    if (!(eps >= 0.0)) throw DomainError("inflation increment must be nonnegative");
    BoundedSetApprox out(points_, inflation_ + eps);
    for (const auto& e : extras_) out = out.united(e.inflated(eps));
    return out;
  }

  /*!
    Union with another approximation. Components keep their own inflation,
    which lets an exact ball coexist with a finely inflated sample cloud.
  */
  BoundedSetApprox united(const BoundedSetApprox& other) const {
    if (other.dim_ != dim_) throw ShapeError("cannot unite sets of different dimension");
    BoundedSetApprox out = *this;
    for (const auto& c : other.components()) {
      out.norm_ = std::max(out.norm_, c.norm_);
      out.extras_.push_back(c);
    }
    return out;
  }

  //! Single-inflation components; the first one is this set's own cloud.
  std::vector<BoundedSetApprox> components() const {
    std::vector<BoundedSetApprox> out;
    BoundedSetApprox own = *this;
    own.extras_.clear();
    own.norm_ = own_norm_;
    out.push_back(std::move(own));
    out.insert(out.end(), extras_.begin(), extras_.end());
    return out;
  }

  std::size_t component_count() const noexcept { return 1 + extras_.size(); }

  //! Component i for sampling: only points() and inflation() of the result
  //! describe the component (index 0 returns this set itself).
  const BoundedSetApprox& component(std::size_t i) const {
    if (i == 0) return *this;
    return extras_.at(i - 1);
  }

  double max_inflation() const noexcept {
    double m = inflation_;
    for (const auto& e : extras_) m = std::max(m, e.inflation_);
    return m;
  }

 private:
  std::vector<StateVector> points_;
  double inflation_;
  std::size_t dim_ = 0;
  Norm norm_kind_ = Norm::euclidean;
  double norm_ = 0.0;
  double own_norm_ = 0.0;
  std::shared_ptr<const detail::KdTree> index_;
  std::vector<BoundedSetApprox> extras_;
};

inline double set_distance(const StateVector& x, const BoundedSetApprox& a) {
  return a.distance(x);
}

//------------------------------------------------------------------------//
// Control systems
//------------------------------------------------------------------------//

using Flow = std::function<StateVector(double, const StateVector&, const InputSignal&)>;
using SampledFlow =
    std::function<std::vector<StateVector>(std::span<const double>, const StateVector&,
                                           const InputSignal&)>;

/*!
  Evaluable triple (X, U, phi). `flow` must be pure and reentrant. When
  `sampled_flow` is set it returns phi at every requested (sorted) time in
  one pass and must agree exactly with `flow`.
*/
struct ControlSystem {
  std::string name;
  std::string description;
  std::size_t state_dim = 1;
  std::size_t input_dim = 1;
  Norm norm = Norm::euclidean;
  Flow flow;
  SampledFlow sampled_flow;
  double flow_tolerance = 1e-9;
  //! Grid step of sampled inputs.
  double input_step = 0.5;

  StateVector zero_state() const { return StateVector::zeros(state_dim, norm); }

  StateVector make_state(std::vector<double> coords) const {
    if (coords.size() != state_dim) throw ShapeError("state dimension mismatch");
    return StateVector(std::move(coords), norm);
  }

  std::vector<StateVector> trajectory(std::span<const double> times, const StateVector& x,
                                      const InputSignal& u) const {
    if (sampled_flow) return sampled_flow(times, x, u);
    std::vector<StateVector> out;
    out.reserve(times.size());
    for (double t : times) out.push_back(flow(t, x, u));
    return out;
  }
};

/// Uniform observation grid 0, dt, ..., horizon (horizon always included).
inline std::vector<double> time_grid(double horizon, double dt) {
  std::vector<double> t;
  auto n = static_cast<std::size_t>(std::floor(horizon / dt + 1e-9));
  t.reserve(n + 2);
  for (std::size_t k = 0; k <= n; ++k) t.push_back(static_cast<double>(k) * dt);
  if (horizon - t.back() > 1e-12 * std::max(1.0, horizon)) t.push_back(horizon);
  return t;
}

/// CSV with header t,x_1..x_n.
inline void write_trajectory_csv(std::ostream& os, std::span<const double> times,
                                 const std::vector<StateVector>& states) {
  if (times.size() != states.size()) throw ShapeError("times and states differ in length");
  std::size_t n = states.empty() ? 0 : states.front().size();
  os << "t";
  for (std::size_t i = 1; i <= n; ++i) os << ",x_" << i;
  os << "\n";
  auto old = os.precision(17);
  for (std::size_t k = 0; k < times.size(); ++k) {
    os << times[k];
    for (double v : states[k].coords()) os << "," << v;
    os << "\n";
  }
  os.precision(old);
}

//------------------------------------------------------------------------//
// JSON
//------------------------------------------------------------------------//

inline void to_json(nlohmann::json& j, const StateVector& x) {
  j = std::vector<double>(x.coords().begin(), x.coords().end());
}

inline void to_json(nlohmann::json& j, const InputSignal& u) {
  nlohmann::json values = nlohmann::json::array();
  for (std::size_t k = 0; k < u.cells(); ++k) {
    auto c = u.cell(k);
    values.push_back(std::vector<double>(c.begin(), c.end()));
  }
  j = nlohmann::json{{"grid_step", u.grid_step()}, {"dim", u.dim()}, {"values", values}};
}

inline InputSignal input_signal_from_json(const nlohmann::json& j) {
  double step = j.at("grid_step").get<double>();
  auto dim = j.at("dim").get<std::size_t>();
  std::vector<double> flat;
  for (const auto& cell : j.at("values")) {
    if (cell.size() != dim) throw ShapeError("input cell has the wrong dimension");
    for (const auto& v : cell) flat.push_back(v.get<double>());
  }
  return InputSignal(step, dim, std::move(flat));
}

inline void to_json(nlohmann::json& j, const BoundedSetApprox& a) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : a.points()) pts.push_back(p);
  j = nlohmann::json{{"points", std::move(pts)},
                     {"inflation", a.inflation()},
                     {"norm", to_string(a.norm_kind())}};
  if (a.component_count() > 1) {
    auto parts = a.components();
    nlohmann::json extra = nlohmann::json::array();
    for (std::size_t i = 1; i < parts.size(); ++i) {
      nlohmann::json e;
      to_json(e, parts[i]);
      extra.push_back(std::move(e));
    }
    j["union"] = std::move(extra);
  }
}

inline BoundedSetApprox bounded_set_from_json(const nlohmann::json& j) {
  Norm n = j.contains("norm") ? norm_from_string(j.at("norm").get<std::string>()) : Norm::euclidean;
  std::vector<StateVector> pts;
  for (const auto& p : j.at("points")) pts.emplace_back(p.get<std::vector<double>>(), n);
  BoundedSetApprox a(std::move(pts), j.value("inflation", 0.0));
  if (j.contains("union")) {
    for (const auto& e : j.at("union")) a = a.united(bounded_set_from_json(e));
  }
  return a;
}

}  // namespace isps
