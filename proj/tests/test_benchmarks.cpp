// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "isps/benchmarks.hpp"
#include "isps/sampling.hpp"

using namespace isps;

namespace {

StateVector s1(double x) { return StateVector{x}; }

// x' = -x + u with piecewise-constant u, solved cell by cell.
double linear_closed_form(double t, double x0, const InputSignal& u) {
  double x = x0, s = 0.0;
  for (std::size_t k = 0; s < t; ++k) {
    double end = std::min(t, static_cast<double>(k + 1) * u.grid_step());
    double c = u.cell(k)[0];
    x = c + (x - c) * std::exp(-(end - s));
    s = end;
  }
  return x;
}

}  // namespace

TEST(Integrate, LinearExamples) {
  auto lin = benchmarks::linear();
  EXPECT_NEAR(lin.integrate(1.0, s1(1.0), InputSignal::zero(1, 0.5))[0], std::exp(-1.0), 1e-9);
  auto one = InputSignal::constant({1.0}, 0.5, 20.0);
  EXPECT_LT(std::abs(lin.integrate(10.0, s1(0.0), one)[0] - 1.0), 1e-4);
  EXPECT_NEAR(lin.integrate(10.0, s1(0.0), one)[0], 1.0 - std::exp(-10.0), 1e-9);
  EXPECT_EQ(lin.integrate(0.0, s1(0.7), one), s1(0.7));
  EXPECT_THROW(lin.integrate(-1.0, s1(0.0), one), DomainError);
}

TEST(Integrate, LinearMatchesClosedFormOverTwenty) {
  auto lin = benchmarks::linear();
  Rng rng = make_rng(17, 0);
  for (int i = 0; i < 20; ++i) {
    auto u = sample_input(1, 0.5, 40, uniform(rng, 0, 3), InputKind::random, rng);
    double x0 = uniform(rng, -5, 5);
    double t = uniform(rng, 0, 20);
    EXPECT_NEAR(lin.integrate(t, s1(x0), u)[0], linear_closed_form(t, x0, u), 1e-9);
  }
}

TEST(Integrate, FourthOrderConvergence) {
  Rng rng = make_rng(23, 0);
  for (int i = 0; i < 10; ++i) {
    auto u = sample_input(1, 1.0, 6, uniform(rng, 0.5, 2), InputKind::random, rng);
    double x0 = uniform(rng, -3, 3);
    double t = uniform(rng, 2, 6);
    auto coarse = benchmarks::linear();
    coarse.max_substep = 0.2;
    auto fine = coarse;
    fine.max_substep = 0.1;
    double want = linear_closed_form(t, x0, u);
    double e1 = std::abs(coarse.integrate(t, s1(x0), u)[0] - want);
    double e2 = std::abs(fine.integrate(t, s1(x0), u)[0] - want);
    ASSERT_GT(e1, 1e-12);
    EXPECT_GE(e1 / e2, 8.0) << "x0=" << x0 << " t=" << t;
  }
}

TEST(Integrate, BatchedEqualsSingle) {
  auto sys = benchmarks::planar_limit_cycle();
  Rng rng = make_rng(4, 0);
  auto u = sample_input(1, sys.input_step, 20, 0.8, InputKind::random, rng);
  std::vector<double> ts{0.0, 0.003, 0.5, 0.5, 1.2345, 3.0, 7.77};
  StateVector x0{0.3, -1.2};
  auto batch = sys.integrate_at(ts, x0, u);
  for (std::size_t i = 0; i < ts.size(); ++i) EXPECT_EQ(batch[i], sys.integrate(ts[i], x0, u));
}

TEST(Catalog, ContractAndOracles) {
  auto cat = catalog();
  EXPECT_GE(cat.size(), 6u);
  auto zero = InputSignal::zero(1, 0.5);
  auto biased = find_system("biased").system;
  EXPECT_NEAR(biased.flow(30.0, s1(0.0), zero)[0], 1.0, 1e-9);
  auto integ = find_system("integrator").system;
  auto tenth = InputSignal::constant({0.1}, 0.5, 100.0);
  EXPECT_NEAR(integ.flow(100.0, s1(0.0), tenth)[0], 10.0, 1e-9);
  EXPECT_THROW(find_system("nope"), ConfigError);
  try {
    find_system("nope");
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("linear"), std::string::npos);
  }
  EXPECT_EQ(find_system("reaction-diffusion-128").resolution, 128u);
  auto manifest = catalog_manifest();
  EXPECT_EQ(manifest["systems"].size(), cat.size());
}

TEST(Catalog, SaturatedAndPlanarOracles) {
  auto sat = find_system("saturated-bias").system;
  auto big = InputSignal::constant({5.0}, 0.5, 40.0);
  EXPECT_NEAR(sat.flow(30.0, s1(0.0), big)[0], 2.0, 1e-9);
  auto pl = find_system("planar-limit-cycle").system;
  auto x = pl.flow(40.0, StateVector{0.1, 0.0}, InputSignal::zero(1, 0.5));
  EXPECT_NEAR(x.norm(), 1.0, 1e-8);
  // radial oracle r(t) <= max(r0, 1 + ||u||)
  Rng rng = make_rng(8, 0);
  for (int i = 0; i < 20; ++i) {
    auto u = sample_input(1, 0.5, 20, uniform(rng, 0, 1.5), InputKind::random, rng);
    StateVector x0{uniform(rng, -2, 2), uniform(rng, -2, 2)};
    for (double t : {0.5, 2.0, 9.0}) {
      EXPECT_LE(pl.flow(t, x0, u).norm(), std::max(x0.norm(), 1.0 + u.sup_norm()) + 1e-9);
    }
  }
}

TEST(Catalog, ForwardCompleteReachSupsFinite) {
  Rng rng = make_rng(31, 0);
  for (const auto& e : catalog()) {
    if (e.resolution >= 32) continue;
    double sup = 0.0;
    for (int i = 0; i < 5; ++i) {
      auto u = sample_input(1, e.system.input_step, 20, 1.0, InputKind::constant, rng);
      std::vector<double> c(e.system.state_dim);
      for (auto& v : c) v = uniform(rng, -1, 1);
      auto ts = time_grid(5.0, 0.5);
      for (const auto& x : e.system.trajectory(ts, e.system.make_state(c), u)) {
        sup = std::max(sup, x.norm());
      }
    }
    EXPECT_TRUE(std::isfinite(sup)) << e.system.name;
    EXPECT_LT(sup, 20.0) << e.system.name;
  }
}

TEST(ReactionDiffusion, LaplacianSymmetricNegative) {
  auto a = benchmarks::laplacian_matrix(16);
  for (std::size_t i = 0; i < 16; ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < 16; ++j) {
      EXPECT_EQ(a[i * 16 + j], a[j * 16 + i]);
      if (i != j) off += std::abs(a[i * 16 + j]);
    }
    EXPECT_LE(a[i * 16 + i] + off, 1e-9);  // diagonally dominant, negative semidefinite
  }
}

TEST(ReactionDiffusion, DecaysUnderZeroInput) {
  auto rd = benchmarks::reaction_diffusion(16);
  std::vector<double> x0(16, 1.0);
  auto x = rd.integrate(2.0, StateVector(x0, Norm::sup), InputSignal::zero(1, 0.25));
  // slowest Dirichlet mode decays at least like exp(-pi^2 t) up to discretization error
  EXPECT_LT(x.norm(), 1.3 * std::exp(-9.0 * 2.0));
}
