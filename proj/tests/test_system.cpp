// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "isps/axioms.hpp"
#include "isps/benchmarks.hpp"
#include "isps/sampling.hpp"
#include "isps/system.hpp"
#include "support.hpp"

using namespace isps;

TEST(SetDistance, Examples) {
  auto a = BoundedSetApprox::origin(2);
  EXPECT_DOUBLE_EQ(set_distance(StateVector{3.0, 4.0}, a), 5.0);
  EXPECT_DOUBLE_EQ(set_distance(StateVector{3.0, 4.0}, a.inflated(1.0)), 4.0);
  BoundedSetApprox cloud({StateVector{1.0, 2.0}, StateVector{-3.0, 0.5}}, 0.0);
  for (const auto& p : cloud.points()) EXPECT_EQ(set_distance(p, cloud), 0.0);
  EXPECT_THROW(set_distance(StateVector{1.0}, a), ShapeError);
}

TEST(SetDistance, TriangleAndNormRelation) {
  Rng rng = make_rng(11, 0);
  for (Norm norm : {Norm::euclidean, Norm::sup}) {
    std::vector<StateVector> pts;
    for (int i = 0; i < 40; ++i) {
      pts.emplace_back(std::vector<double>{uniform(rng, -2, 2), uniform(rng, -2, 2),
                                           uniform(rng, -2, 2)},
                       norm);
    }
    BoundedSetApprox a(pts, 0.3);
    for (int k = 0; k < 200; ++k) {
      StateVector x(std::vector<double>{uniform(rng, -6, 6), uniform(rng, -6, 6),
                                        uniform(rng, -6, 6)},
                    norm);
      StateVector y(std::vector<double>{uniform(rng, -6, 6), uniform(rng, -6, 6),
                                        uniform(rng, -6, 6)},
                    norm);
      double dx = set_distance(x, a), dy = set_distance(y, a);
      EXPECT_LE(std::abs(dx - dy), distance(x, y) + 1e-12);
      EXPECT_LE(x.norm() - a.norm(), dx + 1e-12);
      EXPECT_LE(dx, x.norm() + a.norm() + 1e-12);
      // brute-force oracle
      double best = 1e300;
      for (const auto& p : pts) best = std::min(best, distance(x, p));
      EXPECT_NEAR(dx, std::max(0.0, best - 0.3), 1e-12);
    }
  }
}

TEST(InputSignal, ShiftExamples) {
  InputSignal u = InputSignal::from_cells(1.0, {{1.0}, {2.0}, {3.0}});
  EXPECT_EQ(shift(u, 0.0), u);
  EXPECT_EQ(shift(u, 1.0), InputSignal::from_cells(1.0, {{2.0}, {3.0}}));
  EXPECT_EQ(shift(u, 1.7), InputSignal::from_cells(1.0, {{2.0}, {3.0}}));
  EXPECT_EQ(shift(u, 5.0).sup_norm(), 0.0);
  EXPECT_EQ(shift(u, 5.0).cells(), 0u);
  EXPECT_THROW(shift(u, -1.0), DomainError);
}

TEST(InputSignal, ConcatExamples) {
  InputSignal u1 = InputSignal::from_cells(1.0, {{1.0}});
  InputSignal u2 = InputSignal::from_cells(1.0, {{3.0}});
  EXPECT_EQ(concat(u1, u2, 1.0), InputSignal::from_cells(1.0, {{1.0}, {3.0}}));
  auto z = InputSignal::zero(1, 1.0);
  EXPECT_EQ(concat(z, z, 5.0).sup_norm(), 0.0);
  InputSignal u = InputSignal::from_cells(0.5, {{1.0}, {-2.0}, {0.5}});
  EXPECT_LE(concat(u, z, 0.7).sup_norm(), u.sup_norm());
  // mismatched grids resample to the finer one
  InputSignal c = concat(u1, u, 1.0);
  EXPECT_EQ(c.grid_step(), 0.5);
  EXPECT_EQ(c.value_at(0.75)[0], 1.0);
  EXPECT_EQ(c.value_at(1.6)[0], -2.0);
}

TEST(InputSignal, NormAxiomsOnRandomSignals) {
  Rng rng = make_rng(5, 1);
  for (int k = 0; k < 300; ++k) {
    auto dim = static_cast<std::size_t>(1 + k % 3);
    InputSignal u1 = sample_input(dim, 0.25, 1 + k % 17, uniform(rng, 0, 3), InputKind::random, rng);
    InputSignal u2 =
        sample_input(dim, 0.25, 1 + k % 11, uniform(rng, 0, 3), InputKind::bang_bang, rng);
    double tau = uniform(rng, 0, 6);
    EXPECT_LE(shift(u1, tau).sup_norm(), u1.sup_norm());
    EXPECT_LE(concat(u1, u2, tau).sup_norm(), std::max(u1.sup_norm(), u2.sup_norm()));
    EXPECT_LE(truncate(u1, tau).sup_norm(), u1.sup_norm());
    // splice values
    InputSignal c = concat(u1, u2, tau);
    double tg = 0.25 * std::floor(tau / 0.25 + 1e-9);
    for (double s = 0.01; s < 6.0; s += 0.37) {
      auto got = c.value_at(s);
      auto want = s < tg ? u1.value_at(s) : u2.value_at(s - tg);
      for (std::size_t i = 0; i < dim; ++i) EXPECT_EQ(got[i], want[i]);
    }
  }
}

TEST(Serialization, InputAndSetRoundTrip) {
  InputSignal u = InputSignal::from_cells(0.1, {{0.1, 1.0 / 3.0}, {-2.5, 1e-17}});
  nlohmann::json j = u;
  EXPECT_EQ(input_signal_from_json(nlohmann::json::parse(j.dump())), u);
  BoundedSetApprox a({StateVector(std::vector<double>{1.0 / 7.0, 2.0}, Norm::sup)}, 0.125);
  nlohmann::json ja = a;
  auto b = bounded_set_from_json(nlohmann::json::parse(ja.dump()));
  EXPECT_EQ(b.inflation(), 0.125);
  EXPECT_EQ(b.points()[0], a.points()[0]);
  EXPECT_EQ(b.norm_kind(), Norm::sup);
}

TEST(Serialization, TrajectoryCsvHeader) {
  std::ostringstream os;
  std::vector<double> t{0.0, 1.0};
  std::vector<StateVector> xs{StateVector{1.0, 2.0}, StateVector{3.0, 4.0}};
  write_trajectory_csv(os, t, xs);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,x_1,x_2");
}

TEST(Axioms, CatalogConsistent) {
  for (const auto& e : catalog()) {
    double horizon = e.resolution >= 64 ? 1.0 : 3.0;
    int budget = e.resolution >= 32 ? 3 : 20;
    Verdict v = check_axioms(e.system, budget, horizon, 42);
    EXPECT_TRUE(v.consistent()) << e.system.name << " " << nlohmann::json(v).dump();
  }
}

TEST(Axioms, PlantedDefects) {
  auto lin = find_system("linear").system;
  Verdict a = check_axioms(doubles::identity_breaking(lin), 5, 2.0, 1);
  ASSERT_TRUE(a.falsified());
  EXPECT_EQ(a.witness->kind, "identity");
  Verdict b = check_axioms(doubles::causality_breaking(lin), 20, 2.0, 1);
  ASSERT_TRUE(b.falsified());
  EXPECT_EQ(b.witness->kind, "causality");
  EXPECT_THROW(check_axioms(lin, 0, 1.0, 1), PreconditionError);
}

TEST(Axioms, DivergenceIsForwardCompletenessWitness) {
  OdeSystem blowup = benchmarks::scalar("blowup", "x' = x^2", [](double x, double) { return x * x; });
  blowup.input_step = 0.5;
  AxiomCheckOptions opt;
  opt.state_radius = 5.0;
  Verdict v = check_axioms(blowup.as_control_system(), 40, 5.0, 3, opt);
  ASSERT_TRUE(v.falsified());
  EXPECT_EQ(v.witness->kind, "forward_completeness");
}

TEST(Sampling, DirectionsAreUnit) {
  Rng rng = make_rng(9, 0);
  for (Norm n : {Norm::euclidean, Norm::sup}) {
    for (int i = 0; i < 50; ++i) {
      auto d = sample_direction(4, n, rng);
      EXPECT_NEAR(vector_norm(d, n), 1.0, 1e-12);
    }
  }
  auto set = BoundedSetApprox::ball(StateVector{1.0, 1.0}, 0.5);
  for (int i = 0; i < 50; ++i) {
    double r = uniform(rng, 0.0, 2.0);
    EXPECT_NEAR(set_distance(sample_near_set(set, r, rng), set), r, 1e-12);
  }
}

TEST(Sampling, PresetLevels) {
  Rng rng = make_rng(2, 0);
  for (InputKind k : {InputKind::constant, InputKind::bang_bang, InputKind::random,
                      InputKind::zero_tail}) {
    auto u = sample_input(2, 0.5, 8, 1.5, k, rng);
    EXPECT_NEAR(u.sup_norm(), 1.5, 1e-12) << to_string(k);
  }
  EXPECT_EQ(sample_input(2, 0.5, 8, 1.5, InputKind::zero, rng).sup_norm(), 0.0);
}
