// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "isps/benchmarks.hpp"
#include "isps/estimators.hpp"

using namespace isps;

namespace {

SampleBudget small_budget(std::uint64_t seed = 1) {
  SampleBudget b;
  b.n_states = 4;
  b.n_inputs = 4;
  b.n_validation = 200;
  b.time_horizon = 20.0;
  b.seed = seed;
  return b;
}

BoundedSetApprox origin1() { return BoundedSetApprox::origin(1); }
BoundedSetApprox point1(double p) { return BoundedSetApprox::ball(StateVector{p}, 0.0); }

}  // namespace

TEST(Budget, Validation) {
  SampleBudget b;
  b.radii = {1.0, 0.5};
  EXPECT_THROW(b.validate(), ConfigError);
  b = SampleBudget{};
  b.n_states = 0;
  EXPECT_THROW(b.validate(), ConfigError);
  b = SampleBudget{};
  b.epsilons.clear();
  EXPECT_THROW(b.validate(), ConfigError);
  EXPECT_NO_THROW(SampleBudget{}.validate());
}

TEST(FitIsps, LinearCertificate) {
  auto sys = find_system("linear").system;
  auto b = small_budget();
  FitResult f = fit_isps(sys, origin1(), b);
  ASSERT_TRUE(f.verdict.consistent()) << nlohmann::json(f.verdict).dump();
  const auto& g = *f.certificate;
  EXPECT_LE(g.c, 0.05);
  EXPECT_LE(g.residual_max, 1e-3);
  for (double l : {0.5, 1.0, 3.0}) EXPECT_LE(g.gamma(l), 1.2 * l);
  for (double r : {0.5, 2.0}) EXPECT_GE(g.beta(r, 0.0) + g.c, r);
  // independent oracle: |x(t)| <= |x0| e^{-t} + ||u||
  auto val = random_probes(sys, origin1(), 100, 4.0, 4.0, 10.0, 99);
  auto times = time_grid(10.0, 0.5);
  auto runs = run_bundle(sys, origin1(), val, times, 1);
  EXPECT_LE(certificate_residual(g, runs, times).residual, 1e-3);
}

TEST(FitIsps, BiasedOffsetMatchesAttractor) {
  auto sys = find_system("biased").system;
  FitResult f = fit_isps(sys, origin1(), small_budget(2));
  ASSERT_TRUE(f.verdict.consistent()) << nlohmann::json(f.verdict).dump();
  EXPECT_GE(f.certificate->c, 0.9);
  EXPECT_LE(f.certificate->c, 1.2);
}

TEST(FitIsps, PlanarOffsetIsLimitCycleRadius) {
  auto sys = find_system("planar-limit-cycle").system;
  FitResult f = fit_isps(sys, BoundedSetApprox::origin(2), small_budget(3));
  ASSERT_TRUE(f.verdict.consistent()) << nlohmann::json(f.verdict).dump();
  EXPECT_GE(f.certificate->c, 0.9);
  EXPECT_LE(f.certificate->c, 1.2);
}

TEST(FitIsps, IntegratorFalsifiedWithReplayableWitness) {
  auto sys = find_system("integrator").system;
  FitResult f = fit_isps(sys, origin1(), small_budget(4));
  ASSERT_TRUE(f.verdict.falsified());
  const Witness& w = *f.verdict.witness;
  EXPECT_EQ(w.kind, "unbounded_growth");
  EXPECT_NEAR(replay_witness(sys, origin1(), w), w.violation, 1e-6 * (1 + w.violation));
  // integrator growth: |x0 + l t|
  EXPECT_GT(w.violation, 100.0);
}

TEST(FitCuag, BiasedAroundItsEquilibrium) {
  auto sys = find_system("biased").system;
  FitResult f = fit_cuag(sys, point1(1.0), small_budget(5));
  ASSERT_TRUE(f.verdict.consistent()) << nlohmann::json(f.verdict).dump();
  EXPECT_EQ(f.certificate->c, 0.0);
}

TEST(IssWrtSet, BiasedZeroFailsInvariance) {
  auto sys = find_system("biased").system;
  FitResult f = check_iss_wrt_set(sys, point1(0.0), small_budget(6));
  ASSERT_TRUE(f.verdict.falsified());
  EXPECT_EQ(f.verdict.evidence["failed_leg"], "zero_invariance");
  FitResult g = check_iss_wrt_set(sys, point1(1.0), small_budget(6));
  EXPECT_TRUE(g.verdict.consistent()) << nlohmann::json(g.verdict).dump();
  EXPECT_EQ(g.certificate->c, 0.0);
}

TEST(Transfer, CertificateHoldsForOtherSet) {
  auto sys = find_system("linear").system;
  FitResult f = fit_isps(sys, origin1(), small_budget(7));
  ASSERT_TRUE(f.certificate);
  auto a2 = BoundedSetApprox::ball(StateVector{2.0}, 0.5);
  GainCertificate t = transfer_certificate(*f.certificate, a2);
  auto probes = random_probes(sys, a2, 200, 4.0, 4.0, 20.0, 1234);
  auto times = time_grid(20.0, 0.25);
  auto runs = run_bundle(sys, a2, probes, times, 1);
  EXPECT_LE(certificate_residual(t, runs, times).residual, f.certificate->residual_max + 1e-9);
}

TEST(Brs, LinearReachIsTheBound) {
  auto sys = find_system("linear").system;
  auto b = small_budget(8);
  for (double c : {0.5, 2.0}) {
    BrsResult r = check_brs(sys, c, 5.0, b);
    ASSERT_TRUE(r.verdict.consistent());
    // |x(t)| <= max(|x0|, ||u||) <= C, attained at t = 0
    EXPECT_NEAR(r.reach_sup, c, 1e-9);
  }
  EXPECT_DOUBLE_EQ(check_brs(sys, 1.5, 0.0, b).reach_sup, 1.5);
  EXPECT_THROW(check_brs(sys, -1.0, 1.0, b), PreconditionError);
}

TEST(Ulim, LinearMatchesLogOracle) {
  auto sys = find_system("linear").system;
  auto b = small_budget(9);
  TauResult res = estimate_ulim(sys, origin1(), ComparisonFunction::linear(2.0), b);
  ASSERT_TRUE(res.verdict.consistent()) << nlohmann::json(res.verdict).dump();
  for (std::size_t e = 0; e < b.epsilons.size(); ++e) {
    for (std::size_t j = 0; j < b.radii.size(); ++j) {
      double eps = b.epsilons[e], r = b.radii[j];
      double oracle = r <= eps ? 0.0 : std::log(r / eps);
      EXPECT_GE(res.table.at(e, j), oracle - 1e-9);
      EXPECT_LE(res.table.at(e, j), oracle + b.observation_step + 1e-9);
    }
  }
  std::ostringstream os;
  write_tau_csv(os, res.table);
  EXPECT_EQ(os.str().substr(0, 10), "eps,r,tau\n");
}

TEST(Uag, LinearSettlesAtOracle) {
  auto sys = find_system("linear").system;
  auto b = small_budget(10);
  TauResult res = check_uag(sys, origin1(), ComparisonFunction::linear(2.0), b);
  ASSERT_TRUE(res.verdict.consistent());
  for (std::size_t j = 0; j < b.radii.size(); ++j) {
    double oracle = std::max(0.0, std::log(b.radii[j] / b.epsilons[0]));
    EXPECT_LE(res.table.at(0, j), oracle + b.observation_step + 1e-9);
    EXPECT_GE(res.table.at(0, j), oracle - 1e-9);
  }
}

TEST(Lim, IntegratorFalsifiedLinearConsistent) {
  auto b = small_budget(11);
  auto id = ComparisonFunction::identity();
  Verdict v = check_lim(find_system("integrator").system, origin1(), id, b);
  EXPECT_TRUE(v.falsified());
  EXPECT_TRUE(check_lim(find_system("linear").system, origin1(), id, b).consistent());
}

TEST(Ugb, LinearSigma) {
  auto sys = find_system("linear").system;
  UgbResult u = check_ugb(sys, origin1(), small_budget(12));
  ASSERT_TRUE(u.verdict.consistent()) << nlohmann::json(u.verdict).dump();
  for (double r : {0.5, 1.0, 4.0}) EXPECT_LE(u.certificate->sigma(r), 1.1 * r + 1e-9);
  EXPECT_LE(u.certificate->c, 0.05);
  EXPECT_TRUE(u.certificate->lemma1_form_valid);
}

TEST(Invariance, DiscAndPoint) {
  auto b = small_budget(13);
  b.time_horizon = 5.0;
  auto disc = BoundedSetApprox::ball(StateVector{0.0, 0.0}, 1.0);
  EXPECT_TRUE(check_s_invariance(find_system("planar-limit-cycle").system, disc, 0.0, b).consistent());
  Verdict v = check_s_invariance(find_system("biased").system, point1(0.0), 0.0, b);
  ASSERT_TRUE(v.falsified());
  auto sys = find_system("biased").system;
  EXPECT_NEAR(replay_witness(sys, point1(0.0), *v.witness), v.witness->violation, 1e-9);
  // s > 0 breaks invariance of the equilibrium
  EXPECT_TRUE(check_s_invariance(sys, point1(1.0), 0.5, b).falsified());
}

TEST(RobustInvariance, LinearDeltaEqualsEps) {
  auto sys = find_system("linear").system;
  auto r = check_robust_s_invariance(sys, origin1(), 0.0, 0.1, 1.0, small_budget(14));
  ASSERT_TRUE(r.verdict.consistent());
  EXPECT_DOUBLE_EQ(r.delta, 0.1);
  // x' = x is not robustly invariant at the origin: exp(h) > 1
  OdeSystem unstable = benchmarks::scalar("unstable", "x' = x + u", [](double x, double u) { return x + u; });
  auto ru = check_robust_s_invariance(unstable.as_control_system(), origin1(), 0.0, 0.1, 1.0,
                                      small_budget(14));
  ASSERT_TRUE(ru.verdict.consistent());
  EXPECT_LT(ru.delta, 0.1 / std::exp(1.0) + 1e-3);
}

TEST(Lipschitz, LinearFlowIsNonexpansive) {
  auto sys = find_system("linear").system;
  double l = estimate_lipschitz(sys, 2.0, 1.0, small_budget(15));
  EXPECT_NEAR(l, 1.0, 1e-6);
}
