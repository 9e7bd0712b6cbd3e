// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "isps/comparison.hpp"
#include "isps/parallel.hpp"

namespace isps {
namespace {

ComparisonFunction random_kinf(Rng& rng) {
  std::vector<Knot> knots{{0.0, 0.0}};
  int n = 1 + static_cast<int>(uniform(rng, 0.0, 8.0));
  for (int i = 0; i < n; ++i) {
    knots.push_back({knots.back().r + uniform(rng, 0.05, 2.0),
                     knots.back().value + uniform(rng, 0.05, 3.0)});
  }
  return ComparisonFunction::k_class(std::move(knots), uniform(rng, 0.1, 4.0));
}

TEST(Evaluate, IdentityAndKnotInterpolation) {
  auto id = ComparisonFunction::k_class({{0, 0}, {1, 1}}, 1.0);
  EXPECT_DOUBLE_EQ(id(0.5), 0.5);
  EXPECT_EQ(id(0.0), 0.0);
  auto f = ComparisonFunction::k_class({{0, 0}, {1, 2}}, 3.0);
  EXPECT_DOUBLE_EQ(f(2.0), 5.0);  // 2 + 3 * (2 - 1)
  EXPECT_DOUBLE_EQ(f(0.25), 0.5);
}

TEST(Evaluate, NegativeArgumentIsDomainError) {
  EXPECT_THROW(ComparisonFunction::identity()(-1e-12), DomainError);
}

TEST(Evaluate, LClassExponentialTailIsContinuous) {
  auto l = ComparisonFunction::l_class({{0, 1.0}, {1, 0.5}}, 2.0);
  EXPECT_DOUBLE_EQ(l(1.0), 0.5);
  EXPECT_DOUBLE_EQ(l(2.0), 0.5 * std::exp(-2.0));
  EXPECT_DOUBLE_EQ(l(0.5), 0.75);
}

TEST(Construct, RejectsBrokenInvariants) {
  EXPECT_THROW(ComparisonFunction::k_class({{0, 0.1}, {1, 1}}, 1.0), DataError);
  EXPECT_THROW(ComparisonFunction::k_class({{0, 0}, {1, 1}, {2, 1}}, 1.0), DataError);
  EXPECT_THROW(ComparisonFunction::k_class({{0, 0}}, 0.0), DataError);
  EXPECT_THROW(ComparisonFunction::l_class({{0, 1}, {1, 1}}, 1.0), DataError);
}

TEST(Invert, Examples) {
  auto id = ComparisonFunction::identity();
  EXPECT_EQ(invert(id), id);

  auto two = ComparisonFunction::linear(2.0);
  auto half = invert(two);
  EXPECT_DOUBLE_EQ(half(two(1.0)), 1.0);
  EXPECT_DOUBLE_EQ(half(3.0), 1.5);

  auto f = ComparisonFunction::k_class({{0, 0}, {1, 1}, {2, 4}}, 3.0);
  auto g = invert(f);
  std::vector<Knot> expected{{0, 0}, {1, 1}, {4, 2}};
  EXPECT_EQ(g.knots(), expected);
}

TEST(Invert, RequiresKinf) {
  auto k = ComparisonFunction::k_class({{0, 0}, {1, 1}}, 1.0, FunctionClass::K);
  EXPECT_THROW(invert(k), ClassError);
  EXPECT_THROW(invert(ComparisonFunction::exponential_decay(1.0, 1.0)), ClassError);
}

TEST(Algebra, Examples) {
  auto id = ComparisonFunction::identity();
  EXPECT_EQ(pointwise_max(id, id), id);
  auto c = compose(ComparisonFunction::linear(2.0), ComparisonFunction::linear(3.0));
  EXPECT_DOUBLE_EQ(c(1.0), 6.0);

  std::vector<Knot> sq{{0, 0}};
  for (int i = 1; i <= 200; ++i) {
    double r = 0.01 * i;
    sq.push_back({r, r * r});
  }
  auto square = ComparisonFunction::k_class(sq, 4.0);
  EXPECT_NEAR(add(id, square)(1.0), 2.0, 1e-4);
}

TEST(Algebra, MixedClassesRejected) {
  auto l = ComparisonFunction::exponential_decay(1.0, 1.0);
  auto id = ComparisonFunction::identity();
  EXPECT_THROW(compose(id, l), ClassError);
  EXPECT_THROW(pointwise_max(l, id), ClassError);
  EXPECT_THROW(add(id, l), ClassError);
}

TEST(Algebra, ResultsMatchPointwiseDefinitionOnUnionGrid) {
  Rng rng = make_rng(11, 0);
  for (int trial = 0; trial < 100; ++trial) {
    auto f = random_kinf(rng);
    auto g = random_kinf(rng);
    auto fg = compose(f, g);
    auto mx = pointwise_max(f, g);
    auto sum = add(f, g);
    std::vector<double> grid;
    for (const auto& k : f.knots()) grid.push_back(k.r);
    for (const auto& k : g.knots()) grid.push_back(k.r);
    for (const auto& k : fg.knots()) grid.push_back(k.r);
    for (const auto& k : mx.knots()) grid.push_back(k.r);
    grid.push_back(grid.back() * 3.0 + 5.0);
    for (double r : grid) {
      EXPECT_NEAR(fg(r), f(g(r)), 1e-12 * std::max(1.0, f(g(r))));
      EXPECT_NEAR(mx(r), std::max(f(r), g(r)), 1e-12 * std::max(1.0, mx(r)));
      EXPECT_NEAR(sum(r), f(r) + g(r), 1e-12 * std::max(1.0, sum(r)));
    }
    // between knots too, since the breakpoint sets are exact
    for (int p = 0; p < 20; ++p) {
      double r = uniform(rng, 0.0, 20.0);
      EXPECT_NEAR(fg(r), f(g(r)), 1e-10 * std::max(1.0, f(g(r))));
      EXPECT_NEAR(mx(r), std::max(f(r), g(r)), 1e-10 * std::max(1.0, mx(r)));
    }
  }
}

TEST(Properties, KFunctionsVanishAtZeroAndIncrease) {
  Rng rng = make_rng(3, 0);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = random_kinf(rng);
    EXPECT_EQ(f(0.0), 0.0);
    for (int p = 0; p < 100; ++p) {
      double a = uniform(rng, 0.0, 15.0);
      double b = a + uniform(rng, 1e-6, 5.0);
      EXPECT_LT(f(a), f(b));
    }
  }
}

TEST(Properties, DoubleInversionRestoresKnotsExactly) {
  Rng rng = make_rng(5, 0);
  for (int trial = 0; trial < 100; ++trial) {
    auto f = random_kinf(rng);
    EXPECT_EQ(invert(invert(f)).knots(), f.knots());
  }
}

TEST(KLFunction, WeakTriangleInequality) {
  Rng rng = make_rng(17, 0);
  KLFunction beta(random_kinf(rng),
                  ComparisonFunction::l_class({{0, 1.0}, {0.5, 0.7}, {2.0, 0.1}}, 0.8));
  for (int p = 0; p < 100; ++p) {
    double a = uniform(rng, 0.0, 10.0), b = uniform(rng, 0.0, 10.0), t = uniform(rng, 0.0, 6.0);
    EXPECT_LE(beta(a + b, t), beta(2 * a, t) + beta(2 * b, t));
  }
}

TEST(KLFunction, RequiresNormalizedDecay) {
  EXPECT_THROW(KLFunction(ComparisonFunction::identity(),
                          ComparisonFunction::exponential_decay(2.0, 1.0)),
               DataError);
  EXPECT_THROW(KLFunction(ComparisonFunction::exponential_decay(1.0, 1.0),
                          ComparisonFunction::exponential_decay(1.0, 1.0)),
               ClassError);
}

TEST(KLMajorize, ZeroGrid) {
  OmegaGrid g{{0.5, 1.0, 2.0}, {0.0, 1.0}, std::vector<double>(6, 0.0)};
  auto beta = kl_majorize(g);
  for (double r : g.radii)
    for (double t : g.times) EXPECT_GE(beta(r, t), 0.0);
}

TEST(KLMajorize, DyadicDecayGrid) {
  OmegaGrid g;
  for (int i = 0; i <= 3; ++i) g.radii.push_back(i);
  for (int j = 0; j <= 3; ++j) g.times.push_back(j);
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; j <= 3; ++j) g.values.push_back(i * std::pow(2.0, -j));
  auto beta = kl_majorize(g);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_GE(beta(g.radii[i], g.times[j]), g.at(i, j));
}

TEST(KLMajorize, SingleNode) {
  OmegaGrid g{{1.0}, {0.0}, {5.0}};
  EXPECT_GE(kl_majorize(g)(1.0, 0.0), 5.0);
}

TEST(KLMajorize, NonMonotoneGridNamesTheViolatingPair) {
  OmegaGrid g{{1.0, 2.0}, {0.0, 1.0}, {1.0, 0.5, 0.8, 0.4}};
  try {
    kl_majorize(g);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("(0,0)"), std::string::npos);
  }
  OmegaGrid h{{1.0}, {0.0, 1.0}, {1.0, 2.0}};
  EXPECT_THROW(kl_majorize(h), DataError);
}

TEST(KLMajorize, RandomMonotoneGridsAreDominatedExactly) {
  Rng rng = make_rng(23, 0);
  for (int trial = 0; trial < 50; ++trial) {
    OmegaGrid g;
    std::size_t nr = 1 + static_cast<std::size_t>(uniform(rng, 0, 6));
    std::size_t nt = 1 + static_cast<std::size_t>(uniform(rng, 0, 8));
    double r = 0.0, t = 0.0;
    for (std::size_t i = 0; i < nr; ++i) g.radii.push_back(r += uniform(rng, 0.1, 2.0));
    for (std::size_t j = 0; j < nt; ++j) {
      g.times.push_back(t);
      t += uniform(rng, 0.1, 3.0);
    }
    g.values.assign(nr * nt, 0.0);
    for (std::size_t i = 0; i < nr; ++i) {
      for (std::size_t j = nt; j-- > 0;) {
        double v = uniform(rng, 0.0, 1.0);
        if (j + 1 < nt) v += g.at(i, j + 1);
        if (i > 0) v = std::max(v, g.at(i - 1, j) + (j + 1 < nt ? g.at(i, j + 1) - g.at(i - 1, j + 1) : 0.0));
        g.at(i, j) = v;
      }
    }
    // repair the r-direction with cumulative maxima (keeps t-monotonicity)
    for (std::size_t i = 1; i < nr; ++i)
      for (std::size_t j = 0; j < nt; ++j) g.at(i, j) = std::max(g.at(i, j), g.at(i - 1, j));
    auto beta = kl_majorize(g);
    for (std::size_t i = 0; i < nr; ++i)
      for (std::size_t j = 0; j < nt; ++j) EXPECT_GE(beta(g.radii[i], g.times[j]), g.at(i, j));
  }
}

TauGrid tau_grid(const std::vector<double>& eps, const std::vector<double>& radii,
                 double (*fn)(double, double)) {
  TauGrid g{eps, radii, {}};
  for (double e : eps)
    for (double r : radii) g.values.push_back(fn(e, r));
  return g;
}

std::vector<double> geometric(double lo, double hi, double ratio) {
  std::vector<double> v;
  for (double x = lo; x < hi * (1 - 1e-9); x *= ratio) v.push_back(x);
  v.push_back(hi);
  return v;
}

TEST(SmoothTau, ClosedFormExamples) {
  std::vector<double> eps{0.1, 0.25, 0.5, 1.0, 2.0};
  std::vector<double> radii{0.5, 1.0, 2.0, 4.0, 8.0};
  // constant: strictness perturbation is applied, 1e-9-scale.
  auto constant = monotone_smooth_tau(tau_grid(eps, radii, [](double, double) { return 7.0; }));
  EXPECT_TRUE(constant.perturbed());
  EXPECT_NEAR(constant(1.0, 1.0), 7.0, 7.0 * 1e-6);

  auto linear_r = monotone_smooth_tau(tau_grid(eps, radii, [](double, double r) { return r; }));
  for (double r : {0.5, 1.0, 2.0, 4.0}) {
    EXPECT_NEAR(linear_r(1.0, r), 1.5 * r, 1.5 * r * 1e-6);
  }

  auto fine = geometric(0.05, 2.0, 1.001);
  auto inv_eps = monotone_smooth_tau(tau_grid(fine, {0.5, 1.0, 2.0, 4.0},
                                              [](double e, double) { return 1.0 / e; }));
  for (double e : {0.2, 1.0, 2.0}) {
    double expected = 2.0 / e * std::log(2.0);
    EXPECT_NEAR(inv_eps(e, 1.0), expected, expected * 1e-6);
  }
}

TEST(SmoothTau, DominatesAndIsStrictlyMonotone) {
  std::vector<double> eps{0.05, 0.1, 0.2, 0.4, 0.8, 1.6};
  std::vector<double> radii{0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
  // piecewise-constant-ish table with ties, as produced by an estimator
  auto g = tau_grid(eps, radii, [](double e, double r) {
    return std::floor(std::log(1.0 + r / e) * 4.0) / 4.0;
  });
  auto tau = monotone_smooth_tau(g);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    for (std::size_t j = 0; j < radii.size(); ++j) {
      if (tau.covers(eps[i], radii[j])) {
        EXPECT_GE(tau(eps[i], radii[j]), g.at(i, j));
      }
    }
  }

  Rng rng = make_rng(29, 0);
  for (int p = 0; p < 50; ++p) {
    double e = uniform(rng, 0.1, 1.6);
    double r1 = uniform(rng, 0.25, 3.9);
    double r2 = std::min(4.0, r1 + uniform(rng, 1e-3, 1.0));
    EXPECT_LT(tau(e, r1), tau(e, r2));
    double e1 = uniform(rng, 0.1, 1.5);
    double e2 = std::min(1.6, e1 + uniform(rng, 1e-3, 0.5));
    double r = uniform(rng, 0.25, 4.0);
    EXPECT_GT(tau(e1, r), tau(e2, r));
  }
}

TEST(SmoothTau, ErrorPaths) {
  std::vector<double> eps{0.5, 1.0};
  std::vector<double> radii{1.0, 2.0};
  auto tau = monotone_smooth_tau(tau_grid(eps, radii, [](double, double r) { return r; }));
  EXPECT_THROW(tau(1.0, 1.5), ExtentError);
  EXPECT_THROW(tau(0.8, 1.0), ExtentError);
  EXPECT_NO_THROW(tau(1.0, 1.0));
  EXPECT_THROW(monotone_smooth_tau(tau_grid(eps, radii, [](double e, double) { return e; })),
               DataError);
}

TEST(RunningAverage, Examples) {
  std::vector<Knot> lin{{0, 0}, {2, 2}};
  EXPECT_DOUBLE_EQ(lemma2_average(lin, 2.0), 1.0);
  std::vector<Knot> flat{{0, 1}, {1, 1}};
  EXPECT_THROW(lemma2_average(flat, 1.0), PreconditionError);
  EXPECT_THROW(lemma2_average([](double) { return 3.0; }, 1.0), PreconditionError);
  EXPECT_NEAR(lemma2_average([](double s) { return std::exp(s); }, 1.0), std::exp(1.0) - 1.0,
              1e-9);
  EXPECT_THROW(lemma2_average(lin, 0.0), DomainError);
}

TEST(RunningAverage, AveragesOfIncreasingFunctionsIncrease) {
  Rng rng = make_rng(31, 0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Knot> f{{0.0, uniform(rng, -2.0, 2.0)}};
    for (int k = 0; k < 10; ++k) {
      f.push_back({f.back().r + uniform(rng, 0.1, 1.0), f.back().value + uniform(rng, 1e-3, 2.0)});
    }
    double t1 = uniform(rng, 0.05, f.back().r * 0.95);
    double t2 = uniform(rng, t1 + 1e-3, f.back().r);
    EXPECT_LT(lemma2_average(f, t1), lemma2_average(f, t2));
  }
}

TEST(Json, RoundTripIsBitExact) {
  Rng rng = make_rng(37, 0);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = random_kinf(rng);
    nlohmann::json j = f;
    auto back = comparison_function_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(back, f);
    KLFunction beta(f, ComparisonFunction::l_class({{0, 1.0}, {uniform(rng, 0.1, 1), 0.3}},
                                                   uniform(rng, 0.1, 2)));
    nlohmann::json jb = beta;
    EXPECT_EQ(kl_function_from_json(nlohmann::json::parse(jb.dump())), beta);
  }
  nlohmann::json j = ComparisonFunction::identity();
  EXPECT_EQ(j["class"], "Kinf");
  EXPECT_EQ(j["tail"]["kind"], "linear");
}

}  // namespace
}  // namespace isps
