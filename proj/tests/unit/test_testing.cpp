#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cone_properties.hpp"
#include "oracles.hpp"
#include "shapetest/error.hpp"
#include "shapetest/testing.hpp"

using namespace shapetest;
using namespace shapetest::testing;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

struct Setup {
  sieve::Dataset data;
  sieve::SieveBasis basis;
  TestConfig config;
};

Setup monotone_problem(Eigen::Index n, double slope, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> nd;
  Setup s;
  s.data.y.resize(n);
  s.data.z.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = u(rng);
    s.data.z(i, 0) = z;
    s.data.y[i] = slope * z + 0.3 * std::sin(4 * z) + noise * nd(rng);
  }
  s.basis = sieve::SieveBasis::from_data(s.data.z, {3}, {4});
  s.config.grid = make_grid({{-0.9, 0.9}}, {37});
  s.config.B = 100;
  return s;
}

}  // namespace

TEST(OrderStatistic, Convention) {
  EXPECT_EQ(order_statistic({4, 1, 3, 2}, 0.75), 3.0);
  EXPECT_EQ(order_statistic({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_EQ(order_statistic({4, 1, 3, 2}, 0.0), 1.0);
  // 200 * 0.95 is 190 up to rounding and must not round up to 191.
  std::vector<double> v(200);
  for (int i = 0; i < 200; ++i) v[static_cast<std::size_t>(i)] = i + 1;
  EXPECT_EQ(order_statistic(v, 1.0 - 0.05), 190.0);
  EXPECT_EQ(code_of([] { order_statistic({}, 0.5); }), ErrorCode::EmptyData);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> w(static_cast<std::size_t>(5 + t));
    for (auto& x : w) x = nd(rng);
    for (double q : {0.01, 0.3, 0.5, 0.95}) EXPECT_EQ(order_statistic(w, q), oracle::sorted_rank(w, q));
  }
}

TEST(Statistic, Examples) {
  const auto g = make_grid({{0, 1}}, {2});
  const FunctionGrid theta(g, Eigen::Vector2d(1, 0));
  EXPECT_NEAR(test_statistic(theta, cones::ConeSpec::increasing(1), 1.0), 0.5, 1e-12);
  EXPECT_NEAR(test_statistic(2.0 * theta, cones::ConeSpec::increasing(1), 3.0), 3.0, 1e-12);
  EXPECT_EQ(test_statistic(FunctionGrid(g, Eigen::Vector2d(0, 1)), cones::ConeSpec::increasing(1), 5.0), 0.0);
  EXPECT_EQ(code_of([&] { test_statistic(theta, cones::ConeSpec::increasing(1), 0.0); }),
            ErrorCode::InvalidArgument);
}

TEST(Tau, Examples) {
  EXPECT_EQ(tau_hat({1, 2, 3, 4}, 0.25), 3.0);
  EXPECT_EQ(tau_hat({1, 2, 3, 4}, 1e-9), 4.0);
  EXPECT_EQ(tau_hat({2.5, 2.5, 2.5}, 0.1), 2.5);
  EXPECT_EQ(code_of([] { tau_hat({0, 0, 0}, 0.1); }), ErrorCode::DegenerateTau);
  EXPECT_DOUBLE_EQ(kappa_hat(10, 0.5, 2), 2.5);
}

TEST(Psi, Reductions) {
  std::mt19937_64 rng(5);
  const auto g = make_grid({{0, 1}}, {9});
  const cones::ConeSpec cone = cones::ConeSpec::increasing(1);
  const auto h = props::random_grid(g, 1, rng);
  const auto pi = cones::project(cone, props::random_grid(g, 1, rng));
  EXPECT_NEAR(psi_hat(h, 0.0, pi, cone), l2_norm(h - cones::project(cone, h)), 1e-12);
  const auto inside = cones::project(cone, h);
  for (double a : {0.0, 1.0, 7.0}) EXPECT_LE(psi_hat(inside, a, pi, cone), 1e-9);
  EXPECT_EQ(code_of([&] { psi_hat(h, 1.0, FunctionGrid::zeros(make_grid({{0, 1}}, {5})), cone); }),
            ErrorCode::GridMismatch);
}

TEST(Psi, NonincreasingInA) {
  std::mt19937_64 rng(6);
  const std::vector<double> as{0, 0.5, 1, 2, 5, 10, 50};
  const auto g1 = make_grid({{0, 1}}, {15});
  const auto g2 = make_grid({{0, 1}, {0, 1}}, {4, 4});
  const std::vector<std::pair<cones::ConeSpec, GridPtr>> cases{
      {cones::ConeSpec::increasing(1), g1}, {cones::Convex1D{}, g1}, {cones::ConeSpec::increasing(2), g2}};
  for (const auto& [cone, grid] : cases) {
    cones::Projector P(cone, grid);
    for (int t = 0; t < 50; ++t) {
      const auto h = props::random_grid(grid, 1, rng);
      const auto pi = P.project(props::random_grid(grid, 1, rng));
      double prev = psi_hat(h, as[0], pi, P);
      for (std::size_t i = 1; i < as.size(); ++i) {
        const double cur = psi_hat(h, as[i], pi, P);
        EXPECT_LE(cur, prev + 1e-6) << cones::describe(cone) << " a=" << as[i];
        prev = cur;
      }
    }
  }
}

TEST(CriticalValue, DominanceAndZeroDraws) {
  std::mt19937_64 rng(8);
  const auto g = make_grid({{0, 1}}, {11});
  const cones::ConeSpec cone = cones::ConeSpec::increasing(1);
  cones::Projector P(cone, g);
  std::vector<FunctionGrid> draws;
  for (int b = 0; b < 100; ++b) draws.push_back(props::random_grid(g, 1, rng));
  const auto pi = P.project(props::random_grid(g, 1, rng));
  const auto [c0, psi0] = critical_value(draws, pi, 0.0, P, 0.05);
  EXPECT_EQ(psi0.size(), 100u);
  for (std::size_t b = 0; b < draws.size(); ++b) {
    EXPECT_NEAR(psi0[b], l2_norm(draws[b] - P.project(draws[b])), 1e-12);
  }
  for (double k : {0.1, 1.0, 3.0, 30.0}) {
    EXPECT_GE(c0 + 1e-8, critical_value(draws, pi, k, P, 0.05).first) << "kappa " << k;
  }
  const std::vector<FunctionGrid> zeros(10, FunctionGrid::zeros(g));
  EXPECT_EQ(critical_value(zeros, pi, 2.0, cone, 0.05).first, 0.0);
}

TEST(GammaRule, ParseLabelResolve) {
  EXPECT_NEAR(GammaRule::parse("0.01/log(n)").resolve(500), 0.01 / std::log(500.0), 1e-15);
  EXPECT_NEAR(GammaRule::parse("1/n").resolve(500), 1.0 / 500, 1e-15);
  EXPECT_NEAR(GammaRule::parse("0.01").resolve(500), 0.01, 1e-15);
  EXPECT_NEAR(GammaRule::parse("n^-0.5").resolve(400), 0.05, 1e-15);
  for (const auto& r : {GammaRule::over_log_n(), GammaRule::inverse_n(), GammaRule::fixed(0.01), GammaRule::power_n(-0.5)}) {
    EXPECT_EQ(GammaRule::parse(r.label()).resolve(321), r.resolve(321)) << r.label();
  }
  EXPECT_EQ(GammaRule::over_log_n().label(), "0.01/log(n)");
  EXPECT_EQ(GammaRule::inverse_n().label(), "1/n");
  EXPECT_THROW(GammaRule::parse("abc"), Error);
  EXPECT_THROW(GammaRule::fixed(1.5).resolve(10), Error);
}

TEST(Config, Validation) {
  TestConfig c;
  c.grid = make_grid({{0, 1}}, {5});
  EXPECT_NO_THROW(c.validate());
  c.alpha = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c.alpha = 0.05;
  c.B = 1;
  EXPECT_THROW(c.validate(), Error);
  c.B = 10;
  c.kappa_override = -1.0;
  EXPECT_THROW(c.validate(), Error);
  c.kappa_override.reset();
  c.grid.reset();
  EXPECT_THROW(c.validate(), Error);
}

TEST(RunTest, DeepInteriorNullAccepts) {
  auto s = monotone_problem(400, 2.0, 0.01, 1);
  const auto rep = run_test(s.data, s.basis, s.config);
  EXPECT_FALSE(rep.reject);
  EXPECT_LE(rep.statistic, 1e-6);
  EXPECT_EQ(rep.psi_values.size(), 100u);
  EXPECT_EQ(rep.k_n, 7);
  EXPECT_EQ(rep.n, 400);
  EXPECT_NEAR(rep.r_n, std::sqrt(400.0 / 7.0), 1e-12);
  EXPECT_NEAR(rep.gamma, 0.01 / std::log(400.0), 1e-15);
  EXPECT_NEAR(rep.kappa_hat, rep.r_n * rep.c_n / rep.tau_hat, 1e-12);
}

TEST(RunTest, DecreasingTruthRejects) {
  auto s = monotone_problem(400, -2.0, 0.5, 2);
  const auto rep = run_test(s.data, s.basis, s.config);
  EXPECT_TRUE(rep.reject);
  EXPECT_GT(rep.statistic, rep.critical_value);
  EXPECT_EQ(rep.p_value, 0.0);
}

TEST(RunTest, DeterministicAndSeedSensitive) {
  auto s = monotone_problem(200, 0.0, 1.0, 3);
  const auto a = run_test(s.data, s.basis, s.config);
  const auto b = run_test(s.data, s.basis, s.config);
  EXPECT_EQ(a.statistic, b.statistic);
  EXPECT_EQ(a.critical_value, b.critical_value);
  EXPECT_EQ(a.psi_values, b.psi_values);
  EXPECT_EQ(a.tau_hat, b.tau_hat);
  s.config.seed = 99;
  EXPECT_NE(run_test(s.data, s.basis, s.config).psi_values, a.psi_values);
}

TEST(RunTest, PValueCoherentWithDecision) {
  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    auto s = monotone_problem(150, -0.3, 1.0, seed);
    s.config.seed = seed;
    const auto rep = run_test(s.data, s.basis, s.config);
    const int B = s.config.B;
    const int r = static_cast<int>(std::ceil(B * (1.0 - s.config.alpha) - 1e-9));
    EXPECT_EQ(rep.reject, rep.statistic > rep.critical_value);
    EXPECT_EQ(rep.reject, std::lround(rep.p_value * B) <= B - r) << "seed " << seed;
    EXPECT_GE(rep.p_value, 0.0);
    EXPECT_LE(rep.p_value, 1.0);
  }
}

TEST(RunTest, ScaleEquivarianceAtFixedKappa) {
  // The data-driven kappa is not scale free (r_n c_n / tau), so equivariance
  // of the statistic and each psi holds for a fixed kappa.
  auto s = monotone_problem(200, -0.2, 1.0, 4);
  for (double kappa : {0.0, 1.5}) {
    s.config.kappa_override = kappa;
    const auto base = run_test(s.data, s.basis, s.config);
    for (double c : {0.5, 2.0}) {
      sieve::Dataset scaled{c * s.data.y, s.data.z};
      const auto rep = run_test(scaled, s.basis, s.config);
      EXPECT_NEAR(rep.statistic, c * base.statistic, 1e-8 * std::max(1.0, base.statistic));
      for (std::size_t b = 0; b < rep.psi_values.size(); ++b) {
        EXPECT_NEAR(rep.psi_values[b], c * base.psi_values[b], 1e-7);
      }
      EXPECT_EQ(rep.reject, base.reject);
    }
  }
  s.config.kappa_override.reset();
  const auto base = run_test(s.data, s.basis, s.config);
  const auto rep = run_test({2.0 * s.data.y, s.data.z}, s.basis, s.config);
  EXPECT_NEAR(rep.tau_hat, 2.0 * base.tau_hat, 1e-9);
  EXPECT_NEAR(rep.kappa_hat, 0.5 * base.kappa_hat, 1e-9);
}

TEST(RunTest, DegenerateTauFallsBackToLeastFavorable) {
  auto s = monotone_problem(100, 1.0, 0.0, 5);
  s.data.y = s.data.z.col(0);  // exact fit, zero residuals
  const auto rep = run_test(s.data, s.basis, s.config);
  EXPECT_EQ(rep.kappa_hat, 0.0);
  EXPECT_NE(std::find(rep.flags.begin(), rep.flags.end(), "degenerate_tau"), rep.flags.end());
  EXPECT_FALSE(rep.reject);
}

TEST(RunTest, KappaOverrideIsFlagged) {
  auto s = monotone_problem(100, 1.0, 1.0, 6);
  s.config.kappa_override = 0.0;
  const auto rep = run_test(s.data, s.basis, s.config);
  EXPECT_EQ(rep.kappa_hat, 0.0);
  EXPECT_NE(std::find(rep.flags.begin(), rep.flags.end(), "kappa_override"), rep.flags.end());
}

TEST(RunEngine, CustomEstimate) {
  // A draw generator that ignores W except for its first entry.
  const auto g = make_grid({{0, 1}}, {3});
  const Estimate est{FunctionGrid(g, Eigen::Vector3d(0, 1, 2)), 4.0, 0.5, 3, 50,
                     [g](const Eigen::VectorXd& W) { return FunctionGrid(g, Eigen::Vector3d(W[0], 0, -W[0])); }};
  TestConfig cfg;
  cfg.grid = g;
  cfg.B = 50;
  const auto rep = run_engine(est, cfg);
  EXPECT_EQ(rep.statistic, 0.0);
  EXPECT_FALSE(rep.reject);
  EXPECT_EQ(rep.p_value, 1.0);
  EXPECT_GT(rep.tau_hat, 0.0);
  EXPECT_NEAR(rep.kappa_hat, 2.0 / rep.tau_hat, 1e-12);
}
