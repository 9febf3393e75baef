#include <cmath>
#include <random>

#include <Eigen/SVD>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "shapetest/error.hpp"
#include "shapetest/sieve.hpp"

using namespace shapetest;
using namespace shapetest::sieve;

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

Eigen::MatrixXd uniform_matrix(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng, double lo = 0.0,
                               double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(n, d);
  for (auto& x : m.reshaped()) x = u(rng);
  return m;
}

}  // namespace

TEST(Knots, QuantileExample) {
  const Eigen::Vector4d col(4, 1, 3, 2);
  const auto t = knots_from_quantiles(col, 1, 4);
  Eigen::VectorXd expect(9);
  expect << 1, 1, 1, 1, 2, 4, 4, 4, 4;
  EXPECT_EQ(t, expect);
}

TEST(Knots, Errors) {
  EXPECT_EQ(code_of([] { knots_from_quantiles(Eigen::VectorXd::Constant(5, 2.0), 1, 4); }),
            ErrorCode::DegenerateColumn);
  // Median of {0,0,0,1} is the lower endpoint.
  EXPECT_EQ(code_of([] { knots_from_quantiles(Eigen::Vector4d(0, 0, 0, 1), 1, 4); }), ErrorCode::DegenerateColumn);
  EXPECT_EQ(code_of([] { knots_from_quantiles(Eigen::Vector2d(0, 1), 3, 4); }), ErrorCode::InvalidArgument);
}

TEST(Basis, Dimensions) {
  std::mt19937_64 rng(3);
  const auto z1 = uniform_matrix(200, 1, rng);
  EXPECT_EQ(SieveBasis::from_data(z1, {3}, {4}).size(), 7);
  const auto z2 = uniform_matrix(200, 2, rng);
  EXPECT_EQ(SieveBasis::from_data(z2, {0, 0}, {3, 3}).size(), 9);
  EXPECT_EQ(SieveBasis::from_data(z2, {1, 2}, {4, 3}).size(), 5 * 5);
}

TEST(Basis, MatchesRecursiveDefinition) {
  std::mt19937_64 rng(5);
  const auto z = uniform_matrix(300, 1, rng, -1.0, 2.0);
  for (int order : {2, 3, 4}) {
    const auto basis = SieveBasis::from_data(z, {4}, {order});
    const auto& t = basis.axis(0).knots;
    const double lo = basis.axis(0).lo(), hi = basis.axis(0).hi();
    for (double x : {lo, -0.3, 0.0, 0.77, 1.5, hi}) {
      const auto h = basis.eval(Eigen::VectorXd::Constant(1, x));
      for (int i = 0; i < basis.size(); ++i) {
        EXPECT_NEAR(h[i], oracle::bspline(t, i, order, x), 1e-12) << "order " << order << " x " << x;
      }
    }
  }
}

TEST(Basis, PartitionOfUnityAndClampedEnds) {
  std::mt19937_64 rng(8);
  const auto z = uniform_matrix(500, 2, rng);
  const auto basis = SieveBasis::from_data(z, {3, 2}, {4, 3});
  const double lo0 = basis.axis(0).lo(), hi0 = basis.axis(0).hi();
  const double lo1 = basis.axis(1).lo(), hi1 = basis.axis(1).hi();
  std::uniform_real_distribution<double> u0(lo0, hi0), u1(lo1, hi1);
  for (int t = 0; t < 200; ++t) {
    const Eigen::Vector2d x(u0(rng), u1(rng));
    const auto h = basis.eval(x);
    EXPECT_NEAR(h.sum(), 1.0, 1e-10);
    EXPECT_GE(h.minCoeff(), -1e-14);
  }
  const auto at_lo = basis.eval(Eigen::Vector2d(lo0, lo1));
  EXPECT_NEAR(at_lo[0], 1.0, 1e-12);
  const auto at_hi = basis.eval(Eigen::Vector2d(hi0, hi1));
  EXPECT_NEAR(at_hi[basis.size() - 1], 1.0, 1e-12);
}

TEST(Basis, DerivativeMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  const auto z = uniform_matrix(400, 2, rng);
  const auto basis = SieveBasis::from_data(z, {2, 3}, {4, 4});
  const double eps = 1e-6;
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int t = 0; t < 50; ++t) {
    const Eigen::Vector2d x(u(rng), u(rng));
    for (int dim = 0; dim < 2; ++dim) {
      Eigen::Vector2d xp = x, xm = x;
      xp[dim] += eps;
      xm[dim] -= eps;
      const Eigen::VectorXd fd = (basis.eval(xp) - basis.eval(xm)) / (2 * eps);
      EXPECT_LE((basis.eval_derivative(x, dim) - fd).lpNorm<Eigen::Infinity>(), 1e-6);
    }
  }
}

TEST(Basis, OutOfRangeAndDesignShape) {
  std::mt19937_64 rng(2);
  const auto z = uniform_matrix(50, 1, rng);
  const auto basis = SieveBasis::from_data(z, {1}, {4});
  EXPECT_EQ(code_of([&] { basis.eval(Eigen::VectorXd::Constant(1, basis.axis(0).hi() + 1e-6)); }),
            ErrorCode::OutOfRange);
  EXPECT_NO_THROW(basis.eval(Eigen::VectorXd::Constant(1, basis.axis(0).hi() + 1e-13)));
  const auto X = basis.design(z);
  EXPECT_EQ(X.rows(), 50);
  EXPECT_EQ(X.cols(), 5);
  const auto lin = SieveBasis::from_data(z, {1}, {1});
  EXPECT_EQ(code_of([&] { lin.eval_derivative(Eigen::VectorXd::Constant(1, 0.5), 0); }),
            ErrorCode::InvalidArgument);
}

TEST(Fit, ConstantAndLinearAreReproduced) {
  std::mt19937_64 rng(13);
  const auto z = uniform_matrix(100, 1, rng);
  const auto basis = SieveBasis::from_data(z, {3}, {4});
  const auto grid = make_grid({{0.2, 0.8}}, {7});

  const auto c = fit({Eigen::VectorXd::Constant(100, 3.5), z}, basis);
  EXPECT_LE((eval_fit(c, grid).values().array() - 3.5).abs().maxCoeff(), 1e-10);
  EXPECT_LE(c.residuals().lpNorm<Eigen::Infinity>(), 1e-10);

  const auto l = fit({z.col(0), z}, basis);
  const auto vals = eval_fit(l, grid);
  for (std::size_t j = 0; j < grid->size(); ++j) EXPECT_NEAR(vals[j], grid->point(j)[0], 1e-10);
  EXPECT_EQ(l.k_n(), 7);
  EXPECT_NEAR(l.r_n(), std::sqrt(100.0 / 7.0), 1e-14);
  EXPECT_NEAR(l.c_n(), 1.0 / std::log(100.0), 1e-14);
}

TEST(Fit, ResidualsAreOrthogonalToRegressors) {
  std::mt19937_64 rng(17);
  const auto z = uniform_matrix(300, 2, rng);
  std::normal_distribution<double> nd;
  Eigen::VectorXd y(300);
  for (Eigen::Index i = 0; i < 300; ++i) y[i] = std::sin(3 * z(i, 0)) * z(i, 1) + nd(rng);
  Eigen::MatrixXd L(300, 1);
  for (auto& x : L.reshaped()) x = nd(rng);
  const auto basis = SieveBasis::from_data(z, {1, 1}, {3, 3});
  const auto f = fit({y, z}, basis, L);
  EXPECT_EQ(f.design().cols(), basis.size() + 1);
  EXPECT_EQ(f.linear_coef().size(), 1);
  EXPECT_LE((f.design().transpose() * f.residuals()).lpNorm<Eigen::Infinity>(), 1e-9);
  EXPECT_EQ(f.rank(), basis.size() + 1);
}

TEST(Fit, Errors) {
  std::mt19937_64 rng(1);
  const auto z = uniform_matrix(20, 1, rng);
  const auto basis = SieveBasis::from_data(z, {1}, {4});
  EXPECT_EQ(code_of([&] { fit({Eigen::VectorXd(0), Eigen::MatrixXd(0, 1)}, basis); }), ErrorCode::EmptyData);
  EXPECT_EQ(code_of([&] { fit({Eigen::VectorXd::Zero(19), z}, basis); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([&] { fit({Eigen::VectorXd::Zero(20), uniform_matrix(20, 2, rng)}, basis); }),
            ErrorCode::DimensionMismatch);
}

TEST(Bootstrap, MatchesDirectFormula) {
  std::mt19937_64 rng(19);
  const Eigen::Index n = 150;
  const auto z = uniform_matrix(n, 1, rng);
  std::normal_distribution<double> nd;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = z(i, 0) * z(i, 0) + nd(rng);
  const auto basis = SieveBasis::from_data(z, {2}, {4});
  const auto f = fit({y, z}, basis);
  const auto grid = make_grid({{0.1, 0.9}}, {9});
  const auto W = draw_weights(WeightLaw::StandardNormal, n, rng);

  // r_n * h(z)' (X'X)^{-1} X' diag(u) W via an independent SVD solve.
  const Eigen::MatrixXd X = basis.design(z);
  const Eigen::VectorXd score = W.cwiseProduct(f.residuals());
  const Eigen::VectorXd coef = X.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(score);
  const double rn = std::sqrt(static_cast<double>(n) / basis.size());
  const auto draw = bootstrap_draw(f, W, grid);
  for (std::size_t j = 0; j < grid->size(); ++j) {
    EXPECT_NEAR(draw[j], rn * basis.eval(grid->point(j)).dot(coef), 1e-9);
  }
  ScoreBootstrap sb(f, grid);
  EXPECT_LE((sb.draw(W).values() - draw.values()).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Bootstrap, LinearInWeightsAndDegenerateCases) {
  std::mt19937_64 rng(23);
  const Eigen::Index n = 80;
  const auto z = uniform_matrix(n, 1, rng);
  std::normal_distribution<double> nd;
  Eigen::VectorXd y(n);
  for (auto& v : y) v = nd(rng);
  const auto basis = SieveBasis::from_data(z, {1}, {4});
  const auto grid = make_grid({{0.1, 0.9}}, {5});
  const auto f = fit({y, z}, basis);
  ScoreBootstrap sb(f, grid);
  const auto W1 = draw_weights(WeightLaw::Rademacher, n, rng);
  const auto W2 = draw_weights(WeightLaw::Mammen, n, rng);
  const Eigen::VectorXd combo = 2.0 * W1 - 0.5 * W2;
  EXPECT_LE((sb.draw(combo).values() - (2.0 * sb.draw(W1).values() - 0.5 * sb.draw(W2).values()))
                .lpNorm<Eigen::Infinity>(),
            1e-12);
  EXPECT_TRUE(sb.draw(Eigen::VectorXd::Zero(n)).values().isZero());
  EXPECT_EQ(code_of([&] { sb.draw(Eigen::VectorXd::Zero(n - 1)); }), ErrorCode::LengthMismatch);

  const auto exact = fit({z.col(0), z}, basis);
  EXPECT_LE(bootstrap_draw(exact, W1, grid).values().lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(Weights, LawsHaveUnitVarianceAndSupport) {
  std::mt19937_64 rng(29);
  const Eigen::Index n = 200000;
  for (auto law : {WeightLaw::StandardNormal, WeightLaw::Rademacher, WeightLaw::Mammen}) {
    const auto w = draw_weights(law, n, rng);
    const double mean = w.mean();
    const double var = (w.array() - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 0.01);
    EXPECT_NEAR(var, 1.0, 0.02);
  }
  const auto r = draw_weights(WeightLaw::Rademacher, 100, rng);
  EXPECT_TRUE((r.array().abs() == 1.0).all());
  const auto m = draw_weights(WeightLaw::Mammen, 100, rng);
  const double a = (1.0 - std::sqrt(5.0)) / 2.0, b = (1.0 + std::sqrt(5.0)) / 2.0;
  for (double v : m) EXPECT_TRUE(v == a || v == b);
  const auto m3 = draw_weights(WeightLaw::Mammen, n, rng);
  EXPECT_NEAR(m3.array().cube().mean(), 1.0, 0.05);
}

TEST(Weights, Deterministic) {
  std::mt19937_64 a(7), b(7);
  EXPECT_EQ(draw_weights(WeightLaw::StandardNormal, 10, a), draw_weights(WeightLaw::StandardNormal, 10, b));
}
