#include <random>

#include <gtest/gtest.h>

#include "cone_properties.hpp"
#include "oracles.hpp"
#include "shapetest/cones.hpp"
#include "shapetest/error.hpp"
#include "shapetest/isotonic.hpp"

using namespace shapetest;
using namespace shapetest::cones;

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

FunctionGrid on(const GridPtr& g, std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double a : v) x[i++] = a;
  return FunctionGrid(g, x);
}

}  // namespace

TEST(DiffMatrix, Examples) {
  Eigen::Vector3d v(1, 3, 2);
  EXPECT_TRUE((diff_matrix(3) * v).isApprox(Eigen::Vector2d(2, -1)));
  Eigen::MatrixXd d2(1, 2);
  d2 << -1, 1;
  EXPECT_EQ(diff_matrix(2), d2);
  EXPECT_TRUE((diff_matrix(4) * Eigen::Vector4d::Constant(7)).isZero());
  EXPECT_EQ(code_of([] { diff_matrix(1); }), ErrorCode::TooSmall);
}

TEST(BuildPlan, MonotoneOneDimensionIsTheDifferenceMatrix) {
  const auto plan = build_plan(ConeSpec::increasing(1), make_grid({{0, 1}}, {3}));
  ASSERT_TRUE(std::holds_alternative<LinearConstraints>(plan.kind));
  EXPECT_EQ(std::get<LinearConstraints>(plan.kind).A, diff_matrix(3));
  EXPECT_EQ(plan.constraint_count(), 2);
}

TEST(BuildPlan, MonotoneTwoDimensionsCountsAndOrder) {
  const auto g = make_grid({{0, 1}, {0, 1}}, {3, 3});
  const auto plan = build_plan(ConeSpec::increasing(2), g);
  const auto& A = std::get<LinearConstraints>(plan.kind).A;
  EXPECT_EQ(A.rows(), 12);
  // Dimension 0 first: the line starting at flat 0 runs 0 -> 3 -> 6.
  EXPECT_EQ(A(0, 0), -1.0);
  EXPECT_EQ(A(0, 3), 1.0);
  EXPECT_EQ(A(1, 3), -1.0);
  EXPECT_EQ(A(1, 6), 1.0);
  // Dimension 1 block starts at row 6 with the line 0 -> 1 -> 2.
  EXPECT_EQ(A(6, 0), -1.0);
  EXPECT_EQ(A(6, 1), 1.0);
}

TEST(BuildPlan, DecreasingAndFreeDirections) {
  const auto g = make_grid({{0, 1}, {0, 1}}, {3, 4});
  const auto plan = build_plan(Monotone{{Direction::Decreasing, Direction::Free}}, g);
  const auto& A = std::get<LinearConstraints>(plan.kind).A;
  EXPECT_EQ(A.rows(), 2 * 4);
  EXPECT_EQ(A(0, 0), 1.0);
  EXPECT_EQ(A(0, 4), -1.0);
}

TEST(BuildPlan, ConcaveMultivariateOnNinePoints) {
  const auto plan = build_plan(ConcaveMultivariate{}, make_grid({{0, 1}, {0, 1}}, {3, 3}));
  ASSERT_TRUE(std::holds_alternative<KuosmanenQP>(plan.kind));
  const auto& kq = std::get<KuosmanenQP>(plan.kind);
  EXPECT_EQ(kq.C.rows(), 72);
  EXPECT_EQ(kq.C.cols(), 27);
  EXPECT_EQ(kq.S.rows(), 9);
}

TEST(BuildPlan, ConvexSecondDifferences) {
  const auto plan = build_plan(Convex1D{}, make_grid({{0, 1}}, {5}));
  const auto& A = std::get<LinearConstraints>(plan.kind).A;
  ASSERT_EQ(A.rows(), 3);
  EXPECT_EQ(A(0, 0), 1.0);
  EXPECT_EQ(A(0, 1), -2.0);
  EXPECT_EQ(A(0, 2), 1.0);
  const auto concave = build_plan(Concave1D{}, make_grid({{0, 1}}, {5}));
  EXPECT_EQ(std::get<LinearConstraints>(concave.kind).A, -A);
}

TEST(BuildPlan, SupermodularPairs) {
  const auto g = make_grid({{0, 1}, {0, 1}, {0, 1}}, {3, 3, 3});
  const auto plan = build_plan(Supermodular{}, g);
  // 3 pairs x 2 x 2 squares x 3 slices.
  EXPECT_EQ(plan.constraint_count(), 36);
}

TEST(BuildPlan, IncompatibleCones) {
  EXPECT_EQ(code_of([] { build_plan(Convex1D{}, make_grid({{0, 1}, {0, 1}}, {3, 3})); }),
            ErrorCode::IncompatibleCone);
  EXPECT_EQ(code_of([] { build_plan(ConeSpec::increasing(2), make_grid({{0, 1}}, {3})); }),
            ErrorCode::IncompatibleCone);
  EXPECT_EQ(code_of([] { build_plan(Supermodular{}, make_grid({{0, 1}}, {3})); }), ErrorCode::IncompatibleCone);
}

TEST(Intersect, Rules) {
  const auto joint = intersect({ConeSpec::increasing(1), Convex1D{}});
  ASSERT_TRUE(joint.is<Intersection>());
  EXPECT_EQ(joint.as<Intersection>().members.size(), 2u);
  EXPECT_EQ(code_of([] { intersect({ConeSpec::increasing(1)}); }), ErrorCode::UnsupportedIntersection);
  EXPECT_EQ(code_of([] { intersect({ConeSpec::increasing(1), Nonnegative{}}); }),
            ErrorCode::UnsupportedIntersection);
  // Flattening.
  const auto triple = intersect({joint, Nonnegative{true}});
  EXPECT_EQ(triple.as<Intersection>().members.size(), 3u);
  const auto plan = build_plan(joint, make_grid({{0, 1}}, {5}));
  EXPECT_EQ(plan.constraint_count(), 4 + 3);
}

TEST(Project, Examples) {
  const auto g2 = make_grid({{0, 1}}, {2});
  EXPECT_TRUE(project(Nonnegative{}, on(g2, {-1, 0.5})).values().isApprox(Eigen::Vector2d(0, 0.5)));

  const auto g3 = make_grid({{0, 1}}, {3});
  Projector mono(ConeSpec::increasing(1), g3);
  mono.set_weights(Eigen::VectorXd::Ones(3));
  EXPECT_LE((mono.project(on(g3, {3, 1, 2})).values() - Eigen::Vector3d(2, 2, 2)).lpNorm<Eigen::Infinity>(), 1e-12);
  mono.set_use_pava(false);
  EXPECT_LE((mono.project(on(g3, {3, 1, 2})).values() - Eigen::Vector3d(2, 2, 2)).lpNorm<Eigen::Infinity>(), 1e-12);

  Eigen::VectorXd m(8);
  m << 1, 0, 0, -2, 1, 0, 0, -2;
  const auto pm = project(Slutsky{2, true}, FunctionGrid(g2, m, 2));
  Eigen::VectorXd expect(8);
  expect << 0, 0, 0, -2, 0, 0, 0, -2;
  EXPECT_LE((pm.values() - expect).lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(Project, TrapezoidWeightsAreTheDefault) {
  // End weights are half the interior ones, so pooling {3, 1} gives (0.25*3 + 0.5*1)/0.75.
  const auto g3 = make_grid({{0, 1}}, {3});
  const auto h = project(ConeSpec::increasing(1), on(g3, {3, 1, 2}));
  EXPECT_NEAR(h[0], 5.0 / 3.0, 1e-12);
  EXPECT_NEAR(h[1], 5.0 / 3.0, 1e-12);
  EXPECT_NEAR(h[2], 2.0, 1e-12);
}

TEST(Project, SlutskyWithoutSymmetryKeepsAntisymmetricPart) {
  const auto g = make_grid({{0, 1}}, {2});
  Eigen::VectorXd m(8);
  m << -1, 3, 1, -1, -1, 3, 1, -1;
  const auto p = project(Slutsky{2, false}, FunctionGrid(g, m, 2));
  const Eigen::MatrixXd b = p.block(0);
  EXPECT_NEAR(b(0, 1) - b(1, 0), 2.0, 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (b + b.transpose()));
  EXPECT_LE(es.eigenvalues().maxCoeff(), 1e-12);
}

TEST(Project, Errors) {
  const auto g = make_grid({{0, 1}}, {3});
  const auto other = make_grid({{0, 2}}, {3});
  Projector p(ConeSpec::increasing(1), g);
  EXPECT_EQ(code_of([&] { p.project(FunctionGrid::zeros(other)); }), ErrorCode::GridMismatch);
  EXPECT_EQ(code_of([&] { project(Slutsky{2}, FunctionGrid::zeros(g)); }), ErrorCode::IncompatibleCone);
  EXPECT_EQ(code_of([&] { project(Slutsky{3}, FunctionGrid::zeros(g, 2)); }), ErrorCode::IncompatibleCone);
}

TEST(Project, PavaPathAgreesWithQpPath) {
  std::mt19937_64 rng(21);
  const auto g = make_grid({{0, 1}}, {25});
  Projector fast(ConeSpec::increasing(1), g);
  Projector slow(ConeSpec::increasing(1), g);
  slow.set_use_pava(false);
  for (int t = 0; t < 50; ++t) {
    const auto f = props::random_grid(g, 1, rng);
    EXPECT_LE((fast.project(f).values() - slow.project(f).values()).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST(Project, KuosmanenMatchesBruteForceOnTinyGrid) {
  const auto g = make_grid({{0, 1}, {0, 1}}, {2, 2});
  std::mt19937_64 rng(4);
  Projector p(ConcaveMultivariate{}, g);
  const auto& kq = std::get<KuosmanenQP>(p.plan().kind);
  for (int t = 0; t < 5; ++t) {
    const auto f = props::random_grid(g, 1, rng);
    const auto h = p.project(f);
    // Reference: the same QP in fitted-value space, solved by exhaustive
    // active sets on a slightly regularised objective.
    const Eigen::VectorXd& w = g->weights();
    Eigen::MatrixXd P = 2.0 * kq.S.transpose() * w.asDiagonal() * kq.S;
    P.diagonal().array() += 1e-9;
    const Eigen::VectorXd q = -2.0 * kq.S.transpose() * w.cwiseProduct(f.values());
    const Eigen::VectorXd u = oracle::brute_force_qp(P, q, kq.C);
    ASSERT_GT(u.size(), 0);
    EXPECT_LE((kq.S * u - h.values()).lpNorm<Eigen::Infinity>(), 1e-5);
  }
}

TEST(Project, KuosmanenPiecesEvaluateAsMinimum) {
  const auto g = make_grid({{0, 1}, {0, 1}}, {3, 3});
  // A concave function is its own projection.
  const auto f = FunctionGrid::from_function(g, [](const Eigen::VectorXd& z) { return -(z[0] - 0.4) * (z[0] - 0.4) - z[1] * z[1]; });
  Projector p(ConcaveMultivariate{}, g);
  EXPECT_LE((p.project(f).values() - f.values()).lpNorm<Eigen::Infinity>(), 1e-6);
  EXPECT_EQ(p.affine_pieces().rows(), 9);
}

TEST(Project, DenseKuosmanenSizeLimit) {
  EXPECT_THROW(build_plan(ConcaveMultivariate{}, make_grid({{0, 1}, {0, 1}}, {17, 17})), Error);
}

struct ConeCase {
  std::string name;
  ConeSpec cone;
  GridPtr grid;
  int block;
};

class ConeProperties : public ::testing::TestWithParam<int> {};

std::vector<ConeCase> cone_cases() {
  const auto g1 = make_grid({{-1, 1}}, {15});
  const auto g2 = make_grid({{0, 1}, {0, 2}}, {5, 4});
  const auto g2s = make_grid({{0, 1}, {0, 1}}, {4, 4});
  return {
      {"increasing", ConeSpec::increasing(1), g1, 1},
      {"decreasing", ConeSpec::decreasing(1), g1, 1},
      {"increasing2d", ConeSpec::increasing(2), g2, 1},
      {"convex", Convex1D{}, g1, 1},
      {"concave", Concave1D{}, g1, 1},
      {"monotone_convex", intersect({ConeSpec::increasing(1), Convex1D{}}), g1, 1},
      {"concave_multi", ConcaveMultivariate{}, g2s, 1},
      {"convex_multi_increasing", ConvexMultivariate{true}, g2s, 1},
      {"supermodular", Supermodular{}, g2, 1},
      {"nonneg", Nonnegative{}, g2, 1},
      {"nonneg_rows_and_increasing", intersect({Nonnegative{true}, ConeSpec::increasing(1)}), g1, 1},
      {"slutsky", Slutsky{2, true}, g1, 2},
      {"slutsky3", Slutsky{3, true}, g1, 3},
      {"slutsky_nsd", Slutsky{2, false}, g1, 2},
  };
}

TEST_P(ConeProperties, Hold) {
  const auto c = cone_cases()[static_cast<std::size_t>(GetParam())];
  const auto rep = props::check_projection(c.cone, c.grid, c.block, 5, 100, 1000 + GetParam());
  EXPECT_TRUE(rep.ok()) << c.name << "\n" << rep.str();
}

INSTANTIATE_TEST_SUITE_P(AllCones, ConeProperties, ::testing::Range(0, 14));
