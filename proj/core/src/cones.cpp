#include "shapetest/cones.hpp"

#include <sstream>

#include <Eigen/Eigenvalues>

#include "shapetest/error.hpp"
#include "shapetest/isotonic.hpp"

namespace shapetest::cones {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Dense Kuosmanen plans grow as k^3 (d + 1); refuse anything past ~160 MB.
constexpr double kMaxDenseEntries = 2e7;

using Rows = std::vector<Eigen::VectorXd>;

Eigen::MatrixXd stack(const Rows& rows, Eigen::Index k) {
  Eigen::MatrixXd A(static_cast<Eigen::Index>(rows.size()), k);
  for (std::size_t r = 0; r < rows.size(); ++r) A.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  return A;
}

void monotone_rows(const Monotone& m, const Grid& grid, Rows& rows) {
  if (static_cast<int>(m.directions.size()) != grid.dims()) {
    fail(ErrorCode::IncompatibleCone, "monotone cone has " + std::to_string(m.directions.size()) +
                                          " direction flags for a " + std::to_string(grid.dims()) +
                                          "-dimensional grid");
  }
  const auto k = static_cast<Eigen::Index>(grid.size());
  for (int dim = 0; dim < grid.dims(); ++dim) {
    const auto dir = m.directions[dim];
    if (dir == Direction::Free) continue;
    const double sign = dir == Direction::Increasing ? 1.0 : -1.0;
    const auto stride = static_cast<Eigen::Index>(grid.stride(dim));
    const int n = grid.count(dim);
    for (std::size_t p = 0; p < grid.size(); ++p) {
      if (grid.multi_index(p)[dim] != 0) continue;  // line start
      for (int t = 0; t + 1 < n; ++t) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(k);
        const auto a = static_cast<Eigen::Index>(p) + t * stride;
        row[a] = -sign;
        row[a + stride] = sign;
        rows.push_back(std::move(row));
      }
    }
  }
}

void second_difference_rows(const Grid& grid, double sign, Rows& rows) {
  if (grid.dims() != 1) fail(ErrorCode::IncompatibleCone, "1D convexity needs a one-dimensional grid");
  const auto k = static_cast<Eigen::Index>(grid.size());
  if (k < 3) return;
  for (Eigen::Index i = 0; i + 2 < k; ++i) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(k);
    row[i] = sign;
    row[i + 1] = -2.0 * sign;
    row[i + 2] = sign;
    rows.push_back(std::move(row));
  }
}

void supermodular_rows(const Grid& grid, Rows& rows) {
  if (grid.dims() < 2) fail(ErrorCode::IncompatibleCone, "supermodularity needs at least two dimensions");
  const auto k = static_cast<Eigen::Index>(grid.size());
  for (int p = 0; p < grid.dims(); ++p) {
    for (int q = p + 1; q < grid.dims(); ++q) {
      const auto sp = static_cast<Eigen::Index>(grid.stride(p));
      const auto sq = static_cast<Eigen::Index>(grid.stride(q));
      for (std::size_t flat = 0; flat < grid.size(); ++flat) {
        const auto mi = grid.multi_index(flat);
        if (mi[p] + 1 >= grid.count(p) || mi[q] + 1 >= grid.count(q)) continue;
        const auto base = static_cast<Eigen::Index>(flat);
        Eigen::VectorXd row = Eigen::VectorXd::Zero(k);
        row[base] += 1.0;
        row[base + sp] -= 1.0;
        row[base + sq] -= 1.0;
        row[base + sp + sq] += 1.0;
        rows.push_back(std::move(row));
      }
    }
  }
}

void linear_rows(const ConeSpec& cone, const Grid& grid, Rows& rows) {
  std::visit(Overloaded{
                 [&](const Monotone& m) { monotone_rows(m, grid, rows); },
                 [&](const Convex1D&) { second_difference_rows(grid, 1.0, rows); },
                 [&](const Concave1D&) { second_difference_rows(grid, -1.0, rows); },
                 [&](const Supermodular&) { supermodular_rows(grid, rows); },
                 [&](const Nonnegative& nn) {
                   if (!nn.as_constraints) {
                     fail(ErrorCode::UnsupportedIntersection, "closed-form nonnegativity inside an intersection");
                   }
                   const auto k = static_cast<Eigen::Index>(grid.size());
                   for (Eigen::Index i = 0; i < k; ++i) rows.push_back(Eigen::VectorXd::Unit(k, i));
                 },
                 [&](const Intersection& in) {
                   for (const auto& member : in.members) linear_rows(member, grid, rows);
                 },
                 [&](const auto&) {
                   fail(ErrorCode::UnsupportedIntersection, describe(cone) + " has no constraint-matrix form");
                 },
             },
             cone.kind);
}

KuosmanenQP kuosmanen_plan(const Grid& grid, bool concave, bool nondecreasing) {
  const auto k = static_cast<Eigen::Index>(grid.size());
  const int d = grid.dims();
  const Eigen::Index width = k * (d + 1);
  const double entries = static_cast<double>(k) * static_cast<double>(k - 1) * static_cast<double>(width);
  if (entries > kMaxDenseEntries) {
    std::ostringstream os;
    os << "grid with " << k << " points is too large for the dense affine-representation QP";
    fail(ErrorCode::InvalidArgument, os.str());
  }
  const Eigen::MatrixXd Z = grid.point_matrix();
  KuosmanenQP plan;
  plan.concave = concave;
  plan.S = Eigen::MatrixXd::Zero(k, width);
  for (Eigen::Index i = 0; i < k; ++i) {
    plan.S(i, i * (d + 1)) = 1.0;
    plan.S.block(i, i * (d + 1) + 1, 1, d) = Z.row(i);
  }
  const Eigen::Index slope_rows = nondecreasing ? k * d : 0;
  plan.C = Eigen::MatrixXd::Zero(k * (k - 1) + slope_rows, width);
  const double sign = concave ? 1.0 : -1.0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j) continue;
      // concave: (a_j + b_j'z_i) - (a_i + b_i'z_i) >= 0; convex flips the sign.
      plan.C(r, j * (d + 1)) += sign;
      plan.C.block(r, j * (d + 1) + 1, 1, d) += sign * Z.row(i);
      plan.C(r, i * (d + 1)) -= sign;
      plan.C.block(r, i * (d + 1) + 1, 1, d) -= sign * Z.row(i);
      ++r;
    }
  }
  for (Eigen::Index i = 0; i < k && nondecreasing; ++i) {
    for (int c = 0; c < d; ++c) plan.C(r++, i * (d + 1) + 1 + c) = 1.0;
  }
  return plan;
}

}  // namespace

bool ConeSpec::is_linear() const {
  return std::visit(Overloaded{
                        [](const Monotone&) { return true; },
                        [](const Convex1D&) { return true; },
                        [](const Concave1D&) { return true; },
                        [](const Supermodular&) { return true; },
                        [](const Nonnegative& nn) { return nn.as_constraints; },
                        [](const Intersection& in) {
                          for (const auto& m : in.members) {
                            if (!m.is_linear()) return false;
                          }
                          return true;
                        },
                        [](const auto&) { return false; },
                    },
                    kind);
}

ConeSpec ConeSpec::increasing(int dims) {
  return Monotone{std::vector<Direction>(static_cast<std::size_t>(dims), Direction::Increasing)};
}

ConeSpec ConeSpec::decreasing(int dims) {
  return Monotone{std::vector<Direction>(static_cast<std::size_t>(dims), Direction::Decreasing)};
}

std::string describe(const ConeSpec& cone) {
  return std::visit(Overloaded{
                        [](const Monotone& m) {
                          std::string s = "monotone(";
                          for (std::size_t i = 0; i < m.directions.size(); ++i) {
                            if (i) s += ",";
                            s += m.directions[i] == Direction::Increasing   ? "+"
                                 : m.directions[i] == Direction::Decreasing ? "-"
                                                                            : "free";
                          }
                          return s + ")";
                        },
                        [](const Convex1D&) { return std::string("convex"); },
                        [](const Concave1D&) { return std::string("concave"); },
                        [](const ConcaveMultivariate& c) {
                          return std::string(c.nondecreasing ? "monotone-concave-multi" : "concave-multi");
                        },
                        [](const ConvexMultivariate& c) {
                          return std::string(c.nondecreasing ? "monotone-convex-multi" : "convex-multi");
                        },
                        [](const Supermodular&) { return std::string("supermodular"); },
                        [](const Nonnegative&) { return std::string("nonneg"); },
                        [](const Slutsky& s) {
                          return std::string(s.enforce_symmetry ? "slutsky" : "slutsky-nsd");
                        },
                        [](const Intersection& in) {
                          std::string s = "intersection[";
                          for (std::size_t i = 0; i < in.members.size(); ++i) {
                            if (i) s += ",";
                            s += describe(in.members[i]);
                          }
                          return s + "]";
                        },
                    },
                    cone.kind);
}

ConeSpec intersect(const std::vector<ConeSpec>& cones) {
  Intersection out;
  for (const auto& c : cones) {
    if (!c.is_linear()) {
      fail(ErrorCode::UnsupportedIntersection, describe(c) + " cannot be intersected");
    }
    if (c.is<Intersection>()) {
      for (const auto& m : c.as<Intersection>().members) out.members.push_back(m);
    } else {
      out.members.push_back(c);
    }
  }
  if (cones.size() < 2 || out.members.size() < 2) {
    fail(ErrorCode::UnsupportedIntersection, "an intersection needs at least two cones");
  }
  return out;
}

Eigen::MatrixXd diff_matrix(int k) {
  if (k < 2) fail(ErrorCode::TooSmall, "difference matrix needs k >= 2");
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(k - 1, k);
  for (int i = 0; i + 1 < k; ++i) {
    D(i, i) = -1.0;
    D(i, i + 1) = 1.0;
  }
  return D;
}

Eigen::Index ProjectionPlan::constraint_count() const {
  return std::visit(Overloaded{
                        [](const LinearConstraints& lc) { return lc.A.rows(); },
                        [](const KuosmanenQP& kq) { return kq.C.rows(); },
                        [](const auto&) { return Eigen::Index{0}; },
                    },
                    kind);
}

ProjectionPlan build_plan(const ConeSpec& cone, const GridPtr& grid) {
  if (!grid) fail(ErrorCode::InvalidArgument, "plan without a grid");
  ProjectionPlan plan;
  plan.grid = grid;
  const auto k = static_cast<Eigen::Index>(grid->size());
  std::visit(Overloaded{
                 [&](const Nonnegative& nn) {
                   if (nn.as_constraints) {
                     plan.kind = LinearConstraints{Eigen::MatrixXd::Identity(k, k)};
                   } else {
                     plan.kind = ClosedFormNonneg{};
                   }
                 },
                 [&](const Slutsky& s) {
                   if (s.dq < 1) fail(ErrorCode::IncompatibleCone, "Slutsky cone needs dq >= 1");
                   plan.kind = ClosedFormSlutsky{s.dq, s.enforce_symmetry};
                 },
                 [&](const ConcaveMultivariate& c) { plan.kind = kuosmanen_plan(*grid, true, c.nondecreasing); },
                 [&](const ConvexMultivariate& c) { plan.kind = kuosmanen_plan(*grid, false, c.nondecreasing); },
                 [&](const Intersection& in) {
                   if (in.members.size() < 2) {
                     fail(ErrorCode::UnsupportedIntersection, "an intersection needs at least two cones");
                   }
                   Rows rows;
                   linear_rows(cone, *grid, rows);
                   plan.kind = LinearConstraints{stack(rows, k)};
                 },
                 [&](const auto&) {
                   Rows rows;
                   try {
                     linear_rows(cone, *grid, rows);
                   } catch (const Error& e) {
                     if (e.code() == ErrorCode::UnsupportedIntersection) {
                       fail(ErrorCode::IncompatibleCone, e.what());
                     }
                     throw;
                   }
                   plan.kind = LinearConstraints{stack(rows, k)};
                 },
             },
             cone.kind);
  return plan;
}

Eigen::MatrixXd project_nsd(const Eigen::MatrixXd& m, bool enforce_symmetry) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd clipped = es.eigenvalues().cwiseMin(0.0);
  Eigen::MatrixXd out = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
  out = 0.5 * (out + out.transpose());
  if (!enforce_symmetry) out += 0.5 * (m - m.transpose());
  return out;
}

namespace {

// Grid points sharing an affine piece make the multipliers of the
// affine-representation QP highly degenerate, and the active-set polish then
// cycles without certifying anything. The ADMM tolerance alone governs there,
// and the free slopes make its tail slow (roughly 5k iterations per decade on
// a 7x7 grid), hence the larger cap.
qp::Settings plan_settings(const ProjectionPlan& plan, qp::Settings settings) {
  if (std::holds_alternative<KuosmanenQP>(plan.kind)) {
    settings.polish = false;
    settings.max_iter *= 5;
  }
  return settings;
}

std::string solver_summary(const qp::Solution& s) {
  std::ostringstream os;
  os << "ended with status " << qp::to_string(s.status) << " after " << s.iterations
     << " iterations (primal residual " << s.primal_residual << ", dual residual " << s.dual_residual << ")";
  return os.str();
}

}  // namespace

Projector::Projector(ConeSpec cone, GridPtr grid, qp::Settings settings)
    : cone_(std::move(cone)),
      plan_(build_plan(cone_, grid)),
      solver_(plan_settings(plan_, settings)),
      weights_(plan_.grid->weights()) {
  build_problem();
}

void Projector::set_weights(const Eigen::VectorXd& weights) {
  if (weights.size() != weights_.size()) fail(ErrorCode::LengthMismatch, "one weight per grid point expected");
  if (!(weights.array() > 0.0).all()) fail(ErrorCode::NonpositiveWeight, "projection weights must be positive");
  weights_ = weights;
  build_problem();
}

void Projector::build_problem() {
  const auto& w = weights_;
  if (const auto* lc = std::get_if<LinearConstraints>(&plan_.kind)) {
    problem_.P = 2.0 * Eigen::MatrixXd(w.asDiagonal());
    problem_.G = lc->A;
  } else if (const auto* kq = std::get_if<KuosmanenQP>(&plan_.kind)) {
    // Solve in (theta_j, b_j) with a_j = theta_j - b_j'z_j: the objective is
    // then diagonal in the fitted values, which ADMM handles far better than
    // the coupled S'WS.
    const auto& grid = *plan_.grid;
    const int d = grid.dims();
    const auto k = static_cast<Eigen::Index>(grid.size());
    const Eigen::MatrixXd Z = grid.point_matrix();
    change_ = Eigen::MatrixXd::Identity(k * (d + 1), k * (d + 1));
    for (Eigen::Index j = 0; j < k; ++j) change_.block(j * (d + 1), j * (d + 1) + 1, 1, d) = -Z.row(j);
    const Eigen::MatrixXd ST = kq->S * change_;
    problem_.P = 2.0 * ST.transpose() * w.asDiagonal() * ST;
    problem_.P = 0.5 * (problem_.P + problem_.P.transpose());
    problem_.G = kq->C * change_;
    problem_.G = (problem_.G.array().abs() < 1e-14).select(0.0, problem_.G);
  }
}

FunctionGrid Projector::project(const FunctionGrid& f) {
  if (!(*f.grid() == *plan_.grid)) fail(ErrorCode::GridMismatch, "function grid differs from the plan grid");
  if (!f.all_finite()) fail(ErrorCode::InvalidArgument, "non-finite values passed to projection");

  if (const auto* sl = std::get_if<ClosedFormSlutsky>(&plan_.kind)) {
    if (f.block_dim() != sl->dq) {
      fail(ErrorCode::IncompatibleCone, "Slutsky cone with dq=" + std::to_string(sl->dq) +
                                            " applied to blocks of size " + std::to_string(f.block_dim()));
    }
    FunctionGrid out = f;
    for (std::size_t j = 0; j < f.points(); ++j) out.block(j) = project_nsd(f.block(j), sl->enforce_symmetry);
    return out;
  }
  if (f.is_matrix()) fail(ErrorCode::IncompatibleCone, describe(cone_) + " needs scalar values");

  if (std::holds_alternative<ClosedFormNonneg>(plan_.kind)) {
    return FunctionGrid(f.grid(), f.values().cwiseMax(0.0));
  }
  if (const auto* kq = std::get_if<KuosmanenQP>(&plan_.kind)) return project_kuosmanen(f, *kq);
  return project_linear(f, std::get<LinearConstraints>(plan_.kind));
}

FunctionGrid Projector::project_linear(const FunctionGrid& f, const LinearConstraints& lc) {
  const auto& w = weights_;
  if (use_pava_ && cone_.is<Monotone>() && plan_.grid->dims() == 1) {
    const auto dir = cone_.as<Monotone>().directions.front();
    if (dir == Direction::Free) return f;
    isotonic::Problem iso{f.values(), w,
                          dir == Direction::Increasing ? isotonic::Direction::Nondecreasing
                                                       : isotonic::Direction::Nonincreasing};
    return FunctionGrid(f.grid(), isotonic::pava(iso));
  }
  if (lc.A.rows() == 0) return f;
  problem_.q = -2.0 * w.cwiseProduct(f.values());
  last_ = solver_.solve(problem_);
  if (last_.status != qp::Status::Solved) {
    fail(ErrorCode::SolverFailure, "projection QP " + solver_summary(last_));
  }
  return FunctionGrid(f.grid(), last_.x);
}

FunctionGrid Projector::project_kuosmanen(const FunctionGrid& f, const KuosmanenQP& kq) {
  const auto& grid = *plan_.grid;
  const auto& w = weights_;
  const int d = grid.dims();
  const auto k = static_cast<Eigen::Index>(grid.size());
  problem_.q = -2.0 * change_.transpose() * (kq.S.transpose() * w.cwiseProduct(f.values()));
  last_ = solver_.solve(problem_);
  last_.x = change_ * last_.x;
  if (last_.status != qp::Status::Solved) {
    fail(ErrorCode::SolverFailure, "affine-representation QP " + solver_summary(last_));
  }
  pieces_.resize(k, d + 1);
  for (Eigen::Index j = 0; j < k; ++j) pieces_.row(j) = last_.x.segment(j * (d + 1), d + 1).transpose();
  // Evaluate z -> min_j (a_j + z'b_j) (concave) or max_j (convex).
  const Eigen::MatrixXd Z = grid.point_matrix();
  const Eigen::MatrixXd affine =
      Z * pieces_.rightCols(d).transpose() + Eigen::VectorXd::Ones(k) * pieces_.col(0).transpose();
  Eigen::VectorXd out(k);
  for (Eigen::Index i = 0; i < k; ++i) out[i] = kq.concave ? affine.row(i).minCoeff() : affine.row(i).maxCoeff();
  return FunctionGrid(f.grid(), std::move(out));
}

FunctionGrid project(const ConeSpec& cone, const FunctionGrid& f, const qp::Settings& settings) {
  Projector projector(cone, f.grid(), settings);
  return projector.project(f);
}

}  // namespace shapetest::cones
