#pragma once

#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "shapetest/grid.hpp"
#include "shapetest/qp.hpp"

namespace shapetest::cones {

enum class Direction { Increasing, Decreasing, Free };

/// Monotone along every dimension whose flag is not Free.
struct Monotone {
  std::vector<Direction> directions;
};
struct Convex1D {};
struct Concave1D {};
/// Multivariate concavity via per-point affine minorants; `nondecreasing`
/// adds the slope constraints b_j >= 0 for the joint monotone-concave cone.
struct ConcaveMultivariate {
  bool nondecreasing = false;
};
struct ConvexMultivariate {
  bool nondecreasing = false;
};
/// Pairwise supermodularity for every pair of coordinates.
struct Supermodular {};
/// Pointwise nonnegativity. Projected in closed form unless `as_constraints`
/// is set, in which case it contributes identity rows and may be intersected.
struct Nonnegative {
  bool as_constraints = false;
};
/// Negative semidefinite (and, by default, symmetric) square-matrix values.
struct Slutsky {
  int dq = 2;
  bool enforce_symmetry = true;
};

struct ConeSpec;
struct Intersection {
  std::vector<ConeSpec> members;
};

struct ConeSpec {
  using Variant = std::variant<Monotone, Convex1D, Concave1D, ConcaveMultivariate, ConvexMultivariate,
                               Supermodular, Nonnegative, Slutsky, Intersection>;
  Variant kind;

  template <class T>
  ConeSpec(T value) : kind(std::move(value)) {}  // NOLINT(google-explicit-constructor)

  template <class T>
  bool is() const noexcept {
    return std::holds_alternative<T>(kind);
  }
  template <class T>
  const T& as() const {
    return std::get<T>(kind);
  }

  /// True when the cone is described by a constraint matrix Ah >= 0 and may
  /// therefore appear inside an Intersection.
  bool is_linear() const;

  static ConeSpec increasing(int dims = 1);
  static ConeSpec decreasing(int dims = 1);
};

std::string describe(const ConeSpec& cone);

/// Errors: UnsupportedIntersection with fewer than two members or with a
/// member that is not linear-constraint representable.
ConeSpec intersect(const std::vector<ConeSpec>& cones);

/// (k-1) x k first-difference matrix. Errors: TooSmall if k < 2.
Eigen::MatrixXd diff_matrix(int k);

struct LinearConstraints {
  Eigen::MatrixXd A;  // m x k, feasible set {h : A h >= 0}
};
struct ClosedFormNonneg {};
struct ClosedFormSlutsky {
  int dq = 2;
  bool enforce_symmetry = true;
};
/// Decision vector u stacks (a_j, b_j) per grid point: u = [a_1, b_1', ..., a_k, b_k'].
struct KuosmanenQP {
  Eigen::MatrixXd S;  // k x k(d+1), fitted values a_i + b_i'z_i
  Eigen::MatrixXd C;  // constraints C u >= 0
  bool concave = true;
};

struct ProjectionPlan {
  std::variant<LinearConstraints, ClosedFormNonneg, ClosedFormSlutsky, KuosmanenQP> kind;
  GridPtr grid;

  /// Number of inequality rows (0 for closed forms).
  Eigen::Index constraint_count() const;
};

/// Constraint rows for monotone cones are ordered dimension-major, then by
/// grid line (in flat order of the line's first point), then along the line.
///
/// Errors: IncompatibleCone, UnsupportedIntersection.
ProjectionPlan build_plan(const ConeSpec& cone, const GridPtr& grid);

/// Weighted-L2 projection onto the discretised cone with a cached plan.
///
/// Holds the QP workspace, so the factorisation of the projection QP is built
/// once and reused across calls. Not thread-safe; use one per thread.
class Projector {
 public:
  Projector(ConeSpec cone, GridPtr grid, qp::Settings settings = {});

  const ConeSpec& cone() const noexcept { return cone_; }
  const ProjectionPlan& plan() const noexcept { return plan_; }
  const GridPtr& grid() const noexcept { return plan_.grid; }

  /// Route 1D monotone projections through PAVA (exact, O(k)). On by default;
  /// disable to force the QP path.
  void set_use_pava(bool on) noexcept { use_pava_ = on; }

  /// Replaces the trapezoid weights in the projection objective (closed-form
  /// cones are pointwise and ignore them). Errors: LengthMismatch, NonpositiveWeight.
  void set_weights(const Eigen::VectorXd& weights);
  const Eigen::VectorXd& weights() const noexcept { return weights_; }

  /// Errors: GridMismatch, IncompatibleCone, SolverFailure.
  FunctionGrid project(const FunctionGrid& f);

  /// Kuosmanen plans only: the affine pieces (a_j, b_j) from the last projection.
  const Eigen::MatrixXd& affine_pieces() const noexcept { return pieces_; }

  /// Status of the last QP solve.
  const qp::Solution& last_solution() const noexcept { return last_; }

 private:
  FunctionGrid project_linear(const FunctionGrid& f, const LinearConstraints& lc);
  FunctionGrid project_kuosmanen(const FunctionGrid& f, const KuosmanenQP& kq);
  void build_problem();

  ConeSpec cone_;
  ProjectionPlan plan_;
  qp::Solver solver_;
  Eigen::VectorXd weights_;
  qp::Problem problem_;
  Eigen::MatrixXd change_;  // Kuosmanen: u = change_ * v with v = (theta_j, b_j) per point
  bool use_pava_ = true;
  Eigen::MatrixXd pieces_;
  qp::Solution last_;
};

/// One-shot projection.
FunctionGrid project(const ConeSpec& cone, const FunctionGrid& f, const qp::Settings& settings = {});

/// Closed-form projection of a square matrix onto the nsd (optionally also
/// symmetric) cone in the Frobenius norm.
Eigen::MatrixXd project_nsd(const Eigen::MatrixXd& m, bool enforce_symmetry = true);

}  // namespace shapetest::cones
