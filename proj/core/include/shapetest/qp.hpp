#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace shapetest::qp {

/// minimize 1/2 x'Px + q'x  subject to  Gx >= 0.
struct Problem {
  Eigen::MatrixXd P;  // k x k, symmetric positive semidefinite
  Eigen::VectorXd q;  // k
  Eigen::MatrixXd G;  // m x k, m may be zero
};

struct Settings {
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;  // over-relaxation
  int max_iter = 20000;
  bool scaling = true;
  int scaling_passes = 10;  // Ruiz equilibration passes
  /// Rebalance rho from the primal/dual residual ratio (refactorises when it
  /// moves by more than 5x). Every solve starts again from `rho`.
  bool adaptive_rho = true;
  int adapt_interval = 25;
  bool polish = true;
  int polish_rounds = 8;
  /// Polish is attempted early, once, when both residuals fall below this
  /// relative level, and again after ADMM stops.
  double polish_trigger = 1e-4;
};

enum class Status { Solved, MaxIterations, NumericalFailure };

const char* to_string(Status s) noexcept;

struct Solution {
  Eigen::VectorXd x;
  /// Multipliers mu >= 0 with Px + q - G'mu = 0 at optimality.
  Eigen::VectorXd multipliers;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  Status status = Status::NumericalFailure;
  bool polished = false;
};

double objective(const Problem& problem, const Eigen::VectorXd& x);

/// ADMM solver in the operator-splitting style on sparse internals: adaptive
/// penalty rho, over-relaxation alpha, one Ruiz equilibration pass plus cost
/// scaling, and an active-set polish that returns an exact KKT point.
///
/// A solver owns mutable workspace (scaled matrices and the sparse LDL'
/// factorisation of P + sigma I + rho G'G, reused while P and G are
/// unchanged), so use one instance per thread.
class Solver {
 public:
  explicit Solver(Settings settings = {});

  const Settings& settings() const noexcept { return settings_; }

  Solution solve(const Problem& problem);

  /// Identifies the active constraints, solves the equality-constrained KKT
  /// system exactly and keeps the result only when it is primal and dual
  /// feasible and does not worsen the objective. Otherwise returns `solution`.
  Solution polish(const Problem& problem, const Solution& solution) const;

 private:
  using Sparse = Eigen::SparseMatrix<double>;

  void check(const Problem& problem) const;
  void setup(const Problem& problem);
  bool factorize(double rho);

  Settings settings_;
  Eigen::VectorXd D_;  // variable scaling
  Eigen::VectorXd E_;  // constraint scaling
  double cost_scale_ = 1.0;
  Sparse P_;  // scaled
  Eigen::VectorXd q_;
  Sparse G_;
  Sparse Gt_;
  Sparse Psig_;  // P + sigma I; kept apart from G'G so rho can change
  Sparse GtG_;
  Eigen::SimplicialLDLT<Sparse> kkt_;
  double factored_rho_ = -1.0;
  Eigen::MatrixXd cached_P_;
  Eigen::MatrixXd cached_G_;
  bool ready_ = false;
};

/// One-shot helpers.
Solution solve(const Problem& problem, const Settings& settings = {});
Solution polish(const Problem& problem, const Solution& solution, const Settings& settings = {});

}  // namespace shapetest::qp
