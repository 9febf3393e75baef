#pragma once

#include <vector>

#include <Eigen/Core>

#include "shapetest/grid.hpp"
#include "shapetest/sieve.hpp"

namespace shapetest::slutsky {

/// Demand data: quantities Q (n x dq), prices and income T = [p_1..p_dq, y]
/// (n x (dq+1)) and covariates Z (n x dz) that enter linearly.
struct SlutskyData {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd T;
  Eigen::MatrixXd Z;

  Eigen::Index n() const noexcept { return Q.rows(); }
  int dq() const noexcept { return static_cast<int>(Q.cols()); }
};

/// LogShares: Q are budget shares and (p, y) are in logs, which adds
/// g g' - diag(g). Levels: quantities on prices and income in levels, the
/// textbook D_p g + (D_y g) g'.
enum class Form { LogShares, Levels };

/// One partially linear sieve fit per equation on a shared basis.
struct SlutskyFit {
  std::vector<sieve::SieveFit> equations;
  Eigen::MatrixXd gamma;  // dz x dq

  int dq() const noexcept { return static_cast<int>(equations.size()); }
};

/// Regresses each Q_j on [h(P, Y), Z]. Errors: DimensionMismatch, EmptyData.
SlutskyFit fit_slutsky(const SlutskyData& data, const sieve::SieveBasis& basis);

/// D_p g + (D_y g) g' + g g' - diag(g) at every grid point (the last two terms
/// only for LogShares), with g the fitted series part. The grid spans
/// (p_1..p_dq, y). Errors: DimensionMismatch.
FunctionGrid slutsky_matrix(const SlutskyFit& fit, const GridPtr& grid, Form form = Form::LogShares);

/// Score-bootstrap draws of the Slutsky matrix: each equation's coefficient
/// perturbation w_j = h' A_j W (shared W across equations) is pushed through
/// the derivative of the Slutsky map at g_hat,
///   D_p w + (D_y w) g' + (D_y g) w' + w g' + g w' - diag(w),
/// dropping the last three terms for Levels.
class SlutskyBootstrap {
 public:
  SlutskyBootstrap(const SlutskyFit& fit, const GridPtr& grid, Form form = Form::LogShares);

  FunctionGrid draw(const Eigen::VectorXd& W) const;

 private:
  GridPtr grid_;
  Form form_ = Form::LogShares;
  int dq_ = 0;
  Eigen::Index n_ = 0;
  // Per equation: level map and one derivative map per argument (points x n).
  std::vector<Eigen::MatrixXd> level_;
  std::vector<std::vector<Eigen::MatrixXd>> deriv_;
  Eigen::MatrixXd g_;     // points x dq
  Eigen::MatrixXd g_dy_;  // points x dq
};

}  // namespace shapetest::slutsky
