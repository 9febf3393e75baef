#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "shapetest/grid.hpp"

namespace shapetest::sieve {

/// Clamped B-spline basis along one coordinate.
struct SplineAxis {
  int order = 4;          // 4 = cubic, 3 = quadratic, 2 = linear
  Eigen::VectorXd knots;  // nondecreasing, each endpoint repeated `order` times

  int size() const noexcept { return static_cast<int>(knots.size()) - order; }
  double lo() const { return knots[0]; }
  double hi() const { return knots[knots.size() - 1]; }
};

/// Clamped knot vector with interior knots at the empirical j/(interior+1)
/// quantiles, using the order statistic at 1-based index ceil(q n).
///
/// Errors: DegenerateColumn if min == max or an interior knot falls on an
/// endpoint; InvalidArgument if n <= interior or order < 1.
Eigen::VectorXd knots_from_quantiles(const Eigen::VectorXd& column, int interior, int order);

/// Tensor-product B-spline basis. Entries are ordered lexicographically with
/// the last coordinate varying fastest, matching the grid layout.
class SieveBasis {
 public:
  SieveBasis() = default;
  explicit SieveBasis(std::vector<SplineAxis> axes);

  /// Builds one axis per column of Z with knots at the column's quantiles.
  static SieveBasis from_data(const Eigen::MatrixXd& Z, const std::vector<int>& interior,
                              const std::vector<int>& order);

  int dims() const noexcept { return static_cast<int>(axes_.size()); }
  int size() const noexcept { return size_; }
  const SplineAxis& axis(int dim) const { return axes_.at(dim); }

  /// Errors: OutOfRange if z lies outside the knot span by more than 1e-12.
  Eigen::VectorXd eval(const Eigen::VectorXd& z) const;
  /// Partial derivative along `dim`. Errors: as eval; InvalidArgument for order < 2.
  Eigen::VectorXd eval_derivative(const Eigen::VectorXd& z, int dim) const;

  /// n x k design matrix, one row per row of Z.
  Eigen::MatrixXd design(const Eigen::MatrixXd& Z) const;
  Eigen::MatrixXd design_derivative(const Eigen::MatrixXd& Z, int dim) const;

 private:
  Eigen::VectorXd eval_impl(const Eigen::VectorXd& z, int deriv_dim) const;

  std::vector<SplineAxis> axes_;
  int size_ = 0;
};

struct Dataset {
  Eigen::VectorXd y;  // n responses
  Eigen::MatrixXd z;  // n x d covariates

  Eigen::Index n() const noexcept { return y.size(); }
  int dims() const noexcept { return static_cast<int>(z.cols()); }
};

/// Least-squares fit on [h(Z), L], where L holds optional covariates that
/// enter linearly (empty for the pure series regression).
class SieveFit {
 public:
  const SieveBasis& basis() const noexcept { return basis_; }
  /// Series coefficients (length k_n).
  const Eigen::VectorXd& beta() const noexcept { return beta_; }
  /// Coefficients on the linear covariates (may be empty).
  const Eigen::VectorXd& linear_coef() const noexcept { return linear_coef_; }
  const Eigen::VectorXd& residuals() const noexcept { return residuals_; }
  /// n x (k_n + p) regressor matrix.
  const Eigen::MatrixXd& design() const noexcept { return design_; }
  /// Pseudo-inverse of (1/n) X'X with eigenvalue cutoff 1e-10 * max eigenvalue.
  const Eigen::MatrixXd& gram_pinv() const noexcept { return gram_pinv_; }
  int rank() const noexcept { return rank_; }

  Eigen::Index n() const noexcept { return residuals_.size(); }
  int k_n() const noexcept { return basis_.size(); }
  double r_n() const noexcept { return r_n_; }
  double c_n() const noexcept { return c_n_; }

  double eval(const Eigen::VectorXd& z) const { return basis_.eval(z).dot(beta_); }

  friend SieveFit fit(const Dataset& data, const SieveBasis& basis, const Eigen::MatrixXd& linear);

 private:
  SieveBasis basis_;
  Eigen::VectorXd beta_;
  Eigen::VectorXd linear_coef_;
  Eigen::VectorXd residuals_;
  Eigen::MatrixXd design_;
  Eigen::MatrixXd gram_pinv_;
  int rank_ = 0;
  double r_n_ = 0.0;
  double c_n_ = 0.0;
};

/// Minimum-norm least squares via a complete orthogonal decomposition;
/// r_n = sqrt(n / k_n), c_n = 1 / log n.
///
/// Errors: EmptyData for n == 0; DimensionMismatch on inconsistent shapes.
SieveFit fit(const Dataset& data, const SieveBasis& basis, const Eigen::MatrixXd& linear = {});

/// theta_hat on every grid point. Errors: OutOfRange.
FunctionGrid eval_fit(const SieveFit& fit, const GridPtr& grid);

/// k_n^{-1/2} h(.)' Gram^- n^{-1/2} sum_i W_i x_i u_i, restricted to the series
/// block, on the grid. Errors: LengthMismatch.
FunctionGrid bootstrap_draw(const SieveFit& fit, const Eigen::VectorXd& W, const GridPtr& grid);

enum class WeightLaw { StandardNormal, Rademacher, Mammen };

/// n i.i.d. mean-zero, unit-variance multiplier weights.
Eigen::VectorXd draw_weights(WeightLaw law, Eigen::Index n, std::mt19937_64& rng);

/// Precomputes the linear map W -> bootstrap draw on a fixed grid so that B
/// draws cost one matrix product.
class ScoreBootstrap {
 public:
  ScoreBootstrap(const SieveFit& fit, const GridPtr& grid);

  /// Coefficient map: (k_n x n), coefficients = map * W.
  const Eigen::MatrixXd& coefficient_map() const noexcept { return coef_map_; }
  FunctionGrid draw(const Eigen::VectorXd& W) const;

 private:
  GridPtr grid_;
  Eigen::MatrixXd grid_map_;  // points x n
  Eigen::MatrixXd coef_map_;
};

}  // namespace shapetest::sieve
