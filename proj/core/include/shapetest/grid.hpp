#pragma once

#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace shapetest {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Rectangular, equispaced evaluation lattice with trapezoid quadrature weights.
///
/// Points are stored in row-major order: the last dimension varies fastest, so
/// flat index = ((i_0 * n_1) + i_1) * n_2 + i_2 for three dimensions.
class Grid {
 public:
  Grid(std::vector<Interval> bounds, std::vector<int> counts);

  int dims() const noexcept { return static_cast<int>(bounds_.size()); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(weights_.size()); }

  const Interval& bounds(int dim) const { return bounds_.at(dim); }
  int count(int dim) const { return counts_.at(dim); }
  const std::vector<int>& counts() const noexcept { return counts_; }
  double step(int dim) const;

  /// Sorted coordinates along one dimension.
  const Eigen::VectorXd& coords(int dim) const { return coords_.at(dim); }
  /// Per-dimension trapezoid weights (Δ/2 at the ends, Δ elsewhere).
  const Eigen::VectorXd& dim_weights(int dim) const { return dim_weights_.at(dim); }
  /// Product weights for every lattice point, in flat order.
  const Eigen::VectorXd& weights() const noexcept { return weights_; }

  /// Distance in flat index between neighbours along `dim`.
  std::size_t stride(int dim) const { return strides_.at(dim); }
  std::vector<int> multi_index(std::size_t flat) const;
  std::size_t flat_index(const std::vector<int>& multi) const;
  Eigen::VectorXd point(std::size_t flat) const;
  /// size() x dims() matrix of point coordinates.
  Eigen::MatrixXd point_matrix() const;

  bool operator==(const Grid& other) const;

 private:
  std::vector<Interval> bounds_;
  std::vector<int> counts_;
  std::vector<Eigen::VectorXd> coords_;
  std::vector<Eigen::VectorXd> dim_weights_;
  std::vector<std::size_t> strides_;
  Eigen::VectorXd weights_;
};

using GridPtr = std::shared_ptr<const Grid>;

/// Errors: NonpositiveRange if lo >= hi, TooFewPoints if a count < 2.
GridPtr make_grid(std::vector<Interval> bounds, std::vector<int> counts);

/// Scalar or square-matrix values attached to every point of a grid.
///
/// Matrix values are stored as row-major block_dim x block_dim blocks, one per
/// point, so values().size() == grid->size() * block_dim^2.
class FunctionGrid {
 public:
  FunctionGrid(GridPtr grid, Eigen::VectorXd values, int block_dim = 1);

  static FunctionGrid zeros(GridPtr grid, int block_dim = 1);
  template <class F>
  static FunctionGrid from_function(GridPtr grid, F&& f) {
    Eigen::VectorXd v(grid->size());
    for (std::size_t j = 0; j < grid->size(); ++j) v[j] = f(grid->point(j));
    return FunctionGrid(std::move(grid), std::move(v));
  }

  const GridPtr& grid() const noexcept { return grid_; }
  int block_dim() const noexcept { return block_dim_; }
  bool is_matrix() const noexcept { return block_dim_ > 1; }
  int block_size() const noexcept { return block_dim_ * block_dim_; }
  std::size_t points() const noexcept { return grid_->size(); }

  const Eigen::VectorXd& values() const noexcept { return values_; }
  Eigen::VectorXd& values() noexcept { return values_; }

  double operator[](std::size_t j) const { return values_[static_cast<Eigen::Index>(j)]; }

  /// Row-major block at point j.
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> block(
      std::size_t j) const;
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> block(
      std::size_t j);

  bool same_layout(const FunctionGrid& other) const;
  bool all_finite() const { return values_.allFinite(); }

  FunctionGrid& operator+=(const FunctionGrid& other);
  FunctionGrid& operator-=(const FunctionGrid& other);
  FunctionGrid& operator*=(double c);

 private:
  GridPtr grid_;
  Eigen::VectorXd values_;
  int block_dim_;
};

FunctionGrid operator+(FunctionGrid a, const FunctionGrid& b);
FunctionGrid operator-(FunctionGrid a, const FunctionGrid& b);
FunctionGrid operator*(double c, FunctionGrid a);

/// Trapezoid L2 norm; Frobenius norm per point for matrix values.
double l2_norm(const FunctionGrid& f);

/// Trapezoid L2 inner product with the trace pairing tr(A^T B) for matrices.
/// Errors: GridMismatch when grids or block shapes differ.
double l2_inner(const FunctionGrid& f, const FunctionGrid& g);

}  // namespace shapetest
