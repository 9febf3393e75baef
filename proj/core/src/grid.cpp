#include "shapetest/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "shapetest/error.hpp"

namespace shapetest {

Grid::Grid(std::vector<Interval> bounds, std::vector<int> counts)
    : bounds_(std::move(bounds)), counts_(std::move(counts)) {
  if (bounds_.empty()) fail(ErrorCode::InvalidArgument, "grid needs at least one dimension");
  if (bounds_.size() != counts_.size()) {
    fail(ErrorCode::DimensionMismatch, "bounds and counts differ in length");
  }
  const int d = dims();
  coords_.resize(d);
  dim_weights_.resize(d);
  strides_.assign(d, 1);
  for (int j = 0; j < d; ++j) {
    const auto [lo, hi] = bounds_[j];
    if (!(lo < hi)) {
      std::ostringstream os;
      os << "dimension " << j << " has lo=" << lo << " >= hi=" << hi;
      fail(ErrorCode::NonpositiveRange, os.str());
    }
    if (counts_[j] < 2) {
      std::ostringstream os;
      os << "dimension " << j << " has " << counts_[j] << " points; need >= 2";
      fail(ErrorCode::TooFewPoints, os.str());
    }
    const int n = counts_[j];
    const double delta = (hi - lo) / (n - 1);
    coords_[j].resize(n);
    dim_weights_[j].setConstant(n, delta);
    for (int i = 0; i < n; ++i) coords_[j][i] = lo + i * delta;
    coords_[j][n - 1] = hi;
    dim_weights_[j][0] = dim_weights_[j][n - 1] = 0.5 * delta;
  }
  for (int j = d - 2; j >= 0; --j) strides_[j] = strides_[j + 1] * counts_[j + 1];

  std::size_t total = strides_[0] * counts_[0];
  weights_.resize(static_cast<Eigen::Index>(total));
  for (std::size_t flat = 0; flat < total; ++flat) {
    double w = 1.0;
    std::size_t rem = flat;
    for (int j = 0; j < d; ++j) {
      const std::size_t i = rem / strides_[j];
      rem %= strides_[j];
      w *= dim_weights_[j][static_cast<Eigen::Index>(i)];
    }
    weights_[static_cast<Eigen::Index>(flat)] = w;
  }
}

double Grid::step(int dim) const {
  const auto& b = bounds_.at(dim);
  return (b.hi - b.lo) / (counts_.at(dim) - 1);
}

std::vector<int> Grid::multi_index(std::size_t flat) const {
  std::vector<int> out(dims());
  for (int j = 0; j < dims(); ++j) {
    out[j] = static_cast<int>(flat / strides_[j]);
    flat %= strides_[j];
  }
  return out;
}

std::size_t Grid::flat_index(const std::vector<int>& multi) const {
  std::size_t flat = 0;
  for (int j = 0; j < dims(); ++j) flat += strides_[j] * static_cast<std::size_t>(multi.at(j));
  return flat;
}

Eigen::VectorXd Grid::point(std::size_t flat) const {
  Eigen::VectorXd z(dims());
  for (int j = 0; j < dims(); ++j) {
    z[j] = coords_[j][static_cast<Eigen::Index>(flat / strides_[j])];
    flat %= strides_[j];
  }
  return z;
}

Eigen::MatrixXd Grid::point_matrix() const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(size()), dims());
  for (std::size_t j = 0; j < size(); ++j) out.row(static_cast<Eigen::Index>(j)) = point(j);
  return out;
}

bool Grid::operator==(const Grid& other) const {
  if (counts_ != other.counts_) return false;
  for (int j = 0; j < dims(); ++j) {
    if (bounds_[j].lo != other.bounds_[j].lo || bounds_[j].hi != other.bounds_[j].hi) {
      return false;
    }
  }
  return true;
}

GridPtr make_grid(std::vector<Interval> bounds, std::vector<int> counts) {
  return std::make_shared<const Grid>(std::move(bounds), std::move(counts));
}

FunctionGrid::FunctionGrid(GridPtr grid, Eigen::VectorXd values, int block_dim)
    : grid_(std::move(grid)), values_(std::move(values)), block_dim_(block_dim) {
  if (!grid_) fail(ErrorCode::InvalidArgument, "function grid without a grid");
  if (block_dim_ < 1) fail(ErrorCode::InvalidArgument, "block dimension must be >= 1");
  const auto expected = static_cast<Eigen::Index>(grid_->size()) * block_size();
  if (values_.size() != expected) {
    std::ostringstream os;
    os << "expected " << expected << " values, got " << values_.size();
    fail(ErrorCode::LengthMismatch, os.str());
  }
  if (!values_.allFinite()) fail(ErrorCode::InvalidArgument, "non-finite grid values");
}

FunctionGrid FunctionGrid::zeros(GridPtr grid, int block_dim) {
  const auto n = static_cast<Eigen::Index>(grid->size()) * block_dim * block_dim;
  return FunctionGrid(std::move(grid), Eigen::VectorXd::Zero(n), block_dim);
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
FunctionGrid::block(std::size_t j) const {
  return {values_.data() + j * static_cast<std::size_t>(block_size()), block_dim_, block_dim_};
}

Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
FunctionGrid::block(std::size_t j) {
  return {values_.data() + j * static_cast<std::size_t>(block_size()), block_dim_, block_dim_};
}

bool FunctionGrid::same_layout(const FunctionGrid& other) const {
  return block_dim_ == other.block_dim_ && (grid_ == other.grid_ || *grid_ == *other.grid_);
}

namespace {
void require_same_layout(const FunctionGrid& a, const FunctionGrid& b) {
  if (!a.same_layout(b)) fail(ErrorCode::GridMismatch, "function grids differ in grid or shape");
}
}  // namespace

FunctionGrid& FunctionGrid::operator+=(const FunctionGrid& other) {
  require_same_layout(*this, other);
  values_ += other.values_;
  return *this;
}

FunctionGrid& FunctionGrid::operator-=(const FunctionGrid& other) {
  require_same_layout(*this, other);
  values_ -= other.values_;
  return *this;
}

FunctionGrid& FunctionGrid::operator*=(double c) {
  values_ *= c;
  return *this;
}

FunctionGrid operator+(FunctionGrid a, const FunctionGrid& b) { return a += b; }
FunctionGrid operator-(FunctionGrid a, const FunctionGrid& b) { return a -= b; }
FunctionGrid operator*(double c, FunctionGrid a) { return a *= c; }

double l2_inner(const FunctionGrid& f, const FunctionGrid& g) {
  require_same_layout(f, g);
  const auto& w = f.grid()->weights();
  const int bs = f.block_size();
  const auto& fv = f.values();
  const auto& gv = g.values();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    // tr(A^T B) is the elementwise dot product of the two blocks.
    acc += w[j] * fv.segment(j * bs, bs).dot(gv.segment(j * bs, bs));
  }
  return acc;
}

double l2_norm(const FunctionGrid& f) { return std::sqrt(std::max(0.0, l2_inner(f, f))); }

}  // namespace shapetest
