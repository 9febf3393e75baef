#include "shapetest/sieve.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "shapetest/error.hpp"

namespace shapetest::sieve {

namespace {

constexpr double kRangeSlack = 1e-12;

// Index of the knot span [t_mu, t_mu+1) containing x; the right endpoint maps
// to the last nonempty span.
int find_span(const SplineAxis& ax, double x) {
  const int nb = ax.size();
  const int p = ax.order - 1;
  if (x >= ax.knots[nb]) return nb - 1;
  const double* begin = ax.knots.data() + p;
  const double* end = ax.knots.data() + nb + 1;
  const auto it = std::upper_bound(begin, end, x);
  return std::clamp(static_cast<int>(it - ax.knots.data()) - 1, p, nb - 1);
}

// Nonzero basis values of order `ord` (degree ord - 1) on span mu:
// out[r] = B_{mu - ord + 1 + r}(x), r = 0..ord-1. Triangular Cox-de Boor.
void nonzero_basis(const SplineAxis& ax, int mu, double x, int ord, double* out) {
  const auto& t = ax.knots;
  const int deg = ord - 1;
  std::vector<double> left(static_cast<std::size_t>(ord)), right(static_cast<std::size_t>(ord));
  out[0] = 1.0;
  for (int j = 1; j <= deg; ++j) {
    left[j] = x - t[mu + 1 - j];
    right[j] = t[mu + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom != 0.0 ? out[r] / denom : 0.0;
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

// Full-length univariate basis (or first derivative) vector at x.
Eigen::VectorXd axis_values(const SplineAxis& ax, double x, bool derivative) {
  if (x < ax.lo() - kRangeSlack || x > ax.hi() + kRangeSlack) {
    std::ostringstream os;
    os << "point " << x << " outside the knot span [" << ax.lo() << ", " << ax.hi() << "]";
    fail(ErrorCode::OutOfRange, os.str());
  }
  x = std::clamp(x, ax.lo(), ax.hi());
  const int mu = find_span(ax, x);
  const int ord = ax.order;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(ax.size());
  if (!derivative) {
    std::vector<double> vals(static_cast<std::size_t>(ord));
    nonzero_basis(ax, mu, x, ord, vals.data());
    for (int r = 0; r < ord; ++r) out[mu - ord + 1 + r] = vals[r];
    return out;
  }
  if (ord < 2) fail(ErrorCode::InvalidArgument, "derivative of a piecewise-constant basis");
  // B'_{g,ord} = (ord-1) [B_{g,ord-1}/(t_{g+ord-1}-t_g) - B_{g+1,ord-1}/(t_{g+ord}-t_{g+1})]
  std::vector<double> low(static_cast<std::size_t>(ord - 1));
  nonzero_basis(ax, mu, x, ord - 1, low.data());
  const auto& t = ax.knots;
  auto lower = [&](int g) {  // B_{g, ord-1}(x), nonzero for g in [mu-ord+2, mu]
    const int r = g - (mu - ord + 2);
    return (r >= 0 && r < ord - 1) ? low[static_cast<std::size_t>(r)] : 0.0;
  };
  for (int g = mu - ord + 1; g <= mu; ++g) {
    const double d1 = t[g + ord - 1] - t[g];
    const double d2 = t[g + ord] - t[g + 1];
    double v = 0.0;
    if (d1 > 0.0) v += lower(g) / d1;
    if (d2 > 0.0) v -= lower(g + 1) / d2;
    out[g] = (ord - 1) * v;
  }
  return out;
}

}  // namespace

Eigen::VectorXd knots_from_quantiles(const Eigen::VectorXd& column, int interior, int order) {
  const auto n = column.size();
  if (interior < 0) fail(ErrorCode::InvalidArgument, "negative interior knot count");
  if (order < 1) fail(ErrorCode::InvalidArgument, "spline order must be >= 1");
  if (n <= interior) fail(ErrorCode::InvalidArgument, "need more observations than interior knots");
  std::vector<double> sorted(column.data(), column.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const double hi = sorted.back();
  if (!(lo < hi)) fail(ErrorCode::DegenerateColumn, "covariate column is constant");

  Eigen::VectorXd knots(2 * order + interior);
  knots.head(order).setConstant(lo);
  knots.tail(order).setConstant(hi);
  for (int j = 1; j <= interior; ++j) {
    const double q = static_cast<double>(j) / (interior + 1);
    // 1-based order statistic ceil(q n); the offset absorbs q n landing a hair
    // above an integer in floating point.
    auto idx = static_cast<Eigen::Index>(std::ceil(q * static_cast<double>(n) - 1e-9));
    idx = std::clamp<Eigen::Index>(idx, 1, n);
    const double v = sorted[static_cast<std::size_t>(idx - 1)];
    if (!(v > lo && v < hi)) {
      fail(ErrorCode::DegenerateColumn, "interior knot coincides with a data endpoint");
    }
    knots[order + j - 1] = v;
  }
  return knots;
}

SieveBasis::SieveBasis(std::vector<SplineAxis> axes) : axes_(std::move(axes)) {
  if (axes_.empty()) fail(ErrorCode::InvalidArgument, "basis needs at least one axis");
  size_ = 1;
  for (const auto& ax : axes_) {
    if (ax.order < 1 || ax.size() < 1) fail(ErrorCode::InvalidArgument, "malformed spline axis");
    for (Eigen::Index i = 1; i < ax.knots.size(); ++i) {
      if (ax.knots[i] < ax.knots[i - 1]) fail(ErrorCode::InvalidArgument, "knots must be nondecreasing");
    }
    if (!(ax.lo() < ax.hi())) fail(ErrorCode::DegenerateColumn, "empty knot span");
    size_ *= ax.size();
  }
}

SieveBasis SieveBasis::from_data(const Eigen::MatrixXd& Z, const std::vector<int>& interior,
                                 const std::vector<int>& order) {
  const auto d = static_cast<std::size_t>(Z.cols());
  if (interior.size() != d || order.size() != d) {
    fail(ErrorCode::DimensionMismatch, "need one knot count and order per covariate");
  }
  std::vector<SplineAxis> axes;
  for (std::size_t j = 0; j < d; ++j) {
    const Eigen::VectorXd col = Z.col(static_cast<Eigen::Index>(j));
    axes.push_back({order[j], knots_from_quantiles(col, interior[j], order[j])});
  }
  return SieveBasis(std::move(axes));
}

Eigen::VectorXd SieveBasis::eval_impl(const Eigen::VectorXd& z, int deriv_dim) const {
  if (z.size() != dims()) fail(ErrorCode::DimensionMismatch, "evaluation point has wrong dimension");
  Eigen::VectorXd out = Eigen::VectorXd::Ones(1);
  for (int j = 0; j < dims(); ++j) {
    const Eigen::VectorXd v = axis_values(axes_[j], z[j], j == deriv_dim);
    // Kronecker product keeps the last coordinate fastest.
    Eigen::VectorXd next(out.size() * v.size());
    for (Eigen::Index a = 0; a < out.size(); ++a) next.segment(a * v.size(), v.size()) = out[a] * v;
    out = std::move(next);
  }
  return out;
}

Eigen::VectorXd SieveBasis::eval(const Eigen::VectorXd& z) const { return eval_impl(z, -1); }

Eigen::VectorXd SieveBasis::eval_derivative(const Eigen::VectorXd& z, int dim) const {
  if (dim < 0 || dim >= dims()) fail(ErrorCode::InvalidArgument, "derivative dimension out of range");
  return eval_impl(z, dim);
}

Eigen::MatrixXd SieveBasis::design(const Eigen::MatrixXd& Z) const {
  Eigen::MatrixXd H(Z.rows(), size_);
  for (Eigen::Index i = 0; i < Z.rows(); ++i) H.row(i) = eval(Z.row(i).transpose()).transpose();
  return H;
}

Eigen::MatrixXd SieveBasis::design_derivative(const Eigen::MatrixXd& Z, int dim) const {
  Eigen::MatrixXd H(Z.rows(), size_);
  for (Eigen::Index i = 0; i < Z.rows(); ++i) H.row(i) = eval_derivative(Z.row(i).transpose(), dim).transpose();
  return H;
}

SieveFit fit(const Dataset& data, const SieveBasis& basis, const Eigen::MatrixXd& linear) {
  const auto n = data.y.size();
  if (n == 0) fail(ErrorCode::EmptyData, "no observations");
  if (data.z.rows() != n || data.z.cols() != basis.dims()) {
    fail(ErrorCode::DimensionMismatch, "covariate matrix does not match responses or basis");
  }
  if (linear.size() > 0 && linear.rows() != n) {
    fail(ErrorCode::DimensionMismatch, "linear covariates have the wrong number of rows");
  }
  if (!data.y.allFinite() || !data.z.allFinite()) fail(ErrorCode::InvalidArgument, "non-finite data");

  const int k = basis.size();
  const auto p = linear.size() > 0 ? linear.cols() : Eigen::Index{0};
  SieveFit out;
  out.basis_ = basis;
  out.design_.resize(n, k + p);
  out.design_.leftCols(k) = basis.design(data.z);
  if (p > 0) out.design_.rightCols(p) = linear;

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(out.design_);
  const Eigen::VectorXd coef = cod.solve(data.y);
  out.rank_ = static_cast<int>(cod.rank());
  out.beta_ = coef.head(k);
  out.linear_coef_ = coef.tail(p);
  out.residuals_ = data.y - out.design_ * coef;

  const Eigen::MatrixXd gram = out.design_.transpose() * out.design_ / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double cutoff = 1e-10 * std::max(ev.maxCoeff(), 0.0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > cutoff) inv[i] = 1.0 / ev[i];
  }
  out.gram_pinv_ = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();

  out.r_n_ = std::sqrt(static_cast<double>(n) / k);
  // log 1 = 0; a single observation has no meaningful coupling rate.
  out.c_n_ = n > 1 ? 1.0 / std::log(static_cast<double>(n)) : 1.0;
  return out;
}

FunctionGrid eval_fit(const SieveFit& fit, const GridPtr& grid) {
  if (grid->dims() != fit.basis().dims()) fail(ErrorCode::DimensionMismatch, "grid and basis dimensions differ");
  const Eigen::MatrixXd E = fit.basis().design(grid->point_matrix());
  return FunctionGrid(grid, E * fit.beta());
}

ScoreBootstrap::ScoreBootstrap(const SieveFit& fit, const GridPtr& grid) : grid_(grid) {
  if (grid->dims() != fit.basis().dims()) fail(ErrorCode::DimensionMismatch, "grid and basis dimensions differ");
  const auto n = fit.n();
  const int k = fit.k_n();
  // r_n * [Gram^- (1/n) X' diag(u)] restricted to the series block.
  const Eigen::MatrixXd scores = fit.design().transpose() * fit.residuals().asDiagonal();
  coef_map_ = (fit.r_n() / static_cast<double>(n)) * (fit.gram_pinv().topRows(k) * scores);
  grid_map_ = fit.basis().design(grid->point_matrix()) * coef_map_;
}

FunctionGrid ScoreBootstrap::draw(const Eigen::VectorXd& W) const {
  if (W.size() != coef_map_.cols()) {
    fail(ErrorCode::LengthMismatch, "bootstrap weights have length " + std::to_string(W.size()) +
                                        ", expected " + std::to_string(coef_map_.cols()));
  }
  return FunctionGrid(grid_, grid_map_ * W);
}

FunctionGrid bootstrap_draw(const SieveFit& fit, const Eigen::VectorXd& W, const GridPtr& grid) {
  if (W.size() != fit.n()) fail(ErrorCode::LengthMismatch, "bootstrap weights do not match the sample size");
  return ScoreBootstrap(fit, grid).draw(W);
}

Eigen::VectorXd draw_weights(WeightLaw law, Eigen::Index n, std::mt19937_64& rng) {
  Eigen::VectorXd w(n);
  switch (law) {
    case WeightLaw::StandardNormal: {
      std::normal_distribution<double> dist(0.0, 1.0);
      for (Eigen::Index i = 0; i < n; ++i) w[i] = dist(rng);
      break;
    }
    case WeightLaw::Rademacher: {
      std::bernoulli_distribution coin(0.5);
      for (Eigen::Index i = 0; i < n; ++i) w[i] = coin(rng) ? 1.0 : -1.0;
      break;
    }
    case WeightLaw::Mammen: {
      const double s5 = std::sqrt(5.0);
      const double lo = (1.0 - s5) / 2.0;
      const double hi = (1.0 + s5) / 2.0;
      std::bernoulli_distribution pick_lo((s5 + 1.0) / (2.0 * s5));
      for (Eigen::Index i = 0; i < n; ++i) w[i] = pick_lo(rng) ? lo : hi;
      break;
    }
  }
  return w;
}

}  // namespace shapetest::sieve
