#include "shapetest/slutsky.hpp"

#include "shapetest/error.hpp"

namespace shapetest::slutsky {

namespace {

void check_grid(const SlutskyFit& fit, const GridPtr& grid) {
  if (fit.equations.empty()) fail(ErrorCode::EmptyData, "Slutsky fit has no equations");
  const int dq = fit.dq();
  if (grid->dims() != dq + 1 || fit.equations.front().basis().dims() != dq + 1) {
    fail(ErrorCode::DimensionMismatch, "Slutsky grid must span dq prices and income");
  }
  for (const auto& eq : fit.equations) {
    if (eq.k_n() != fit.equations.front().k_n() || eq.n() != fit.equations.front().n()) {
      fail(ErrorCode::DimensionMismatch, "Slutsky equations must share basis and data");
    }
  }
}

// Assembles a linear-in-w term at one point; g and g_dy are the fitted level
// and income derivative, w/w_dp/w_dy the perturbation and its derivatives.
void assemble(Eigen::Ref<Eigen::MatrixXd> out, const Eigen::VectorXd& g, const Eigen::VectorXd& g_dy,
              const Eigen::VectorXd& w, const Eigen::MatrixXd& w_dp, const Eigen::VectorXd& w_dy, Form form) {
  out = w_dp + w_dy * g.transpose() + g_dy * w.transpose();
  if (form == Form::Levels) return;
  out += w * g.transpose() + g * w.transpose();
  out.diagonal() -= w;
}

}  // namespace

SlutskyFit fit_slutsky(const SlutskyData& data, const sieve::SieveBasis& basis) {
  const auto n = data.n();
  if (n == 0) fail(ErrorCode::EmptyData, "no observations");
  if (data.T.rows() != n || data.T.cols() != data.dq() + 1) {
    fail(ErrorCode::DimensionMismatch, "price/income matrix must be n x (dq + 1)");
  }
  if (data.Z.size() > 0 && data.Z.rows() != n) fail(ErrorCode::DimensionMismatch, "covariate rows differ");
  SlutskyFit out;
  out.gamma.resize(data.Z.cols(), data.dq());
  for (int j = 0; j < data.dq(); ++j) {
    sieve::Dataset ds{data.Q.col(j), data.T};
    out.equations.push_back(sieve::fit(ds, basis, data.Z));
    if (data.Z.cols() > 0) out.gamma.col(j) = out.equations.back().linear_coef();
  }
  return out;
}

FunctionGrid slutsky_matrix(const SlutskyFit& fit, const GridPtr& grid, Form form) {
  check_grid(fit, grid);
  const int dq = fit.dq();
  const auto& basis = fit.equations.front().basis();
  const Eigen::MatrixXd pts = grid->point_matrix();
  const Eigen::MatrixXd H = basis.design(pts);
  std::vector<Eigen::MatrixXd> dH;
  for (int a = 0; a <= dq; ++a) dH.push_back(basis.design_derivative(pts, a));

  const auto K = static_cast<Eigen::Index>(grid->size());
  Eigen::MatrixXd g(K, dq), g_dy(K, dq);
  std::vector<Eigen::MatrixXd> g_dp(static_cast<std::size_t>(dq), Eigen::MatrixXd(K, dq));
  for (int j = 0; j < dq; ++j) {
    const auto& beta = fit.equations[static_cast<std::size_t>(j)].beta();
    g.col(j) = H * beta;
    g_dy.col(j) = dH[static_cast<std::size_t>(dq)] * beta;
    for (int l = 0; l < dq; ++l) g_dp[static_cast<std::size_t>(l)].col(j) = dH[static_cast<std::size_t>(l)] * beta;
  }

  FunctionGrid out = FunctionGrid::zeros(grid, dq);
  Eigen::MatrixXd m(dq, dq);
  for (Eigen::Index t = 0; t < K; ++t) {
    const Eigen::VectorXd gt = g.row(t).transpose();
    for (int l = 0; l < dq; ++l) m.col(l) = g_dp[static_cast<std::size_t>(l)].row(t).transpose();
    m += g_dy.row(t).transpose() * gt.transpose();
    if (form == Form::LogShares) {
      m += gt * gt.transpose();
      m.diagonal() -= gt;
    }
    out.block(static_cast<std::size_t>(t)) = m;
  }
  return out;
}

SlutskyBootstrap::SlutskyBootstrap(const SlutskyFit& fit, const GridPtr& grid, Form form)
    : grid_(grid), form_(form) {
  check_grid(fit, grid);
  dq_ = fit.dq();
  n_ = fit.equations.front().n();
  const auto& basis = fit.equations.front().basis();
  const Eigen::MatrixXd pts = grid->point_matrix();
  const Eigen::MatrixXd H = basis.design(pts);
  std::vector<Eigen::MatrixXd> dH;
  for (int a = 0; a <= dq_; ++a) dH.push_back(basis.design_derivative(pts, a));

  const auto K = static_cast<Eigen::Index>(grid->size());
  g_.resize(K, dq_);
  g_dy_.resize(K, dq_);
  for (int j = 0; j < dq_; ++j) {
    const auto& eq = fit.equations[static_cast<std::size_t>(j)];
    sieve::ScoreBootstrap sb(eq, grid);
    const Eigen::MatrixXd& A = sb.coefficient_map();
    level_.push_back(H * A);
    std::vector<Eigen::MatrixXd> d;
    for (int a = 0; a <= dq_; ++a) d.push_back(dH[static_cast<std::size_t>(a)] * A);
    deriv_.push_back(std::move(d));
    g_.col(j) = H * eq.beta();
    g_dy_.col(j) = dH[static_cast<std::size_t>(dq_)] * eq.beta();
  }
}

FunctionGrid SlutskyBootstrap::draw(const Eigen::VectorXd& W) const {
  if (W.size() != n_) fail(ErrorCode::LengthMismatch, "bootstrap weights do not match the sample size");
  const auto K = static_cast<Eigen::Index>(grid_->size());
  Eigen::MatrixXd w(K, dq_), w_dy(K, dq_);
  std::vector<Eigen::MatrixXd> w_dp(static_cast<std::size_t>(dq_), Eigen::MatrixXd(K, dq_));
  for (int j = 0; j < dq_; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    w.col(j) = level_[sj] * W;
    w_dy.col(j) = deriv_[sj][static_cast<std::size_t>(dq_)] * W;
    for (int l = 0; l < dq_; ++l) w_dp[static_cast<std::size_t>(l)].col(j) = deriv_[sj][static_cast<std::size_t>(l)] * W;
  }
  FunctionGrid out = FunctionGrid::zeros(grid_, dq_);
  Eigen::MatrixXd m(dq_, dq_), dp(dq_, dq_);
  for (Eigen::Index t = 0; t < K; ++t) {
    for (int l = 0; l < dq_; ++l) dp.col(l) = w_dp[static_cast<std::size_t>(l)].row(t).transpose();
    assemble(m, g_.row(t).transpose(), g_dy_.row(t).transpose(), w.row(t).transpose(), dp,
             w_dy.row(t).transpose(), form_);
    out.block(static_cast<std::size_t>(t)) = m;
  }
  return out;
}

}  // namespace shapetest::slutsky
