#include "shapetest/qp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/QR>
#include <Eigen/SparseLU>

#include "shapetest/error.hpp"

namespace shapetest::qp {

namespace {

constexpr int kCheckEvery = 5;

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

// Norm clamp used by the equilibration: tiny or huge column norms are left alone.
double clamp_norm(double v) { return (v < 1e-4 || v > 1e4) ? 1.0 : v; }

}  // namespace

const char* to_string(Status s) noexcept {
  switch (s) {
    case Status::Solved: return "solved";
    case Status::MaxIterations: return "max_iterations";
    case Status::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

double objective(const Problem& problem, const Eigen::VectorXd& x) {
  return 0.5 * x.dot(problem.P * x) + problem.q.dot(x);
}

Solver::Solver(Settings settings) : settings_(settings) {}

void Solver::check(const Problem& p) const {
  const auto k = p.P.rows();
  if (p.P.cols() != k || p.q.size() != k || (p.G.rows() > 0 && p.G.cols() != k)) {
    fail(ErrorCode::DimensionMismatch, "inconsistent QP dimensions");
  }
  if (!(p.P - p.P.transpose()).isZero(1e-10 * std::max(1.0, p.P.cwiseAbs().maxCoeff()))) {
    fail(ErrorCode::InvalidArgument, "QP matrix P is not symmetric");
  }
}

void Solver::setup(const Problem& p) {
  if (ready_ && cached_P_.rows() == p.P.rows() && cached_G_.rows() == p.G.rows() &&
      cached_G_.cols() == p.G.cols() && cached_P_ == p.P && cached_G_ == p.G) {
    q_ = cost_scale_ * D_.cwiseProduct(p.q);
    return;
  }
  ready_ = false;
  factored_rho_ = -1.0;
  const auto k = p.P.rows();
  const auto m = p.G.rows();
  D_.setOnes(k);
  E_.setOnes(m);
  cost_scale_ = 1.0;
  if (settings_.scaling) {
    // Ruiz equilibration of the KKT matrix [P G'; G 0].
    Eigen::MatrixXd Pw = p.P;
    Eigen::MatrixXd Gw = p.G;
    Eigen::VectorXd d(k), e(m);
    for (int pass = 0; pass < settings_.scaling_passes; ++pass) {
      for (Eigen::Index j = 0; j < k; ++j) {
        double norm = Pw.col(j).cwiseAbs().maxCoeff();
        if (m > 0) norm = std::max(norm, Gw.col(j).cwiseAbs().maxCoeff());
        d[j] = 1.0 / std::sqrt(clamp_norm(norm));
      }
      for (Eigen::Index i = 0; i < m; ++i) e[i] = 1.0 / std::sqrt(clamp_norm(Gw.row(i).cwiseAbs().maxCoeff()));
      Pw = d.asDiagonal() * Pw * d.asDiagonal();
      Gw = e.asDiagonal() * Gw * d.asDiagonal();
      D_ = D_.cwiseProduct(d);
      E_ = E_.cwiseProduct(e);
    }
  }
  const Eigen::MatrixXd Ps = D_.asDiagonal() * p.P * D_.asDiagonal();
  q_ = D_.cwiseProduct(p.q);
  G_ = (E_.asDiagonal() * p.G * D_.asDiagonal()).sparseView();
  if (settings_.scaling) {
    // Cost scaling depends on P only so the factorisation can be reused for a new q.
    double mean_col = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) mean_col += Ps.col(j).cwiseAbs().maxCoeff();
    mean_col /= std::max<Eigen::Index>(k, 1);
    cost_scale_ = 1.0 / clamp_norm(mean_col);
    q_ *= cost_scale_;
  }
  P_ = (cost_scale_ * Ps).sparseView();
  Gt_ = G_.transpose();
  Sparse eye(k, k);
  eye.setIdentity();
  Psig_ = P_ + settings_.sigma * eye;
  GtG_ = Gt_ * G_;
  kkt_.analyzePattern(Psig_ + GtG_);
  cached_P_ = p.P;
  cached_G_ = p.G;
  ready_ = true;
}

bool Solver::factorize(double rho) {
  if (factored_rho_ > 0.0 && rho == factored_rho_) return true;
  kkt_.factorize(Psig_ + rho * GtG_);
  factored_rho_ = kkt_.info() == Eigen::Success ? rho : -1.0;
  return factored_rho_ > 0.0;
}

Solution Solver::solve(const Problem& problem) {
  check(problem);
  const auto k = problem.P.rows();
  const auto m = problem.G.rows();
  Solution sol;

  if (m == 0) {
    // Unconstrained: minimum-norm solution of P x = -q.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(problem.P);
    sol.x = cod.solve(-problem.q);
    sol.multipliers.resize(0);
    sol.dual_residual = inf_norm(problem.P * sol.x + problem.q);
    sol.status = sol.x.allFinite() ? Status::Solved : Status::NumericalFailure;
    sol.polished = true;
    return sol;
  }

  setup(problem);
  double rho = settings_.rho;
  if (!factorize(rho)) {
    sol.x.setZero(k);
    sol.multipliers.setZero(m);
    sol.status = Status::NumericalFailure;
    return sol;
  }

  const double sigma = settings_.sigma;
  const double alpha = settings_.alpha;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd Gx = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd rhs(k), xt(k), zt(m), zhat(m), znew(m), Px(k), Gty(k);
  const Eigen::VectorXd Einv = E_.cwiseInverse();
  const Eigen::VectorXd Dinv = D_.cwiseInverse();
  const double cinv = 1.0 / cost_scale_;
  // The interval doubles after every update: each change of rho perturbs the
  // residual balance, and a fixed interval can oscillate between two values.
  int adapt_every = std::max(kCheckEvery, settings_.adapt_interval / kCheckEvery * kCheckEvery);
  int next_adapt = adapt_every;
  double trigger = settings_.polish_trigger;

  auto unscaled = [&](int iterations, Status status) {
    Solution s;
    s.iterations = iterations;
    s.x = D_.cwiseProduct(x);
    s.multipliers = -cinv * E_.cwiseProduct(y);
    s.status = status;
    return s;
  };

  sol.status = Status::MaxIterations;
  int iter = 0;
  for (iter = 1; iter <= settings_.max_iter; ++iter) {
    rhs = sigma * x - q_;
    rhs.noalias() += Gt_ * (rho * z - y);
    xt = kkt_.solve(rhs);
    zt.noalias() = G_ * xt;
    x = alpha * xt + (1.0 - alpha) * x;
    zhat = alpha * zt + (1.0 - alpha) * z;
    Gx = zhat;  // G x is linear in the relaxed update
    znew = (zhat + y / rho).cwiseMax(0.0);
    y += rho * (zhat - znew);
    z = znew;

    if (iter % kCheckEvery != 0 && iter != settings_.max_iter) continue;
    if (!x.allFinite() || !y.allFinite()) {
      sol.status = Status::NumericalFailure;
      break;
    }
    Px.noalias() = P_ * x;
    Gty.noalias() = Gt_ * y;
    const double prim = inf_norm(Einv.cwiseProduct(Gx - z));
    const double dual = cinv * inf_norm(Dinv.cwiseProduct(Px + q_ + Gty));
    const double prim_scale = std::max(inf_norm(Einv.cwiseProduct(Gx)), inf_norm(Einv.cwiseProduct(z)));
    const double dual_scale =
        cinv * std::max({inf_norm(Dinv.cwiseProduct(Px)), inf_norm(Dinv.cwiseProduct(Gty)),
                         inf_norm(Dinv.cwiseProduct(q_))});
    sol.primal_residual = prim;
    sol.dual_residual = dual;
    if (prim <= settings_.eps_abs + settings_.eps_rel * prim_scale &&
        dual <= settings_.eps_abs + settings_.eps_rel * dual_scale) {
      sol.status = Status::Solved;
      break;
    }
    if (settings_.polish && trigger > 0.0 && prim <= trigger * (1.0 + prim_scale) &&
        dual <= trigger * (1.0 + dual_scale)) {
      Solution early = polish(problem, unscaled(iter, Status::MaxIterations));
      if (early.polished) return early;
      trigger = 0.0;
    }
    if (settings_.adaptive_rho && iter >= next_adapt) {
      next_adapt = iter + adapt_every;
      // Balance the residuals relative to their scales, in the scaled space.
      const double p_rel = inf_norm(Gx - z) / std::max({inf_norm(Gx), inf_norm(z), 1e-30});
      const double d_rel = inf_norm(Px + q_ + Gty) / std::max({inf_norm(Px), inf_norm(Gty), inf_norm(q_), 1e-30});
      if (p_rel > 0.0 && d_rel > 0.0) {
        const double next = std::clamp(rho * std::sqrt(p_rel / d_rel), 1e-6, 1e6);
        if (next > 5.0 * rho || next < 0.2 * rho) {
          if (!factorize(next)) {
            sol.status = Status::NumericalFailure;
            break;
          }
          rho = next;
          adapt_every *= 2;
          next_adapt = iter + adapt_every;
        }
      }
    }
  }
  const int iterations = std::min(iter, settings_.max_iter);
  const double prim = sol.primal_residual, dual = sol.dual_residual;
  sol = unscaled(iterations, sol.status);
  sol.primal_residual = prim;
  sol.dual_residual = dual;

  if (sol.status == Status::NumericalFailure) return sol;
  if (settings_.polish) {
    // A polished point is verified through the full KKT conditions, so it is
    // also accepted when ADMM stopped at the iteration cap.
    Solution polished = polish(problem, sol);
    if (polished.polished) return polished;
  }
  return sol;
}

Solution Solver::polish(const Problem& problem, const Solution& solution) const {
  if (solution.status == Status::NumericalFailure) return solution;
  const auto k = problem.P.rows();
  const auto m = problem.G.rows();
  if (m == 0) return solution;

  const Eigen::VectorXd Gx0 = problem.G * solution.x;
  const double slack_tol = 10.0 * (settings_.eps_abs + settings_.eps_rel * inf_norm(Gx0));
  const double mu_tol = 10.0 * settings_.eps_abs;
  std::vector<char> active(static_cast<std::size_t>(m), 0);
  bool any_active = false;
  for (Eigen::Index i = 0; i < m; ++i) {
    const bool on = Gx0[i] <= slack_tol ||
                    (solution.multipliers.size() == m && solution.multipliers[i] > mu_tol);
    active[static_cast<std::size_t>(i)] = on;
    any_active = any_active || on;
  }
  if (!any_active) return solution;

  const double g_scale = std::max(1.0, problem.G.cwiseAbs().maxCoeff());
  const double f0 = objective(problem, solution.x);
  // Quasi-definite regularisation keeps the factorisation well defined when P is
  // singular or the active rows are dependent; refinement against the exact
  // system removes it.
  const double delta = 1e-9 * std::max(1.0, problem.P.cwiseAbs().maxCoeff());
  const Sparse Psp = problem.P.sparseView();
  const Sparse Gsp = problem.G.sparseView();

  for (int round = 0; round < settings_.polish_rounds; ++round) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (active[static_cast<std::size_t>(i)]) rows.push_back(i);
    }
    const auto na = static_cast<Eigen::Index>(rows.size());
    // [P  G_A'] [x ]   [-q]
    // [G_A  0 ] [nu] = [ 0],   mu_A = -nu.
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(Psp.nonZeros() + 2 * na * 4 + k + na));
    for (Eigen::Index c = 0; c < Psp.outerSize(); ++c) {
      for (Sparse::InnerIterator it(Psp, c); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    }
    const Sparse GA_rows = [&] {
      std::vector<Eigen::Triplet<double>> sel;
      for (Eigen::Index r = 0; r < na; ++r) sel.emplace_back(r, rows[static_cast<std::size_t>(r)], 1.0);
      Sparse S(na, m);
      S.setFromTriplets(sel.begin(), sel.end());
      return Sparse(S * Gsp);
    }();
    for (Eigen::Index c = 0; c < GA_rows.outerSize(); ++c) {
      for (Sparse::InnerIterator it(GA_rows, c); it; ++it) {
        trip.emplace_back(k + it.row(), it.col(), it.value());
        trip.emplace_back(it.col(), k + it.row(), it.value());
      }
    }
    Sparse K(k + na, k + na);
    K.setFromTriplets(trip.begin(), trip.end());
    for (Eigen::Index i = 0; i < k + na; ++i) trip.emplace_back(i, i, i < k ? delta : -delta);
    Sparse Kreg(k + na, k + na);
    Kreg.setFromTriplets(trip.begin(), trip.end());
    Kreg.makeCompressed();
    Eigen::SparseLU<Sparse> lu;
    lu.compute(Kreg);
    if (lu.info() != Eigen::Success) return solution;

    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + na);
    rhs.head(k) = -problem.q;
    Eigen::VectorXd sol = lu.solve(rhs);
    for (int r = 0; r < 5; ++r) sol += lu.solve(rhs - K * sol);
    if (!sol.allFinite()) return solution;

    Eigen::VectorXd x = sol.head(k);
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(m);
    for (Eigen::Index r = 0; r < na; ++r) mu[rows[static_cast<std::size_t>(r)]] = -sol[k + r];

    const Eigen::VectorXd Gx = Gsp * x;
    const double x_scale = std::max(1.0, inf_norm(x));
    const double feas_tol = 1e-12 * g_scale * x_scale;
    const double dual_tol = 1e-9 * std::max(1.0, inf_norm(mu));
    bool changed = false;
    for (Eigen::Index i = 0; i < m; ++i) {
      auto& a = active[static_cast<std::size_t>(i)];
      if (!a && Gx[i] < -feas_tol) {
        a = 1;
        changed = true;
      } else if (a && mu[i] < -dual_tol) {
        a = 0;
        changed = true;
      }
    }
    if (changed) continue;

    // By convexity f* <= f(x0) + mu'(G x0)_- at the KKT pair, so an infeasible
    // ADMM point may legitimately sit below the polished objective by that much.
    const double f1 = objective(problem, x);
    const double slack_credit = mu.cwiseMax(0.0).dot((-Gx0).cwiseMax(0.0));
    if (f1 > f0 + slack_credit + 1e-7 * (1.0 + std::abs(f0))) return solution;
    Solution out;
    out.x = std::move(x);
    out.multipliers = mu.cwiseMax(0.0);
    out.iterations = solution.iterations;
    out.primal_residual = std::max(0.0, -Gx.minCoeff());
    out.dual_residual = inf_norm(Psp * out.x + problem.q - Gsp.transpose() * out.multipliers);
    if (!(out.dual_residual <= 1e-6 * (1.0 + inf_norm(problem.q)))) return solution;
    out.status = Status::Solved;
    out.polished = true;
    return out;
  }
  return solution;
}

Solution solve(const Problem& problem, const Settings& settings) {
  Solver solver(settings);
  return solver.solve(problem);
}

Solution polish(const Problem& problem, const Solution& solution, const Settings& settings) {
  Solver solver(settings);
  return solver.polish(problem, solution);
}

}  // namespace shapetest::qp
