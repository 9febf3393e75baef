#include "shapetest/testing.hpp"

#include <algorithm>
#include <cctype>
#include <memory>
#include <cmath>
#include <random>
#include <sstream>

#include "shapetest/error.hpp"

namespace shapetest::testing {

namespace {

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

double parse_number(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidArgument, "cannot parse gamma rule '" + s + "'");
  }
  if (used != s.size()) fail(ErrorCode::InvalidArgument, "cannot parse gamma rule '" + s + "'");
  return v;
}

std::string strip(std::string s) {
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
  return s;
}

}  // namespace

double GammaRule::resolve(Eigen::Index n) const {
  const auto nd = static_cast<double>(n);
  double g = value;
  switch (kind) {
    case Kind::Fixed: break;
    case Kind::InverseN: g = value / nd; break;
    case Kind::OverLogN: g = value / std::log(nd); break;
    case Kind::PowerN: g = std::pow(nd, value); break;
  }
  if (!(g > 0.0 && g < 1.0)) {
    fail(ErrorCode::InvalidArgument, "gamma_n = " + format_number(g) + " is outside (0, 1)");
  }
  return g;
}

std::string GammaRule::label() const {
  switch (kind) {
    case Kind::Fixed: return format_number(value);
    case Kind::InverseN: return value == 1.0 ? "1/n" : format_number(value) + "/n";
    case Kind::OverLogN: return format_number(value) + "/log(n)";
    case Kind::PowerN: return "n^" + format_number(value);
  }
  return "?";
}

GammaRule GammaRule::parse(const std::string& text) {
  const std::string s = strip(text);
  if (s.empty()) fail(ErrorCode::InvalidArgument, "empty gamma rule");
  for (const std::string suffix : {"/log(n)", "/logn", "/log"}) {
    if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return over_log_n(parse_number(s.substr(0, s.size() - suffix.size())));
    }
  }
  if (s.size() > 2 && s.compare(s.size() - 2, 2, "/n") == 0) {
    return {Kind::InverseN, parse_number(s.substr(0, s.size() - 2))};
  }
  if (s.rfind("n^", 0) == 0) return power_n(parse_number(s.substr(2)));
  return fixed(parse_number(s));
}

void TestConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  if (B < 2) fail(ErrorCode::InvalidArgument, "need at least two bootstrap draws");
  if (!grid) fail(ErrorCode::InvalidArgument, "test configuration has no grid");
  if (kappa_override && !(*kappa_override >= 0.0)) fail(ErrorCode::InvalidArgument, "kappa must be nonnegative");
  if (gamma.kind == GammaRule::Kind::Fixed && !(gamma.value > 0.0 && gamma.value < 1.0)) {
    fail(ErrorCode::InvalidArgument, "gamma must lie in (0, 1)");
  }
}

double order_statistic(std::vector<double> values, double q) {
  if (values.empty()) fail(ErrorCode::EmptyData, "order statistic of an empty sample");
  const auto m = static_cast<double>(values.size());
  // The offset keeps m q that is an integer up to rounding from jumping a rank.
  auto idx = static_cast<std::ptrdiff_t>(std::ceil(m * q - 1e-9));
  idx = std::clamp<std::ptrdiff_t>(idx, 1, static_cast<std::ptrdiff_t>(values.size()));
  std::nth_element(values.begin(), values.begin() + (idx - 1), values.end());
  return values[static_cast<std::size_t>(idx - 1)];
}

double test_statistic(const FunctionGrid& theta_hat, const cones::ConeSpec& cone, double r_n,
                      const qp::Settings& settings) {
  if (!(r_n > 0.0)) fail(ErrorCode::InvalidArgument, "r_n must be positive");
  const FunctionGrid pi = cones::project(cone, theta_hat, settings);
  return r_n * l2_norm(theta_hat - pi);
}

double psi_hat(const FunctionGrid& h, double a, const FunctionGrid& pi_theta, cones::Projector& projector) {
  if (!h.same_layout(pi_theta)) fail(ErrorCode::GridMismatch, "draw and projected estimate differ in layout");
  FunctionGrid v = h;
  if (a != 0.0) v += a * pi_theta;
  return l2_norm(v - projector.project(v));
}

double psi_hat(const FunctionGrid& h, double a, const FunctionGrid& pi_theta, const cones::ConeSpec& cone) {
  cones::Projector projector(cone, h.grid());
  return psi_hat(h, a, pi_theta, projector);
}

double tau_hat(const std::vector<double>& draw_norms, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) fail(ErrorCode::InvalidArgument, "gamma must lie in (0, 1)");
  const double tau = order_statistic(draw_norms, 1.0 - gamma);
  if (!(tau > 0.0)) fail(ErrorCode::DegenerateTau, "selected draw-norm quantile is zero");
  return tau;
}

std::pair<double, std::vector<double>> critical_value(const std::vector<FunctionGrid>& draws,
                                                      const FunctionGrid& pi_theta, double kappa,
                                                      cones::Projector& projector, double alpha) {
  if (!(kappa >= 0.0)) fail(ErrorCode::InvalidArgument, "kappa must be nonnegative");
  std::vector<double> psi;
  psi.reserve(draws.size());
  for (const auto& g : draws) psi.push_back(psi_hat(g, kappa, pi_theta, projector));
  const double c = order_statistic(psi, 1.0 - alpha);
  return {c, std::move(psi)};
}

std::pair<double, std::vector<double>> critical_value(const std::vector<FunctionGrid>& draws,
                                                      const FunctionGrid& pi_theta, double kappa,
                                                      const cones::ConeSpec& cone, double alpha,
                                                      const qp::Settings& settings) {
  cones::Projector projector(cone, pi_theta.grid(), settings);
  return critical_value(draws, pi_theta, kappa, projector, alpha);
}

TestReport run_engine(const Estimate& est, const TestConfig& config) {
  config.validate();
  TestReport rep;
  rep.r_n = est.r_n;
  rep.c_n = est.c_n;
  rep.k_n = est.k_n;
  rep.n = est.n;
  rep.seed = config.seed;
  rep.alpha = config.alpha;
  rep.B = config.B;
  rep.gamma = config.gamma.resolve(est.n);

  cones::Projector projector(config.cone, est.theta_hat.grid(), config.qp);
  const FunctionGrid pi_theta = projector.project(est.theta_hat);
  rep.statistic = est.r_n * l2_norm(est.theta_hat - pi_theta);

  std::mt19937_64 rng(config.seed);
  std::vector<FunctionGrid> draws;
  std::vector<double> norms;
  draws.reserve(static_cast<std::size_t>(config.B));
  norms.reserve(static_cast<std::size_t>(config.B));
  for (int b = 0; b < config.B; ++b) {
    const Eigen::VectorXd W = sieve::draw_weights(config.weights, est.n, rng);
    draws.push_back(est.draw(W));
    norms.push_back(l2_norm(draws.back()));
  }

  // Residuals that vanish up to rounding (an exact fit) leave draws of order
  // 1e-16 * theta; those count as degenerate too rather than blowing kappa up.
  const double tau_floor = 1e-10 * est.r_n * l2_norm(est.theta_hat);
  try {
    rep.tau_hat = tau_hat(norms, rep.gamma);
    if (rep.tau_hat <= tau_floor) fail(ErrorCode::DegenerateTau, "bootstrap draws vanish up to rounding");
    rep.kappa_hat = kappa_hat(est.r_n, est.c_n, rep.tau_hat);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateTau) throw;
    rep.kappa_hat = 0.0;
    rep.flags.emplace_back("degenerate_tau");
  }
  if (config.kappa_override) {
    rep.kappa_hat = *config.kappa_override;
    rep.flags.emplace_back("kappa_override");
  }

  auto [c, psi] = critical_value(draws, pi_theta, rep.kappa_hat, projector, config.alpha);
  rep.critical_value = c;
  rep.psi_values = std::move(psi);
  const auto exceed = std::count_if(rep.psi_values.begin(), rep.psi_values.end(),
                                    [&](double v) { return v >= rep.statistic; });
  rep.p_value = static_cast<double>(exceed) / static_cast<double>(config.B);
  rep.reject = rep.statistic > rep.critical_value;
  return rep;
}

TestReport run_test(const sieve::Dataset& data, const sieve::SieveBasis& basis, const TestConfig& config) {
  config.validate();
  const sieve::SieveFit f = sieve::fit(data, basis);
  auto boot = std::make_shared<sieve::ScoreBootstrap>(f, config.grid);
  Estimate est{sieve::eval_fit(f, config.grid), f.r_n(), f.c_n(), f.k_n(), f.n(),
               [boot](const Eigen::VectorXd& W) { return boot->draw(W); }};
  return run_engine(est, config);
}

TestReport run_slutsky_test(const slutsky::SlutskyData& data, const sieve::SieveBasis& basis,
                            const TestConfig& config) {
  config.validate();
  const slutsky::SlutskyFit f = slutsky::fit_slutsky(data, basis);
  auto boot = std::make_shared<slutsky::SlutskyBootstrap>(f, config.grid, config.slutsky_form);
  const auto& eq = f.equations.front();
  Estimate est{slutsky::slutsky_matrix(f, config.grid, config.slutsky_form), eq.r_n(), eq.c_n(), eq.k_n(), eq.n(),
               [boot](const Eigen::VectorXd& W) { return boot->draw(W); }};
  return run_engine(est, config);
}

}  // namespace shapetest::testing
