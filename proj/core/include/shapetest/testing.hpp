#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "shapetest/cones.hpp"
#include "shapetest/grid.hpp"
#include "shapetest/qp.hpp"
#include "shapetest/sieve.hpp"
#include "shapetest/slutsky.hpp"

namespace shapetest::testing {

/// How gamma_n depends on the sample size.
struct GammaRule {
  enum class Kind { Fixed, InverseN, OverLogN, PowerN };
  Kind kind = Kind::OverLogN;
  double value = 0.01;  // the constant, the c in c/log n, or the exponent p in n^p

  static GammaRule fixed(double g) { return {Kind::Fixed, g}; }
  static GammaRule inverse_n() { return {Kind::InverseN, 1.0}; }
  static GammaRule over_log_n(double c = 0.01) { return {Kind::OverLogN, c}; }
  static GammaRule power_n(double p) { return {Kind::PowerN, p}; }

  /// Errors: InvalidArgument if the result is outside (0, 1).
  double resolve(Eigen::Index n) const;
  /// "0.01/log(n)", "1/n", "n^-0.5" or the fixed value.
  std::string label() const;
  /// Accepts the forms produced by label(), plus plain numbers.
  /// Errors: InvalidArgument.
  static GammaRule parse(const std::string& text);
};

struct TestConfig {
  double alpha = 0.05;
  GammaRule gamma = GammaRule::over_log_n(0.01);
  int B = 200;
  cones::ConeSpec cone = cones::ConeSpec::increasing(1);
  GridPtr grid;
  std::optional<double> kappa_override;
  std::uint64_t seed = 1;
  sieve::WeightLaw weights = sieve::WeightLaw::StandardNormal;
  slutsky::Form slutsky_form = slutsky::Form::LogShares;  // run_slutsky_test only
  qp::Settings qp;

  /// Errors: InvalidArgument.
  void validate() const;
};

struct TestReport {
  double statistic = 0.0;
  double tau_hat = 0.0;
  double kappa_hat = 0.0;
  double critical_value = 0.0;
  double p_value = 1.0;
  bool reject = false;
  std::vector<double> psi_values;
  double r_n = 0.0;
  double c_n = 0.0;
  int k_n = 0;
  Eigen::Index n = 0;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  double gamma = 0.0;
  int B = 0;
  /// "degenerate_tau" when tau_hat was 0 and kappa fell back to 0;
  /// "kappa_override" when kappa came from the config.
  std::vector<std::string> flags;
};

/// The ceil(m q)-th smallest value (1-based, clamped to [1, m]).
/// Errors: EmptyData.
double order_statistic(std::vector<double> values, double q);

/// r_n * ||theta - Pi theta||. Errors: InvalidArgument if r_n <= 0.
double test_statistic(const FunctionGrid& theta_hat, const cones::ConeSpec& cone, double r_n,
                      const qp::Settings& settings = {});

/// ||h + a Pi theta - Pi(h + a Pi theta)||. Errors: GridMismatch.
double psi_hat(const FunctionGrid& h, double a, const FunctionGrid& pi_theta, cones::Projector& projector);
double psi_hat(const FunctionGrid& h, double a, const FunctionGrid& pi_theta, const cones::ConeSpec& cone);

/// (1 - gamma) order statistic of the draw norms. Errors: DegenerateTau if it is 0.
double tau_hat(const std::vector<double>& draw_norms, double gamma);

inline double kappa_hat(double r_n, double c_n, double tau) { return r_n * c_n / tau; }

/// (1 - alpha) order statistic of psi_kappa over the draws, and the raw values.
std::pair<double, std::vector<double>> critical_value(const std::vector<FunctionGrid>& draws,
                                                      const FunctionGrid& pi_theta, double kappa,
                                                      cones::Projector& projector, double alpha);
std::pair<double, std::vector<double>> critical_value(const std::vector<FunctionGrid>& draws,
                                                      const FunctionGrid& pi_theta, double kappa,
                                                      const cones::ConeSpec& cone, double alpha,
                                                      const qp::Settings& settings = {});

/// An unconstrained estimate on the evaluation grid together with a linear
/// map from multiplier weights to bootstrap draws.
struct Estimate {
  FunctionGrid theta_hat;
  double r_n = 0.0;
  double c_n = 0.0;
  int k_n = 0;
  Eigen::Index n = 0;
  std::function<FunctionGrid(const Eigen::VectorXd&)> draw;
};

/// The three-step procedure for any estimator: statistic, B draws from the
/// seeded RNG, tau/kappa, critical value, p-value and decision.
TestReport run_engine(const Estimate& estimate, const TestConfig& config);

/// Fits the sieve and runs the engine on the score bootstrap.
TestReport run_test(const sieve::Dataset& data, const sieve::SieveBasis& basis, const TestConfig& config);

/// Slutsky version: config.cone should be a Slutsky cone and config.grid span
/// (p_1..p_dq, y).
TestReport run_slutsky_test(const slutsky::SlutskyData& data, const sieve::SieveBasis& basis,
                            const TestConfig& config);

}  // namespace shapetest::testing
