#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "shapetest/sieve.hpp"
#include "shapetest/slutsky.hpp"
#include "shapetest/testing.hpp"

namespace shapetest::mc {

/// theta(z) = a z - b phi(c z), Z = -1 + 2 Phi(Z*).
struct MC1 {
  double a = 0.0, b = 0.0, c = 0.0;
};
/// theta(z) = a (z1^b / 2 + z2^b / 2)^(1/b) + c log(1 + s (z1 + z2)) with s = 5
/// when `log5` is set and 1 otherwise; b = 0 is the geometric mean. Z = Phi(Z*).
struct MC2 {
  double a = 0.0, b = 0.0, c = 0.0;
  bool log5 = false;
};
/// g_j = a p_j^(1/(b-1)) y / (p_1^(b/(b-1)) + p_2^(b/(b-1))) + c.
struct SlutskyNull {
  double a = 0.0, b = 0.5, c = 0.5;
};
/// g = (exp((p_1 - 1.5) delta / 10), exp(-(p_2 - 1.5) delta / 10)).
struct SlutskyAlt {
  double delta = 0.0;
};

struct Design {
  std::variant<MC1, MC2, SlutskyNull, SlutskyAlt> kind;
  Eigen::Index n = 500;

  bool is_slutsky() const noexcept {
    return std::holds_alternative<SlutskyNull>(kind) || std::holds_alternative<SlutskyAlt>(kind);
  }
  int dims() const noexcept;
  std::string label() const;
};

/// Null designs D1..D3 and the delta alternatives of each family.
/// Errors: InvalidArgument for a label outside 1..3.
Design mc1_null(int label, Eigen::Index n = 500);
Design mc1_alternative(double delta, Eigen::Index n = 500);
Design mc2_null(int label, Eigen::Index n = 500, bool log5 = false);
Design mc2_alternative(double delta, Eigen::Index n = 500, bool log5 = false);
Design slutsky_null(int label, Eigen::Index n = 1000);
Design slutsky_alternative(double delta, Eigen::Index n = 1000);

double mc1_theta(const MC1& d, double z);
double mc2_theta(const MC2& d, double z1, double z2);
Eigen::Vector2d slutsky_g(const Design& d, double p1, double p2, double y);

/// One sample: `data` for MC1/MC2, `demand` for the Slutsky designs.
struct Sample {
  sieve::Dataset data;
  slutsky::SlutskyData demand;
};

/// Observations are drawn one at a time; within an observation the standard
/// normals come in the order (Z*), then u for MC1/MC2, and
/// (P1*, P2*, Y*, Z*, U1, U2) for Slutsky.
Sample generate(const Design& design, std::mt19937_64& rng);

struct BasisSpec {
  std::vector<int> interior;
  std::vector<int> order;
};

/// Paper-style defaults: cubic with 3 interior knots (k = 7) for MC1,
/// quadratic tensor splines without interior knots otherwise.
BasisSpec default_basis(const Design& design);
/// [-0.9, 0.9] with 37 points; [0.1, 0.9]^2 with 17 per axis; and
/// [1.1, 1.9]^2 x [0.1, 0.9] with step `slutsky_step` (0.1 by default).
GridPtr default_grid(const Design& design, double slutsky_step = 0.1);
/// Increasing in every coordinate, or the Slutsky cone.
cones::ConeSpec default_cone(const Design& design);

struct StudyConfig {
  testing::TestConfig test;  // seed is ignored; per-replication seeds are derived
  BasisSpec basis;
  int reps = 100;
  std::uint64_t base_seed = 1;
  int threads = 0;  // 0 = hardware concurrency
};

/// Defaults for `design` with the test grid, cone and basis filled in.
StudyConfig default_study(const Design& design);

struct StudyResult {
  std::string design;
  Eigen::Index n = 0;
  int k_n = 0;
  std::string gamma_rule;
  double gamma = 0.0;
  int reps = 0;
  int completed = 0;
  int failures = 0;
  int rejections = 0;
  double rejection_rate = 0.0;  // over completed replications
  double mean_statistic = 0.0;
  double mean_critical_value = 0.0;
  double mean_kappa = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  /// Per replication: 1 reject, 0 accept, -1 failed.
  std::vector<int> decisions;
  std::vector<std::string> failure_messages;

  /// Monte Carlo standard error of the rejection rate.
  double standard_error() const;
};

/// Replication r draws its data and its bootstrap seed from an RNG seeded
/// with base_seed + r, so results do not depend on scheduling.
StudyResult run_study(const Design& design, const StudyConfig& config);

/// Runs one replication; exposed for tests.
testing::TestReport run_replication(const Design& design, const StudyConfig& config, int r);

}  // namespace shapetest::mc
