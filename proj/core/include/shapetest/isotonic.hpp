#pragma once

#include <Eigen/Core>

namespace shapetest::isotonic {

enum class Direction { Nondecreasing, Nonincreasing };

struct Problem {
  Eigen::VectorXd values;
  Eigen::VectorXd weights;
  Direction direction = Direction::Nondecreasing;
};

/// Weighted pool-adjacent-violators: the exact minimiser of
/// sum_j w_j (h_j - v_j)^2 over monotone h. Blocks carry weighted means.
///
/// Errors: NonpositiveWeight for any w_j <= 0; LengthMismatch / EmptyData on
/// malformed input.
Eigen::VectorXd pava(const Problem& problem);

/// Uniform-weight convenience overload.
Eigen::VectorXd pava(const Eigen::VectorXd& values,
                     Direction direction = Direction::Nondecreasing);

}  // namespace shapetest::isotonic
