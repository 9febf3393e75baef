#include "shapetest/isotonic.hpp"

#include <vector>

#include "shapetest/error.hpp"

namespace shapetest::isotonic {

namespace {

struct Block {
  double mean;
  double weight;
  Eigen::Index first;
  Eigen::Index last;
};

Eigen::VectorXd pava_nondecreasing(const Eigen::VectorXd& v, const Eigen::VectorXd& w) {
  std::vector<Block> stack;
  stack.reserve(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    stack.push_back({v[i], w[i], i, i});
    // Merge while the last two blocks violate the ordering. Ties are pooled
    // too, which leaves the fitted values unchanged.
    while (stack.size() > 1 && stack[stack.size() - 2].mean >= stack.back().mean) {
      Block top = stack.back();
      stack.pop_back();
      Block& prev = stack.back();
      const double wt = prev.weight + top.weight;
      prev.mean = (prev.weight * prev.mean + top.weight * top.mean) / wt;
      prev.weight = wt;
      prev.last = top.last;
    }
  }
  Eigen::VectorXd out(v.size());
  for (const auto& b : stack) out.segment(b.first, b.last - b.first + 1).setConstant(b.mean);
  return out;
}

}  // namespace

Eigen::VectorXd pava(const Problem& problem) {
  const auto& v = problem.values;
  const auto& w = problem.weights;
  if (v.size() == 0) fail(ErrorCode::EmptyData, "isotonic regression on an empty vector");
  if (v.size() != w.size()) fail(ErrorCode::LengthMismatch, "values and weights differ in length");
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!(w[i] > 0.0)) fail(ErrorCode::NonpositiveWeight, "weight at index " + std::to_string(i));
  }
  if (problem.direction == Direction::Nondecreasing) return pava_nondecreasing(v, w);
  return -pava_nondecreasing(-v, w);
}

Eigen::VectorXd pava(const Eigen::VectorXd& values, Direction direction) {
  return pava(Problem{values, Eigen::VectorXd::Ones(values.size()), direction});
}

}  // namespace shapetest::isotonic
