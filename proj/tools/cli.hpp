#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "shapetest/cones.hpp"
#include "shapetest/mc.hpp"
#include "shapetest/testing.hpp"

namespace shapetest::cli {

/// Numeric CSV with a header row. Blank lines and lines starting with '#' are
/// skipped.
struct Table {
  std::vector<std::string> header;
  Eigen::MatrixXd rows;

  /// Column index or -1.
  int column(const std::string& name) const;
};

/// Errors: InvalidArgument on ragged rows, empty input or unparsable numbers.
Table read_csv(std::istream& in);
Table read_csv_file(const std::string& path);

/// Shape names: monotone, decreasing, convex, concave, monotone-convex,
/// monotone-concave, convex-multi, concave-multi, supermodular, nonneg,
/// slutsky, slutsky-nsd. `dims` is the covariate dimension (dq for Slutsky).
/// Errors: InvalidArgument for an unknown name.
cones::ConeSpec parse_shape(const std::string& name, int dims);
const std::vector<std::string>& shape_names();

/// Report with keys in a fixed order.
nlohmann::ordered_json report_json(const testing::TestReport& report, const std::string& shape);

/// Header: design,n,k_n,gamma,rejection_rate,reps,seed,failures,mean_statistic,mean_critical_value.
std::string study_csv(const std::vector<mc::StudyResult>& rows);
nlohmann::ordered_json study_json(const std::vector<mc::StudyResult>& rows);

/// Entry point. Exit codes: 0 ok, 2 input error, 3 numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace shapetest::cli
