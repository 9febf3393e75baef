#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "shapetest/error.hpp"
#include "shapetest/sieve.hpp"
#include "shapetest/slutsky.hpp"

namespace shapetest::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Shortest representation that reads back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Columns named <prefix>1, <prefix>2, ... in order; stops at the first gap.
std::vector<int> numbered_columns(const Table& t, const std::string& prefix) {
  std::vector<int> cols;
  for (int j = 1;; ++j) {
    const int c = t.column(prefix + std::to_string(j));
    if (c < 0) break;
    cols.push_back(c);
  }
  return cols;
}

Eigen::MatrixXd gather(const Table& t, const std::vector<int>& cols) {
  Eigen::MatrixXd m(t.rows.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = t.rows.col(cols[j]);
  return m;
}

template <class T>
std::vector<T> broadcast(const std::vector<T>& v, int dims, const char* flag) {
  if (v.size() == 1) return std::vector<T>(static_cast<std::size_t>(dims), v.front());
  if (static_cast<int>(v.size()) != dims) {
    fail(ErrorCode::InvalidArgument,
         std::string(flag) + " needs 1 or " + std::to_string(dims) + " values, got " + std::to_string(v.size()));
  }
  return v;
}

struct GridFlags {
  std::vector<double> lo, hi;
  std::vector<int> n;

  bool given() const { return !lo.empty() || !hi.empty() || !n.empty(); }
};

int default_points(int dims) { return dims == 1 ? 37 : (dims == 2 ? 17 : 9); }

// Explicit flags win; missing bounds fall back to the data range trimmed by 5% at each end.
GridPtr build_grid(const GridFlags& g, const Eigen::MatrixXd& data) {
  const int d = static_cast<int>(data.cols());
  std::vector<double> lo(static_cast<std::size_t>(d)), hi(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    const double mn = data.col(j).minCoeff();
    const double mx = data.col(j).maxCoeff();
    lo[static_cast<std::size_t>(j)] = mn + 0.05 * (mx - mn);
    hi[static_cast<std::size_t>(j)] = mx - 0.05 * (mx - mn);
  }
  if (!g.lo.empty()) lo = broadcast(g.lo, d, "--grid-lo");
  if (!g.hi.empty()) hi = broadcast(g.hi, d, "--grid-hi");
  std::vector<int> counts(static_cast<std::size_t>(d), default_points(d));
  if (!g.n.empty()) counts = broadcast(g.n, d, "--grid-n");
  std::vector<Interval> bounds;
  for (int j = 0; j < d; ++j) bounds.push_back({lo[static_cast<std::size_t>(j)], hi[static_cast<std::size_t>(j)]});
  return make_grid(std::move(bounds), std::move(counts));
}

void add_grid_flags(CLI::App* app, GridFlags& g) {
  app->add_option("--grid-lo", g.lo, "Lower grid bound (one value or one per dimension)")->delimiter(',');
  app->add_option("--grid-hi", g.hi, "Upper grid bound (one value or one per dimension)")->delimiter(',');
  app->add_option("--grid-n", g.n, "Grid points (one value or one per dimension)")->delimiter(',');
}

struct EstimationFlags {
  std::string shape = "monotone";
  double alpha = 0.05;
  std::vector<std::string> gamma{"0.01/log(n)"};
  std::vector<int> knots;
  std::vector<int> order;
  int B = 200;
  std::uint64_t seed = 1;
  std::optional<double> kappa;
  std::string weights = "normal";
  std::string slutsky_form;  // empty: shares for `test`, levels for `simulate`
  GridFlags grid;
};

void add_estimation_flags(CLI::App* app, EstimationFlags& f, bool multi_gamma) {
  app->add_option("--alpha", f.alpha, "Significance level")->capture_default_str();
  auto* g = app->add_option("--gamma", f.gamma, "gamma_n rule: number, c/log(n), 1/n or n^p")->capture_default_str();
  if (multi_gamma) {
    g->delimiter(';');
  } else {
    g->expected(1);
  }
  app->add_option("--knots", f.knots, "Interior knots (one value or one per dimension)")->delimiter(',');
  app->add_option("--order", f.order, "Spline order, 4 = cubic (one value or one per dimension)")->delimiter(',');
  app->add_option("--B", f.B, "Bootstrap draws")->capture_default_str();
  app->add_option("--seed", f.seed, "RNG seed")->capture_default_str();
  app->add_option("--kappa", f.kappa, "Fixed kappa instead of the data-driven choice");
  app->add_option("--weights", f.weights, "Bootstrap weights: normal, rademacher or mammen")
      ->check(CLI::IsMember({"normal", "rademacher", "mammen"}))
      ->capture_default_str();
  app->add_option("--slutsky-form", f.slutsky_form,
                  multi_gamma ? "Slutsky matrix form: shares or levels (default levels)"
                              : "Slutsky matrix form: shares or levels (default shares)")
      ->check(CLI::IsMember({"shares", "levels"}));
  add_grid_flags(app, f.grid);
}

sieve::WeightLaw weight_law(const std::string& name) {
  if (name == "rademacher") return sieve::WeightLaw::Rademacher;
  if (name == "mammen") return sieve::WeightLaw::Mammen;
  return sieve::WeightLaw::StandardNormal;
}

testing::TestConfig make_config(const EstimationFlags& f, const std::string& gamma, cones::ConeSpec cone,
                                GridPtr grid) {
  testing::TestConfig cfg;
  cfg.alpha = f.alpha;
  cfg.gamma = testing::GammaRule::parse(gamma);
  cfg.B = f.B;
  cfg.cone = std::move(cone);
  cfg.grid = std::move(grid);
  cfg.kappa_override = f.kappa;
  cfg.seed = f.seed;
  cfg.weights = weight_law(f.weights);
  if (f.slutsky_form == "levels") cfg.slutsky_form = slutsky::Form::Levels;
  cfg.validate();
  return cfg;
}

mc::BasisSpec basis_spec(const EstimationFlags& f, int dims) {
  mc::BasisSpec spec;
  spec.interior = f.knots.empty() ? std::vector<int>(static_cast<std::size_t>(dims), dims == 1 ? 3 : 0)
                                  : broadcast(f.knots, dims, "--knots");
  spec.order = f.order.empty() ? std::vector<int>(static_cast<std::size_t>(dims), dims == 1 ? 4 : 3)
                               : broadcast(f.order, dims, "--order");
  return spec;
}

bool is_slutsky_shape(const std::string& s) { return s == "slutsky" || s == "slutsky-nsd"; }

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) fail(ErrorCode::InvalidArgument, "cannot open output file " + path);
      os_ = &file_;
    }
  }
  std::ostream& stream() { return *os_; }

 private:
  std::ofstream file_;
  std::ostream* os_;
};

int cmd_test(const std::string& input, const std::string& out_path, const EstimationFlags& f, std::ostream& out,
             std::ostream& err) {
  const Table t = read_csv_file(input);
  testing::TestReport rep;
  if (is_slutsky_shape(f.shape)) {
    const auto q = numbered_columns(t, "q");
    const auto p = numbered_columns(t, "p");
    const int y = t.column("y");
    if (q.empty() || q.size() != p.size() || y < 0) {
      fail(ErrorCode::InvalidArgument, "Slutsky input needs columns q1..qd, p1..pd and y");
    }
    slutsky::SlutskyData data;
    data.Q = gather(t, q);
    std::vector<int> tc = p;
    tc.push_back(y);
    data.T = gather(t, tc);
    data.Z = gather(t, numbered_columns(t, "z"));
    const int dims = static_cast<int>(tc.size());
    const auto spec = basis_spec(f, dims);
    const auto basis = sieve::SieveBasis::from_data(data.T, spec.interior, spec.order);
    const auto cfg = make_config(f, f.gamma.front(), parse_shape(f.shape, static_cast<int>(q.size())),
                                 build_grid(f.grid, data.T));
    rep = testing::run_slutsky_test(data, basis, cfg);
  } else {
    const int y = t.column("y");
    if (y < 0) fail(ErrorCode::InvalidArgument, "input has no column y");
    const auto z = numbered_columns(t, "z");
    if (z.empty()) fail(ErrorCode::InvalidArgument, "input has no column z1");
    sieve::Dataset data{t.rows.col(y), gather(t, z)};
    const int dims = data.dims();
    const auto spec = basis_spec(f, dims);
    const auto basis = sieve::SieveBasis::from_data(data.z, spec.interior, spec.order);
    const auto cfg = make_config(f, f.gamma.front(), parse_shape(f.shape, dims), build_grid(f.grid, data.z));
    rep = testing::run_test(data, basis, cfg);
  }
  Output o(out_path, out);
  o.stream() << report_json(rep, f.shape).dump(2) << '\n';
  err << (rep.reject ? "reject" : "do not reject") << " '" << f.shape << "': statistic " << fmt(rep.statistic)
      << ", critical value " << fmt(rep.critical_value) << ", p-value " << fmt(rep.p_value) << '\n';
  return 0;
}

struct SimulateFlags {
  std::string design;
  int label = 1;
  std::optional<double> a, b, c;
  std::vector<double> delta;
  std::optional<long long> n;
  int reps = 100;
  int threads = 0;
  double slutsky_step = 0.1;
  std::string format = "csv";
  std::string out;
};

mc::Design make_design(const SimulateFlags& s, std::optional<double> delta) {
  const bool custom = s.a || s.b || s.c;
  if (custom && !(s.a && s.b && s.c)) fail(ErrorCode::InvalidArgument, "--a, --b and --c go together");
  if (custom && delta) fail(ErrorCode::InvalidArgument, "--delta cannot be combined with --a/--b/--c");
  const bool log5 = s.design == "mc2log5";
  const Eigen::Index n = s.n ? static_cast<Eigen::Index>(*s.n) : (s.design == "slutsky" ? 1000 : 500);
  if (n < 1) fail(ErrorCode::InvalidArgument, "--n must be positive");
  if (s.design == "mc1") {
    if (delta) return mc::mc1_alternative(*delta, n);
    if (custom) return {mc::MC1{*s.a, *s.b, *s.c}, n};
    return mc::mc1_null(s.label, n);
  }
  if (s.design == "mc2" || log5) {
    if (delta) return mc::mc2_alternative(*delta, n, log5);
    if (custom) return {mc::MC2{*s.a, *s.b, *s.c, log5}, n};
    return mc::mc2_null(s.label, n, log5);
  }
  if (delta) return mc::slutsky_alternative(*delta, n);
  if (custom) return {mc::SlutskyNull{*s.a, *s.b, *s.c}, n};
  return mc::slutsky_null(s.label, n);
}

int cmd_simulate(const SimulateFlags& s, const EstimationFlags& f, bool shape_given, std::ostream& out,
                 std::ostream& err) {
  if (s.reps < 1) fail(ErrorCode::InvalidArgument, "--reps must be positive");
  std::vector<std::optional<double>> deltas;
  if (s.delta.empty()) deltas.emplace_back();
  for (double d : s.delta) deltas.emplace_back(d);

  std::vector<mc::StudyResult> rows;
  for (const auto& delta : deltas) {
    const mc::Design design = make_design(s, delta);
    for (const auto& gamma : f.gamma) {
      mc::StudyConfig cfg;
      const int dims = design.dims();
      GridPtr grid = mc::default_grid(design, s.slutsky_step);
      if (f.grid.given()) {
        std::vector<Interval> bounds;
        std::vector<int> counts;
        for (int j = 0; j < dims; ++j) {
          bounds.push_back(grid->bounds(j));
          counts.push_back(grid->count(j));
        }
        if (!f.grid.lo.empty()) {
          const auto lo = broadcast(f.grid.lo, dims, "--grid-lo");
          for (int j = 0; j < dims; ++j) bounds[static_cast<std::size_t>(j)].lo = lo[static_cast<std::size_t>(j)];
        }
        if (!f.grid.hi.empty()) {
          const auto hi = broadcast(f.grid.hi, dims, "--grid-hi");
          for (int j = 0; j < dims; ++j) bounds[static_cast<std::size_t>(j)].hi = hi[static_cast<std::size_t>(j)];
        }
        if (!f.grid.n.empty()) counts = broadcast(f.grid.n, dims, "--grid-n");
        grid = make_grid(std::move(bounds), std::move(counts));
      }
      const auto cone = shape_given ? parse_shape(f.shape, design.is_slutsky() ? 2 : dims) : mc::default_cone(design);
      cfg.test = make_config(f, gamma, cone, grid);
      if (design.is_slutsky() && f.slutsky_form.empty()) cfg.test.slutsky_form = slutsky::Form::Levels;
      cfg.basis = mc::default_basis(design);
      if (!f.knots.empty()) cfg.basis.interior = broadcast(f.knots, dims, "--knots");
      if (!f.order.empty()) cfg.basis.order = broadcast(f.order, dims, "--order");
      cfg.reps = s.reps;
      cfg.base_seed = f.seed;
      cfg.threads = s.threads;
      rows.push_back(mc::run_study(design, cfg));
      const auto& r = rows.back();
      err << r.design << " gamma=" << r.gamma_rule << ": rejection rate " << fmt(r.rejection_rate) << " over "
          << r.completed << " replications";
      if (r.failures > 0) err << " (" << r.failures << " failed: " << r.failure_messages.front() << ")";
      err << '\n';
    }
  }
  Output o(s.out, out);
  if (s.format == "json") {
    o.stream() << study_json(rows).dump(2) << '\n';
  } else {
    o.stream() << study_csv(rows);
  }
  return 0;
}

int cmd_project(const std::string& input, const std::string& out_path, const std::string& shape,
                const std::string& weighting, const GridFlags& gf, std::ostream& out, std::ostream& err) {
  const Table t = read_csv_file(input);
  const auto z = numbered_columns(t, "z");
  std::vector<int> vcols;
  int block = 1;
  if (const int v = t.column("value"); v >= 0) {
    vcols.push_back(v);
  } else {
    // Matrix values: v11, v12, ..., row-major.
    for (int d = 1; d <= 8 && vcols.empty(); ++d) {
      if (t.column("v" + std::to_string(d) + std::to_string(d)) >= 0 &&
          t.column("v" + std::to_string(d + 1) + std::to_string(d + 1)) < 0) {
        block = d;
        for (int r = 1; r <= d; ++r) {
          for (int c = 1; c <= d; ++c) {
            const int col = t.column("v" + std::to_string(r) + std::to_string(c));
            if (col < 0) fail(ErrorCode::InvalidArgument, "missing matrix column v" + std::to_string(r) + std::to_string(c));
            vcols.push_back(col);
          }
        }
      }
    }
  }
  if (vcols.empty()) fail(ErrorCode::InvalidArgument, "input needs a 'value' column or matrix columns v11..");
  const auto rows = t.rows.rows();

  GridPtr grid;
  if (gf.given()) {
    int dims = static_cast<int>(std::max({gf.lo.size(), gf.hi.size(), gf.n.size()}));
    if (dims == 1 && !z.empty()) dims = static_cast<int>(z.size());
    if (gf.lo.empty() || gf.hi.empty()) fail(ErrorCode::InvalidArgument, "--grid-lo and --grid-hi are both required");
    std::vector<Interval> bounds;
    const auto lo = broadcast(gf.lo, dims, "--grid-lo");
    const auto hi = broadcast(gf.hi, dims, "--grid-hi");
    for (int j = 0; j < dims; ++j) bounds.push_back({lo[static_cast<std::size_t>(j)], hi[static_cast<std::size_t>(j)]});
    std::vector<int> counts;
    if (!gf.n.empty()) {
      counts = broadcast(gf.n, dims, "--grid-n");
    } else if (dims == 1) {
      counts = {static_cast<int>(rows)};
    } else {
      fail(ErrorCode::InvalidArgument, "--grid-n is required for multivariate grids");
    }
    grid = make_grid(std::move(bounds), std::move(counts));
  } else if (!z.empty()) {
    std::vector<Interval> bounds;
    std::vector<int> counts;
    for (int c : z) {
      std::set<double> uniq(t.rows.col(c).data(), t.rows.col(c).data() + rows);
      bounds.push_back({*uniq.begin(), *uniq.rbegin()});
      counts.push_back(static_cast<int>(uniq.size()));
    }
    grid = make_grid(std::move(bounds), std::move(counts));
  } else {
    grid = make_grid({{0.0, 1.0}}, {static_cast<int>(rows)});
  }
  if (static_cast<Eigen::Index>(grid->size()) != rows) {
    fail(ErrorCode::GridMismatch, "input has " + std::to_string(rows) + " rows but the grid has " +
                                      std::to_string(grid->size()) + " points");
  }
  if (!z.empty()) {
    if (static_cast<int>(z.size()) != grid->dims()) fail(ErrorCode::GridMismatch, "z columns do not match the grid");
    const Eigen::MatrixXd pts = grid->point_matrix();
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (int j = 0; j < grid->dims(); ++j) {
        // Coordinates printed with a few digits must still match, so compare
        // against a small fraction of the spacing.
        const double tol = 1e-3 * grid->step(j);
        if (std::abs(t.rows(i, z[static_cast<std::size_t>(j)]) - pts(i, j)) > tol) {
          fail(ErrorCode::GridMismatch, "row " + std::to_string(i + 1) + " is not at grid point " +
                                            std::to_string(i) + " (last coordinate varies fastest)");
        }
      }
    }
  }

  Eigen::VectorXd values(rows * block * block);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (std::size_t c = 0; c < vcols.size(); ++c) {
      values[i * block * block + static_cast<Eigen::Index>(c)] = t.rows(i, vcols[c]);
    }
  }
  const FunctionGrid f(grid, values, block);
  const auto cone = parse_shape(shape, is_slutsky_shape(shape) ? block : grid->dims());
  cones::Projector projector(cone, grid);
  if (weighting == "uniform") projector.set_weights(Eigen::VectorXd::Ones(rows));
  const FunctionGrid p = projector.project(f);
  const double distance = l2_norm(f - p);

  Output o(out_path, out);
  auto& os = o.stream();
  for (int j = 0; j < grid->dims(); ++j) os << 'z' << j + 1 << ',';
  if (block == 1) {
    os << "value\n";
  } else {
    for (int r = 1; r <= block; ++r) {
      for (int c = 1; c <= block; ++c) os << 'v' << r << c << (r == block && c == block ? '\n' : ',');
    }
  }
  const Eigen::MatrixXd pts = grid->point_matrix();
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (int j = 0; j < grid->dims(); ++j) os << fmt(pts(i, j)) << ',';
    for (int c = 0; c < block * block; ++c) {
      os << fmt(p.values()[i * block * block + c]) << (c + 1 == block * block ? '\n' : ',');
    }
  }
  os << "# distance: " << fmt(distance) << '\n';
  err << "projection distance " << fmt(distance) << '\n';
  return 0;
}

}  // namespace

int Table::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

Table read_csv(std::istream& in) {
  Table t;
  std::string line;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    auto cells = split(s);
    if (t.header.empty()) {
      if (line_no == 1 && cells.front().rfind("\xEF\xBB\xBF", 0) == 0) cells.front().erase(0, 3);
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      fail(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                           " fields, expected " + std::to_string(t.header.size()));
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      double v = 0.0;
      const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (c.empty() || res.ec != std::errc() || res.ptr != c.data() + c.size() || !std::isfinite(v)) {
        fail(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": cannot parse '" + c + "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (t.header.empty()) fail(ErrorCode::EmptyData, "CSV input is empty");
  if (rows.empty()) fail(ErrorCode::EmptyData, "CSV input has no data rows");
  t.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      t.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return t;
}

Table read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::InvalidArgument, "cannot open " + path);
  return read_csv(in);
}

const std::vector<std::string>& shape_names() {
  static const std::vector<std::string> names{"monotone",     "decreasing",   "convex",      "concave",
                                              "monotone-convex", "monotone-concave", "convex-multi",
                                              "concave-multi", "supermodular", "nonneg",      "slutsky",
                                              "slutsky-nsd"};
  return names;
}

cones::ConeSpec parse_shape(const std::string& name, int dims) {
  using namespace cones;
  if (name == "monotone") return ConeSpec::increasing(dims);
  if (name == "decreasing") return ConeSpec::decreasing(dims);
  if (name == "convex") return dims == 1 ? ConeSpec(Convex1D{}) : ConeSpec(ConvexMultivariate{});
  if (name == "concave") return dims == 1 ? ConeSpec(Concave1D{}) : ConeSpec(ConcaveMultivariate{});
  if (name == "monotone-convex") {
    return dims == 1 ? intersect({ConeSpec::increasing(1), Convex1D{}}) : ConeSpec(ConvexMultivariate{true});
  }
  if (name == "monotone-concave") {
    return dims == 1 ? intersect({ConeSpec::increasing(1), Concave1D{}}) : ConeSpec(ConcaveMultivariate{true});
  }
  if (name == "convex-multi") return ConvexMultivariate{};
  if (name == "concave-multi") return ConcaveMultivariate{};
  if (name == "supermodular") return Supermodular{};
  if (name == "nonneg") return Nonnegative{};
  if (name == "slutsky") return Slutsky{dims, true};
  if (name == "slutsky-nsd") return Slutsky{dims, false};
  fail(ErrorCode::InvalidArgument, "unknown shape '" + name + "'");
}

nlohmann::ordered_json report_json(const testing::TestReport& r, const std::string& shape) {
  nlohmann::ordered_json j;
  j["statistic"] = r.statistic;
  j["tau_hat"] = r.tau_hat;
  j["kappa_hat"] = r.kappa_hat;
  j["critical_value"] = r.critical_value;
  j["p_value"] = r.p_value;
  j["reject"] = r.reject;
  j["r_n"] = r.r_n;
  j["c_n"] = r.c_n;
  j["k_n"] = r.k_n;
  j["n"] = r.n;
  j["seed"] = r.seed;
  j["shape"] = shape;
  j["alpha"] = r.alpha;
  j["gamma"] = r.gamma;
  j["B"] = r.B;
  j["flags"] = r.flags;
  j["psi_values"] = r.psi_values;
  return j;
}

std::string study_csv(const std::vector<mc::StudyResult>& rows) {
  std::ostringstream os;
  os << "design,n,k_n,gamma,rejection_rate,reps,seed,failures,mean_statistic,mean_critical_value\n";
  for (const auto& r : rows) {
    os << '"' << r.design << "\"," << r.n << ',' << r.k_n << ',' << r.gamma_rule << ',' << fmt(r.rejection_rate)
       << ',' << r.reps << ',' << r.seed << ',' << r.failures << ',' << fmt(r.mean_statistic) << ','
       << fmt(r.mean_critical_value) << '\n';
  }
  return os.str();
}

nlohmann::ordered_json study_json(const std::vector<mc::StudyResult>& rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["design"] = r.design;
    j["n"] = r.n;
    j["k_n"] = r.k_n;
    j["gamma"] = r.gamma_rule;
    j["gamma_value"] = r.gamma;
    j["rejection_rate"] = r.rejection_rate;
    j["reps"] = r.reps;
    j["completed"] = r.completed;
    j["failures"] = r.failures;
    j["mean_statistic"] = r.mean_statistic;
    j["mean_critical_value"] = r.mean_critical_value;
    j["mean_kappa"] = r.mean_kappa;
    j["seed"] = r.seed;
    arr.push_back(std::move(j));
  }
  return arr;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shape-restriction tests by projection and score bootstrap"};
  app.require_subcommand(1);

  std::string test_input, test_out;
  EstimationFlags test_flags;
  auto* test = app.add_subcommand("test", "Test a shape restriction on CSV data (columns y,z1..zd)");
  test->add_option("input", test_input, "CSV file")->required();
  test->add_option("--out", test_out, "Write the JSON report here instead of stdout");
  test->add_option("--shape", test_flags.shape, "Restriction")
      ->check(CLI::IsMember(shape_names()))
      ->capture_default_str();
  add_estimation_flags(test, test_flags, false);

  SimulateFlags sim;
  EstimationFlags sim_flags;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo size and power study");
  simulate->add_option("--design", sim.design, "mc1, mc2, mc2log5 or slutsky")
      ->required()
      ->check(CLI::IsMember({"mc1", "mc2", "mc2log5", "slutsky"}));
  simulate->add_option("--label", sim.label, "Null design D1..D3")->check(CLI::Range(1, 3))->capture_default_str();
  simulate->add_option("--a", sim.a, "Design parameter a");
  simulate->add_option("--b", sim.b, "Design parameter b");
  simulate->add_option("--c", sim.c, "Design parameter c");
  simulate->add_option("--delta", sim.delta, "Alternatives (comma separated)")->delimiter(',');
  simulate->add_option("--n", sim.n, "Sample size (500, or 1000 for slutsky)");
  simulate->add_option("--reps", sim.reps, "Replications")->capture_default_str();
  simulate->add_option("--threads", sim.threads, "Worker threads, 0 = all cores")->capture_default_str();
  simulate->add_option("--slutsky-step", sim.slutsky_step, "Grid step for the Slutsky designs")
      ->capture_default_str();
  simulate->add_option("--format", sim.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  simulate->add_option("--out", sim.out, "Write results here instead of stdout");
  auto* sim_shape = simulate->add_option("--shape", sim_flags.shape, "Restriction (default: the design's null)")
                        ->check(CLI::IsMember(shape_names()));
  add_estimation_flags(simulate, sim_flags, true);

  std::string proj_input, proj_out, proj_shape, proj_weights = "uniform";
  GridFlags proj_grid;
  auto* project = app.add_subcommand("project", "Project grid values (CSV column 'value') onto a cone");
  project->add_option("input", proj_input, "CSV file")->required();
  project->add_option("--out", proj_out, "Write the projected values here instead of stdout");
  project->add_option("--shape", proj_shape, "Restriction")->required()->check(CLI::IsMember(shape_names()));
  project->add_option("--weights", proj_weights, "Projection weights: uniform or trapezoid")
      ->check(CLI::IsMember({"uniform", "trapezoid"}))
      ->capture_default_str();
  add_grid_flags(project, proj_grid);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*test) return cmd_test(test_input, test_out, test_flags, out, err);
    if (*simulate) return cmd_simulate(sim, sim_flags, sim_shape->count() > 0, out, err);
    return cmd_project(proj_input, proj_out, proj_shape, proj_weights, proj_grid, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::SolverFailure ? 3 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace shapetest::cli
