#include "shapetest/mc.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "shapetest/error.hpp"

namespace shapetest::mc {

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

void check_label(int label) {
  if (label < 1 || label > 3) fail(ErrorCode::InvalidArgument, "design label must be 1, 2 or 3");
}

}  // namespace

int Design::dims() const noexcept {
  return std::visit(overloaded{[](const MC1&) { return 1; }, [](const MC2&) { return 2; },
                               [](const auto&) { return 3; }},
                    kind);
}

std::string Design::label() const {
  return std::visit(
      overloaded{
          [](const MC1& d) { return "mc1(a=" + num(d.a) + ",b=" + num(d.b) + ",c=" + num(d.c) + ")"; },
          [](const MC2& d) {
            return std::string(d.log5 ? "mc2log5" : "mc2") + "(a=" + num(d.a) + ",b=" + num(d.b) +
                   ",c=" + num(d.c) + ")";
          },
          [](const SlutskyNull& d) {
            return "slutsky(a=" + num(d.a) + ",b=" + num(d.b) + ",c=" + num(d.c) + ")";
          },
          [](const SlutskyAlt& d) { return "slutsky(delta=" + num(d.delta) + ")"; }},
      kind);
}

Design mc1_null(int label, Eigen::Index n) {
  check_label(label);
  static const MC1 table[] = {{0, 0, 0}, {0.1, 0.5, 0.5}, {0.5, 2, 1}};
  return {table[label - 1], n};
}

Design mc1_alternative(double delta, Eigen::Index n) { return {MC1{0.0, 0.2 * delta, 5.0 + 0.1 * delta}, n}; }

Design mc2_null(int label, Eigen::Index n, bool log5) {
  check_label(label);
  static const double table[][3] = {{0, 0, 0}, {0.2, 1, 0}, {0.5, 0, 0.5}};
  const auto& t = table[label - 1];
  return {MC2{t[0], t[1], t[2], log5}, n};
}

Design mc2_alternative(double delta, Eigen::Index n, bool log5) {
  return {MC2{-0.05 * delta, 0.0, -0.05 * delta, log5}, n};
}

Design slutsky_null(int label, Eigen::Index n) {
  check_label(label);
  static const SlutskyNull table[] = {{0, 0.5, 0.5}, {0.5, 0, 0}, {1, 0.5, 0}};
  return {table[label - 1], n};
}

Design slutsky_alternative(double delta, Eigen::Index n) { return {SlutskyAlt{delta}, n}; }

double mc1_theta(const MC1& d, double z) { return d.a * z - d.b * norm_pdf(d.c * z); }

double mc2_theta(const MC2& d, double z1, double z2) {
  const double mean = d.b == 0.0 ? std::sqrt(z1 * z2)
                                 : std::pow(0.5 * std::pow(z1, d.b) + 0.5 * std::pow(z2, d.b), 1.0 / d.b);
  const double s = d.log5 ? 5.0 : 1.0;
  return d.a * mean + d.c * std::log(1.0 + s * (z1 + z2));
}

Eigen::Vector2d slutsky_g(const Design& design, double p1, double p2, double y) {
  if (const auto* alt = std::get_if<SlutskyAlt>(&design.kind)) {
    return {std::exp((p1 - 1.5) * 0.1 * alt->delta), std::exp(-(p2 - 1.5) * 0.1 * alt->delta)};
  }
  const auto* d = std::get_if<SlutskyNull>(&design.kind);
  if (d == nullptr) fail(ErrorCode::InvalidArgument, "not a Slutsky design");
  const double e1 = 1.0 / (d->b - 1.0);
  const double e2 = d->b / (d->b - 1.0);
  const double denom = std::pow(p1, e2) + std::pow(p2, e2);
  return {d->a * std::pow(p1, e1) * y / denom + d->c, d->a * std::pow(p2, e1) * y / denom + d->c};
}

Sample generate(const Design& design, std::mt19937_64& rng) {
  if (design.n < 1) fail(ErrorCode::InvalidArgument, "sample size must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = design.n;
  Sample s;
  std::visit(overloaded{[&](const MC1& d) {
                          s.data.y.resize(n);
                          s.data.z.resize(n, 1);
                          for (Eigen::Index i = 0; i < n; ++i) {
                            const double z = -1.0 + 2.0 * norm_cdf(normal(rng));
                            const double u = normal(rng);
                            s.data.z(i, 0) = z;
                            s.data.y[i] = mc1_theta(d, z) + u;
                          }
                        },
                        [&](const MC2& d) {
                          s.data.y.resize(n);
                          s.data.z.resize(n, 2);
                          for (Eigen::Index i = 0; i < n; ++i) {
                            const double z1 = norm_cdf(normal(rng));
                            const double z2 = norm_cdf(normal(rng));
                            const double u = normal(rng);
                            s.data.z(i, 0) = z1;
                            s.data.z(i, 1) = z2;
                            s.data.y[i] = mc2_theta(d, z1, z2) + u;
                          }
                        },
                        [&](const auto&) {
                          auto& dm = s.demand;
                          dm.Q.resize(n, 2);
                          dm.T.resize(n, 3);
                          dm.Z.resize(n, 1);
                          for (Eigen::Index i = 0; i < n; ++i) {
                            const double p1 = 1.0 + norm_cdf(normal(rng));
                            const double p2 = 1.0 + norm_cdf(normal(rng));
                            const double y = norm_cdf(normal(rng));
                            const double z = norm_cdf(normal(rng));
                            const double u1 = normal(rng);
                            const double u2 = normal(rng);
                            const Eigen::Vector2d g = slutsky_g(design, p1, p2, y);
                            dm.T.row(i) << p1, p2, y;
                            dm.Z(i, 0) = z;
                            // Gamma_0 = (1, 1)': the covariate enters both equations with slope 1.
                            dm.Q(i, 0) = g[0] + z + u1;
                            dm.Q(i, 1) = g[1] + z + u2;
                          }
                        }},
             design.kind);
  return s;
}

BasisSpec default_basis(const Design& design) {
  const auto d = static_cast<std::size_t>(design.dims());
  if (d == 1) return {{3}, {4}};
  return {std::vector<int>(d, 0), std::vector<int>(d, 3)};
}

GridPtr default_grid(const Design& design, double slutsky_step) {
  switch (design.dims()) {
    case 1: return make_grid({{-0.9, 0.9}}, {37});
    case 2: return make_grid({{0.1, 0.9}, {0.1, 0.9}}, {17, 17});
    default: {
      if (!(slutsky_step > 0.0)) fail(ErrorCode::InvalidArgument, "grid step must be positive");
      const int pts = static_cast<int>(std::lround(0.8 / slutsky_step)) + 1;
      return make_grid({{1.1, 1.9}, {1.1, 1.9}, {0.1, 0.9}}, {pts, pts, pts});
    }
  }
}

cones::ConeSpec default_cone(const Design& design) {
  if (design.is_slutsky()) return cones::Slutsky{2, true};
  return cones::ConeSpec::increasing(design.dims());
}

StudyConfig default_study(const Design& design) {
  StudyConfig cfg;
  cfg.test.cone = default_cone(design);
  cfg.test.grid = default_grid(design);
  cfg.basis = default_basis(design);
  // The simulated demands are quantities in levels.
  if (design.is_slutsky()) cfg.test.slutsky_form = slutsky::Form::Levels;
  return cfg;
}

double StudyResult::standard_error() const {
  if (completed == 0) return 0.0;
  return std::sqrt(rejection_rate * (1.0 - rejection_rate) / completed);
}

testing::TestReport run_replication(const Design& design, const StudyConfig& config, int r) {
  std::mt19937_64 rng(config.base_seed + static_cast<std::uint64_t>(r));
  const Sample s = generate(design, rng);
  testing::TestConfig tc = config.test;
  tc.seed = rng();
  if (design.is_slutsky()) {
    const auto basis = sieve::SieveBasis::from_data(s.demand.T, config.basis.interior, config.basis.order);
    return testing::run_slutsky_test(s.demand, basis, tc);
  }
  const auto basis = sieve::SieveBasis::from_data(s.data.z, config.basis.interior, config.basis.order);
  return testing::run_test(s.data, basis, tc);
}

StudyResult run_study(const Design& design, const StudyConfig& config) {
  if (config.reps < 1) fail(ErrorCode::InvalidArgument, "need at least one replication");
  config.test.validate();
  const auto start = std::chrono::steady_clock::now();

  struct Outcome {
    int decision = -1;
    double statistic = 0.0, critical = 0.0, kappa = 0.0;
    int k_n = 0;
    std::string error;
  };
  std::vector<Outcome> outcomes(static_cast<std::size_t>(config.reps));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < config.reps; r = next++) {
      auto& o = outcomes[static_cast<std::size_t>(r)];
      try {
        const auto rep = run_replication(design, config, r);
        o.decision = rep.reject ? 1 : 0;
        o.statistic = rep.statistic;
        o.critical = rep.critical_value;
        o.kappa = rep.kappa_hat;
        o.k_n = rep.k_n;
      } catch (const std::exception& e) {
        o.error = "replication " + std::to_string(r) + ": " + e.what();
      }
    }
  };
  int threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, config.reps);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  StudyResult res;
  res.design = design.label();
  res.n = design.n;
  res.gamma_rule = config.test.gamma.label();
  res.gamma = config.test.gamma.resolve(design.n);
  res.reps = config.reps;
  res.seed = config.base_seed;
  std::size_t k = 1;
  for (std::size_t j = 0; j < config.basis.order.size(); ++j) {
    k *= static_cast<std::size_t>(config.basis.order[j] + config.basis.interior[j]);
  }
  res.k_n = static_cast<int>(k);
  for (const auto& o : outcomes) {
    res.decisions.push_back(o.decision);
    if (o.decision < 0) {
      ++res.failures;
      res.failure_messages.push_back(o.error);
      continue;
    }
    ++res.completed;
    res.rejections += o.decision;
    res.mean_statistic += o.statistic;
    res.mean_critical_value += o.critical;
    res.mean_kappa += o.kappa;
  }
  if (res.completed > 0) {
    const double c = res.completed;
    res.rejection_rate = res.rejections / c;
    res.mean_statistic /= c;
    res.mean_critical_value /= c;
    res.mean_kappa /= c;
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace shapetest::mc
