// Randomized 2-D obstacle-avoidance evaluation: environment generation,
// adaptation, violation/KL metrics, and table emission.
#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include "cpmp/problem.hpp"
#include "cpmp/solver.hpp"

namespace cpmp {

enum class EnvKind { Repeller, UnboundWaypoint, VirtualWall };

inline const char* env_kind_name(EnvKind k) {
  switch (k) {
    case EnvKind::Repeller: return "repeller";
    case EnvKind::UnboundWaypoint: return "unbound-waypoint";
    case EnvKind::VirtualWall: return "virtual-wall";
  }
  return "?";
}

inline EnvKind env_kind_from_string(const std::string& s) {
  if (s == "repeller") return EnvKind::Repeller;
  if (s == "unbound-waypoint") return EnvKind::UnboundWaypoint;
  if (s == "virtual-wall") return EnvKind::VirtualWall;
  throw std::invalid_argument("unknown benchmark kind '" + s + "'");
}

struct Disc {
  Eigen::Vector2d center;
  double radius = 0.0;
};

struct Wall {
  Eigen::Vector2d normal;  // allowed side: normal . (x - bias) <= 0
  Eigen::Vector2d bias;
};

struct Environment {
  std::uint64_t seed = 0;
  EnvKind kind = EnvKind::Repeller;
  int count = 1;
  ProMP original;  // 2-D Cartesian, identity chain
  double y_start = 0.0, y_end = 0.0;
  std::vector<Disc> discs;  // repellers or unbound waypoints
  std::vector<Wall> walls;
};

struct EvalMetrics {
  double violation_rate = 0.0;
  double normalized_kl = 0.0;
  bool failed = false;
};

inline constexpr int kBenchGrid = 50;
inline constexpr double kBenchAlpha = 0.999;
// Fixed benchmark hyperparameters: sigma-point spread for the distance
// transforms and the multiplier ascent rate used for every constraint.
inline constexpr double kBenchUtAlpha = 2.5;
inline constexpr double kBenchEta = 50.0;
// Walls are enforced with a small safety margin: the solver sees the plane
// pulled toward the allowed side so per-time tails sit below 1 - alpha.
inline constexpr double kBenchWallMargin = 0.3;

// Zero-mean unit-covariance 2-D primitive conditioned on the start and end
// points as via-points.
inline ProMP benchmark_original(double y_start, double y_end) {
  ProMP p;
  p.D = 2;
  p.basis = default_basis(15, 1.0);
  p.mu_w = Eigen::VectorXd::Zero(p.dim());
  p.Sigma_w = Eigen::MatrixXd::Identity(p.dim(), p.dim());
  p.Sigma_y = 1e-6 * Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd obs = 1e-4 * Eigen::MatrixXd::Identity(2, 2);
  p = condition(p, 0.0, Eigen::Vector2d(-3.0, y_start), obs);
  p = condition(p, p.basis.T, Eigen::Vector2d(3.0, y_end), obs);
  return p;
}

inline Environment generate_environment(std::uint64_t seed, EnvKind kind, int count) {
  if (count < 1 || count > 3)
    throw std::invalid_argument("generate_environment: count must be in {1,2,3}");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  Environment env;
  env.seed = seed;
  env.kind = kind;
  env.count = count;
  env.y_start = -1.0 + 2.0 * uni(rng);
  env.y_end = -1.0 + 2.0 * uni(rng);
  env.original = benchmark_original(env.y_start, env.y_end);

  const double T = env.original.basis.T;
  Eigen::MatrixXd mean(kBenchGrid, 2);
  for (int g = 0; g < kBenchGrid; ++g)
    mean.row(g) = marginal_moments(env.original, g * T / (kBenchGrid - 1)).mean.transpose();
  const Eigen::Vector2d start = mean.row(0), end = mean.row(kBenchGrid - 1);

  std::normal_distribution<double> perp_offset(0.0, 0.5);
  const auto sample_on_path = [&](double extra_margin) {
    const double t = uni(rng) * T;
    const int g = std::min(kBenchGrid - 2, static_cast<int>(t / T * (kBenchGrid - 1)));
    const Eigen::Vector2d a = mean.row(g), b = mean.row(g + 1);
    const double frac = t / T * (kBenchGrid - 1) - g;
    const Eigen::Vector2d pt = a + frac * (b - a);
    Eigen::Vector2d tangent = b - a;
    if (tangent.norm() < 1e-12) tangent = Eigen::Vector2d(1.0, 0.0);
    tangent.normalize();
    const Eigen::Vector2d perp(-tangent[1], tangent[0]);
    (void)extra_margin;
    return (pt + perp_offset(rng) * perp).eval();
  };

  int retries = 0;
  const auto give_up = [&]() {
    if (++retries > 100)
      throw std::runtime_error("generate_environment: no valid geometry after 100 retries, seed " +
                               std::to_string(seed));
  };

  switch (kind) {
    case EnvKind::Repeller: {
      while (static_cast<int>(env.discs.size()) < count) {
        Disc d;
        d.center = sample_on_path(0.0);
        d.radius = 0.3 + 0.5 * uni(rng);
        // keep the endpoints clear of the obstacle
        if ((d.center - start).norm() <= d.radius + 0.1 ||
            (d.center - end).norm() <= d.radius + 0.1) {
          give_up();
          continue;
        }
        env.discs.push_back(d);
      }
      break;
    }
    case EnvKind::UnboundWaypoint: {
      while (static_cast<int>(env.discs.size()) < count) {
        Disc d;
        d.center = sample_on_path(0.0);
        d.radius = 0.3;
        bool ok = true;
        for (const Disc& other : env.discs)
          if ((d.center - other.center).norm() < 1.0) ok = false;
        if (!ok) {
          give_up();
          continue;
        }
        env.discs.push_back(d);
      }
      break;
    }
    case EnvKind::VirtualWall: {
      while (static_cast<int>(env.walls.size()) < count) {
        const double ang = 2.0 * M_PI * uni(rng);
        Wall w;
        w.normal = Eigen::Vector2d(std::cos(ang), std::sin(ang));
        double s_max = -std::numeric_limits<double>::infinity();
        int g_max = 0;
        for (int g = 0; g < kBenchGrid; ++g) {
          const double s = w.normal.dot(mean.row(g));
          if (s > s_max) {
            s_max = s;
            g_max = g;
          }
        }
        const double dist = uni(rng);
        w.bias = mean.row(g_max).transpose() + dist * w.normal;
        // Keep the clamped start/end states clearly on the allowed side.
        const double clear_s = w.normal.dot(mean.row(0).transpose() - w.bias);
        const double clear_e =
            w.normal.dot(mean.row(kBenchGrid - 1).transpose() - w.bias);
        if (clear_s > -(kBenchWallMargin + 0.1) || clear_e > -(kBenchWallMargin + 0.1)) {
          give_up();
          continue;
        }
        env.walls.push_back(w);
      }
      break;
    }
  }
  return env;
}

// Adaptation problem with one constraint per geometric element, supported on
// the full evaluation grid.
inline AdaptationProblem environment_problem(const Environment& env) {
  AdaptationProblem prob;
  prob.original = env.original;
  prob.blocks = {2};
  prob.grid_n = kBenchGrid;
  prob.ut.alpha_ut = kBenchUtAlpha;
  std::vector<int> full(kBenchGrid);
  for (int g = 0; g < kBenchGrid; ++g) full[g] = g;
  int idx = 0;
  for (const Disc& d : env.discs) {
    Constraint c;
    c.kind = env.kind == EnvKind::UnboundWaypoint ? ConstraintKind::UnboundWaypoint
                                                  : ConstraintKind::Repeller;
    c.id = (env.kind == EnvKind::UnboundWaypoint ? "wp" : "obs") + std::to_string(idx++);
    c.support = full;
    c.alpha = kBenchAlpha;
    c.eta = kBenchEta;
    c.center = d.center;
    c.radius = d.radius;
    prob.constraints.push_back(c);
  }
  for (const Wall& w : env.walls) {
    Constraint c;
    c.kind = ConstraintKind::Hyperplane;
    c.id = "wall" + std::to_string(idx++);
    c.support = full;
    c.alpha = kBenchAlpha;
    c.eta = kBenchEta;
    c.normal = w.normal;
    c.bias = w.bias - kBenchWallMargin * w.normal;
    prob.constraints.push_back(c);
  }
  prob.validate();
  return prob;
}

// Fraction of sampled trajectories violating at least one constraint on the
// evaluation grid, plus the weight-space KL normalized by the basis count.
inline EvalMetrics evaluate_adaptation(const Environment& env, const ProMP& adapted,
                                       int n_samples = 10000, std::uint64_t seed = 12345) {
  if (adapted.D != env.original.D || adapted.basis.M != env.original.basis.M)
    throw std::invalid_argument("evaluate_adaptation: primitive/environment mismatch");
  const double T = env.original.basis.T;
  const Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(kBenchGrid, 0.0, T);
  const auto samples = sample_trajectories(adapted, n_samples, times, seed, /*with_noise=*/false);

  int violated = 0;
  for (const Eigen::MatrixXd& traj : samples) {
    bool bad = false;
    if (env.kind == EnvKind::Repeller) {
      for (const Disc& d : env.discs) {
        for (int g = 0; g < kBenchGrid && !bad; ++g)
          if ((traj.row(g).transpose() - d.center).norm() < d.radius) bad = true;
        if (bad) break;
      }
    } else if (env.kind == EnvKind::UnboundWaypoint) {
      for (const Disc& d : env.discs) {
        bool hit = false;
        for (int g = 0; g < kBenchGrid && !hit; ++g)
          if ((traj.row(g).transpose() - d.center).norm() <= d.radius) hit = true;
        if (!hit) {
          bad = true;
          break;
        }
      }
    } else {
      for (const Wall& w : env.walls) {
        for (int g = 0; g < kBenchGrid && !bad; ++g)
          if (w.normal.dot(traj.row(g).transpose() - w.bias) > 0.0) bad = true;
        if (bad) break;
      }
    }
    if (bad) ++violated;
  }

  EvalMetrics m;
  m.violation_rate = static_cast<double>(violated) / n_samples;
  m.normalized_kl = kl_weights(adapted, env.original).total / env.original.basis.M;
  m.failed = m.violation_rate > 0.30;
  return m;
}

struct EnvResult {
  EnvKind kind = EnvKind::Repeller;
  int count = 1;
  std::uint64_t seed = 0;
  EvalMetrics metrics;
  int outer_iters = 0;
  bool converged = false;
};

struct SuiteRow {
  EnvKind kind = EnvKind::Repeller;
  int count = 1;
  int n = 0;
  int failed = 0;
  double viol_mean = 0.0, viol_std = 0.0;  // over non-failed runs
  double kl_mean = 0.0, kl_std = 0.0;      // over non-failed runs
};

struct SuiteReport {
  std::vector<EnvResult> envs;
  std::vector<SuiteRow> rows;
};

inline std::uint64_t environment_seed(std::uint64_t master, int count, int index) {
  return master * 1000003ull + static_cast<std::uint64_t>(count) * 10007ull +
         static_cast<std::uint64_t>(index);
}

inline EnvResult run_environment(EnvKind kind, int count, std::uint64_t seed,
                                 const SolverConfig& cfg) {
  EnvResult r;
  r.kind = kind;
  r.count = count;
  r.seed = seed;
  const Environment env = generate_environment(seed, kind, count);
  const AdaptationProblem prob = environment_problem(env);
  const AdaptationResult ares = adapt(prob, cfg);
  r.metrics = evaluate_adaptation(env, ares.adapted, 10000, seed ^ 0x9e3779b97f4a7c15ull);
  r.outer_iters = ares.outer_iters;
  r.converged = ares.converged;
  return r;
}

inline SuiteReport run_suite(EnvKind kind, const std::vector<int>& counts, int n_envs,
                             std::uint64_t master_seed, const SolverConfig& cfg = {},
                             int threads = 0) {
  if (threads <= 0) threads = std::max(1u, std::thread::hardware_concurrency());
  SuiteReport report;

  for (int count : counts) {
    std::vector<EnvResult> results(n_envs);
    std::atomic<int> next{0};
    const auto worker = [&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n_envs) return;
        const std::uint64_t seed = environment_seed(master_seed, count, i);
        try {
          results[i] = run_environment(kind, count, seed, cfg);
        } catch (const std::exception&) {
          // a generation/adaptation error counts as a failed environment
          results[i].kind = kind;
          results[i].count = count;
          results[i].seed = seed;
          results[i].metrics.violation_rate = 1.0;
          results[i].metrics.failed = true;
        }
      }
    };
    std::vector<std::thread> pool;
    const int nw = std::min(threads, n_envs);
    pool.reserve(nw);
    for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::sort(results.begin(), results.end(),
              [](const EnvResult& a, const EnvResult& b) { return a.seed < b.seed; });

    SuiteRow row;
    row.kind = kind;
    row.count = count;
    row.n = n_envs;
    double vs = 0, vs2 = 0, ks = 0, ks2 = 0;
    int nok = 0;
    for (const EnvResult& r : results) {
      if (r.metrics.failed) {
        ++row.failed;
        continue;
      }
      ++nok;
      vs += r.metrics.violation_rate;
      vs2 += r.metrics.violation_rate * r.metrics.violation_rate;
      ks += r.metrics.normalized_kl;
      ks2 += r.metrics.normalized_kl * r.metrics.normalized_kl;
    }
    if (nok > 0) {
      row.viol_mean = vs / nok;
      row.kl_mean = ks / nok;
      row.viol_std = std::sqrt(std::max(0.0, vs2 / nok - row.viol_mean * row.viol_mean));
      row.kl_std = std::sqrt(std::max(0.0, ks2 / nok - row.kl_mean * row.kl_mean));
    }
    report.rows.push_back(row);
    report.envs.insert(report.envs.end(), results.begin(), results.end());
  }
  return report;
}

inline void write_env_csv(std::ostream& os, const SuiteReport& report) {
  os << "kind,count,seed,failed,violation_rate,normalized_kl,outer_iters,converged\n";
  for (const EnvResult& r : report.envs)
    os << env_kind_name(r.kind) << ',' << r.count << ',' << r.seed << ','
       << (r.metrics.failed ? 1 : 0) << ',' << std::setprecision(10) << r.metrics.violation_rate
       << ',' << r.metrics.normalized_kl << ',' << r.outer_iters << ','
       << (r.converged ? 1 : 0) << '\n';
}

inline void write_summary_csv(std::ostream& os, const SuiteReport& report) {
  os << "kind,count,n,failed,failed_pct,viol_mean,viol_std,kl_mean,kl_std\n";
  for (const SuiteRow& r : report.rows)
    os << env_kind_name(r.kind) << ',' << r.count << ',' << r.n << ',' << r.failed << ','
       << std::setprecision(6) << 100.0 * r.failed / r.n << ',' << r.viol_mean << ','
       << r.viol_std << ',' << r.kl_mean << ',' << r.kl_std << '\n';
}

inline std::string format_summary(const SuiteReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(18) << "kind" << std::setw(7) << "count" << std::setw(7) << "n"
     << std::setw(9) << "failed" << std::setw(22) << "violations (mean+-sd)" << std::setw(22)
     << "norm. KL (mean+-sd)" << "union-bound\n";
  for (const SuiteRow& r : report.rows) {
    std::ostringstream v, k;
    v << std::fixed << std::setprecision(2) << 100.0 * r.viol_mean << "% +- "
      << 100.0 * r.viol_std << "%";
    k << std::fixed << std::setprecision(2) << r.kl_mean << " +- " << r.kl_std;
    // loose union bound on the expected violation rate: (1-alpha) * K * |grid|
    const double ub = (1.0 - kBenchAlpha) * r.count * kBenchGrid;
    os << std::left << std::setw(18) << env_kind_name(r.kind) << std::setw(7) << r.count
       << std::setw(7) << r.n << std::setw(9)
       << (std::to_string(r.failed) + " (" +
           [&] {
             std::ostringstream p;
             p << std::fixed << std::setprecision(1) << 100.0 * r.failed / r.n;
             return p.str();
           }() +
           "%)")
       << std::setw(22) << v.str() << std::setw(22) << k.str() << std::fixed
       << std::setprecision(3) << ub << '\n';
  }
  return os.str();
}

}  // namespace cpmp
