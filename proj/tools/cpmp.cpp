// Command-line front end: learn, adapt, sample, bench, check-grad.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cpmp/benchmark.hpp"
#include "cpmp/gradcheck.hpp"
#include "cpmp/learn.hpp"
#include "cpmp/objective.hpp"
#include "cpmp/problem.hpp"
#include "cpmp/solver.hpp"
#include "json.hpp"

namespace {

int bench_threads() {
  if (const char* env = std::getenv("CPMP_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 0;  // auto
}

int cmd_learn(const std::vector<std::string>& demo_files, int M, double T,
              const std::string& out, int max_iters, double tol) {
  cpmp::DemoSet demos;
  int D = -1;
  for (const std::string& f : demo_files) {
    cpmp::DemoTrajectory d = cpmp::load_demo_csv(f);
    if (D < 0) D = static_cast<int>(d.ys.cols());
    if (d.ys.cols() != D)
      throw std::invalid_argument("demo '" + f + "' has inconsistent dimension");
    demos.trajectories.push_back(std::move(d));
  }
  double t_max = 0.0;
  for (const auto& d : demos.trajectories) t_max = std::max(t_max, d.times.maxCoeff());
  const cpmp::BasisConfig basis = cpmp::default_basis(M, T > 0.0 ? T : t_max);
  cpmp::RegularizationConfig reg;
  reg.max_iters = max_iters;
  reg.tol = tol;
  const cpmp::LearnResult res = cpmp::learn_em(demos, basis, D, reg);
  cpmp::save_promp(res.promp, out);
  std::cout << "learned D=" << D << " M=" << M << " demos=" << demos.trajectories.size()
            << " iters=" << res.iterations
            << " loglik=" << res.loglik_trace.back()
            << (res.diagonal_fallback ? " (diagonal covariance)" : "") << "\n";
  return 0;
}

int cmd_adapt(const std::string& problem_file, const std::string& out,
              const std::string& diag_out, int grid_override,
              const cpmp::SolverConfig& cfg, const cpmp::ProblemDefaults& defaults) {
  std::ifstream f(problem_file);
  if (!f) throw std::runtime_error("cannot open " + problem_file);
  nlohmann::json j;
  f >> j;
  if (grid_override > 0) j["grid"]["n"] = grid_override;
  const std::string base_dir = std::filesystem::path(problem_file).parent_path().string();
  const cpmp::AdaptationProblem prob =
      cpmp::problem_from_json(j, base_dir.empty() ? "." : base_dir, defaults);

  const cpmp::AdaptationResult res = cpmp::adapt(prob, cfg);
  cpmp::save_promp(res.adapted, out);

  nlohmann::json diag;
  diag["converged"] = res.converged;
  diag["infeasible"] = res.infeasible;
  diag["outer_iters"] = res.outer_iters;
  diag["objective"] = res.objective_value;
  diag["max_violation"] = res.max_violation;
  diag["kl_to_original"] =
      cpmp::kl_weights(res.adapted, prob.original).total;
  {
    nlohmann::json trace = nlohmann::json::array();
    for (const cpmp::OuterTrace& t : res.trace)
      trace.push_back({{"outer", t.outer},
                       {"lagrangian", t.lagrangian},
                       {"objective", t.objective},
                       {"max_violation", t.max_violation},
                       {"lambda_max", t.lambda_max},
                       {"inner_iters", t.inner_iters}});
    diag["trace"] = trace;
    nlohmann::json lam = nlohmann::json::object();
    for (size_t ci = 0; ci < prob.constraints.size(); ++ci)
      lam[prob.constraints[ci].id] = std::vector<double>(
          res.lambdas[ci].data(), res.lambdas[ci].data() + res.lambdas[ci].size());
    diag["lambdas"] = lam;
  }
  if (!diag_out.empty()) {
    std::ofstream df(diag_out);
    df << diag.dump(2) << "\n";
  }
  std::cout << "adapt: objective=" << res.objective_value
            << " max_residual=" << res.max_violation << " outer_iters=" << res.outer_iters
            << (res.converged ? " converged" : " NOT converged") << "\n";
  return res.converged ? 0 : 2;
}

int cmd_sample(const std::string& promp_file, int n, int grid, std::uint64_t seed,
               bool with_noise, const std::string& out, const std::string& ellipses_out) {
  const cpmp::ProMP p = cpmp::load_promp(promp_file);
  const Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(grid, 0.0, p.basis.T);
  const auto samples = cpmp::sample_trajectories(p, n, times, seed, with_noise);
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot open " + out + " for writing");
  f << "sample,t";
  for (int d = 0; d < p.D; ++d) f << ",c" << d;
  f << "\n";
  f.precision(10);
  for (int s = 0; s < n; ++s)
    for (int g = 0; g < grid; ++g) {
      f << s << ',' << times[g];
      for (int d = 0; d < p.D; ++d) f << ',' << samples[s](g, d);
      f << '\n';
    }
  if (!ellipses_out.empty()) {
    std::ofstream ef(ellipses_out);
    ef << "t";
    for (int d = 0; d < p.D; ++d) ef << ",mean" << d;
    for (int a = 0; a < p.D; ++a)
      for (int b = 0; b < p.D; ++b) ef << ",cov" << a << b;
    ef << "\n";
    ef.precision(10);
    for (int g = 0; g < grid; ++g) {
      const cpmp::GaussianMoments m = cpmp::marginal_moments(p, times[g]);
      ef << times[g];
      for (int d = 0; d < p.D; ++d) ef << ',' << m.mean[d];
      for (int a = 0; a < p.D; ++a)
        for (int b = 0; b < p.D; ++b) ef << ',' << m.cov(a, b);
      ef << '\n';
    }
  }
  std::cout << "sampled " << n << " trajectories on " << grid << " grid times -> " << out
            << "\n";
  return 0;
}

int cmd_bench(const std::string& kind_str, const std::vector<int>& counts, int n,
              std::uint64_t seed, const std::string& out_dir, const cpmp::SolverConfig& cfg) {
  const cpmp::EnvKind kind = cpmp::env_kind_from_string(kind_str);
  const cpmp::SuiteReport report =
      cpmp::run_suite(kind, counts, n, seed, cfg, bench_threads());
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream f(out_dir + "/envs.csv");
    cpmp::write_env_csv(f, report);
  }
  {
    std::ofstream f(out_dir + "/summary.csv");
    cpmp::write_summary_csv(f, report);
  }
  std::cout << cpmp::format_summary(report);
  return 0;
}

int cmd_check_grad(int dim, int M, std::uint64_t seed) {
  using cpmp::ConstraintKind;
  const std::vector<ConstraintKind> kinds = {
      ConstraintKind::JointLimit,     ConstraintKind::Smoothness,
      ConstraintKind::Hyperplane,     ConstraintKind::Waypoint,
      ConstraintKind::Repeller,       ConstraintKind::UnboundWaypoint,
      ConstraintKind::NonConvexCorner, ConstraintKind::MutualAvoidance};
  double worst = 0.0;
  for (ConstraintKind k : kinds) {
    int D = dim;
    if (k == ConstraintKind::MutualAvoidance && D % 2 != 0) D += 1;
    const cpmp::AdaptationProblem prob = cpmp::random_problem(k, D, M, seed);
    const cpmp::GradCheckResult res = cpmp::check_lagrangian_gradient(prob, seed + 1);
    std::cout << cpmp::kind_name(k) << ": max relative gradient error "
              << res.max_rel_error << "\n";
    worst = std::max(worst, res.max_rel_error);
  }
  std::cout << "overall max relative gradient error: " << worst << "\n";
  return worst < 1e-4 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic movement primitives: learning and constrained adaptation"};
  app.require_subcommand(1);

  cpmp::SolverConfig cfg;
  cpmp::ProblemDefaults defaults;

  const auto add_solver_flags = [&](CLI::App* cmd) {
    cmd->add_option("--eps-c", cfg.eps_c, "constraint satisfaction tolerance");
    cmd->add_option("--outer-max", cfg.outer_max_iters, "outer iteration cap");
    cmd->add_option("--eta-default", defaults.eta, "default multiplier step size");
    cmd->add_option("--alpha-default", defaults.alpha, "default constraint confidence");
  };

  // learn
  auto* learn = app.add_subcommand("learn", "fit a primitive to demonstration CSVs");
  std::vector<std::string> demo_files;
  int learn_M = 15, learn_iters = 200;
  double learn_T = -1.0, learn_tol = 1e-8;
  std::string learn_out = "promp.json";
  learn->add_option("demos", demo_files, "demonstration CSV files (t,q1..qD)")->required();
  learn->add_option("--basis", learn_M, "number of basis functions");
  learn->add_option("--duration", learn_T, "movement duration (default: max demo time)");
  learn->add_option("--max-iters", learn_iters, "EM iteration cap");
  learn->add_option("--tol", learn_tol, "EM log-likelihood tolerance");
  learn->add_option("--out", learn_out, "output primitive JSON");

  // adapt
  auto* adapt = app.add_subcommand("adapt", "adapt a primitive under constraints");
  std::string problem_file, adapt_out = "adapted.json", diag_out;
  int grid_override = -1;
  adapt->add_option("problem", problem_file, "problem JSON file")->required();
  adapt->add_option("--out", adapt_out, "output primitive JSON");
  adapt->add_option("--diag", diag_out, "diagnostics JSON");
  adapt->add_option("--grid", grid_override, "override grid size");
  add_solver_flags(adapt);

  // sample
  auto* sample = app.add_subcommand("sample", "sample trajectories from a primitive");
  std::string sample_in, sample_out = "samples.csv", ellipses_out;
  int sample_n = 20, sample_grid = 50;
  std::uint64_t sample_seed = 0;
  bool sample_noise = false;
  sample->add_option("promp", sample_in, "primitive JSON file")->required();
  sample->add_option("--n", sample_n, "number of samples");
  sample->add_option("--grid", sample_grid, "grid size");
  sample->add_option("--seed", sample_seed, "RNG seed");
  sample->add_flag("--noise", sample_noise, "add observation noise");
  sample->add_option("--out", sample_out, "samples CSV");
  sample->add_option("--ellipses", ellipses_out, "per-time mean/covariance CSV");

  // bench
  auto* bench = app.add_subcommand("bench", "randomized 2-D adaptation benchmark");
  std::string bench_kind = "repeller", out_dir = "bench_out";
  std::vector<int> bench_counts = {1, 2, 3};
  int bench_n = 100;
  std::uint64_t bench_seed = 1;
  bench->add_option("--kind", bench_kind, "repeller | unbound-waypoint | virtual-wall");
  bench->add_option("--counts", bench_counts, "constraint counts")->delimiter(',');
  bench->add_option("--n", bench_n, "environments per count");
  bench->add_option("--seed", bench_seed, "master seed");
  bench->add_option("--out-dir", out_dir, "output directory");
  add_solver_flags(bench);

  // check-grad
  auto* check = app.add_subcommand("check-grad", "finite-difference gradient self-check");
  int cg_dim = 2, cg_M = 5;
  std::uint64_t cg_seed = 1;
  check->add_option("--dim", cg_dim, "joint-space dimension");
  check->add_option("--basis", cg_M, "number of basis functions");
  check->add_option("--seed", cg_seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (learn->parsed())
      return cmd_learn(demo_files, learn_M, learn_T, learn_out, learn_iters, learn_tol);
    if (adapt->parsed())
      return cmd_adapt(problem_file, adapt_out, diag_out, grid_override, cfg, defaults);
    if (sample->parsed())
      return cmd_sample(sample_in, sample_n, sample_grid, sample_seed, sample_noise,
                        sample_out, ellipses_out);
    if (bench->parsed())
      return cmd_bench(bench_kind, bench_counts, bench_n, bench_seed, out_dir, cfg);
    if (check->parsed()) return cmd_check_grad(cg_dim, cg_M, cg_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
