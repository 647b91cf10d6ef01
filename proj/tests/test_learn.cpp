#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cpmp/learn.hpp"
#include "cpmp/promp.hpp"

using namespace cpmp;

namespace {

ProMP ground_truth(int D, int M, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  ProMP p;
  p.D = D;
  p.basis = default_basis(M, 1.0);
  p.mu_w.resize(D * M);
  for (int i = 0; i < D * M; ++i) p.mu_w[i] = nd(rng);
  p.Sigma_w = 0.05 * Eigen::MatrixXd::Identity(D * M, D * M);
  p.Sigma_y = 1e-4 * Eigen::MatrixXd::Identity(D, D);
  return p;
}

DemoSet make_demos(const ProMP& truth, int n_demos, int len, unsigned seed) {
  const Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(len, 0.0, truth.basis.T);
  const auto samples = sample_trajectories(truth, n_demos, times, seed, true);
  DemoSet demos;
  for (const auto& s : samples) demos.trajectories.push_back({times, s});
  return demos;
}

}  // namespace

TEST_CASE("generate-then-fit recovers the marginal trajectory distribution") {
  const ProMP truth = ground_truth(2, 8, 11);
  const DemoSet demos = make_demos(truth, 40, 50, 4);
  const LearnResult res = learn_em(demos, truth.basis, 2);
  const ProMP& fit = res.promp;

  for (double t : {0.1, 0.35, 0.6, 0.9}) {
    const GaussianMoments mt = marginal_moments(truth, t);
    const GaussianMoments mf = marginal_moments(fit, t);
    for (int d = 0; d < 2; ++d) {
      const double sd = std::sqrt(mt.cov(d, d));
      CHECK(std::abs(mf.mean[d] - mt.mean[d]) < 0.8 * sd);
      CHECK(mf.cov(d, d) == doctest::Approx(mt.cov(d, d)).epsilon(0.8));
    }
  }
}

TEST_CASE("EM log-likelihood trace is monotone non-decreasing") {
  for (unsigned seed : {1u, 2u, 3u}) {
    const ProMP truth = ground_truth(1, 6, seed);
    const DemoSet demos = make_demos(truth, 12, 30, seed + 100);
    const LearnResult res = learn_em(demos, truth.basis, 1);
    REQUIRE(res.loglik_trace.size() >= 2);
    for (size_t i = 1; i < res.loglik_trace.size(); ++i)
      CHECK(res.loglik_trace[i] >= res.loglik_trace[i - 1] - 1e-9);
  }
}

TEST_CASE("demos shorter than the basis count are rejected") {
  const ProMP truth = ground_truth(1, 8, 5);
  const DemoSet demos = make_demos(truth, 3, 6, 9);  // 6 obs < M = 8
  CHECK_THROWS_AS(learn_em(demos, truth.basis, 1), std::invalid_argument);
}

TEST_CASE("a single demonstration falls back to a diagonal covariance") {
  const ProMP truth = ground_truth(1, 5, 6);
  const DemoSet demos = make_demos(truth, 1, 20, 8);
  const LearnResult res = learn_em(demos, truth.basis, 1);
  CHECK(res.diagonal_fallback);
  CHECK(res.promp.Sigma_w.isDiagonal(1e-12));
  CHECK_NOTHROW(res.promp.validate());
}

TEST_CASE("CSV demo files parse with headers and give the declared layout") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "cpmp_demo.csv").string();
  {
    std::ofstream f(path);
    f << "t,q1,q2\n0.0,1.0,2.0\n0.5,1.5,2.5\n1.0,2.0,3.0\n";
  }
  const DemoTrajectory d = load_demo_csv(path);
  std::remove(path.c_str());
  REQUIRE(d.times.size() == 3);
  CHECK(d.times[1] == doctest::Approx(0.5));
  REQUIRE(d.ys.rows() == 3);
  REQUIRE(d.ys.cols() == 2);
  CHECK(d.ys(2, 1) == doctest::Approx(3.0));
}
