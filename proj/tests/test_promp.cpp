#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "cpmp/gaussian.hpp"
#include "cpmp/promp.hpp"

using namespace cpmp;

namespace {

// Degenerate one-basis primitive whose weight equals the trajectory value.
ProMP unit_promp(double mean, double var) {
  ProMP p;
  p.D = 1;
  p.basis.M = 1;
  p.basis.centers = Eigen::VectorXd::Constant(1, 0.5);
  p.basis.h = 0.5;
  p.basis.T = 1.0;
  p.mu_w = Eigen::VectorXd::Constant(1, mean);
  p.Sigma_w = Eigen::MatrixXd::Constant(1, 1, var);
  p.Sigma_y = 1e-8 * Eigen::MatrixXd::Identity(1, 1);
  return p;
}

}  // namespace

TEST_CASE("conditioning matches the textbook Gaussian posterior") {
  // prior N(0,1), unit feature, observe 1 with noise 1 -> posterior N(0.5, 0.5)
  const ProMP p = unit_promp(0.0, 1.0);
  const ProMP c = condition(p, 0.5, Eigen::VectorXd::Constant(1, 1.0),
                            Eigen::MatrixXd::Identity(1, 1));
  CHECK(c.mu_w[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(c.Sigma_w(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("weight-space KL of shifted unit Gaussians") {
  const ProMP q = unit_promp(1.0, 1.0);
  const ProMP p = unit_promp(0.0, 1.0);
  const KlDecomposition kl = kl_weights(q, p);
  CHECK(kl.total == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(kl.mean_term == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(kl.cov_term == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("marginal moments follow the feature map") {
  ProMP p;
  p.D = 2;
  p.basis = default_basis(6, 1.0);
  const int n = 12;
  p.mu_w = Eigen::VectorXd::LinSpaced(n, -1.0, 1.0);
  Eigen::MatrixXd A = Eigen::MatrixXd::Random(n, n);
  p.Sigma_w = A * A.transpose() + Eigen::MatrixXd::Identity(n, n);
  p.Sigma_y = 1e-6 * Eigen::MatrixXd::Identity(2, 2);

  const double t = 0.37;
  const Eigen::VectorXd phi = basis_phi(p.basis, t);
  const GaussianMoments m = marginal_moments(p, t);
  for (int d = 0; d < 2; ++d)
    CHECK(m.mean[d] == doctest::Approx(phi.dot(p.mu_w.segment(d * 6, 6))).epsilon(1e-12));
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      CHECK(m.cov(a, b) ==
            doctest::Approx(phi.dot(p.Sigma_w.block(a * 6, b * 6, 6, 6) * phi))
                .epsilon(1e-12));
}

TEST_CASE("sampling is deterministic and matches moments") {
  ProMP p;
  p.D = 1;
  p.basis = default_basis(8, 1.0);
  p.mu_w = Eigen::VectorXd::Zero(8);
  p.Sigma_w = Eigen::MatrixXd::Identity(8, 8);
  p.Sigma_y = 1e-6 * Eigen::MatrixXd::Identity(1, 1);
  const Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(5, 0.0, 1.0);

  const auto s1 = sample_trajectories(p, 3, times, 77, false);
  const auto s2 = sample_trajectories(p, 3, times, 77, false);
  REQUIRE(s1.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK((s1[i] - s2[i]).norm() == 0.0);

  const int n = 40000;
  const auto s = sample_trajectories(p, n, times, 5, false);
  const double t = times[2];
  const GaussianMoments m = marginal_moments(p, t);
  double acc = 0.0, acc2 = 0.0;
  for (const auto& traj : s) {
    acc += traj(2, 0);
    acc2 += traj(2, 0) * traj(2, 0);
  }
  const double mean = acc / n, var = acc2 / n - mean * mean;
  const double tol = 4.0 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean - m.mean[0]) < tol * std::sqrt(m.cov(0, 0)));
  CHECK(std::abs(var - m.cov(0, 0)) < 3.0 * tol * m.cov(0, 0));
}

TEST_CASE("JSON round trip preserves the primitive") {
  ProMP p;
  p.D = 2;
  p.basis = default_basis(5, 1.3);
  const int n = 10;
  p.mu_w = Eigen::VectorXd::LinSpaced(n, 0.0, 2.0);
  Eigen::MatrixXd A = Eigen::MatrixXd::Random(n, n);
  p.Sigma_w = A * A.transpose() + Eigen::MatrixXd::Identity(n, n);
  p.Sigma_y = 0.01 * Eigen::MatrixXd::Identity(2, 2);

  const std::string path = (std::filesystem::temp_directory_path() /
                            "cpmp_roundtrip_promp.json")
                               .string();
  save_promp(p, path);
  const ProMP q = load_promp(path);
  std::remove(path.c_str());
  CHECK(q.D == p.D);
  CHECK(q.basis.M == p.basis.M);
  CHECK(q.basis.T == doctest::Approx(p.basis.T).epsilon(1e-15));
  CHECK((q.mu_w - p.mu_w).norm() < 1e-12);
  CHECK((q.Sigma_w - p.Sigma_w).norm() < 1e-9 * p.Sigma_w.norm());
  CHECK((q.Sigma_y - p.Sigma_y).norm() < 1e-12);
}

TEST_CASE("conditioning pins the marginal at the observed time") {
  ProMP p;
  p.D = 1;
  p.basis = default_basis(10, 1.0);
  p.mu_w = Eigen::VectorXd::Zero(10);
  p.Sigma_w = 4.0 * Eigen::MatrixXd::Identity(10, 10);
  p.Sigma_y = 1e-6 * Eigen::MatrixXd::Identity(1, 1);
  const ProMP c = condition(p, 0.4, Eigen::VectorXd::Constant(1, 1.5),
                            1e-8 * Eigen::MatrixXd::Identity(1, 1));
  const GaussianMoments m = marginal_moments(c, 0.4);
  CHECK(m.mean[0] == doctest::Approx(1.5).epsilon(1e-6));
  CHECK(m.cov(0, 0) < 1e-6);
  // covariance stays symmetric PSD
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.Sigma_w);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);
}
