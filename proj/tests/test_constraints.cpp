#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cpmp/constraints.hpp"
#include "cpmp/special.hpp"
#include "cpmp/ut.hpp"

using namespace cpmp;

namespace {

// Primitive whose time marginal at t = 0.5 is exactly N(mean, cov) in 2-D
// (single centered unit bump per coordinate).
ProMP point_promp(const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov) {
  ProMP p;
  p.D = 2;
  p.basis.M = 1;
  p.basis.centers = Eigen::VectorXd::Constant(1, 0.5);
  p.basis.h = 0.5;
  p.basis.T = 1.0;
  p.mu_w = mean;
  p.Sigma_w = cov;
  p.Sigma_y = 1e-8 * Eigen::Matrix2d::Identity();
  return p;
}

ProMP scalar_promp(double mean, double var) {
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

// ---- unscented transform ---------------------------------------------------

TEST_CASE("UT is exact on identity and affine maps") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int n = 1; n <= 8; ++n) {
    GaussianMoments in;
    in.mean.resize(n);
    for (int i = 0; i < n; ++i) in.mean[i] = nd(rng);
    Eigen::MatrixXd A(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = nd(rng);
    in.cov = A * A.transpose() + Eigen::MatrixXd::Identity(n, n);

    UTConfig cfg;
    const GaussianMoments id = ut_propagate(in, [](const Eigen::VectorXd& z) { return z; }, cfg);
    CHECK((id.mean - in.mean).norm() < 1e-12 * (1.0 + in.mean.norm()));
    CHECK((id.cov - in.cov).norm() < 1e-12 * in.cov.norm());

    Eigen::MatrixXd B(2, n);
    for (int j = 0; j < n; ++j) {
      B(0, j) = nd(rng);
      B(1, j) = nd(rng);
    }
    const Eigen::Vector2d c(0.3, -1.1);
    const GaussianMoments aff = ut_propagate(
        in, [&](const Eigen::VectorXd& z) -> Eigen::VectorXd { return B * z + c; }, cfg);
    CHECK((aff.mean - (B * in.mean + c)).norm() < 1e-10);
    CHECK((aff.cov - B * in.cov * B.transpose()).norm() < 1e-10 * in.cov.norm());
  }
}

TEST_CASE("sigma-point weights sum to one for any spread") {
  // propagate the constant-1 map: output mean must be exactly 1
  GaussianMoments in;
  in.mean = Eigen::VectorXd::Zero(3);
  in.cov = Eigen::MatrixXd::Identity(3, 3);
  for (double a : {0.5, 1.0, 2.0, 5.0}) {
    UTConfig cfg;
    cfg.alpha_ut = a;
    const GaussianMoments out = ut_propagate(
        in, [](const Eigen::VectorXd&) { return Eigen::VectorXd::Constant(1, 1.0); }, cfg);
    CHECK(out.mean[0] == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("task moments of a Cartesian primitive are the time marginals") {
  const ProMP p = point_promp({1.0, 2.0}, Eigen::Matrix2d::Identity());
  UTConfig cfg;
  const GaussianMoments m = task_moments(p, 0.5, nullptr, "", cfg);
  CHECK(m.mean[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((m.cov - Eigen::Matrix2d::Identity()).norm() < 1e-12);
}

// ---- gamma moment matching -------------------------------------------------

TEST_CASE("gamma fit matches mean and variance") {
  const GammaFit g = gamma_fit(2.0, 1.0);
  CHECK(g.shape == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(g.rate == doctest::Approx(2.0).epsilon(1e-15));
  // round trip: mean = shape/rate, var = shape/rate^2
  for (double m : {0.3, 1.7, 9.2}) {
    for (double v : {0.01, 0.8, 4.0}) {
      const GammaFit f = gamma_fit(m, v);
      CHECK(f.shape / f.rate == doctest::Approx(m).epsilon(1e-12));
      CHECK(f.shape / (f.rate * f.rate) == doctest::Approx(v).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(gamma_fit(-1.0, 1.0), std::invalid_argument);
}

TEST_CASE("regularized incomplete gamma against closed forms") {
  // P(1, x) = 1 - exp(-x)
  for (double x : {0.1, 1.0, 3.5, 10.0})
    CHECK(gamma_p(1.0, x) == doctest::Approx(1.0 - std::exp(-x)).epsilon(1e-12));
  // P(1/2, x) = erf(sqrt(x))
  for (double x : {0.2, 1.0, 4.0})
    CHECK(gamma_p(0.5, x) == doctest::Approx(std::erf(std::sqrt(x))).epsilon(1e-10));
  CHECK(gamma_p(3.0, 0.0) == doctest::Approx(0.0));
}

// ---- limit constraints -------------------------------------------------------

TEST_CASE("two-sided limit of a standard normal") {
  const ProMP p = scalar_promp(0.0, 1.0);
  CHECK(limit_satisfaction(p, 0, -1.0, 1.0, 0.5) ==
        doctest::Approx(0.6826894921).epsilon(1e-9));
}

TEST_CASE("one-sided limit at the mean is one half") {
  const ProMP p = scalar_promp(2.0, 0.49);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(limit_satisfaction(p, 0, -inf, 2.0, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
}

// ---- ball constraints (waypoint / repeller) --------------------------------

TEST_CASE("waypoint and repeller probabilities are complementary") {
  const ProMP p = point_promp({0.4, 0.2}, 0.3 * Eigen::Matrix2d::Identity());
  UTConfig cfg;
  const double in = ball_satisfaction(p, nullptr, "", {1.0, 0.5}, 0.8, false, 0.5, cfg);
  const double out = ball_satisfaction(p, nullptr, "", {1.0, 0.5}, 0.8, true, 0.5, cfg);
  CHECK(in + out == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(in > 0.0);
  CHECK(in < 1.0);
}

TEST_CASE("quadratic UT reproduces the exact distance moments (isotropic)") {
  // |x - c|^2 for x ~ N(m, s^2 I): mean = |m-c|^2 + 2 s^2, var = 4 s^2 |m-c|^2 + 4 s^4
  const Eigen::Vector2d m(1.0, -0.5), c(0.2, 0.3);
  const double s2 = 0.17;
  const Eigen::Vector2d d = m - c;
  const double want_mean = d.squaredNorm() + 2.0 * s2;
  const double want_var = 4.0 * s2 * d.squaredNorm() + 4.0 * s2 * s2;

  SmallVec<double> mean = {m[0], m[1]};
  SmallMat<double> cov = {{s2, 0.0}, {0.0, s2}};
  SmallVec<double> om;
  SmallMat<double> oc;
  ut_core(mean, cov, quadratic_spread(1.0, 2),
          [&](const SmallVec<double>& z) {
            const double dx = z[0] - c[0], dy = z[1] - c[1];
            return SmallVec<double>{dx * dx + dy * dy};
          },
          om, oc);
  CHECK(om[0] == doctest::Approx(want_mean).epsilon(1e-10));
  CHECK(oc[0][0] == doctest::Approx(want_var).epsilon(1e-10));
}

TEST_CASE("ball satisfaction against Monte Carlo") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0.0, 1.0);
  const Eigen::Vector2d mean(1.2, 0.4), center(0.0, 0.0);
  const double sd = 0.35, radius = 0.9;
  const ProMP p = point_promp(mean, sd * sd * Eigen::Matrix2d::Identity());
  UTConfig cfg;
  const double analytic = ball_satisfaction(p, nullptr, "", center, radius, true, 0.5, cfg);

  const int n = 1000000;
  int outside = 0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d x = mean + sd * Eigen::Vector2d(nd(rng), nd(rng));
    if ((x - center).norm() > radius) ++outside;
  }
  CHECK(analytic == doctest::Approx(static_cast<double>(outside) / n).epsilon(0.03));
}

TEST_CASE("degenerate variance reduces to an indicator") {
  const ProMP p = point_promp({2.0, 0.0}, 1e-18 * Eigen::Matrix2d::Identity());
  UTConfig cfg;
  CHECK(ball_satisfaction(p, nullptr, "", {0.0, 0.0}, 1.0, true, 0.5, cfg) ==
        doctest::Approx(1.0));
  CHECK(ball_satisfaction(p, nullptr, "", {2.0, 0.0}, 1.0, false, 0.5, cfg) ==
        doctest::Approx(1.0));
}

// ---- hyperplane constraints -------------------------------------------------

TEST_CASE("hyperplane probability basics") {
  UTConfig cfg;
  const Eigen::Vector2d n(1.0, 0.0);
  // mean on the plane -> 0.5
  {
    const ProMP p = point_promp({1.0, 0.0}, 0.04 * Eigen::Matrix2d::Identity());
    CHECK(hyperplane_satisfaction(p, nullptr, "", n, {1.0, 5.0}, 0.5, cfg) ==
          doctest::Approx(0.5).epsilon(1e-10));
  }
  // mean 3 sigma inside the allowed half-space -> standard normal CDF(3)
  {
    const ProMP p = point_promp({1.0 - 3.0 * 0.2, 0.0}, 0.04 * Eigen::Matrix2d::Identity());
    CHECK(hyperplane_satisfaction(p, nullptr, "", n, {1.0, 0.0}, 0.5, cfg) ==
          doctest::Approx(0.99865).epsilon(1e-4));
  }
  // invariant under rescaling of the normal
  {
    const ProMP p = point_promp({0.3, -0.2}, 0.1 * Eigen::Matrix2d::Identity());
    const double a = hyperplane_satisfaction(p, nullptr, "", {1.0, 2.0}, {1.0, 1.0}, 0.5, cfg);
    const double b =
        hyperplane_satisfaction(p, nullptr, "", {7.0, 14.0}, {1.0, 1.0}, 0.5, cfg);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
}

TEST_CASE("hyperplane satisfaction against Monte Carlo") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd(0.0, 1.0);
  const Eigen::Vector2d mean(0.1, -0.3);
  Eigen::Matrix2d C;
  C << 0.20, 0.05, 0.05, 0.10;
  const ProMP p = point_promp(mean, C);
  const Eigen::Vector2d normal(0.6, -0.8), bias(0.4, 0.0);
  UTConfig cfg;
  const double analytic = hyperplane_satisfaction(p, nullptr, "", normal, bias, 0.5, cfg);

  const Eigen::Matrix2d L = C.llt().matrixL();
  const int n = 200000;
  int ok = 0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d x = mean + L * Eigen::Vector2d(nd(rng), nd(rng));
    if (normal.dot(x - bias) <= 0.0) ++ok;
  }
  CHECK(analytic == doctest::Approx(static_cast<double>(ok) / n).epsilon(0.01));
}

// ---- non-convex corners ------------------------------------------------------

TEST_CASE("orthogonal corner at the vertex of an isotropic Gaussian") {
  const ProMP p = point_promp({0.0, 0.0}, 0.25 * Eigen::Matrix2d::Identity());
  UTConfig cfg;
  // forbidden quadrant = { x > 0 and y > 0 }; P(inside) = 0.25 by symmetry
  const double sat = corner_satisfaction(p, nullptr, "", {1.0, 0.0}, {0.0, 0.0},
                                         {0.0, 1.0}, {0.0, 0.0}, 0.5, cfg);
  CHECK(sat == doctest::Approx(0.75).epsilon(1e-10));
}

TEST_CASE("60 degree corner against Monte Carlo") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double sd = 0.5;
  const Eigen::Vector2d mean(1.0, 0.8);  // >= 1 sigma from the vertex
  const ProMP p = point_promp(mean, sd * sd * Eigen::Matrix2d::Identity());
  // half-spaces whose normals are 60 degrees apart, vertex at the origin
  const Eigen::Vector2d n1(1.0, 0.0), n2(std::cos(M_PI / 3.0), std::sin(M_PI / 3.0));
  const Eigen::Vector2d b(0.0, 0.0);
  UTConfig cfg;
  const double analytic = corner_satisfaction(p, nullptr, "", n1, b, n2, b, 0.5, cfg);

  const int n = 200000;
  int outside = 0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d x = mean + sd * Eigen::Vector2d(nd(rng), nd(rng));
    if (!(n1.dot(x - b) > 0.0 && n2.dot(x - b) > 0.0)) ++outside;
  }
  CHECK(std::abs(analytic - static_cast<double>(outside) / n) < 0.05);
}

// ---- mutual avoidance ---------------------------------------------------------

TEST_CASE("mutual avoidance of two Cartesian points against Monte Carlo") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd(0.0, 1.0);
  // 4-D primitive: two independent 2-D points
  ProMP p;
  p.D = 4;
  p.basis.M = 1;
  p.basis.centers = Eigen::VectorXd::Constant(1, 0.5);
  p.basis.h = 0.5;
  p.basis.T = 1.0;
  p.mu_w.resize(4);
  p.mu_w << 0.0, 0.0, 1.4, 0.5;
  // positively correlated points: the gap distribution narrows
  Eigen::MatrixXd S = 0.09 * Eigen::MatrixXd::Identity(4, 4);
  S(0, 2) = S(2, 0) = 0.04;
  S(1, 3) = S(3, 1) = 0.04;
  p.Sigma_w = S;
  p.Sigma_y = 1e-8 * Eigen::MatrixXd::Identity(4, 4);
  const double dist = 0.8;
  UTConfig cfg;
  const double analytic = mutual_satisfaction(p, 2, nullptr, "", nullptr, "", dist, 0.5, cfg);

  const Eigen::MatrixXd L = S.llt().matrixL();
  const int n = 1000000;
  int apart = 0;
  for (int i = 0; i < n; ++i) {
    Eigen::Vector4d z;
    for (int k = 0; k < 4; ++k) z[k] = nd(rng);
    const Eigen::Vector4d x = p.mu_w + L * z;
    if ((x.head<2>() - x.tail<2>()).norm() > dist) ++apart;
  }
  CHECK(std::abs(analytic - static_cast<double>(apart) / n) < 0.02);
}

// ---- temporally unbound waypoints ---------------------------------------------

TEST_CASE("single-time unbound waypoint equals the plain waypoint") {
  const ProMP p = point_promp({0.5, 0.5}, 0.2 * Eigen::Matrix2d::Identity());
  UTConfig cfg;
  const double plain = ball_satisfaction(p, nullptr, "", {0.7, 0.4}, 0.6, false, 0.5, cfg);
  const UnboundWaypointResult r =
      unbound_waypoint_satisfaction(p, nullptr, "", {0.7, 0.4}, 0.6, {0.5}, cfg);
  CHECK(r.probability == doctest::Approx(plain).epsilon(1e-15));
  CHECK(r.support_index == 0);
}

TEST_CASE("unbound waypoint picks the most likely support time") {
  // wide prior conditioned nowhere: use two candidate times with different
  // marginal means by making the weight mean time-varying
  ProMP p;
  p.D = 2;
  p.basis = default_basis(6, 1.0);
  p.mu_w.resize(12);
  for (int i = 0; i < 6; ++i) {
    p.mu_w[i] = static_cast<double>(i) / 5.0;  // x drifts toward 1
    p.mu_w[6 + i] = 0.0;
  }
  p.Sigma_w = 0.02 * Eigen::MatrixXd::Identity(12, 12);
  p.Sigma_y = 1e-8 * Eigen::Matrix2d::Identity();
  UTConfig cfg;
  const UnboundWaypointResult r = unbound_waypoint_satisfaction(
      p, nullptr, "", {marginal_moments(p, 0.9).mean[0], 0.0}, 0.3, {0.1, 0.5, 0.9}, cfg);
  CHECK(r.t_max == doctest::Approx(0.9));
  CHECK(r.support_index == 2);
}

// ---- smoothness -----------------------------------------------------------------

TEST_CASE("smoothness matrix matches a Riemann-sum oracle for one basis") {
  BasisConfig b;
  b.M = 1;
  b.centers = Eigen::VectorXd::Constant(1, 0.5);
  b.h = 0.1;
  b.T = 1.0;
  const double t0 = 0.2, t1 = 0.8;
  const Eigen::MatrixXd Phi = smoothness_matrix(b, t0, t1);

  const int n = 200000;
  double acc = 0.0;
  const double dt = (t1 - t0) / n;
  for (int i = 0; i < n; ++i) {
    const double dd = basis_features(b, t0 + (i + 0.5) * dt).ddphi[0];
    acc += dd * dd * dt;
  }
  acc /= (t1 - t0);  // normalized by the interval length
  CHECK(Phi(0, 0) == doctest::Approx(acc).epsilon(1e-6));
}

TEST_CASE("Simpson panels have converged") {
  const BasisConfig b = default_basis(6, 1.0);
  const Eigen::MatrixXd a = smoothness_matrix(b, 0.0, 1.0, 256);
  const Eigen::MatrixXd c = smoothness_matrix(b, 0.0, 1.0, 512);
  CHECK((a - c).norm() < 1e-8 * (1.0 + c.norm()));
}

TEST_CASE("smoothness moments of a standard normal weight vector") {
  const BasisConfig b = default_basis(5, 1.0);
  const Eigen::MatrixXd Phi = smoothness_matrix(b, 0.0, 1.0);
  const Eigen::MatrixXd Big = smoothness_big_matrix(Phi, 2, Eigen::VectorXd());
  const int n = 10;
  const SmoothnessMoments m =
      smoothness_moments(Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Identity(n, n), Big);
  CHECK(m.mean == doctest::Approx(Big.trace()).epsilon(1e-12));
  CHECK(m.var == doctest::Approx(2.0 * (Big * Big).trace()).epsilon(1e-12));
}
