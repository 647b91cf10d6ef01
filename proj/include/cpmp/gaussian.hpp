// Gaussian (mean, covariance) pairs and shared matrix helpers.
#pragma once

#include <Eigen/Dense>
#include <sstream>
#include <stdexcept>

namespace cpmp {

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Cholesky factor of a PSD matrix; adds diagonal jitter (relative to trace)
// when the plain factorization fails. Throws naming the offending eigenvalue
// if the matrix is genuinely indefinite.
inline Eigen::MatrixXd safe_cholesky(const Eigen::MatrixXd& S, double jitter_rel = 1e-12) {
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  const int n = static_cast<int>(S.rows());
  const double scale = std::max(S.trace() / n, 1.0);
  for (int k = 0; k < 8; ++k) {
    const double jitter = scale * jitter_rel * std::pow(10.0, k);
    llt.compute(S + jitter * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  std::ostringstream msg;
  msg << "safe_cholesky: matrix not positive semidefinite, min eigenvalue "
      << es.eigenvalues().minCoeff();
  throw std::runtime_error(msg.str());
}

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& S) {
  return 0.5 * (S + S.transpose());
}

struct KlDecomposition {
  double total = 0.0;
  double mean_term = 0.0;
  double cov_term = 0.0;
};

// KL( N(mu,S) || N(mu0,S0) ) for same-dimension Gaussians.
inline KlDecomposition gaussian_kl(const Eigen::VectorXd& mu, const Eigen::MatrixXd& S,
                                   const Eigen::VectorXd& mu0, const Eigen::MatrixXd& S0) {
  const int n = static_cast<int>(mu.size());
  Eigen::LLT<Eigen::MatrixXd> llt0(S0);
  if (llt0.info() != Eigen::Success)
    throw std::runtime_error(
        "gaussian_kl: reference covariance is singular; add a ridge regularization");
  const Eigen::MatrixXd L = safe_cholesky(S);
  const Eigen::MatrixXd L0 = llt0.matrixL();

  double logdet = 0.0, logdet0 = 0.0;
  for (int i = 0; i < n; ++i) {
    logdet += 2.0 * std::log(L(i, i));
    logdet0 += 2.0 * std::log(L0(i, i));
  }
  const Eigen::VectorXd d = mu - mu0;
  const Eigen::VectorXd y = llt0.matrixL().solve(d);

  // tr(S0^{-1} S) via the factor: || L0^{-1} L ||_F^2
  const Eigen::MatrixXd W = llt0.matrixL().solve(L);
  const double tr = W.squaredNorm();

  KlDecomposition kl;
  kl.mean_term = 0.5 * y.squaredNorm();
  kl.cov_term = 0.5 * (tr - n - logdet + logdet0);
  kl.total = kl.mean_term + kl.cov_term;
  return kl;
}

}  // namespace cpmp
