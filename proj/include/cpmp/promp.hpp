// Probabilistic movement primitive: a Gaussian over basis weights.
// Weight layout is row-blocked by coordinate: entry d*M + i is the weight of
// basis i for coordinate d. File formats follow the same ordering.
#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "cpmp/basis.hpp"
#include "cpmp/gaussian.hpp"
#include "json.hpp"

namespace cpmp {

struct ProMP {
  int D = 1;
  BasisConfig basis;
  Eigen::VectorXd mu_w;     // length D*M
  Eigen::MatrixXd Sigma_w;  // (D*M) x (D*M), symmetric PSD
  Eigen::MatrixXd Sigma_y;  // D x D, SPD observation noise

  int dim() const { return D * basis.M; }

  void validate() const {
    basis.validate();
    if (mu_w.size() != dim()) throw std::invalid_argument("ProMP: mu_w size mismatch");
    if (Sigma_w.rows() != dim() || Sigma_w.cols() != dim())
      throw std::invalid_argument("ProMP: Sigma_w size mismatch");
    if (Sigma_y.rows() != D || Sigma_y.cols() != D)
      throw std::invalid_argument("ProMP: Sigma_y size mismatch");
    if (!Sigma_w.isApprox(Sigma_w.transpose(), 1e-10))
      throw std::invalid_argument("ProMP: Sigma_w not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sigma_w, Eigen::EigenvaluesOnly);
    const double floor = -1e-10 * std::max(1.0, Sigma_w.norm());
    if (es.eigenvalues().minCoeff() < floor)
      throw std::invalid_argument("ProMP: Sigma_w not PSD");
    Eigen::LLT<Eigen::MatrixXd> llt(Sigma_y);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("ProMP: Sigma_y not positive definite");
  }
};

// Moments of z_t (dimension D) under the weight distribution.
inline GaussianMoments marginal_moments(const ProMP& p, double t) {
  const Eigen::VectorXd phi = basis_phi(p.basis, t);
  const int M = p.basis.M;
  GaussianMoments g;
  g.mean.resize(p.D);
  g.cov.resize(p.D, p.D);
  for (int i = 0; i < p.D; ++i) {
    g.mean[i] = p.mu_w.segment(i * M, M).dot(phi);
    for (int j = 0; j <= i; ++j) {
      const double c = phi.dot(p.Sigma_w.block(i * M, j * M, M, M) * phi);
      g.cov(i, j) = c;
      g.cov(j, i) = c;
    }
  }
  return g;
}

// One trajectory per weight draw; rows are time points, columns coordinates.
inline std::vector<Eigen::MatrixXd> sample_trajectories(const ProMP& p, int n,
                                                        const Eigen::VectorXd& times,
                                                        std::uint64_t seed,
                                                        bool with_noise = false) {
  if (n < 1) throw std::invalid_argument("sample_trajectories: n must be >= 1");
  const int M = p.basis.M;
  const Eigen::MatrixXd L = safe_cholesky(p.Sigma_w);
  Eigen::MatrixXd Ly;
  if (with_noise) Ly = safe_cholesky(p.Sigma_y);

  Eigen::MatrixXd Phi(times.size(), M);
  for (int l = 0; l < times.size(); ++l) Phi.row(l) = basis_phi(p.basis, times[l]).transpose();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(n);
  Eigen::VectorXd eps(p.dim());
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < eps.size(); ++i) eps[i] = nd(rng);
    const Eigen::VectorXd w = p.mu_w + L * eps;
    Eigen::MatrixXd traj(times.size(), p.D);
    for (int d = 0; d < p.D; ++d)
      traj.col(d) = Phi * w.segment(d * M, M);
    if (with_noise) {
      Eigen::VectorXd e(p.D);
      for (int l = 0; l < times.size(); ++l) {
        for (int d = 0; d < p.D; ++d) e[d] = nd(rng);
        traj.row(l) += (Ly * e).transpose();
      }
    }
    out.push_back(std::move(traj));
  }
  return out;
}

// Gaussian conditioning on the observation value = w phi_t + eps,
// eps ~ N(0, obs_cov).
inline ProMP condition(const ProMP& p, double t, const Eigen::VectorXd& value,
                       const Eigen::MatrixXd& obs_cov) {
  if (value.size() != p.D) throw std::invalid_argument("condition: value size mismatch");
  const Eigen::VectorXd phi = basis_phi(p.basis, t);
  const int M = p.basis.M;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p.D, p.dim());
  for (int d = 0; d < p.D; ++d) A.block(d, d * M, 1, M) = phi.transpose();

  const Eigen::MatrixXd SAt = p.Sigma_w * A.transpose();
  const Eigen::MatrixXd S = A * SAt + obs_cov;
  Eigen::LLT<Eigen::MatrixXd> llt(symmetrized(S));
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("condition: singular innovation covariance");
  const Eigen::MatrixXd K = llt.solve(SAt.transpose()).transpose();

  ProMP out = p;
  out.mu_w = p.mu_w + K * (value - A * p.mu_w);
  out.Sigma_w = symmetrized(p.Sigma_w - K * A * p.Sigma_w);
  // clip tiny negative eigenvalues introduced by the subtraction
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.Sigma_w);
  if (es.eigenvalues().minCoeff() < 0.0) {
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    out.Sigma_w = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    out.Sigma_w = symmetrized(out.Sigma_w);
  }
  return out;
}

// Closed-form Gaussian KL between the weight distributions; the mean and
// covariance terms are returned separately for diagnostics.
inline KlDecomposition kl_weights(const ProMP& p, const ProMP& p0) {
  if (p.D != p0.D || p.basis.M != p0.basis.M)
    throw std::invalid_argument("kl_weights: incompatible primitives");
  return gaussian_kl(p.mu_w, p.Sigma_w, p0.mu_w, p0.Sigma_w);
}

// ---- JSON serialization -------------------------------------------------
// The covariance is stored as its lower-triangular Cholesky factor so files
// round-trip PSD exactly.

inline nlohmann::json promp_to_json(const ProMP& p) {
  const int n = p.dim();
  const Eigen::MatrixXd L = safe_cholesky(p.Sigma_w);
  nlohmann::json j;
  j["D"] = p.D;
  j["M"] = p.basis.M;
  j["T"] = p.basis.T;
  j["h"] = p.basis.h;
  j["centers"] = std::vector<double>(p.basis.centers.data(), p.basis.centers.data() + p.basis.M);
  j["mu_w"] = std::vector<double>(p.mu_w.data(), p.mu_w.data() + n);
  std::vector<double> chol;
  chol.reserve(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) chol.push_back(k <= i ? L(i, k) : 0.0);
  j["sigma_w_chol_lower"] = chol;
  std::vector<double> sy;
  for (int i = 0; i < p.D; ++i)
    for (int k = 0; k < p.D; ++k) sy.push_back(p.Sigma_y(i, k));
  j["sigma_y"] = sy;
  return j;
}

inline ProMP promp_from_json(const nlohmann::json& j) {
  ProMP p;
  p.D = j.at("D").get<int>();
  p.basis.M = j.at("M").get<int>();
  p.basis.T = j.at("T").get<double>();
  p.basis.h = j.at("h").get<double>();
  const auto centers = j.at("centers").get<std::vector<double>>();
  p.basis.centers = Eigen::Map<const Eigen::VectorXd>(centers.data(), centers.size());
  const auto mu = j.at("mu_w").get<std::vector<double>>();
  const int n = p.dim();
  if (static_cast<int>(mu.size()) != n)
    throw std::invalid_argument("promp_from_json: mu_w has wrong length");
  p.mu_w = Eigen::Map<const Eigen::VectorXd>(mu.data(), n);
  const auto chol = j.at("sigma_w_chol_lower").get<std::vector<double>>();
  if (static_cast<int>(chol.size()) != n * n)
    throw std::invalid_argument("promp_from_json: sigma_w_chol_lower has wrong length");
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k <= i; ++k) L(i, k) = chol[static_cast<size_t>(i) * n + k];
  p.Sigma_w = L * L.transpose();
  const auto sy = j.at("sigma_y").get<std::vector<double>>();
  if (static_cast<int>(sy.size()) != p.D * p.D)
    throw std::invalid_argument("promp_from_json: sigma_y has wrong length");
  p.Sigma_y.resize(p.D, p.D);
  for (int i = 0; i < p.D; ++i)
    for (int k = 0; k < p.D; ++k) p.Sigma_y(i, k) = sy[static_cast<size_t>(i) * p.D + k];
  return p;
}

inline void save_promp(const ProMP& p, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_promp: cannot open " + path);
  f << promp_to_json(p).dump(2) << "\n";
}

inline ProMP load_promp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_promp: cannot open " + path);
  nlohmann::json j;
  f >> j;
  return promp_from_json(j);
}

}  // namespace cpmp
