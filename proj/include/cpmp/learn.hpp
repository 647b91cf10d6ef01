// EM / MAP learning of a ProMP from demonstrations.
//
// The ridge regularization on Sigma_w (and the Sigma_y floor) is applied as
// an exact MAP M-step against a degenerate inverse-Wishart prior with scale
// fixed at initialization, so the reported regularized log-likelihood is
// monotone across iterations.
#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cpmp/promp.hpp"

namespace cpmp {

struct DemoTrajectory {
  Eigen::VectorXd times;  // within [0, T]
  Eigen::MatrixXd ys;     // L x D
};

struct DemoSet {
  std::vector<DemoTrajectory> trajectories;
};

struct RegularizationConfig {
  double ridge_rel = 1e-6;       // eps_w = ridge_rel * tr(Sigma_w)/(DM) at init
  double sigma_y_floor = 1e-8;
  int max_iters = 200;
  double tol = 1e-8;
};

struct LearnResult {
  ProMP promp;
  std::vector<double> loglik_trace;  // regularized log-likelihood per iteration
  bool diagonal_fallback = false;    // fewer than 2 demos: diagonal Sigma_w
  int iterations = 0;
};

inline LearnResult learn_em(const DemoSet& demos, const BasisConfig& basis, int D,
                            const RegularizationConfig& reg = {}) {
  basis.validate();
  if (demos.trajectories.empty()) throw std::invalid_argument("learn_em: no demonstrations");
  const int M = basis.M;
  const int n = static_cast<int>(demos.trajectories.size());
  const int DM = D * M;

  std::vector<Eigen::MatrixXd> Phis;  // per demo, L x M
  long total_obs = 0;
  for (const auto& demo : demos.trajectories) {
    if (demo.ys.cols() != D) throw std::invalid_argument("learn_em: demo dimension mismatch");
    if (demo.ys.rows() < M)
      throw std::invalid_argument("learn_em: demo has fewer observations than basis functions");
    Eigen::MatrixXd Phi(demo.times.size(), M);
    for (int l = 0; l < demo.times.size(); ++l)
      Phi.row(l) = basis_phi(basis, demo.times[l]).transpose();
    Phis.push_back(std::move(Phi));
    total_obs += demo.ys.rows();
  }

  // Initialization: pooled ridge regression per coordinate.
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(DM);
  Eigen::MatrixXd Sw = Eigen::MatrixXd::Identity(DM, DM);
  Eigen::MatrixXd Sy = Eigen::MatrixXd::Identity(D, D);
  {
    std::vector<Eigen::VectorXd> w_hat(n, Eigen::VectorXd::Zero(DM));
    for (int i = 0; i < n; ++i) {
      const Eigen::MatrixXd A =
          Phis[i].transpose() * Phis[i] + 1e-8 * Eigen::MatrixXd::Identity(M, M);
      Eigen::LLT<Eigen::MatrixXd> llt(A);
      for (int d = 0; d < D; ++d)
        w_hat[i].segment(d * M, M) = llt.solve(Phis[i].transpose() * demos.trajectories[i].ys.col(d));
      mu += w_hat[i] / n;
    }
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(DM, DM);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd d = w_hat[i] - mu;
      S += d * d.transpose() / n;
    }
    Sw = symmetrized(S) + 1e-4 * Eigen::MatrixXd::Identity(DM, DM);
    double resid = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < D; ++d)
        resid += (demos.trajectories[i].ys.col(d) - Phis[i] * w_hat[i].segment(d * M, M))
                     .squaredNorm();
    }
    Sy = std::max(resid / (total_obs * D), 1e-6) * Eigen::MatrixXd::Identity(D, D);
  }

  const double eps_w = reg.ridge_rel * Sw.trace() / DM;
  const double eps_y = reg.sigma_y_floor;
  const bool fallback = n < 2;

  LearnResult result;
  result.diagonal_fallback = fallback;

  std::vector<Eigen::VectorXd> post_mean(n);
  std::vector<Eigen::MatrixXd> post_cov(n);
  double prev_ll = -std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < reg.max_iters; ++iter) {
    // E-step with current (mu, Sw, Sy); also accumulates the marginal
    // log-likelihood of each demo.
    Eigen::LLT<Eigen::MatrixXd> lltW(Sw);
    if (lltW.info() != Eigen::Success)
      throw std::runtime_error("learn_em: singular weight covariance");
    Eigen::LLT<Eigen::MatrixXd> lltY(Sy);
    if (lltY.info() != Eigen::Success)
      throw std::runtime_error("learn_em: singular observation covariance");
    const Eigen::MatrixXd SyInv = lltY.solve(Eigen::MatrixXd::Identity(D, D));
    double logdetSw = 0.0, logdetSy = 0.0;
    for (int i = 0; i < DM; ++i) logdetSw += 2.0 * std::log(lltW.matrixL()(i, i));
    for (int i = 0; i < D; ++i) logdetSy += 2.0 * std::log(lltY.matrixL()(i, i));
    const Eigen::VectorXd mu_prior_term = lltW.solve(mu);

    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto& demo = demos.trajectories[i];
      const int L = static_cast<int>(demo.ys.rows());
      const Eigen::MatrixXd PhiSum = Phis[i].transpose() * Phis[i];
      Eigen::MatrixXd Lam = lltW.solve(Eigen::MatrixXd::Identity(DM, DM));
      Eigen::VectorXd J = mu_prior_term;
      for (int a = 0; a < D; ++a) {
        for (int b = 0; b < D; ++b)
          Lam.block(a * M, b * M, M, M) += SyInv(a, b) * PhiSum;
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(M);
        for (int b = 0; b < D; ++b)
          rhs += SyInv(a, b) * (Phis[i].transpose() * demo.ys.col(b));
        J.segment(a * M, M) += rhs;
      }
      Eigen::LLT<Eigen::MatrixXd> lltLam(symmetrized(Lam));
      if (lltLam.info() != Eigen::Success)
        throw std::runtime_error("learn_em: singular posterior covariance");
      post_mean[i] = lltLam.solve(J);
      post_cov[i] = lltLam.solve(Eigen::MatrixXd::Identity(DM, DM));
      post_cov[i] = symmetrized(post_cov[i]);

      double logdetLam = 0.0;
      for (int q = 0; q < DM; ++q) logdetLam += 2.0 * std::log(lltLam.matrixL()(q, q));
      double quad_y = 0.0;
      for (int l = 0; l < L; ++l) {
        const Eigen::VectorXd yl = demo.ys.row(l).transpose();
        quad_y += yl.dot(SyInv * yl);
      }
      ll += -0.5 * L * D * std::log(2.0 * M_PI) - 0.5 * L * logdetSy - 0.5 * quad_y -
            0.5 * logdetSw - 0.5 * mu.dot(mu_prior_term) - 0.5 * logdetLam +
            0.5 * J.dot(post_mean[i]);
    }
    // MAP prior terms matching the additive-ridge M-step below.
    const Eigen::MatrixXd SwInv = lltW.solve(Eigen::MatrixXd::Identity(DM, DM));
    ll += -0.5 * n * eps_w * SwInv.trace() - 0.5 * total_obs * eps_y * SyInv.trace();
    result.loglik_trace.push_back(ll);
    result.iterations = iter + 1;
    if (iter > 0 && ll - prev_ll < reg.tol) break;
    prev_ll = ll;

    // M-step: moment matching of the averaged posteriors, plus the ridge.
    Eigen::VectorXd mu_new = Eigen::VectorXd::Zero(DM);
    for (int i = 0; i < n; ++i) mu_new += post_mean[i] / n;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(DM, DM);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd d = post_mean[i] - mu_new;
      S += (post_cov[i] + d * d.transpose()) / n;
    }
    S = symmetrized(S);
    if (fallback) S = S.diagonal().asDiagonal();
    Eigen::MatrixXd Sw_new = S + eps_w * Eigen::MatrixXd::Identity(DM, DM);

    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(D, D);
    for (int i = 0; i < n; ++i) {
      const auto& demo = demos.trajectories[i];
      const Eigen::MatrixXd PhiSum = Phis[i].transpose() * Phis[i];
      for (int l = 0; l < demo.ys.rows(); ++l) {
        Eigen::VectorXd pred(D);
        const Eigen::VectorXd phi = Phis[i].row(l).transpose();
        for (int d = 0; d < D; ++d) pred[d] = post_mean[i].segment(d * M, M).dot(phi);
        const Eigen::VectorXd r = demo.ys.row(l).transpose() - pred;
        R += r * r.transpose();
      }
      for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b)
          R(a, b) += (PhiSum.array() * post_cov[i].block(a * M, b * M, M, M).array()).sum();
    }
    Eigen::MatrixXd Sy_new =
        symmetrized(R) / total_obs + eps_y * Eigen::MatrixXd::Identity(D, D);

    mu = mu_new;
    Sw = Sw_new;
    Sy = Sy_new;
  }

  result.promp.D = D;
  result.promp.basis = basis;
  result.promp.mu_w = mu;
  result.promp.Sigma_w = Sw;
  result.promp.Sigma_y = Sy;
  return result;
}

// ---- Demo CSV: columns t, q1..qD ---------------------------------------

inline DemoTrajectory load_demo_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_demo_csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!std::isdigit(line[0]) && line[0] != '-' && line[0] != '+' && line[0] != '.')
      continue;  // header
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("load_demo_csv: no data rows in " + path);
  const int D = static_cast<int>(rows[0].size()) - 1;
  if (D < 1) throw std::runtime_error("load_demo_csv: expected columns t,q1..qD");
  DemoTrajectory demo;
  demo.times.resize(rows.size());
  demo.ys.resize(rows.size(), D);
  for (size_t l = 0; l < rows.size(); ++l) {
    if (static_cast<int>(rows[l].size()) != D + 1)
      throw std::runtime_error("load_demo_csv: ragged row in " + path);
    demo.times[l] = rows[l][0];
    for (int d = 0; d < D; ++d) demo.ys(l, d) = rows[l][d + 1];
  }
  return demo;
}

}  // namespace cpmp
