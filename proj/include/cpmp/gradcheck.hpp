// Finite-difference validation of the Lagrangian gradient on randomized
// small problem instances, one per constraint family.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

#include "cpmp/objective.hpp"
#include "cpmp/problem.hpp"

namespace cpmp {

namespace detail {

inline ProMP random_promp(int D, int M, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  ProMP p;
  p.D = D;
  p.basis = default_basis(M, 1.0);
  const int n = D * M;
  p.mu_w.resize(n);
  for (int i = 0; i < n; ++i) p.mu_w[i] = 0.5 * nd(rng);
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = nd(rng);
  p.Sigma_w = symmetrized(A * A.transpose() / n + 0.5 * Eigen::MatrixXd::Identity(n, n));
  p.Sigma_y = 1e-4 * Eigen::MatrixXd::Identity(D, D);
  return p;
}

inline KinematicChain random_chain(int n_links, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.6, 1.2);
  KinematicChain ch;
  ch.link_lengths.resize(n_links);
  for (int i = 0; i < n_links; ++i) ch.link_lengths[i] = uni(rng);
  ch.base = Eigen::Vector2d::Zero();
  ch.base_rot = 0.0;
  ch.pois["end"] = n_links;
  return ch;
}

}  // namespace detail

// A small adaptation problem exercising one constraint family.  Task-space
// constraints go through a D-link chain; MutualAvoidance splits D into two
// arms (requires even D >= 2).
inline AdaptationProblem random_problem(ConstraintKind kind, int D, int M,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  AdaptationProblem prob;
  prob.grid_n = 20;
  prob.original = detail::random_promp(D, M, rng);
  prob.blocks = {D};

  Constraint c;
  c.kind = kind;
  c.id = kind_name(kind);
  c.alpha = 0.9;
  c.support = {4, 10, 16};

  const bool needs_chain = kind != ConstraintKind::JointLimit &&
                           kind != ConstraintKind::Smoothness &&
                           kind != ConstraintKind::MutualAvoidance && D != 2;

  Eigen::Vector2d anchor = Eigen::Vector2d::Zero();
  if (kind != ConstraintKind::JointLimit && kind != ConstraintKind::Smoothness) {
    if (needs_chain || kind == ConstraintKind::MutualAvoidance) {
      // anchor near the workspace of the mean configuration
      anchor = Eigen::Vector2d(0.3 + uni(rng), 0.3 * uni(rng));
    } else {
      const GaussianMoments g = marginal_moments(prob.original, 0.5);
      anchor = g.mean.head(2) + 0.3 * Eigen::Vector2d(uni(rng) - 0.5, uni(rng) - 0.5);
    }
  }

  switch (kind) {
    case ConstraintKind::JointLimit: {
      c.joint = static_cast<int>(uni(rng) * D);
      c.lower = {-1.0 - uni(rng)};
      c.upper = {1.0 + uni(rng)};
      break;
    }
    case ConstraintKind::Smoothness: {
      c.support.clear();
      for (int g = 2; g <= 18; ++g) c.support.push_back(g);
      const Eigen::MatrixXd Phi = smoothness_matrix(prob.original.basis, 0.1, 0.9);
      const Eigen::MatrixXd Big = smoothness_big_matrix(Phi, D, Eigen::VectorXd());
      const SmoothnessMoments sm =
          smoothness_moments(prob.original.mu_w, prob.original.Sigma_w, Big);
      c.bound = sm.mean * (0.8 + 0.4 * uni(rng));
      break;
    }
    case ConstraintKind::Hyperplane: {
      const double ang = 2.0 * M_PI * uni(rng);
      c.normal = Eigen::Vector2d(std::cos(ang), std::sin(ang));
      c.bias = anchor;
      break;
    }
    case ConstraintKind::Waypoint:
    case ConstraintKind::Repeller:
    case ConstraintKind::UnboundWaypoint: {
      c.center = anchor;
      c.radius = 0.4 + 0.4 * uni(rng);
      break;
    }
    case ConstraintKind::NonConvexCorner: {
      const double ang = 2.0 * M_PI * uni(rng);
      c.normal = Eigen::Vector2d(std::cos(ang), std::sin(ang));
      c.bias = anchor;
      c.normal2 = Eigen::Vector2d(-std::sin(ang), std::cos(ang));
      c.bias2 = anchor + Eigen::Vector2d(0.2, -0.1);
      break;
    }
    case ConstraintKind::MutualAvoidance: {
      if (D < 2 || D % 2 != 0)
        throw std::invalid_argument("random_problem: mutual avoidance needs even D");
      const int half = D / 2;
      prob.blocks = {half, half};
      prob.chains.push_back(detail::random_chain(half, rng));
      prob.chains.push_back(detail::random_chain(half, rng));
      prob.chains[1].base = Eigen::Vector2d(2.5, 0.0);
      c.chain = 0;
      c.poi = "end";
      c.chain2 = 1;
      c.poi2 = "end";
      c.radius = 0.5 + 0.5 * uni(rng);
      break;
    }
  }
  if (needs_chain) {
    prob.chains.push_back(detail::random_chain(D, rng));
    c.chain = 0;
    c.poi = "end";
  }
  prob.constraints.push_back(c);
  prob.validate();
  return prob;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  int worst_index = -1;
};

// Central finite differences on the packed parameters at a random point near
// the original, with random positive multipliers.
inline GradCheckResult check_lagrangian_gradient(const AdaptationProblem& prob,
                                                 std::uint64_t seed, double fd_eps = 1e-5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.5, 2.0);

  const ObjectiveWorkspace ws = make_workspace(prob);
  const int n = prob.original.dim();
  CholeskyParams params =
      CholeskyParams::from_moments(prob.original.mu_w, prob.original.Sigma_w);
  Eigen::VectorXd theta = params.pack();
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += 0.05 * nd(rng);
  params = CholeskyParams::unpack(theta, n);

  std::vector<Eigen::VectorXd> lambdas;
  for (const Constraint& c : prob.constraints) {
    Eigen::VectorXd l(constraint_term_count(c));
    for (Eigen::Index i = 0; i < l.size(); ++i) l[i] = uni(rng);
    lambdas.push_back(l);
  }
  const std::vector<int> frozen = unbound_assignments(prob, ws, params);

  const Eigen::VectorXd g =
      lagrangian(prob, ws, params, lambdas, &frozen, true).grad;

  GradCheckResult res;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp[i] += fd_eps;
    tm[i] -= fd_eps;
    const double fp =
        lagrangian(prob, ws, CholeskyParams::unpack(tp, n), lambdas, &frozen, false).value;
    const double fm =
        lagrangian(prob, ws, CholeskyParams::unpack(tm, n), lambdas, &frozen, false).value;
    const double fd = (fp - fm) / (2.0 * fd_eps);
    const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-3});
    const double rel = std::abs(fd - g[i]) / denom;
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_index = static_cast<int>(i);
    }
  }
  return res;
}

}  // namespace cpmp
