// Lagrangian of the constrained adaptation problem and its gradient in the
// Cholesky parameterization theta = (mu, L_tril, gamma), Sigma = L L^T with
// diag(L) = exp(gamma).
//
// Gradients are assembled in two stages: analytic expressions for the KL and
// quadratic-form terms, and forward-mode dual numbers for the constraint
// chains (FK -> unscented transform -> CDF), seeded at the level of the
// time-marginal moments and then chained linearly back to (mu_w, Sigma_w).
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cpmp/constraints.hpp"
#include "cpmp/dual.hpp"
#include "cpmp/problem.hpp"
#include "cpmp/promp.hpp"

namespace cpmp {

// ---- Parameter vector ------------------------------------------------------

struct CholeskyParams {
  Eigen::VectorXd mu;
  Eigen::MatrixXd L;  // lower triangular, strictly positive diagonal

  int n() const { return static_cast<int>(mu.size()); }
  static int packed_size(int n) { return 2 * n + n * (n - 1) / 2; }

  Eigen::MatrixXd sigma() const { return (L * L.transpose()).eval(); }

  static CholeskyParams from_moments(const Eigen::VectorXd& mu,
                                     const Eigen::MatrixXd& Sigma) {
    CholeskyParams p;
    p.mu = mu;
    p.L = safe_cholesky(Sigma);
    return p;
  }

  // Layout: [mu (n); strict lower triangle of L, row-major; log diag(L)].
  Eigen::VectorXd pack() const {
    const int nn = n();
    Eigen::VectorXd x(packed_size(nn));
    x.head(nn) = mu;
    int k = nn;
    for (int i = 1; i < nn; ++i)
      for (int j = 0; j < i; ++j) x[k++] = L(i, j);
    for (int i = 0; i < nn; ++i) x[k++] = std::log(L(i, i));
    return x;
  }

  static CholeskyParams unpack(const Eigen::VectorXd& x, int nn) {
    if (x.size() != packed_size(nn))
      throw std::invalid_argument("CholeskyParams: packed size mismatch");
    CholeskyParams p;
    p.mu = x.head(nn);
    p.L = Eigen::MatrixXd::Zero(nn, nn);
    int k = nn;
    for (int i = 1; i < nn; ++i)
      for (int j = 0; j < i; ++j) p.L(i, j) = x[k++];
    for (int i = 0; i < nn; ++i) p.L(i, i) = std::exp(x[k++]);
    return p;
  }
};

// Chain a gradient w.r.t. Sigma (symmetric full-matrix convention) and mu into
// the packed parameterization: dF/dL = 2 G L, and the diagonal picks up the
// exp reparameterization factor L_ii.
inline Eigen::VectorXd pack_gradient(const Eigen::VectorXd& Gmu, const Eigen::MatrixXd& GSig,
                                     const Eigen::MatrixXd& L) {
  const int nn = static_cast<int>(Gmu.size());
  const Eigen::MatrixXd GL = 2.0 * (GSig * L);
  Eigen::VectorXd g(CholeskyParams::packed_size(nn));
  g.head(nn) = Gmu;
  int k = nn;
  for (int i = 1; i < nn; ++i)
    for (int j = 0; j < i; ++j) g[k++] = GL(i, j);
  for (int i = 0; i < nn; ++i) g[k++] = GL(i, i) * L(i, i);
  return g;
}

inline ProMP promp_from_params(const ProMP& original, const CholeskyParams& p) {
  ProMP out = original;
  out.mu_w = p.mu;
  out.Sigma_w = symmetrized(p.sigma());
  return out;
}

// ---- Precomputed workspace -------------------------------------------------

// Holds pointers into the problem's chains; must not outlive the problem.
struct ObjectiveWorkspace {
  Eigen::VectorXd times;
  std::vector<Eigen::VectorXd> phi;        // per grid time, size M
  std::vector<Eigen::MatrixXd> phi_outer;  // per grid time, phi phi^T

  Eigen::MatrixXd Sigma0_inv;
  double logdet0 = 0.0;

  std::vector<Eigen::MatrixXd> combo_inv;  // WeightedCombination targets
  std::vector<double> combo_logdet;


  // SumOfMarginalKls: per-block original weight covariance inverse/logdet;
  // block b spans weight rows [offset[b]*M, (offset[b]+size[b])*M).
  std::vector<int> block_w_off, block_w_size;  // in weight-space units
  std::vector<Eigen::MatrixXd> block_inv;
  std::vector<double> block_logdet;

  Eigen::MatrixXd PhiKappa;  // kappa > 0: weighted smoothness form, D*M x D*M

  std::vector<Eigen::MatrixXd> smooth_phi;  // per constraint; empty unless smoothness

  struct Binding {
    std::vector<int> coords;  // marginal coordinates the term reads
    const KinematicChain* ch1 = nullptr;
    int link1 = 0;
    const KinematicChain* ch2 = nullptr;
    int link2 = 0;
    int d1 = 0;  // MutualAvoidance: joint count of the first arm
  };
  std::vector<Binding> binding;  // per constraint
};

inline int constraint_term_count(const Constraint& c) {
  return (c.kind == ConstraintKind::Smoothness || c.kind == ConstraintKind::UnboundWaypoint)
             ? 1
             : static_cast<int>(c.support.size());
}

inline ObjectiveWorkspace make_workspace(const AdaptationProblem& prob) {
  const ProMP& p0 = prob.original;
  const int M = p0.basis.M;
  ObjectiveWorkspace ws;
  ws.times = prob.grid();
  ws.phi.reserve(prob.grid_n);
  ws.phi_outer.reserve(prob.grid_n);
  for (int g = 0; g < prob.grid_n; ++g) {
    ws.phi.push_back(basis_phi(p0.basis, ws.times[g]));
    ws.phi_outer.push_back(ws.phi.back() * ws.phi.back().transpose());
  }

  {
    const Eigen::MatrixXd L0 = safe_cholesky(p0.Sigma_w);
    const int n = p0.dim();
    ws.Sigma0_inv = L0.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
    ws.Sigma0_inv = (ws.Sigma0_inv.transpose() * ws.Sigma0_inv).eval();
    ws.logdet0 = 2.0 * L0.diagonal().array().log().sum();
  }

  for (const ProMP& pk : prob.combo_primitives) {
    if (pk.dim() != p0.dim())
      throw std::invalid_argument("combination primitive dimension mismatch");
    const Eigen::MatrixXd Lk = safe_cholesky(pk.Sigma_w);
    const int n = p0.dim();
    Eigen::MatrixXd inv =
        Lk.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
    ws.combo_inv.push_back((inv.transpose() * inv).eval());
    ws.combo_logdet.push_back(2.0 * Lk.diagonal().array().log().sum());
  }

  if (prob.objective.variant == ObjectiveVariant::SumOfMarginalKls) {
    const std::vector<int> blocks = prob.blocks.empty() ? std::vector<int>{p0.D} : prob.blocks;
    int off = 0;
    for (int nb : blocks) {
      const int wo = off * M, wn = nb * M;
      const Eigen::MatrixXd Lb = safe_cholesky(p0.Sigma_w.block(wo, wo, wn, wn));
      Eigen::MatrixXd inv =
          Lb.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(wn, wn));
      ws.block_w_off.push_back(wo);
      ws.block_w_size.push_back(wn);
      ws.block_inv.push_back((inv.transpose() * inv).eval());
      ws.block_logdet.push_back(2.0 * Lb.diagonal().array().log().sum());
      off += nb;
    }
  }

  if (prob.objective.smoothness_kappa > 0.0) {
    const Eigen::MatrixXd Phi = smoothness_matrix(p0.basis, 0.0, p0.basis.T);
    ws.PhiKappa = smoothness_big_matrix(Phi, p0.D, prob.objective.joint_weights);
  }

  ws.smooth_phi.resize(prob.constraints.size());
  ws.binding.resize(prob.constraints.size());
  for (size_t ci = 0; ci < prob.constraints.size(); ++ci) {
    const Constraint& c = prob.constraints[ci];
    ObjectiveWorkspace::Binding& b = ws.binding[ci];
    switch (c.kind) {
      case ConstraintKind::Smoothness: {
        const double t0 = ws.times[c.support.front()];
        const double t1 = ws.times[c.support.back()];
        const Eigen::MatrixXd Phi = smoothness_matrix(p0.basis, t0, t1);
        ws.smooth_phi[ci] = smoothness_big_matrix(Phi, p0.D, c.joint_weights);
        break;
      }
      case ConstraintKind::JointLimit:
        b.coords = {c.joint};
        break;
      case ConstraintKind::MutualAvoidance: {
        b.ch1 = prob.chain_ptr(c.chain);
        b.ch2 = prob.chain_ptr(c.chain2);
        b.link1 = b.ch1 ? b.ch1->poi_link(c.poi) : 0;
        b.link2 = b.ch2 ? b.ch2->poi_link(c.poi2) : 0;
        const int o1 = prob.block_offset(c.block1);
        const int o2 = prob.block_offset(c.block2);
        const int n1 = b.ch1 ? b.ch1->n_links() : 2;
        const int n2 = b.ch2 ? b.ch2->n_links() : 2;
        b.d1 = n1;
        for (int i = 0; i < n1; ++i) b.coords.push_back(o1 + i);
        for (int i = 0; i < n2; ++i) b.coords.push_back(o2 + i);
        break;
      }
      default: {  // task-space constraints on one poi
        b.ch1 = prob.chain_ptr(c.chain);
        b.link1 = b.ch1 ? b.ch1->poi_link(c.poi) : 0;
        const int off = prob.block_offset(c.block1);
        const int nb = b.ch1 ? b.ch1->n_links()
                             : (prob.blocks.empty() ? p0.D : prob.blocks[c.block1]);
        if (!b.ch1 && nb != 2)
          throw std::invalid_argument("constraint '" + c.id +
                                      "': identity chain requires a 2-D block");
        for (int i = 0; i < nb; ++i) b.coords.push_back(off + i);
        break;
      }
    }
    for (int idx : b.coords)
      if (idx < 0 || idx >= p0.D)
        throw std::invalid_argument("constraint '" + c.id + "': coordinate out of range");
  }
  return ws;
}

// ---- Per-term satisfaction probability on marginal moments ------------------

namespace detail {

template <class T>
T term_probability(const Constraint& c, int support_pos, const ObjectiveWorkspace::Binding& b,
                   double alpha_ut, const SmallVec<T>& m, const SmallMat<T>& S) {
  switch (c.kind) {
    case ConstraintKind::JointLimit:
      return limit_satisfaction_core(m[0], S[0][0], c.lower_at(support_pos),
                                     c.upper_at(support_pos));
    case ConstraintKind::Hyperplane:
      return hyperplane_satisfaction_core(m, S, b.ch1, b.link1, c.normal, c.bias, alpha_ut);
    case ConstraintKind::Waypoint:
    case ConstraintKind::UnboundWaypoint:
      return ball_satisfaction_core(m, S, b.ch1, b.link1, c.center, c.radius,
                                    /*repel=*/false, alpha_ut);
    case ConstraintKind::Repeller:
      return ball_satisfaction_core(m, S, b.ch1, b.link1, c.center, c.radius,
                                    /*repel=*/true, alpha_ut);
    case ConstraintKind::NonConvexCorner:
      return corner_satisfaction_core(m, S, b.ch1, b.link1, c.normal, c.bias, c.normal2,
                                      c.bias2, alpha_ut);
    case ConstraintKind::MutualAvoidance:
      return mutual_satisfaction_core(m, S, b.d1, b.ch1, b.link1, b.ch2, b.link2, c.radius,
                                      alpha_ut);
    default:
      throw std::logic_error("term_probability: smoothness has no per-time term");
  }
}

}  // namespace detail

// ---- Lagrangian ------------------------------------------------------------

struct TermEval {
  double probability = 0.0;
  double residual = 0.0;  // alpha - probability; positive means violated
  int grid_index = -1;    // -1 for integral (smoothness) terms
};

struct LagrangianResult {
  double value = 0.0;
  double objective_value = 0.0;  // divergence + kappa * E[R], without penalties
  double expected_smoothness = 0.0;
  Eigen::VectorXd grad;                      // packed; empty unless requested
  std::vector<std::vector<TermEval>> terms;  // per constraint, per term

  double max_violation() const {
    double v = 0.0;
    for (const auto& ct : terms)
      for (const TermEval& t : ct) v = std::max(v, t.residual);
    return v;
  }
};

// Per-grid-time marginal moments of the candidate parameters.
namespace detail {

struct GridMarginals {
  std::vector<Eigen::VectorXd> mean;  // D
  std::vector<Eigen::MatrixXd> cov;   // D x D
};

inline GridMarginals grid_marginals(const ProMP& original, const ObjectiveWorkspace& ws,
                                    const Eigen::VectorXd& mu, const Eigen::MatrixXd& Sigma) {
  const int D = original.D, M = original.basis.M;
  GridMarginals gm;
  const int G = static_cast<int>(ws.phi.size());
  gm.mean.resize(G);
  gm.cov.resize(G);
  for (int g = 0; g < G; ++g) {
    const Eigen::VectorXd& f = ws.phi[g];
    Eigen::VectorXd m(D);
    Eigen::MatrixXd S(D, D);
    for (int a = 0; a < D; ++a) {
      m[a] = mu.segment(a * M, M).dot(f);
      for (int bb = a; bb < D; ++bb) {
        S(a, bb) = f.dot(Sigma.block(a * M, bb * M, M, M) * f);
        S(bb, a) = S(a, bb);
      }
    }
    gm.mean[g] = std::move(m);
    gm.cov[g] = std::move(S);
  }
  return gm;
}

}  // namespace detail

// For each UnboundWaypoint constraint, the grid index of the support time with
// the highest satisfaction probability (lower index wins ties).  Other
// constraints get -1.  The assignment is held fixed while the inner loop runs.
inline std::vector<int> unbound_assignments(const AdaptationProblem& prob,
                                            const ObjectiveWorkspace& ws,
                                            const CholeskyParams& params) {
  std::vector<int> out(prob.constraints.size(), -1);
  const Eigen::MatrixXd Sigma = params.sigma();
  const auto gm = detail::grid_marginals(prob.original, ws, params.mu, Sigma);
  for (size_t ci = 0; ci < prob.constraints.size(); ++ci) {
    const Constraint& c = prob.constraints[ci];
    if (c.kind != ConstraintKind::UnboundWaypoint) continue;
    const auto& b = ws.binding[ci];
    double best = -1.0;
    for (int gi : c.support) {
      SmallVec<double> m;
      SmallMat<double> S;
      const int nc = static_cast<int>(b.coords.size());
      m.resize(nc);
      S.assign(nc, SmallVec<double>(nc));
      for (int i = 0; i < nc; ++i) {
        m[i] = gm.mean[gi][b.coords[i]];
        for (int j = 0; j < nc; ++j) S[i][j] = gm.cov[gi](b.coords[i], b.coords[j]);
      }
      const double p = detail::term_probability(c, 0, b, prob.ut.alpha_ut, m, S);
      if (p > best) {  // strict: lower grid index wins ties
        best = p;
        out[ci] = gi;
      }
    }
  }
  return out;
}

// Evaluates the Lagrangian
//   L(theta, lambda) = F(theta) + kappa E[R](theta)
//                      + sum_{k,t} lambda_{k,t} (alpha_{k,t} - p_{k,t}(theta))
// where F is the divergence selected by the objective variant.  `frozen` pins
// the active time of each UnboundWaypoint constraint (see unbound_assignments);
// pass nullptr to resolve it on the fly.
inline LagrangianResult lagrangian(const AdaptationProblem& prob, const ObjectiveWorkspace& ws,
                                   const CholeskyParams& params,
                                   const std::vector<Eigen::VectorXd>& lambdas,
                                   const std::vector<int>* frozen, bool want_grad) {
  const ProMP& p0 = prob.original;
  const int n = p0.dim();
  const int D = p0.D, M = p0.basis.M;
  if (params.n() != n) throw std::invalid_argument("lagrangian: parameter size mismatch");
  if (lambdas.size() != prob.constraints.size())
    throw std::invalid_argument("lagrangian: multiplier count mismatch");

  LagrangianResult res;
  const Eigen::MatrixXd Sigma = symmetrized(params.sigma());
  const double logdetS = 2.0 * params.L.diagonal().array().log().sum();

  Eigen::VectorXd Gmu = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd GSig = Eigen::MatrixXd::Zero(n, n);

  Eigen::MatrixXd Sigma_inv;
  if (want_grad) {
    Eigen::MatrixXd Linv =
        params.L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
    Sigma_inv = (Linv.transpose() * Linv).eval();
  }

  // -- objective term ---------------------------------------------------------
  std::optional<detail::GridMarginals> gm;
  const auto ensure_marginals = [&]() -> const detail::GridMarginals& {
    if (!gm) gm = detail::grid_marginals(p0, ws, params.mu, Sigma);
    return *gm;
  };

  switch (prob.objective.variant) {
    case ObjectiveVariant::KlToSingle:
    case ObjectiveVariant::JointKlToProduct: {
      const Eigen::VectorXd dmu = params.mu - p0.mu_w;
      const double tr = (ws.Sigma0_inv * Sigma).trace();
      const double quad = dmu.dot(ws.Sigma0_inv * dmu);
      res.objective_value = 0.5 * (tr + quad - n + ws.logdet0 - logdetS);
      if (want_grad) {
        Gmu += ws.Sigma0_inv * dmu;
        GSig += 0.5 * (ws.Sigma0_inv - Sigma_inv);
      }
      break;
    }
    case ObjectiveVariant::WeightedCombination: {
      for (size_t k = 0; k < prob.combo_primitives.size(); ++k) {
        const double w = prob.objective.combination_weights[static_cast<Eigen::Index>(k)];
        const ProMP& pk = prob.combo_primitives[k];
        const Eigen::VectorXd dmu = params.mu - pk.mu_w;
        const double tr = (ws.combo_inv[k] * Sigma).trace();
        const double quad = dmu.dot(ws.combo_inv[k] * dmu);
        res.objective_value += w * 0.5 * (tr + quad - n + ws.combo_logdet[k] - logdetS);
        if (want_grad) {
          Gmu += w * (ws.combo_inv[k] * dmu);
          GSig += w * 0.5 * (ws.combo_inv[k] - Sigma_inv);
        }
      }
      break;
    }
    // Block-wise weight-space KLs; agnostic to cross-block covariance.
    case ObjectiveVariant::SumOfMarginalKls: {
      for (size_t b = 0; b < ws.block_inv.size(); ++b) {
        const int wo = ws.block_w_off[b], wn = ws.block_w_size[b];
        const Eigen::MatrixXd Sb = Sigma.block(wo, wo, wn, wn);
        const Eigen::VectorXd dmu = params.mu.segment(wo, wn) - p0.mu_w.segment(wo, wn);
        const Eigen::MatrixXd Lb = safe_cholesky(Sb);
        const double logdet_b = 2.0 * Lb.diagonal().array().log().sum();
        const double tr = (ws.block_inv[b] * Sb).trace();
        res.objective_value +=
            0.5 * (tr + dmu.dot(ws.block_inv[b] * dmu) - wn + ws.block_logdet[b] - logdet_b);
        if (want_grad) {
          Gmu.segment(wo, wn) += ws.block_inv[b] * dmu;
          Eigen::MatrixXd inv =
              Lb.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(wn, wn));
          GSig.block(wo, wo, wn, wn) += 0.5 * (ws.block_inv[b] - inv.transpose() * inv);
        }
      }
      break;
    }
  }

  // -- kappa-weighted expected smoothness --------------------------------------
  if (prob.objective.smoothness_kappa > 0.0) {
    const double kappa = prob.objective.smoothness_kappa;
    const Eigen::VectorXd Pm = ws.PhiKappa * params.mu;
    res.expected_smoothness = params.mu.dot(Pm) + (ws.PhiKappa * Sigma).trace();
    res.objective_value += kappa * res.expected_smoothness;
    if (want_grad) {
      Gmu += kappa * 2.0 * Pm;
      GSig += kappa * ws.PhiKappa;
    }
  }

  res.value = res.objective_value;

  // -- constraint penalty terms -------------------------------------------------
  res.terms.resize(prob.constraints.size());
  for (size_t ci = 0; ci < prob.constraints.size(); ++ci) {
    const Constraint& c = prob.constraints[ci];
    const auto& b = ws.binding[ci];
    const int nterms = constraint_term_count(c);
    if (lambdas[ci].size() != nterms)
      throw std::invalid_argument("lagrangian: multiplier size mismatch for '" + c.id + "'");
    res.terms[ci].resize(nterms);

    if (c.kind == ConstraintKind::Smoothness) {
      const Eigen::MatrixXd& Phi = ws.smooth_phi[ci];
      const Eigen::VectorXd Pm = Phi * params.mu;
      const Eigen::MatrixXd PS = Phi * Sigma;
      const double mean = params.mu.dot(Pm) + PS.trace();
      const double var = 4.0 * Pm.dot(Sigma * Pm) + 2.0 * (PS * PS).trace();
      const Dual md = Dual::seeded(mean, 2, 0);
      const Dual vd = Dual::seeded(var, 2, 1);
      const Dual pdual = detail::gamma_tail_prob(md, vd, c.bound, /*repel=*/false);
      const double lam = lambdas[ci][0];
      TermEval& te = res.terms[ci][0];
      te.probability = pdual.value();
      te.residual = c.alpha - te.probability;
      te.grid_index = -1;
      res.value += lam * te.residual;
      if (want_grad && lam != 0.0) {
        const double dp_dm = pdual.deriv(0), dp_dv = pdual.deriv(1);
        Gmu += -lam * (dp_dm * 2.0 * Pm + dp_dv * 8.0 * (Phi * (Sigma * Pm)));
        GSig += -lam * (dp_dm * Phi +
                        dp_dv * (4.0 * Pm * Pm.transpose() +
                                 4.0 * (Phi * Sigma * Phi)));
      }
      continue;
    }

    // time-marginal terms
    const auto& marg = ensure_marginals();
    const int nc = static_cast<int>(b.coords.size());
    const int ntan = nc + nc * (nc + 1) / 2;
    if (ntan > Dual::kMaxTangent)
      throw std::invalid_argument("constraint '" + c.id + "': too many joint coordinates");

    for (int ti = 0; ti < nterms; ++ti) {
      int gi;
      int support_pos = ti;
      if (c.kind == ConstraintKind::UnboundWaypoint) {
        if (frozen && (*frozen)[ci] >= 0) {
          gi = (*frozen)[ci];
        } else {
          const auto assign = unbound_assignments(prob, ws, params);
          gi = assign[ci];
        }
        support_pos = 0;
      } else {
        gi = c.support[ti];
      }
      const double lam = lambdas[ci][ti];

      TermEval& te = res.terms[ci][ti];
      te.grid_index = gi;

      if (!want_grad || lam == 0.0) {
        SmallVec<double> m(nc);
        SmallMat<double> S(nc, SmallVec<double>(nc));
        for (int i = 0; i < nc; ++i) {
          m[i] = marg.mean[gi][b.coords[i]];
          for (int j = 0; j < nc; ++j) S[i][j] = marg.cov[gi](b.coords[i], b.coords[j]);
        }
        te.probability = detail::term_probability(c, support_pos, b, prob.ut.alpha_ut, m, S);
        te.residual = c.alpha - te.probability;
        res.value += lam * te.residual;
        continue;
      }

      // dual-number pass: seed the marginal moments
      SmallVec<Dual> m(nc);
      SmallMat<Dual> S(nc, SmallVec<Dual>(nc));
      for (int i = 0; i < nc; ++i)
        m[i] = Dual::seeded(marg.mean[gi][b.coords[i]], ntan, i);
      int k = nc;
      for (int i = 0; i < nc; ++i) {
        for (int j = i; j < nc; ++j) {
          const Dual sij = Dual::seeded(marg.cov[gi](b.coords[i], b.coords[j]), ntan, k);
          S[i][j] = sij;
          S[j][i] = sij;
          ++k;
        }
      }
      const Dual pdual = detail::term_probability(c, support_pos, b, prob.ut.alpha_ut, m, S);
      te.probability = pdual.value();
      te.residual = c.alpha - te.probability;
      res.value += lam * te.residual;

      // scatter back to weight space: mean_i = phi^T mu_i, S_ij = phi^T Sig_ij phi
      const Eigen::VectorXd& f = ws.phi[gi];
      const Eigen::MatrixXd& ff = ws.phi_outer[gi];
      for (int i = 0; i < nc; ++i) {
        const double d = -lam * pdual.deriv(i);
        if (d != 0.0) Gmu.segment(b.coords[i] * M, M) += d * f;
      }
      k = nc;
      for (int i = 0; i < nc; ++i) {
        for (int j = i; j < nc; ++j) {
          const double d = -lam * pdual.deriv(k);
          ++k;
          if (d == 0.0) continue;
          const int a = b.coords[i], bb = b.coords[j];
          if (i == j) {
            GSig.block(a * M, a * M, M, M) += d * ff;
          } else {
            GSig.block(a * M, bb * M, M, M) += 0.5 * d * ff;
            GSig.block(bb * M, a * M, M, M) += 0.5 * d * ff;
          }
        }
      }
    }
  }

  if (want_grad) res.grad = pack_gradient(Gmu, GSig, params.L);
  return res;
}

// ---- Standalone diagnostics --------------------------------------------------

// Sum over the grid of the KL divergences between the time marginals of q and p0.
inline double marginal_kl_sum(const ProMP& q, const ProMP& p0, const Eigen::VectorXd& times) {
  if (q.D != p0.D) throw std::invalid_argument("marginal_kl_sum: dimension mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < times.size(); ++i) {
    const GaussianMoments a = marginal_moments(q, times[i]);
    const GaussianMoments b = marginal_moments(p0, times[i]);
    acc += gaussian_kl(a.mean, a.cov, b.mean, b.cov).total;
  }
  return acc;
}

// Weighted sum of weight-space KLs to a set of primitives.
inline double combination_objective(const ProMP& q, const std::vector<ProMP>& primitives,
                                    const Eigen::VectorXd& weights) {
  if (weights.size() != static_cast<Eigen::Index>(primitives.size()))
    throw std::invalid_argument("combination_objective: weight count mismatch");
  double acc = 0.0;
  for (size_t k = 0; k < primitives.size(); ++k)
    acc += weights[static_cast<Eigen::Index>(k)] *
           gaussian_kl(q.mu_w, q.Sigma_w, primitives[k].mu_w, primitives[k].Sigma_w).total;
  return acc;
}

}  // namespace cpmp
