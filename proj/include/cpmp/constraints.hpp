// Differentiable satisfaction probabilities for every constraint family.
// Each core is templated over the scalar type and works on the time-marginal
// moments (mean, cov) of the weight distribution at one grid time, so the
// same code produces values (double) and moment-space gradients (Dual).
#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "cpmp/basis.hpp"
#include "cpmp/chain.hpp"
#include "cpmp/special.hpp"
#include "cpmp/ut.hpp"

namespace cpmp {

enum class ConstraintKind {
  JointLimit,
  Smoothness,
  Hyperplane,
  Waypoint,
  Repeller,
  UnboundWaypoint,
  NonConvexCorner,
  MutualAvoidance,
};

inline const char* kind_name(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::JointLimit: return "joint-limit";
    case ConstraintKind::Smoothness: return "smoothness";
    case ConstraintKind::Hyperplane: return "hyperplane";
    case ConstraintKind::Waypoint: return "waypoint";
    case ConstraintKind::Repeller: return "repeller";
    case ConstraintKind::UnboundWaypoint: return "unbound-waypoint";
    case ConstraintKind::NonConvexCorner: return "non-convex-corner";
    case ConstraintKind::MutualAvoidance: return "mutual-avoidance";
  }
  return "?";
}

struct Constraint {
  ConstraintKind kind = ConstraintKind::JointLimit;
  std::string id;

  std::vector<int> support;  // grid indices, non-empty
  double alpha = 0.999;      // confidence in (0,1)
  double eta = 0.5;          // EMM step size
  double lambda0 = -1.0;     // initial multiplier; < 0 selects the default rule

  // JointLimit: per-support-time bounds (size 1 means constant in time)
  int joint = 0;
  std::vector<double> lower{-std::numeric_limits<double>::infinity()};
  std::vector<double> upper{std::numeric_limits<double>::infinity()};

  // Hyperplane / NonConvexCorner geometry
  Eigen::Vector2d normal = Eigen::Vector2d::Zero();
  Eigen::Vector2d bias = Eigen::Vector2d::Zero();
  Eigen::Vector2d normal2 = Eigen::Vector2d::Zero();
  Eigen::Vector2d bias2 = Eigen::Vector2d::Zero();

  // Waypoint / Repeller / UnboundWaypoint geometry
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.0;

  // Point-of-interest bindings; chain index -1 means the identity map.
  int chain = -1;
  std::string poi;
  int chain2 = -1;
  std::string poi2;
  int block1 = 0;  // MutualAvoidance: weight blocks of the two arms
  int block2 = 1;

  // Smoothness constraint: P(R(w) <= bound) >= alpha
  double bound = 0.0;
  Eigen::VectorXd joint_weights;  // optional per-joint weights

  double lower_at(int support_pos) const {
    return lower.size() == 1 ? lower[0] : lower.at(support_pos);
  }
  double upper_at(int support_pos) const {
    return upper.size() == 1 ? upper[0] : upper.at(support_pos);
  }
};

struct GammaFit {
  double shape = 0.0;
  double rate = 0.0;
};

// Moment matching: the fitted Gamma has exactly the given mean and variance.
inline GammaFit gamma_fit(double mean, double var) {
  if (mean <= 0.0 || var <= 0.0)
    throw std::invalid_argument("gamma_fit: mean and variance must be positive");
  return {mean * mean / var, mean / var};
}

namespace detail {

inline bool degenerate_variance(double var, double mean) {
  return var < 1e-14 * std::max(1.0, mean * mean);
}

// P(lo < s <= hi) for scalar Gaussian s ~ N(m, v); one-sided limits drop a
// term; zero variance collapses to the deterministic indicator.
template <class T>
T gaussian_interval_prob(const T& m, const T& v, double lo, double hi) {
  const double inf = std::numeric_limits<double>::infinity();
  if (degenerate_variance(value_of(v), value_of(m)))
    return T(value_of(m) > lo && value_of(m) <= hi ? 1.0 : 0.0);
  const T s = sqrt(v);
  T p(1.0);
  if (hi < inf) p = normal_cdf((T(hi) - m) / s);
  if (lo > -inf) p -= normal_cdf((T(lo) - m) / s);
  return p;
}

// Gamma tail of a nonnegative scalar with UT moments (m, v):
// waypoint -> P(c <= d^2), repeller -> P(c > d^2).
template <class T>
T gamma_tail_prob(const T& m, const T& v, double d2, bool repel) {
  if (value_of(m) < 1e-300) return T(repel ? 0.0 : 1.0);
  if (degenerate_variance(value_of(v), value_of(m))) {
    const bool inside = value_of(m) <= d2;
    return T((inside && !repel) || (!inside && repel) ? 1.0 : 0.0);
  }
  const T shape = m * m / v;
  const T rate = m / v;
  const T p = gamma_p(shape, rate * d2);
  return repel ? T(1.0) - p : p;
}

// Exact moments of |x - c|^2 for Gaussian x: mean = |m-c|^2 + tr S,
// var = 4 (m-c)^T S (m-c) + 2 tr(S S).
template <class T>
void quadratic_distance_moments(const SmallVec<T>& m, const SmallMat<T>& S,
                                const SmallVec<T>& c, T& mean, T& var) {
  const int n = static_cast<int>(m.size());
  mean = T(0.0);
  var = T(0.0);
  SmallVec<T> d(n);
  for (int i = 0; i < n; ++i) {
    d[i] = m[i] - c[i];
    mean += d[i] * d[i] + S[i][i];
  }
  T quad(0.0), tr2(0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      quad += d[i] * S[i][j] * d[j];
      tr2 += S[i][j] * S[j][i];
    }
  var = 4.0 * quad + 2.0 * tr2;
}

template <class T>
std::array<T, 2> poi_position(const KinematicChain* chain, int upto, const T* q, int nq) {
  if (chain == nullptr) {
    if (nq != 2)
      throw std::invalid_argument("constraints: identity chain requires 2-D coordinates");
    return {q[0], q[1]};
  }
  return forward_kinematics_t(*chain, q, nq, upto);
}

// Gaussian moments of x_t for one poi; identity chains skip the UT.
template <class T>
void task_moments_core(const SmallVec<T>& mean, const SmallMat<T>& cov,
                       const KinematicChain* chain, int upto, double alpha_ut,
                       SmallVec<T>& xm, SmallMat<T>& xc) {
  if (chain == nullptr) {
    if (mean.size() != 2)
      throw std::invalid_argument("constraints: identity chain requires 2-D coordinates");
    xm = mean;
    xc = cov;
    return;
  }
  const int n = static_cast<int>(mean.size());
  ut_core(mean, cov, alpha_ut,
          [&](const SmallVec<T>& z) {
            const auto x = poi_position(chain, upto, z.data(), n);
            return SmallVec<T>{x[0], x[1]};
          },
          xm, xc);
}

template <class T>
T halfspace_prob(const SmallVec<T>& xm, const SmallMat<T>& xc, const Eigen::Vector2d& n,
                 const Eigen::Vector2d& b, bool allowed_is_negative) {
  // signed coordinate s = n^T (x - b)
  T sm = n[0] * (xm[0] - b[0]) + n[1] * (xm[1] - b[1]);
  T sv = n[0] * n[0] * xc[0][0] + 2.0 * n[0] * n[1] * xc[0][1] + n[1] * n[1] * xc[1][1];
  if (!allowed_is_negative) sm = -sm;
  return gaussian_interval_prob(sm, sv, -std::numeric_limits<double>::infinity(), 0.0);
}

}  // namespace detail

// ---- Satisfaction cores on time-marginal moments -------------------------

template <class T>
T limit_satisfaction_core(const T& m, const T& v, double lo, double hi) {
  return detail::gaussian_interval_prob(m, v, lo, hi);
}

// Spread for unscented propagation of a scalar quadratic: alpha^2 = 1 + 2/n
// makes the estimated variance of a quadratic form match the Gaussian fourth
// moment (exact for isotropic centered quadratics); the plain cubature spread
// (alpha = 1) collapses that variance to zero.
inline double quadratic_spread(double alpha_ut, int n) {
  return alpha_ut * std::sqrt(1.0 + 2.0 / n);
}

template <class T>
T ball_satisfaction_core(const SmallVec<T>& mean, const SmallMat<T>& cov,
                         const KinematicChain* chain, int poi_link,
                         const Eigen::Vector2d& center, double radius, bool repel,
                         double alpha_ut) {
  const int n = static_cast<int>(mean.size());
  SmallVec<T> cm;
  SmallMat<T> cc;
  ut_core(mean, cov, quadratic_spread(alpha_ut, n),
          [&](const SmallVec<T>& z) {
            const auto x = detail::poi_position(chain, poi_link, z.data(), n);
            const T dx = x[0] - center[0];
            const T dy = x[1] - center[1];
            return SmallVec<T>{dx * dx + dy * dy};
          },
          cm, cc);
  return detail::gamma_tail_prob(cm[0], cc[0][0], radius * radius, repel);
}

template <class T>
T hyperplane_satisfaction_core(const SmallVec<T>& mean, const SmallMat<T>& cov,
                               const KinematicChain* chain, int poi_link,
                               const Eigen::Vector2d& normal, const Eigen::Vector2d& bias,
                               double alpha_ut) {
  if (normal.norm() == 0.0)
    throw std::invalid_argument("hyperplane constraint: zero normal");
  SmallVec<T> xm;
  SmallMat<T> xc;
  detail::task_moments_core(mean, cov, chain, poi_link, alpha_ut, xm, xc);
  return detail::halfspace_prob(xm, xc, normal, bias, /*allowed_is_negative=*/true);
}

// Probability of NOT being inside the corner: 1 - P(side1) * P(side2).
template <class T>
T corner_satisfaction_core(const SmallVec<T>& mean, const SmallMat<T>& cov,
                           const KinematicChain* chain, int poi_link,
                           const Eigen::Vector2d& n1, const Eigen::Vector2d& b1,
                           const Eigen::Vector2d& n2, const Eigen::Vector2d& b2,
                           double alpha_ut) {
  SmallVec<T> xm;
  SmallMat<T> xc;
  detail::task_moments_core(mean, cov, chain, poi_link, alpha_ut, xm, xc);
  const T p1 = detail::halfspace_prob(xm, xc, n1, b1, /*allowed_is_negative=*/false);
  const T p2 = detail::halfspace_prob(xm, xc, n2, b2, /*allowed_is_negative=*/false);
  return T(1.0) - p1 * p2;
}

// One UT over the concatenated joint state of both arms; correlations flow
// through the joint covariance.
template <class T>
T mutual_satisfaction_core(const SmallVec<T>& mean, const SmallMat<T>& cov, int d1,
                           const KinematicChain* chain1, int link1,
                           const KinematicChain* chain2, int link2, double dist,
                           double alpha_ut) {
  const int n = static_cast<int>(mean.size());
  const int d2 = n - d1;
  SmallVec<T> cm;
  SmallMat<T> cc;
  ut_core(mean, cov, quadratic_spread(alpha_ut, n),
          [&](const SmallVec<T>& z) {
            const auto x1 = detail::poi_position(chain1, link1, z.data(), d1);
            const auto x2 = detail::poi_position(chain2, link2, z.data() + d1, d2);
            const T dx = x1[0] - x2[0];
            const T dy = x1[1] - x2[1];
            return SmallVec<T>{dx * dx + dy * dy};
          },
          cm, cc);
  return detail::gamma_tail_prob(cm[0], cc[0][0], dist * dist, /*repel=*/true);
}

// ---- Smoothness ----------------------------------------------------------

// Phi = (1/|T|) integral of ddphi ddphi^T over [t0, t1], composite Simpson.
inline Eigen::MatrixXd smoothness_matrix(const BasisConfig& basis, double t0, double t1,
                                         int panels = 256) {
  if (!(t1 > t0) || t0 < 0.0 || t1 > basis.T)
    throw std::invalid_argument("smoothness_matrix: bad support interval");
  if (panels % 2 != 0) ++panels;
  const double h = (t1 - t0) / panels;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(basis.M, basis.M);
  for (int i = 0; i <= panels; ++i) {
    const Eigen::VectorXd dd = basis_features(basis, t0 + i * h).ddphi;
    const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += w * (dd * dd.transpose());
  }
  acc *= h / 3.0 / (t1 - t0);
  return symmetrized(acc);
}

// Block-diagonal weighted smoothness form over all coordinates.
inline Eigen::MatrixXd smoothness_big_matrix(const Eigen::MatrixXd& Phi, int D,
                                             const Eigen::VectorXd& joint_weights) {
  const int M = static_cast<int>(Phi.rows());
  Eigen::MatrixXd big = Eigen::MatrixXd::Zero(D * M, D * M);
  for (int d = 0; d < D; ++d) {
    const double w = joint_weights.size() == 0 ? 1.0 : joint_weights[d];
    if (w < 0.0) throw std::invalid_argument("smoothness weights must be non-negative");
    big.block(d * M, d * M, M, M) = w * Phi;
  }
  return big;
}

struct SmoothnessMoments {
  double mean = 0.0;
  double var = 0.0;
};

// E[R] = mu^T Phi mu + tr(Phi Sigma), V[R] = 4 mu^T Phi Sigma Phi mu
// + 2 tr(Phi Sigma Phi Sigma), for the (possibly block-weighted) form Phi.
inline SmoothnessMoments smoothness_moments(const Eigen::VectorXd& mu,
                                            const Eigen::MatrixXd& Sigma,
                                            const Eigen::MatrixXd& PhiBig) {
  if (mu.size() != PhiBig.rows() || Sigma.rows() != PhiBig.rows())
    throw std::invalid_argument("smoothness_moments: dimension mismatch");
  const Eigen::VectorXd Pm = PhiBig * mu;
  const Eigen::MatrixXd PS = PhiBig * Sigma;
  SmoothnessMoments out;
  out.mean = mu.dot(Pm) + PS.trace();
  out.var = 4.0 * Pm.dot(Sigma * Pm) + 2.0 * (PS * PS).trace();
  return out;
}

// ---- Double-facing convenience wrappers over a ProMP ----------------------

namespace detail {

inline void to_small(const GaussianMoments& g, SmallVec<double>& m, SmallMat<double>& c) {
  const int n = static_cast<int>(g.mean.size());
  m.assign(g.mean.data(), g.mean.data() + n);
  c.assign(n, SmallVec<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) c[i][j] = g.cov(i, j);
}

}  // namespace detail

inline double limit_satisfaction(const ProMP& p, int joint, double lo, double hi, double t) {
  if (joint < 0 || joint >= p.D) throw std::invalid_argument("limit_satisfaction: bad joint");
  const GaussianMoments g = marginal_moments(p, t);
  return limit_satisfaction_core(g.mean[joint], g.cov(joint, joint), lo, hi);
}

inline double ball_satisfaction(const ProMP& p, const KinematicChain* chain,
                                const std::string& poi, const Eigen::Vector2d& center,
                                double radius, bool repel, double t, const UTConfig& cfg) {
  if (radius <= 0.0) throw std::invalid_argument("ball_satisfaction: radius must be positive");
  SmallVec<double> m;
  SmallMat<double> c;
  detail::to_small(marginal_moments(p, t), m, c);
  const int link = chain ? chain->poi_link(poi) : 0;
  return ball_satisfaction_core(m, c, chain, link, center, radius, repel, cfg.alpha_ut);
}

inline double hyperplane_satisfaction(const ProMP& p, const KinematicChain* chain,
                                      const std::string& poi, const Eigen::Vector2d& normal,
                                      const Eigen::Vector2d& bias, double t,
                                      const UTConfig& cfg) {
  SmallVec<double> m;
  SmallMat<double> c;
  detail::to_small(marginal_moments(p, t), m, c);
  const int link = chain ? chain->poi_link(poi) : 0;
  return hyperplane_satisfaction_core(m, c, chain, link, normal, bias, cfg.alpha_ut);
}

inline double corner_satisfaction(const ProMP& p, const KinematicChain* chain,
                                  const std::string& poi, const Eigen::Vector2d& n1,
                                  const Eigen::Vector2d& b1, const Eigen::Vector2d& n2,
                                  const Eigen::Vector2d& b2, double t, const UTConfig& cfg) {
  SmallVec<double> m;
  SmallMat<double> c;
  detail::to_small(marginal_moments(p, t), m, c);
  const int link = chain ? chain->poi_link(poi) : 0;
  return corner_satisfaction_core(m, c, chain, link, n1, b1, n2, b2, cfg.alpha_ut);
}

inline double mutual_satisfaction(const ProMP& p_joint, int d1, const KinematicChain* chain1,
                                  const std::string& poi1, const KinematicChain* chain2,
                                  const std::string& poi2, double dist, double t,
                                  const UTConfig& cfg) {
  if (d1 <= 0 || d1 >= p_joint.D)
    throw std::invalid_argument("mutual_satisfaction: bad block split");
  SmallVec<double> m;
  SmallMat<double> c;
  detail::to_small(marginal_moments(p_joint, t), m, c);
  const int l1 = chain1 ? chain1->poi_link(poi1) : 0;
  const int l2 = chain2 ? chain2->poi_link(poi2) : 0;
  return mutual_satisfaction_core(m, c, d1, chain1, l1, chain2, l2, dist, cfg.alpha_ut);
}

struct UnboundWaypointResult {
  double probability = 0.0;
  double t_max = 0.0;
  int support_index = 0;
};

// max over the support grid of the waypoint probability; lower index wins ties.
inline UnboundWaypointResult unbound_waypoint_satisfaction(
    const ProMP& p, const KinematicChain* chain, const std::string& poi,
    const Eigen::Vector2d& center, double radius, const std::vector<double>& support_times,
    const UTConfig& cfg) {
  if (support_times.empty())
    throw std::invalid_argument("unbound_waypoint_satisfaction: empty support");
  UnboundWaypointResult best;
  best.probability = -1.0;
  for (size_t i = 0; i < support_times.size(); ++i) {
    const double prob =
        ball_satisfaction(p, chain, poi, center, radius, /*repel=*/false, support_times[i], cfg);
    if (prob > best.probability) {
      best.probability = prob;
      best.t_max = support_times[i];
      best.support_index = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace cpmp
