// Unscented-transform propagation of Gaussian moments, templated over the
// scalar type so gradients flow through sigma points.
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "cpmp/chain.hpp"
#include "cpmp/gaussian.hpp"
#include "cpmp/promp.hpp"

namespace cpmp {

struct UTConfig {
  double alpha_ut = 1.0;  // spread; 1.0 gives the cubature rule (center weight 0)

  void validate() const {
    if (alpha_ut <= 0.0) throw std::invalid_argument("UTConfig: alpha_ut must be positive");
  }
};

template <class T>
using SmallVec = std::vector<T>;
template <class T>
using SmallMat = std::vector<std::vector<T>>;

// Dense Cholesky on a small matrix of generic scalars; 1e-12 diagonal jitter
// on failure.
template <class T>
SmallMat<T> small_cholesky(SmallMat<T> a) {
  const int n = static_cast<int>(a.size());
  double jitter = 0.0;
  for (int attempt = 0; attempt < 10; ++attempt) {
    SmallMat<T> L(n, SmallVec<T>(n, T(0.0)));
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      for (int j = 0; j <= i; ++j) {
        T s = a[i][j];
        if (i == j && jitter > 0.0) s += jitter;
        for (int k = 0; k < j; ++k) s -= L[i][k] * L[j][k];
        if (i == j) {
          if (value_of(s) <= 0.0) {
            ok = false;
            break;
          }
          L[i][j] = sqrt(s);
        } else {
          L[i][j] = s / L[j][j];
        }
      }
    }
    if (ok) return L;
    jitter = jitter == 0.0 ? 1e-12 : jitter * 100.0;
  }
  throw std::runtime_error("small_cholesky: matrix square root failed");
}

// 2n+1 sigma points: center at the mean with weight 1 - 1/alpha^2, plus the
// +- scaled factor columns with weights 1/(2 alpha^2 n) each.
template <class T, class G>
void ut_core(const SmallVec<T>& mean, const SmallMat<T>& cov, double alpha, G&& g,
             SmallVec<T>& out_mean, SmallMat<T>& out_cov) {
  const int n = static_cast<int>(mean.size());
  const SmallMat<T> L = small_cholesky(cov);
  const double w0 = 1.0 - 1.0 / (alpha * alpha);
  const double wi = 1.0 / (2.0 * alpha * alpha * n);
  const double scale = alpha * std::sqrt(static_cast<double>(n));

  std::vector<SmallVec<T>> points;
  std::vector<double> weights;
  points.reserve(2 * n + 1);
  points.push_back(mean);
  weights.push_back(w0);
  for (int c = 0; c < n; ++c) {
    SmallVec<T> plus = mean, minus = mean;
    for (int r = 0; r < n; ++r) {
      plus[r] += scale * L[r][c];
      minus[r] -= scale * L[r][c];
    }
    points.push_back(std::move(plus));
    weights.push_back(wi);
    points.push_back(std::move(minus));
    weights.push_back(wi);
  }

  std::vector<SmallVec<T>> images;
  images.reserve(points.size());
  for (const auto& p : points) images.push_back(g(p));
  const int m = static_cast<int>(images[0].size());

  out_mean.assign(m, T(0.0));
  for (size_t s = 0; s < images.size(); ++s)
    for (int i = 0; i < m; ++i) out_mean[i] += weights[s] * images[s][i];

  out_cov.assign(m, SmallVec<T>(m, T(0.0)));
  for (size_t s = 0; s < images.size(); ++s) {
    SmallVec<T> d(m);
    for (int i = 0; i < m; ++i) d[i] = images[s][i] - out_mean[i];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j <= i; ++j) out_cov[i][j] += weights[s] * d[i] * d[j];
  }
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) out_cov[i][j] = out_cov[j][i];
}

inline GaussianMoments ut_propagate(const GaussianMoments& in,
                                    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& g,
                                    const UTConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(in.mean.size());
  SmallVec<double> mean(n);
  SmallMat<double> cov(n, SmallVec<double>(n));
  for (int i = 0; i < n; ++i) {
    mean[i] = in.mean[i];
    for (int j = 0; j < n; ++j) cov[i][j] = in.cov(i, j);
  }
  SmallVec<double> om;
  SmallMat<double> oc;
  ut_core(mean, cov, cfg.alpha_ut,
          [&](const SmallVec<double>& z) {
            Eigen::VectorXd zz = Eigen::Map<const Eigen::VectorXd>(z.data(), n);
            Eigen::VectorXd y = g(zz);
            return SmallVec<double>(y.data(), y.data() + y.size());
          },
          om, oc);
  GaussianMoments out;
  const int m = static_cast<int>(om.size());
  out.mean = Eigen::Map<const Eigen::VectorXd>(om.data(), m);
  out.cov.resize(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) out.cov(i, j) = oc[i][j];
  return out;
}

// Gaussian approximation of the task-space point of interest x_t(w). The
// identity chain (Cartesian primitive) bypasses the UT entirely.
inline GaussianMoments task_moments(const ProMP& p, double t, const KinematicChain* chain,
                                    const std::string& poi, const UTConfig& cfg) {
  const GaussianMoments joint = marginal_moments(p, t);
  if (chain == nullptr) return joint;
  if (chain->n_links() != p.D)
    throw std::invalid_argument("task_moments: chain dimension != ProMP dimension");
  const int upto = chain->poi_link(poi);
  return ut_propagate(
      joint,
      [&](const Eigen::VectorXd& q) {
        const auto x = forward_kinematics_t(*chain, q.data(), static_cast<int>(q.size()), upto);
        return Eigen::Vector2d(x[0], x[1]);
      },
      cfg);
}

}  // namespace cpmp
