// Gaussian radial basis features over a linear phase map.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace cpmp {

struct BasisConfig {
  int M = 15;
  Eigen::VectorXd centers;  // phase values, strictly increasing in [-0.2, 1.2]
  double h = 0.0;           // shared bandwidth
  double T = 1.0;           // duration in seconds

  void validate() const {
    if (M < 2) throw std::invalid_argument("BasisConfig: M must be >= 2");
    if (centers.size() != M) throw std::invalid_argument("BasisConfig: centers size mismatch");
    if (h <= 0.0) throw std::invalid_argument("BasisConfig: h must be positive");
    if (T <= 0.0) throw std::invalid_argument("BasisConfig: T must be positive");
    for (int i = 0; i < M; ++i) {
      if (centers[i] < -0.2 || centers[i] > 1.2)
        throw std::invalid_argument("BasisConfig: center outside [-0.2, 1.2]");
      if (i > 0 && centers[i] <= centers[i - 1])
        throw std::invalid_argument("BasisConfig: centers must be strictly increasing");
    }
  }

  double phase(double t) const { return t / T; }
};

// Equally spaced centers on [-0.1, 1.1]; bandwidth 2*(spacing)^2 so that
// adjacent bases overlap at about 0.6.
inline BasisConfig default_basis(int M = 15, double T = 1.0) {
  BasisConfig b;
  b.M = M;
  b.T = T;
  b.centers = Eigen::VectorXd::LinSpaced(M, -0.1, 1.1);
  const double dc = b.centers[1] - b.centers[0];
  b.h = 2.0 * dc * dc;
  return b;
}

struct BasisFeatures {
  Eigen::VectorXd phi;
  Eigen::VectorXd ddphi;  // second time derivative
};

inline BasisFeatures basis_features(const BasisConfig& basis, double t) {
  if (t < -1e-12 || t > basis.T + 1e-12)
    throw std::domain_error("basis_features: t outside [0, T]");
  const double tau = basis.phase(t);
  const double dtau = 1.0 / basis.T;  // linear phase map, d2tau/dt2 = 0
  BasisFeatures f;
  f.phi.resize(basis.M);
  f.ddphi.resize(basis.M);
  for (int i = 0; i < basis.M; ++i) {
    const double u = tau - basis.centers[i];
    const double p = std::exp(-u * u / (2.0 * basis.h));
    f.phi[i] = p;
    f.ddphi[i] = p * dtau * dtau * (u * u / (basis.h * basis.h) - 1.0 / basis.h);
  }
  return f;
}

inline Eigen::VectorXd basis_phi(const BasisConfig& basis, double t) {
  return basis_features(basis, t).phi;
}

}  // namespace cpmp
