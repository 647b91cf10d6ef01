// Limited-memory BFGS with a strong-Wolfe line search.
#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <stdexcept>

namespace cpmp {

struct LbfgsOptions {
  int memory = 10;
  int max_iters = 100;
  double grad_tol = 1e-6;
  double c1 = 1e-4;  // sufficient decrease
  double c2 = 0.9;   // curvature
  int max_line_evals = 40;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
  bool converged = false;           // gradient norm below tolerance
  bool line_search_failed = false;  // stopped at the best iterate found so far
  bool stopped_by_predicate = false;
};

// fn(x, grad) fills grad and returns f.  The optional stop predicate is
// checked once per accepted iterate; returning true ends the run early.
using LbfgsObjective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;
using LbfgsStop = std::function<bool(const Eigen::VectorXd&, double)>;

inline LbfgsResult lbfgs_minimize(const LbfgsObjective& fn, const Eigen::VectorXd& x0,
                                  const LbfgsOptions& opt, const LbfgsStop& stop = nullptr) {
  const int n = static_cast<int>(x0.size());
  if (n == 0) throw std::invalid_argument("lbfgs_minimize: empty parameter vector");

  Eigen::VectorXd x = x0, g(n);
  double f = fn(x, g);
  if (!std::isfinite(f)) throw std::runtime_error("lbfgs_minimize: non-finite start value");

  LbfgsResult best;
  best.x = x;
  best.f = f;
  best.grad = g;

  std::deque<Eigen::VectorXd> S, Y;
  std::deque<double> rho;

  Eigen::VectorXd gt(n);  // trial gradient buffer

  for (int iter = 0; iter < opt.max_iters; ++iter) {
    best.iterations = iter;
    if (g.norm() <= opt.grad_tol) {
      best.converged = true;
      break;
    }
    if (stop && stop(x, f)) {
      best.stopped_by_predicate = true;
      break;
    }

    // two-loop recursion
    Eigen::VectorXd d = -g;
    const int m = static_cast<int>(S.size());
    Eigen::VectorXd alpha(m);
    for (int i = m - 1; i >= 0; --i) {
      alpha[i] = rho[i] * S[i].dot(d);
      d -= alpha[i] * Y[i];
    }
    if (m > 0) d *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    for (int i = 0; i < m; ++i) {
      const double beta = rho[i] * Y[i].dot(d);
      d += (alpha[i] - beta) * S[i];
    }

    double dg0 = d.dot(g);
    if (!(dg0 < 0.0)) {  // not a descent direction; reset to steepest descent
      d = -g;
      dg0 = -g.squaredNorm();
      S.clear();
      Y.clear();
      rho.clear();
    }

    // strong-Wolfe line search (bracket + zoom with bisection)
    const double f0 = f;
    double a_prev = 0.0, f_prev = f0;
    double a = 1.0;
    double lo = -1.0, hi = -1.0, f_lo = 0.0;
    bool accepted = false, zooming = false;
    double fa = 0.0, dga = 0.0;
    int evals = 0;
    while (evals < opt.max_line_evals) {
      fa = fn(x + a * d, gt);
      ++evals;
      dga = gt.dot(d);
      if (std::isfinite(fa) && fa < best.f) {
        best.x = x + a * d;
        best.f = fa;
        best.grad = gt;
      }
      if (!zooming) {
        if (!std::isfinite(fa) || fa > f0 + opt.c1 * a * dg0 || (a_prev > 0.0 && fa >= f_prev)) {
          zooming = true;
          lo = a_prev;
          f_lo = f_prev;
          hi = a;
        } else if (std::abs(dga) <= -opt.c2 * dg0) {
          accepted = true;
          break;
        } else if (dga >= 0.0) {
          zooming = true;
          lo = a;
          f_lo = fa;
          hi = a_prev;
        } else {
          a_prev = a;
          f_prev = fa;
          a *= 2.0;
          continue;
        }
        a = 0.5 * (lo + hi);
        continue;
      }
      // zoom phase
      if (!std::isfinite(fa) || fa > f0 + opt.c1 * a * dg0 || fa >= f_lo) {
        hi = a;
      } else {
        if (std::abs(dga) <= -opt.c2 * dg0) {
          accepted = true;
          break;
        }
        if (dga * (hi - lo) >= 0.0) hi = lo;
        lo = a;
        f_lo = fa;
      }
      if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
      a = 0.5 * (lo + hi);
    }

    if (!accepted) {
      best.line_search_failed = true;
      break;
    }

    const Eigen::VectorXd s = a * d;
    const Eigen::VectorXd y = gt - g;
    x += s;
    f = fa;
    g = gt;
    if (std::isfinite(f) && f <= best.f) {
      best.x = x;
      best.f = f;
      best.grad = g;
    }

    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      S.push_back(s);
      Y.push_back(y);
      rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > opt.memory) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }
    best.iterations = iter + 1;
  }

  return best;
}

}  // namespace cpmp
