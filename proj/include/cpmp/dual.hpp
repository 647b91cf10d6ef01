// Forward-mode scalar with a fixed-capacity tangent vector. Used to push
// derivatives through the per-time constraint evaluation chains (forward
// kinematics, unscented transform, CDFs). Tangent dimension is the small
// moment-space dimension, never the full parameter count.
#pragma once

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace cpmp {

class Dual {
 public:
  static constexpr int kMaxTangent = 48;

  Dual() : v_(0.0), n_(0) {}
  Dual(double v) : v_(v), n_(0) {}  // NOLINT(google-explicit-constructor)

  static Dual seeded(double v, int n, int index) {
    if (n > kMaxTangent) throw std::length_error("Dual tangent capacity exceeded");
    Dual d(v);
    d.n_ = n;
    for (int i = 0; i < n; ++i) d.g_[i] = 0.0;
    d.g_[index] = 1.0;
    return d;
  }

  double value() const { return v_; }
  int tangent_size() const { return n_; }
  double deriv(int i) const { return i < n_ ? g_[i] : 0.0; }

  Dual operator-() const {
    Dual r(*this);
    r.v_ = -r.v_;
    for (int i = 0; i < r.n_; ++i) r.g_[i] = -r.g_[i];
    return r;
  }

  Dual& operator+=(const Dual& o) {
    grow(o.n_);
    v_ += o.v_;
    for (int i = 0; i < o.n_; ++i) g_[i] += o.g_[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    grow(o.n_);
    v_ -= o.v_;
    for (int i = 0; i < o.n_; ++i) g_[i] -= o.g_[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    grow(o.n_);
    for (int i = 0; i < n_; ++i) g_[i] = g_[i] * o.v_ + v_ * (i < o.n_ ? o.g_[i] : 0.0);
    v_ *= o.v_;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    grow(o.n_);
    const double inv = 1.0 / o.v_;
    for (int i = 0; i < n_; ++i)
      g_[i] = (g_[i] - v_ * inv * (i < o.n_ ? o.g_[i] : 0.0)) * inv;
    v_ *= inv;
    return *this;
  }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
  friend Dual operator/(Dual a, const Dual& b) { return a /= b; }

  friend bool operator<(const Dual& a, const Dual& b) { return a.v_ < b.v_; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v_ > b.v_; }
  friend bool operator<=(const Dual& a, const Dual& b) { return a.v_ <= b.v_; }
  friend bool operator>=(const Dual& a, const Dual& b) { return a.v_ >= b.v_; }
  friend bool operator==(const Dual& a, const Dual& b) { return a.v_ == b.v_; }

  // y = f(v), dy = df * dv
  Dual chain(double f, double df) const {
    Dual r(*this);
    r.v_ = f;
    for (int i = 0; i < r.n_; ++i) r.g_[i] *= df;
    return r;
  }

 private:
  void grow(int n) {
    if (n > n_) {
      if (n > kMaxTangent) throw std::length_error("Dual tangent capacity exceeded");
      for (int i = n_; i < n; ++i) g_[i] = 0.0;
      n_ = n;
    }
  }

  double v_;
  int n_;
  double g_[kMaxTangent];
};

inline Dual exp(const Dual& x) {
  const double e = std::exp(x.value());
  return x.chain(e, e);
}
inline Dual log(const Dual& x) { return x.chain(std::log(x.value()), 1.0 / x.value()); }
inline Dual sqrt(const Dual& x) {
  const double s = std::sqrt(x.value());
  return x.chain(s, 0.5 / s);
}
inline Dual sin(const Dual& x) { return x.chain(std::sin(x.value()), std::cos(x.value())); }
inline Dual cos(const Dual& x) { return x.chain(std::cos(x.value()), -std::sin(x.value())); }
inline Dual abs(const Dual& x) {
  return x.value() < 0.0 ? -x : x;
}

// Make the double overloads visible next to the Dual ones so unqualified
// calls in templated code resolve correctly for both scalar types.
using std::abs;
using std::cos;
using std::exp;
using std::log;
using std::sin;
using std::sqrt;

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.value(); }

}  // namespace cpmp
