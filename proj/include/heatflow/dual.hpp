#pragma once

#include <Eigen/Core>
#include <cmath>

namespace heatflow {

/// Forward-mode dual scalar: a value plus one directional derivative.
///
/// Nesting (Dual<Dual<double>>) yields exact second directional derivatives:
/// seed the inner slot with direction u and the outer slot with direction w,
/// then .dot.dot is u^T Hess w. All derivatives are exact to machine
/// precision -- this is operator-overloading AD, not finite differencing.
template <typename T>
struct Dual {
  T val{};
  T dot{};

  Dual() : val(0.0), dot(0.0) {}
  Dual(double v) : val(v), dot(0.0) {}  // NOLINT(google-explicit-constructor)
  Dual(const T& v, const T& d) : val(v), dot(d) {}

  Dual operator-() const { return {-val, -dot}; }

  Dual& operator+=(const Dual& o) {
    val += o.val;
    dot += o.dot;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    val -= o.val;
    dot -= o.dot;
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    dot = dot * o.val + val * o.dot;
    val = val * o.val;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    val = val / o.val;
    dot = (dot - val * o.dot) / o.val;
    return *this;
  }

  friend Dual operator+(const Dual& a, const Dual& b) { return {a.val + b.val, a.dot + b.dot}; }
  friend Dual operator-(const Dual& a, const Dual& b) { return {a.val - b.val, a.dot - b.dot}; }
  friend Dual operator*(const Dual& a, const Dual& b) {
    return {a.val * b.val, a.dot * b.val + a.val * b.dot};
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    T q = a.val / b.val;
    return {q, (a.dot - q * b.dot) / b.val};
  }

  friend bool operator<(const Dual& a, const Dual& b) { return a.val < b.val; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.val > b.val; }
  friend bool operator<=(const Dual& a, const Dual& b) { return a.val <= b.val; }
  friend bool operator>=(const Dual& a, const Dual& b) { return a.val >= b.val; }
  friend bool operator==(const Dual& a, const Dual& b) { return a.val == b.val; }
  friend bool operator!=(const Dual& a, const Dual& b) { return a.val != b.val; }

  friend Dual sin(const Dual& x) {
    using std::cos;
    using std::sin;
    return {sin(x.val), cos(x.val) * x.dot};
  }
  friend Dual cos(const Dual& x) {
    using std::cos;
    using std::sin;
    return {cos(x.val), -sin(x.val) * x.dot};
  }
  friend Dual sqrt(const Dual& x) {
    using std::sqrt;
    T s = sqrt(x.val);
    return {s, x.dot / (s + s)};
  }
  friend Dual abs(const Dual& x) { return x.val < T(0.0) ? -x : x; }
};

using Dual1 = Dual<double>;
using Dual2 = Dual<Dual1>;

inline double value_of(double x) { return x; }
template <typename T>
double value_of(const Dual<T>& x) {
  return value_of(x.val);
}

/// x + eps * d  (first-order seed along one input direction).
inline Dual1 seed1(double x, double d) { return {x, d}; }

/// Second-order seed: inner direction u-component, outer direction w-component.
/// After evaluation: .val.val = f, .val.dot = grad.u, .dot.val = grad.w,
/// .dot.dot = u^T Hess w.
inline Dual2 seed2(double x, double du, double dw) {
  return {Dual1(x, du), Dual1(dw, 0.0)};
}

}  // namespace heatflow

namespace Eigen {

template <typename T>
struct NumTraits<heatflow::Dual<T>> : GenericNumTraits<heatflow::Dual<T>> {
  typedef heatflow::Dual<T> Real;
  typedef heatflow::Dual<T> NonInteger;
  typedef heatflow::Dual<T> Literal;
  typedef heatflow::Dual<T> Nested;

  static inline Real epsilon() { return Real(NumTraits<double>::epsilon()); }
  static inline Real dummy_precision() { return Real(NumTraits<double>::dummy_precision()); }
  static inline Real highest() { return Real(NumTraits<double>::highest()); }
  static inline Real lowest() { return Real(NumTraits<double>::lowest()); }
  static inline int digits10() { return NumTraits<double>::digits10(); }

  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 2,
    AddCost = 2,
    MulCost = 4
  };
};

}  // namespace Eigen
