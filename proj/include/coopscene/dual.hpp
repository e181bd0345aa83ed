#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <type_traits>

namespace coopscene {

// Forward-mode dual number carrying a fixed-size tangent. A loss pipeline
// templated on its scalar type evaluates to values when instantiated with
// double and to values plus exact partials when instantiated with Dual<N>.
template <std::size_t N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  constexpr Dual() = default;
  constexpr Dual(double value) : v(value) {}  // NOLINT: implicit lift of constants

  static constexpr Dual variable(double value, std::size_t slot) {
    Dual x(value);
    x.d[slot] = 1.0;
    return x;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (std::size_t i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (std::size_t i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (std::size_t i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double q = v / o.v;
    for (std::size_t i = 0; i < N; ++i) d[i] = (d[i] - q * o.d[i]) / o.v;
    v = q;
    return *this;
  }
  Dual& operator*=(double s) {
    v *= s;
    for (auto& di : d) di *= s;
    return *this;
  }
  Dual& operator/=(double s) {
    v /= s;
    for (auto& di : d) di /= s;
    return *this;
  }

  Dual operator-() const {
    Dual r;
    r.v = -v;
    for (std::size_t i = 0; i < N; ++i) r.d[i] = -d[i];
    return r;
  }
};

// Value with partials slope * dx.
template <std::size_t N>
Dual<N> chain(const Dual<N>& x, double value, double slope) {
  Dual<N> r;
  r.v = value;
  for (std::size_t i = 0; i < N; ++i) r.d[i] = slope * x.d[i];
  return r;
}

template <std::size_t N> Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <std::size_t N> Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <std::size_t N> Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <std::size_t N> Dual<N> operator/(Dual<N> a, const Dual<N>& b) { return a /= b; }

template <std::size_t N> Dual<N> operator+(Dual<N> a, double b) { a.v += b; return a; }
template <std::size_t N> Dual<N> operator+(double a, Dual<N> b) { b.v += a; return b; }
template <std::size_t N> Dual<N> operator-(Dual<N> a, double b) { a.v -= b; return a; }
template <std::size_t N> Dual<N> operator-(double a, const Dual<N>& b) { Dual<N> r = -b; r.v += a; return r; }
template <std::size_t N> Dual<N> operator*(Dual<N> a, double b) { return a *= b; }
template <std::size_t N> Dual<N> operator*(double a, Dual<N> b) { return b *= a; }
template <std::size_t N> Dual<N> operator/(Dual<N> a, double b) { return a /= b; }
template <std::size_t N> Dual<N> operator/(double a, const Dual<N>& b) {
  const double q = a / b.v;
  return chain(b, q, -q / b.v);
}

// Comparisons look at the primal value only.
template <std::size_t N> bool operator<(const Dual<N>& a, const Dual<N>& b) { return a.v < b.v; }
template <std::size_t N> bool operator>(const Dual<N>& a, const Dual<N>& b) { return a.v > b.v; }
template <std::size_t N> bool operator<=(const Dual<N>& a, const Dual<N>& b) { return a.v <= b.v; }
template <std::size_t N> bool operator>=(const Dual<N>& a, const Dual<N>& b) { return a.v >= b.v; }
template <std::size_t N> bool operator<(const Dual<N>& a, double b) { return a.v < b; }
template <std::size_t N> bool operator>(const Dual<N>& a, double b) { return a.v > b; }
template <std::size_t N> bool operator<=(const Dual<N>& a, double b) { return a.v <= b; }
template <std::size_t N> bool operator>=(const Dual<N>& a, double b) { return a.v >= b; }

template <std::size_t N> Dual<N> sqrt(const Dual<N>& x) {
  const double s = std::sqrt(x.v);
  return chain(x, s, 0.5 / s);
}
template <std::size_t N> Dual<N> sin(const Dual<N>& x) { return chain(x, std::sin(x.v), std::cos(x.v)); }
template <std::size_t N> Dual<N> cos(const Dual<N>& x) { return chain(x, std::cos(x.v), -std::sin(x.v)); }
template <std::size_t N> Dual<N> exp(const Dual<N>& x) {
  const double e = std::exp(x.v);
  return chain(x, e, e);
}
template <std::size_t N> Dual<N> log(const Dual<N>& x) { return chain(x, std::log(x.v), 1.0 / x.v); }
// Subgradient 0 at the origin.
template <std::size_t N> Dual<N> abs(const Dual<N>& x) {
  return chain(x, std::abs(x.v), x.v > 0.0 ? 1.0 : (x.v < 0.0 ? -1.0 : 0.0));
}

inline double value_of(double x) { return x; }
template <std::size_t N> double value_of(const Dual<N>& x) { return x.v; }

template <class S> struct is_dual : std::false_type {};
template <std::size_t N> struct is_dual<Dual<N>> : std::true_type {};

}  // namespace coopscene
