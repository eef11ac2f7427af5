#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace cutcop {

double digamma(double x);  // special.cpp

// Forward-mode dual number carrying W partial derivatives alongside the value.
// Targets are written as templates over the scalar type; instantiating them
// with Dual<W> yields exact gradients of the composition.
template <int W>
struct Dual {
  double v{0.0};
  std::array<double, W> d{};

  Dual() = default;
  Dual(double value) : v(value) { d.fill(0.0); }  // NOLINT: implicit by design
  static Dual seed(double value, int slot) {
    Dual r(value);
    r.d[slot] = 1.0;
    return r;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < W; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < W; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (int i = 0; i < W; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
  Dual& operator+=(double c) {
    v += c;
    return *this;
  }
  Dual& operator-=(double c) {
    v -= c;
    return *this;
  }
  Dual& operator*=(double c) {
    v *= c;
    for (int i = 0; i < W; ++i) d[i] *= c;
    return *this;
  }
};

template <int W>
inline Dual<W> operator+(Dual<W> a, const Dual<W>& b) { return a += b; }
template <int W>
inline Dual<W> operator+(Dual<W> a, double b) { return a += b; }
template <int W>
inline Dual<W> operator+(double a, Dual<W> b) { return b += a; }

template <int W>
inline Dual<W> operator-(Dual<W> a, const Dual<W>& b) { return a -= b; }
template <int W>
inline Dual<W> operator-(Dual<W> a, double b) { return a -= b; }
template <int W>
inline Dual<W> operator-(double a, const Dual<W>& b) {
  Dual<W> r;
  r.v = a - b.v;
  for (int i = 0; i < W; ++i) r.d[i] = -b.d[i];
  return r;
}
template <int W>
inline Dual<W> operator-(const Dual<W>& a) {
  Dual<W> r;
  r.v = -a.v;
  for (int i = 0; i < W; ++i) r.d[i] = -a.d[i];
  return r;
}

template <int W>
inline Dual<W> operator*(Dual<W> a, const Dual<W>& b) { return a *= b; }
template <int W>
inline Dual<W> operator*(Dual<W> a, double b) { return a *= b; }
template <int W>
inline Dual<W> operator*(double a, Dual<W> b) { return b *= a; }

template <int W>
inline Dual<W> operator/(const Dual<W>& a, const Dual<W>& b) {
  Dual<W> r;
  const double inv = 1.0 / b.v;
  r.v = a.v * inv;
  for (int i = 0; i < W; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
  return r;
}
template <int W>
inline Dual<W> operator/(Dual<W> a, double b) { return a *= (1.0 / b); }
template <int W>
inline Dual<W> operator/(double a, const Dual<W>& b) {
  Dual<W> r;
  r.v = a / b.v;
  const double s = -r.v / b.v;
  for (int i = 0; i < W; ++i) r.d[i] = s * b.d[i];
  return r;
}

template <int W>
inline bool operator<(const Dual<W>& a, const Dual<W>& b) { return a.v < b.v; }
template <int W>
inline bool operator<(const Dual<W>& a, double b) { return a.v < b; }
template <int W>
inline bool operator<(double a, const Dual<W>& b) { return a < b.v; }
template <int W>
inline bool operator>(const Dual<W>& a, const Dual<W>& b) { return a.v > b.v; }
template <int W>
inline bool operator>(const Dual<W>& a, double b) { return a.v > b; }
template <int W>
inline bool operator>(double a, const Dual<W>& b) { return a > b.v; }
template <int W>
inline bool operator<=(const Dual<W>& a, double b) { return a.v <= b; }
template <int W>
inline bool operator>=(const Dual<W>& a, double b) { return a.v >= b; }

// chain-rule helper: g(value), g'(value) applied to x
template <int W>
inline Dual<W> chain(const Dual<W>& x, double gv, double gp) {
  Dual<W> r;
  r.v = gv;
  for (int i = 0; i < W; ++i) r.d[i] = gp * x.d[i];
  return r;
}

template <int W>
inline Dual<W> exp(const Dual<W>& x) {
  const double e = std::exp(x.v);
  return chain(x, e, e);
}
template <int W>
inline Dual<W> log(const Dual<W>& x) {
  return chain(x, std::log(x.v), 1.0 / x.v);
}
template <int W>
inline Dual<W> log1p(const Dual<W>& x) {
  return chain(x, std::log1p(x.v), 1.0 / (1.0 + x.v));
}
template <int W>
inline Dual<W> expm1(const Dual<W>& x) {
  return chain(x, std::expm1(x.v), std::exp(x.v));
}
template <int W>
inline Dual<W> sqrt(const Dual<W>& x) {
  const double s = std::sqrt(x.v);
  return chain(x, s, 0.5 / s);
}
template <int W>
inline Dual<W> fabs(const Dual<W>& x) {
  return x.v >= 0.0 ? x : -x;
}
template <int W>
inline Dual<W> sin(const Dual<W>& x) { return chain(x, std::sin(x.v), std::cos(x.v)); }
template <int W>
inline Dual<W> cos(const Dual<W>& x) { return chain(x, std::cos(x.v), -std::sin(x.v)); }
template <int W>
inline Dual<W> tan(const Dual<W>& x) {
  const double t = std::tan(x.v);
  return chain(x, t, 1.0 + t * t);
}
template <int W>
inline Dual<W> asin(const Dual<W>& x) {
  return chain(x, std::asin(x.v), 1.0 / std::sqrt(1.0 - x.v * x.v));
}
template <int W>
inline Dual<W> atan(const Dual<W>& x) {
  return chain(x, std::atan(x.v), 1.0 / (1.0 + x.v * x.v));
}
template <int W>
inline Dual<W> erf(const Dual<W>& x) {
  return chain(x, std::erf(x.v), 1.1283791670955126 * std::exp(-x.v * x.v));
}
template <int W>
inline Dual<W> erfc(const Dual<W>& x) {
  return chain(x, std::erfc(x.v), -1.1283791670955126 * std::exp(-x.v * x.v));
}
template <int W>
inline Dual<W> lgamma(const Dual<W>& x) {
  return chain(x, std::lgamma(x.v), digamma(x.v));
}
template <int W>
inline Dual<W> pow(const Dual<W>& x, double p) {
  const double xp = std::pow(x.v, p);
  return chain(x, xp, p * xp / x.v);
}
template <int W>
inline Dual<W> pow(const Dual<W>& x, const Dual<W>& p) {
  // x^p = exp(p log x); x > 0 assumed
  const double lx = std::log(x.v);
  const double xp = std::exp(p.v * lx);
  Dual<W> r;
  r.v = xp;
  const double cx = p.v * xp / x.v;
  const double cp = xp * lx;
  for (int i = 0; i < W; ++i) r.d[i] = cx * x.d[i] + cp * p.d[i];
  return r;
}

template <int W>
inline bool isfinite(const Dual<W>& x) { return std::isfinite(x.v); }

inline double value_of(double x) { return x; }
template <int W>
inline double value_of(const Dual<W>& x) { return x.v; }

namespace detail {

template <int W, typename F>
double grad_chunk(F&& f, std::span<const double> x, std::span<double> g) {
  const int n = static_cast<int>(x.size());
  std::vector<Dual<W>> xs(n);
  double val = 0.0;
  for (int base = 0; base < n; base += W) {
    const int k = std::min(W, n - base);
    for (int i = 0; i < n; ++i) xs[i] = Dual<W>(x[i]);
    for (int j = 0; j < k; ++j) xs[base + j] = Dual<W>::seed(x[base + j], j);
    const Dual<W> r = f(std::span<const Dual<W>>(xs));
    val = r.v;
    for (int j = 0; j < k; ++j) g[base + j] = r.d[j];
  }
  return val;
}

}  // namespace detail

// Evaluate f and its full gradient at x. f must be callable with
// std::span<const S> for S in {double, Dual<k>}.
template <typename F>
double gradient(F&& f, std::span<const double> x, std::span<double> g) {
  const int n = static_cast<int>(x.size());
  switch (n) {
    case 1: return detail::grad_chunk<1>(f, x, g);
    case 2: return detail::grad_chunk<2>(f, x, g);
    case 3: return detail::grad_chunk<3>(f, x, g);
    case 4: return detail::grad_chunk<4>(f, x, g);
    case 5: return detail::grad_chunk<5>(f, x, g);
    case 6: return detail::grad_chunk<6>(f, x, g);
    default: return detail::grad_chunk<8>(f, x, g);
  }
}

}  // namespace cutcop
