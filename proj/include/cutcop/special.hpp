#pragma once

#include <cmath>
#include <stdexcept>

#include "cutcop/dual.hpp"

namespace cutcop {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogTwoPi = 1.8378770664093454836;
inline constexpr double kSqrt2 = 1.4142135623730950488;

// ---- double-only kernels (special.cpp) ----
double norm_quantile(double p);                       // Phi^{-1}, |err| ~ 1e-15
double digamma(double x);
double binormal_cdf(double x, double y, double rho);  // standard bivariate normal
double bvt_cdf(double x, double y, double rho, double nu);  // bivariate Student t
double trinormal_cdf(double x1, double x2, double x3, double r12, double r13,
                     double r23);
double student_t_quantile(double p, double nu);
double gamma_quantile(double p, double shape, double rate);

template <typename S>
S norm_pdf(const S& x) {
  using std::exp;
  return exp(-0.5 * x * x - 0.5 * kLogTwoPi);
}

template <typename S>
S norm_log_pdf(const S& x) {
  return -0.5 * x * x - 0.5 * kLogTwoPi;
}

template <typename S>
S norm_cdf(const S& x) {
  using std::erfc;
  return 0.5 * erfc(-x * (1.0 / kSqrt2));
}

// Regularized lower incomplete gamma P(a,x): series for x < a+1,
// Lentz continued fraction otherwise. Relative accuracy ~1e-14.
template <typename S>
S gamma_p(const S& a, const S& x) {
  using std::exp;
  using std::lgamma;
  using std::log;
  if (value_of(x) <= 0.0) return S(0.0);
  const S lpre = a * log(x) - x - lgamma(a);
  if (value_of(x) < value_of(a) + 1.0) {
    S ap = a;
    S sum = 1.0 / a;
    S del = sum;
    for (int it = 0; it < 500; ++it) {
      ap += 1.0;
      del = del * (x / ap);
      sum += del;
      if (std::fabs(value_of(del)) < std::fabs(value_of(sum)) * 1e-16) break;
    }
    return sum * exp(lpre);
  }
  // Q(a,x) via continued fraction, P = 1 - Q
  const double tiny = 1e-300;
  S b = x + 1.0 - a;
  S c = 1.0 / tiny;
  S d = 1.0 / b;
  S h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an_i = static_cast<double>(i);
    const S an = -an_i * (an_i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(value_of(d)) < tiny) d = S(tiny);
    c = b + an / c;
    if (std::fabs(value_of(c)) < tiny) c = S(tiny);
    d = 1.0 / d;
    const S del = d * c;
    h = h * del;
    if (std::fabs(value_of(del) - 1.0) < 1e-16) break;
  }
  return 1.0 - exp(lpre) * h;
}

// Regularized incomplete beta I_x(a,b) by Lentz continued fraction.
template <typename S>
S beta_inc(double a, double b, const S& x) {
  using std::exp;
  using std::log;
  if (value_of(x) <= 0.0) return S(0.0);
  if (value_of(x) >= 1.0) return S(1.0);
  const double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  const S front = exp(a * log(x) + b * log(1.0 - x) - lbeta);
  const bool swap = value_of(x) > (a + 1.0) / (a + b + 2.0);
  const double aa = swap ? b : a;
  const double bb = swap ? a : b;
  const S xx = swap ? S(1.0 - x) : x;
  const double tiny = 1e-300;
  S c = 1.0;
  S d = 1.0 - (aa + bb) * xx / (aa + 1.0);
  if (std::fabs(value_of(d)) < tiny) d = S(tiny);
  d = 1.0 / d;
  S h = d;
  for (int m = 1; m <= 300; ++m) {
    const double md = static_cast<double>(m);
    S num = md * (bb - md) * xx / ((aa + 2.0 * md - 1.0) * (aa + 2.0 * md));
    d = 1.0 + num * d;
    if (std::fabs(value_of(d)) < tiny) d = S(tiny);
    c = 1.0 + num / c;
    if (std::fabs(value_of(c)) < tiny) c = S(tiny);
    d = 1.0 / d;
    h = h * d * c;
    num = -(aa + md) * (aa + bb + md) * xx / ((aa + 2.0 * md) * (aa + 2.0 * md + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(value_of(d)) < tiny) d = S(tiny);
    c = 1.0 + num / c;
    if (std::fabs(value_of(c)) < tiny) c = S(tiny);
    d = 1.0 / d;
    const S del = d * c;
    h = h * del;
    if (std::fabs(value_of(del) - 1.0) < 1e-15) break;
  }
  const S r = front * h / aa;
  return swap ? S(1.0 - r) : r;
}

template <typename S>
S student_t_log_pdf(const S& x, double nu) {
  using std::log;
  const double lc = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                    0.5 * std::log(nu * kPi);
  return lc - 0.5 * (nu + 1.0) * log(1.0 + x * x / nu);
}

template <typename S>
S student_t_cdf(const S& x, double nu) {
  const S z = nu / (nu + x * x);
  const S tail = 0.5 * beta_inc(0.5 * nu, 0.5, z);
  return value_of(x) >= 0.0 ? S(1.0 - tail) : tail;
}

// ---- custom dual rules where generic propagation is wrong or wasteful ----

template <int W>
inline Dual<W> norm_quantile(const Dual<W>& p) {
  const double q = norm_quantile(p.v);
  return chain(p, q, 1.0 / value_of(norm_pdf(q)));
}

template <int W>
inline Dual<W> student_t_quantile(const Dual<W>& p, double nu) {
  const double q = student_t_quantile(p.v, nu);
  using std::exp;
  return chain(p, q, 1.0 / std::exp(value_of(student_t_log_pdf(q, nu))));
}

// Plackett: dPhi2/drho is the bivariate normal density.
template <int W>
inline Dual<W> binormal_cdf(const Dual<W>& x, const Dual<W>& y, const Dual<W>& rho) {
  const double r = rho.v;
  const double s = std::sqrt(1.0 - r * r);
  const double v = binormal_cdf(x.v, y.v, r);
  const double dx = value_of(norm_pdf(x.v)) * value_of(norm_cdf((y.v - r * x.v) / s));
  const double dy = value_of(norm_pdf(y.v)) * value_of(norm_cdf((x.v - r * y.v) / s));
  const double dr = std::exp(-0.5 * (x.v * x.v - 2.0 * r * x.v * y.v + y.v * y.v) / (s * s)) /
                    (2.0 * kPi * s);
  Dual<W> out;
  out.v = v;
  for (int i = 0; i < W; ++i)
    out.d[i] = dx * x.d[i] + dy * y.d[i] + dr * rho.d[i];
  return out;
}

// Bivariate t cdf: exact partials in x,y via the conditional-t identity;
// the rho partial falls back to a central difference (only exercised when
// differentiating a t-copula cdf in the dependence parameter).
template <int W>
inline Dual<W> bvt_cdf(const Dual<W>& x, const Dual<W>& y, const Dual<W>& rho, double nu) {
  const double r = rho.v;
  const double s2 = 1.0 - r * r;
  const double v = bvt_cdf(x.v, y.v, r, nu);
  const auto cond = [&](double a, double b) {
    const double scale = std::sqrt((nu + 1.0) / ((nu + a * a) * s2));
    return std::exp(value_of(student_t_log_pdf(a, nu))) *
           value_of(student_t_cdf((b - r * a) * scale, nu + 1.0));
  };
  const double dx = cond(x.v, y.v);
  const double dy = cond(y.v, x.v);
  double dr = 0.0;
  bool need_dr = false;
  for (int i = 0; i < W; ++i) need_dr = need_dr || rho.d[i] != 0.0;
  if (need_dr) {
    const double h = 1e-6 * (1.0 - std::fabs(r)) + 1e-9;
    dr = (bvt_cdf(x.v, y.v, r + h, nu) - bvt_cdf(x.v, y.v, r - h, nu)) / (2.0 * h);
  }
  Dual<W> out;
  out.v = v;
  for (int i = 0; i < W; ++i)
    out.d[i] = dx * x.d[i] + dy * y.d[i] + dr * rho.d[i];
  return out;
}

}  // namespace cutcop
