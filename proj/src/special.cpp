#include "cutcop/special.hpp"

#include <cmath>
#include <stdexcept>

#include "cutcop/quadrature.hpp"

namespace cutcop {

double digamma(double x) {
  if (x <= 0.0 && x == std::floor(x))
    throw std::domain_error("digamma: nonpositive integer argument");
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // asymptotic series with Bernoulli coefficients
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 -
                    inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
  return result;
}

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("norm_quantile: p outside (0,1)");
  const double pl = p < 0.5 ? p : 1.0 - p;
  // Abramowitz-Stegun 26.2.23 initial guess, then Newton polish on erfc.
  const double t = std::sqrt(-2.0 * std::log(pl));
  double x = t - (2.30753 + 0.27061 * t) / (1.0 + t * (0.99229 + 0.04481 * t));
  x = -x;  // left-tail quantile
  for (int it = 0; it < 4; ++it) {
    const double err = value_of(norm_cdf(x)) - pl;
    const double step = err / value_of(norm_pdf(x));
    x -= step;
    if (std::fabs(step) < 1e-14 * (1.0 + std::fabs(x))) break;
  }
  return p < 0.5 ? x : -x;
}

double binormal_cdf(double x, double y, double rho) {
  if (rho < -1.0 || rho > 1.0)
    throw std::domain_error("binormal_cdf: |rho| > 1");
  if (std::isinf(x) || std::isinf(y)) {
    if (x < 0.0 || y < 0.0) return 0.0;
    if (std::isinf(x) && std::isinf(y)) return 1.0;
    return std::isinf(x) ? value_of(norm_cdf(y)) : value_of(norm_cdf(x));
  }
  if (rho == 0.0) return value_of(norm_cdf(x)) * value_of(norm_cdf(y));
  if (rho >= 1.0) return value_of(norm_cdf(std::min(x, y)));
  if (rho <= -1.0) {
    const double s = value_of(norm_cdf(x)) + value_of(norm_cdf(y)) - 1.0;
    return s > 0.0 ? s : 0.0;
  }
  if (std::fabs(rho) <= 0.925) {
    // Plackett's angular form, Gauss-Legendre on [0, asin(rho)].
    const double asr = std::asin(rho);
    const int npt = std::fabs(rho) <= 0.8 ? 24 : 48;
    const auto& gl = gauss_legendre(npt);
    const double hs = 0.5 * (x * x + y * y);
    const double hk = x * y;
    double sum = 0.0;
    for (int i = 0; i < npt; ++i) {
      const double theta = 0.5 * asr * (gl.nodes[i] + 1.0);
      const double sn = std::sin(theta);
      sum += gl.weights[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return value_of(norm_cdf(x)) * value_of(norm_cdf(y)) +
           sum * 0.5 * asr / (2.0 * kPi);
  }
  // high |rho|: condition on the smaller coordinate and integrate in
  // probability scale, where the integrand is bounded.
  const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
  const double px = value_of(norm_cdf(x));
  if (px <= 0.0) return 0.0;
  const auto f = [&](double t) {
    const double z = norm_quantile(t);
    return value_of(norm_cdf((y - rho * z) / s));
  };
  return integrate_adaptive(f, 1e-300, px, 1e-12, 60);
}

double bvt_cdf(double x, double y, double rho, double nu) {
  if (nu <= 0.0) throw std::domain_error("bvt_cdf: nu <= 0");
  if (rho <= -1.0 || rho >= 1.0) throw std::domain_error("bvt_cdf: |rho| >= 1");
  const double px = value_of(student_t_cdf(x, nu));
  if (px <= 0.0) return 0.0;
  const double s2 = (1.0 - rho) * (1.0 + rho);
  const auto f = [&](double t) {
    const double z = student_t_quantile(t, nu);
    const double scale = std::sqrt((nu + 1.0) / ((nu + z * z) * s2));
    return value_of(student_t_cdf((y - rho * z) * scale, nu + 1.0));
  };
  return integrate_adaptive(f, 1e-300, px, 1e-11, 60);
}

double trinormal_cdf(double x1, double x2, double x3, double r12, double r13,
                     double r23) {
  // condition on the third coordinate, integrate in probability scale
  const double p3 = value_of(norm_cdf(x3));
  if (p3 <= 0.0) return 0.0;
  const double s13 = std::sqrt(1.0 - r13 * r13);
  const double s23 = std::sqrt(1.0 - r23 * r23);
  const double pr = (r12 - r13 * r23) / (s13 * s23);
  if (!(pr > -1.0 && pr < 1.0))
    throw std::domain_error("trinormal_cdf: invalid partial correlation");
  const auto f = [&](double t) {
    const double z = norm_quantile(t);
    return binormal_cdf((x1 - r13 * z) / s13, (x2 - r23 * z) / s23, pr);
  };
  return integrate_adaptive(f, 1e-300, p3, 1e-11, 60);
}

double student_t_quantile(double p, double nu) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("student_t_quantile: p outside (0,1)");
  if (nu == 1.0) return std::tan(kPi * (p - 0.5));
  if (nu == 2.0) {
    const double s = 2.0 * p - 1.0;
    return s * std::sqrt(2.0 / ((1.0 - s) * (1.0 + s)));
  }
  // normal start, safeguarded Newton
  const double inf = std::numeric_limits<double>::infinity();
  double x = norm_quantile(p);
  if (nu < 4.0) x *= 1.0 + (x * x + 1.0) / (2.0 * nu);  // crude tail widening
  double lo = -inf, hi = inf;
  for (int it = 0; it < 100; ++it) {
    const double f = value_of(student_t_cdf(x, nu)) - p;
    if (f == 0.0) break;
    if (f > 0.0) hi = std::min(hi, x); else lo = std::max(lo, x);
    const double pdf = std::exp(value_of(student_t_log_pdf(x, nu)));
    double xn = x - f / pdf;
    if (!(xn >= lo && xn <= hi)) {
      if (std::isfinite(lo) && std::isfinite(hi)) xn = 0.5 * (lo + hi);
      else xn = f > 0.0 ? x - 2.0 * (1.0 + std::fabs(x))
                        : x + 2.0 * (1.0 + std::fabs(x));
    }
    if (std::fabs(xn - x) < 1e-13 * (1.0 + std::fabs(xn))) { x = xn; break; }
    x = xn;
  }
  return x;
}

double gamma_quantile(double p, double shape, double rate) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("gamma_quantile: p outside (0,1)");
  if (shape <= 0.0 || rate <= 0.0)
    throw std::domain_error("gamma_quantile: nonpositive shape/rate");
  // Wilson-Hilferty start on the unit-rate scale, bracketed Newton.
  const double z = norm_quantile(p);
  const double c = 1.0 - 1.0 / (9.0 * shape) + z / (3.0 * std::sqrt(shape));
  double x = shape * c * c * c;
  if (x <= 0.0) x = std::exp((std::log(p) + std::lgamma(shape + 1.0)) / shape);
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  const double lg = std::lgamma(shape);
  for (int it = 0; it < 200; ++it) {
    const double f = value_of(gamma_p(shape, x)) - p;
    if (f == 0.0) break;
    if (f > 0.0) hi = std::min(hi, x); else lo = std::max(lo, x);
    const double lpdf = (shape - 1.0) * std::log(x) - x - lg;
    double xn = x - f / std::exp(lpdf);
    if (!(xn >= lo && xn <= hi))
      xn = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * x;
    if (std::fabs(xn - x) < 1e-12 * (1.0 + xn)) { x = xn; break; }
    x = xn;
  }
  return x / rate;
}

}  // namespace cutcop
