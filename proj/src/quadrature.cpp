#include "cutcop/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace cutcop {

namespace {

GaussLegendreRule make_rule(int n) {
  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.weights[i] = w;
    rule.nodes[n - 1 - i] = x;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

double gl_integrate(const GaussLegendreRule& r, const std::function<double(double)>& f,
                    double a, double b) {
  const double mid = 0.5 * (a + b);
  const double hw = 0.5 * (b - a);
  double sum = 0.0;
  for (size_t i = 0; i < r.nodes.size(); ++i)
    sum += r.weights[i] * f(mid + hw * r.nodes[i]);
  return sum * hw;
}

double adapt_rec(const std::function<double(double)>& f, double a, double b,
                 double tol, int depth, const GaussLegendreRule& lo,
                 const GaussLegendreRule& hi) {
  const double i_lo = gl_integrate(lo, f, a, b);
  const double i_hi = gl_integrate(hi, f, a, b);
  if (std::fabs(i_hi - i_lo) <= tol || b - a < 1e-14 * (std::fabs(a) + 1.0))
    return i_hi;
  if (depth <= 0)
    throw std::runtime_error("integrate_adaptive: max depth reached");
  const double m = 0.5 * (a + b);
  return adapt_rec(f, a, m, 0.5 * tol, depth - 1, lo, hi) +
         adapt_rec(f, m, b, 0.5 * tol, depth - 1, lo, hi);
}

}  // namespace

const GaussLegendreRule& gauss_legendre(int order) {
  static std::map<int, GaussLegendreRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, make_rule(order)).first;
  return it->second;
}

double integrate_adaptive(const std::function<double(double)>& f, double a,
                          double b, double abs_tol, int max_depth) {
  if (a == b) return 0.0;
  const GaussLegendreRule lo = gauss_legendre(7);
  const GaussLegendreRule hi = gauss_legendre(15);
  return adapt_rec(f, a, b, abs_tol, max_depth, lo, hi);
}

double integrate2d_tensor(const std::function<double(double, double)>& f,
                          double ax, double bx, double ay, double by,
                          double tol, int max_order) {
  double prev = 0.0;
  bool have_prev = false;
  for (int n = 32; n <= max_order; n *= 2) {
    const auto& r = gauss_legendre(n);
    const double mx = 0.5 * (ax + bx), hx = 0.5 * (bx - ax);
    const double my = 0.5 * (ay + by), hy = 0.5 * (by - ay);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = mx + hx * r.nodes[i];
      double row = 0.0;
      for (int j = 0; j < n; ++j)
        row += r.weights[j] * f(x, my + hy * r.nodes[j]);
      sum += r.weights[i] * row;
    }
    const double est = sum * hx * hy;
    if (have_prev && std::fabs(est - prev) < tol) return est;
    prev = est;
    have_prev = true;
  }
  throw std::runtime_error("integrate2d_tensor: refinement did not converge");
}

double integrate2d_adaptive(const std::function<double(double, double)>& f,
                            double ax, double bx, double ay, double by,
                            double abs_tol) {
  const auto outer = [&](double x) {
    return integrate_adaptive([&](double y) { return f(x, y); }, ay, by,
                              0.1 * abs_tol / (bx - ax + 1.0));
  };
  return integrate_adaptive(outer, ax, bx, abs_tol);
}

}  // namespace cutcop
