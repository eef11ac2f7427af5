#pragma once

#include <functional>
#include <vector>

namespace cutcop {

struct GaussLegendreRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

// Nodes/weights computed once per order and cached (thread-safe).
const GaussLegendreRule& gauss_legendre(int order);

// Adaptive 1-D quadrature: recursive bisection with a Gauss(7)/Gauss(15)
// error estimate. Absolute tolerance; throws on non-convergence.
double integrate_adaptive(const std::function<double(double)>& f, double a,
                          double b, double abs_tol, int max_depth = 50);

// Tensor-product Gauss-Legendre over [ax,bx] x [ay,by], doubling the order
// until two successive estimates agree within tol (spec'd refinement rule).
double integrate2d_tensor(const std::function<double(double, double)>& f,
                          double ax, double bx, double ay, double by,
                          double tol, int max_order = 512);

// Nested adaptive 2-D quadrature (outer over x, inner over y).
double integrate2d_adaptive(const std::function<double(double, double)>& f,
                            double ax, double bx, double ay, double by,
                            double abs_tol);

}  // namespace cutcop
