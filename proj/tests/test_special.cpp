#include <doctest.h>

#include <cmath>

#include "cutcop/dual.hpp"
#include "cutcop/quadrature.hpp"
#include "cutcop/rng.hpp"
#include "cutcop/special.hpp"

using namespace cutcop;

TEST_SUITE_BEGIN("special");

TEST_CASE("normal cdf and quantile invert each other") {
  for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.7, 0.975, 1.0 - 1e-6}) {
    const double x = norm_quantile(p);
    CHECK(value_of(norm_cdf(x)) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK(norm_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(norm_quantile(0.975) == doctest::Approx(1.959963985).epsilon(1e-9));
  CHECK_THROWS_AS(norm_quantile(0.0), std::domain_error);
  CHECK_THROWS_AS(norm_quantile(1.0), std::domain_error);
}

TEST_CASE("digamma matches lgamma differences") {
  for (double x : {0.3, 1.0, 2.5, 7.0, 15.0, 120.0}) {
    const double h = 1e-6 * (1.0 + x);
    const double fd = (std::lgamma(x + h) - std::lgamma(x - h)) / (2.0 * h);
    CHECK(digamma(x) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("incomplete gamma against quadrature") {
  for (double a : {0.7, 2.0, 7.0}) {
    for (double x : {0.4, 2.0, 7.0, 14.0}) {
      const double lg = std::lgamma(a);
      const auto dens = [&](double t) {
        return std::exp((a - 1.0) * std::log(t) - t - lg);
      };
      const double want = integrate_adaptive(dens, 1e-14, x, 1e-12, 56);
      CHECK(value_of(gamma_p(a, x)) == doctest::Approx(want).epsilon(1e-10));
    }
  }
}

TEST_CASE("student t cdf and quantile") {
  for (double nu : {1.0, 2.0, 5.0}) {
    for (double p : {0.025, 0.3, 0.5, 0.8, 0.99}) {
      const double q = student_t_quantile(p, nu);
      CHECK(value_of(student_t_cdf(q, nu)) == doctest::Approx(p).epsilon(1e-10));
    }
  }
  const auto pdf5 = [](double t) {
    return std::exp(value_of(student_t_log_pdf(t, 5.0)));
  };
  const double below = integrate_adaptive(pdf5, -60.0, 1.3, 1e-10, 56);
  CHECK(value_of(student_t_cdf(1.3, 5.0)) == doctest::Approx(below).epsilon(1e-7));
  CHECK(student_t_quantile(0.75, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(student_t_quantile(0.975, 2.0) == doctest::Approx(4.30265).epsilon(1e-5));
}

TEST_CASE("bivariate normal cdf identities") {
  for (double rho : {-0.95, -0.5, 0.0, 0.3, 0.8, 0.9, 0.95, 0.99}) {
    const double want = 0.25 + std::asin(rho) / (2.0 * kPi);
    CHECK(binormal_cdf(0.0, 0.0, rho) == doctest::Approx(want).epsilon(1e-10));
  }
  CHECK(binormal_cdf(0.7, -1.2, 0.0) ==
        doctest::Approx(value_of(norm_cdf(0.7)) * value_of(norm_cdf(-1.2)))
            .epsilon(1e-13));
  for (double rho : {-0.6, 0.5, 0.89, 0.96}) {
    const double s2 = 1.0 - rho * rho;
    const auto dens = [&](double x, double y) {
      return std::exp(-0.5 * (x * x - 2.0 * rho * x * y + y * y) / s2) /
             (2.0 * kPi * std::sqrt(s2));
    };
    const double got = binormal_cdf(0.4, -0.3, rho);
    const double want = integrate2d_adaptive(dens, -9.0, 0.4, -9.0, -0.3, 1e-8);
    CHECK(got == doctest::Approx(want).epsilon(1e-6));
  }
  CHECK(binormal_cdf(1.0, 2.0, 0.5) ==
        doctest::Approx(binormal_cdf(2.0, 1.0, 0.5)).epsilon(1e-14));
}

TEST_CASE("trivariate normal cdf consistency") {
  const double got0 = trinormal_cdf(0.3, -0.5, 1.1, 0.0, 0.0, 0.0);
  const double want0 = value_of(norm_cdf(0.3)) * value_of(norm_cdf(-0.5)) *
                       value_of(norm_cdf(1.1));
  CHECK(got0 == doctest::Approx(want0).epsilon(1e-8));
  const double got1 = trinormal_cdf(0.4, -0.2, 7.8, 0.5, 0.3, 0.2);
  CHECK(got1 == doctest::Approx(binormal_cdf(0.4, -0.2, 0.5)).epsilon(1e-6));
  Rng rng(42);
  const double r = 0.5;
  int hits = 0;
  const int N = 400000;
  for (int i = 0; i < N; ++i) {
    const double z0 = rng.normal();
    const double x1 = std::sqrt(r) * z0 + std::sqrt(1 - r) * rng.normal();
    const double x2 = std::sqrt(r) * z0 + std::sqrt(1 - r) * rng.normal();
    const double x3 = std::sqrt(r) * z0 + std::sqrt(1 - r) * rng.normal();
    if (x1 <= 0.2 && x2 <= -0.4 && x3 <= 0.9) ++hits;
  }
  const double mc = static_cast<double>(hits) / N;
  const double se = std::sqrt(mc * (1 - mc) / N);
  const double got = trinormal_cdf(0.2, -0.4, 0.9, r, r, r);
  CHECK(std::fabs(got - mc) < 4.0 * se + 1e-4);
}

TEST_CASE("bivariate t cdf sanity") {
  const double got = bvt_cdf(0.5, -0.7, 0.0, 3.0);
  CHECK(got == doctest::Approx(value_of(student_t_cdf(0.5, 3.0)) *
                               value_of(student_t_cdf(-0.7, 3.0)))
                   .epsilon(1e-7));
  for (double nu : {1.0, 4.0})
    CHECK(bvt_cdf(0.0, 0.0, 0.6, nu) ==
          doctest::Approx(0.25 + std::asin(0.6) / (2.0 * kPi)).epsilon(1e-7));
}

TEST_CASE("dual derivatives of special functions match finite differences") {
  const auto fd_check = [](auto f, double x, double tol) {
    const double h = 1e-6 * (1.0 + std::fabs(x));
    const double want = (value_of(f(x + h)) - value_of(f(x - h))) / (2.0 * h);
    const auto r = f(Dual<1>::seed(x, 0));
    CHECK(r.d[0] == doctest::Approx(want).epsilon(tol));
  };
  fd_check([](auto v) { using std::lgamma; return lgamma(v); }, 3.7, 1e-6);
  fd_check([](auto v) { using std::erfc; return erfc(v); }, 0.4, 1e-7);
  fd_check([](auto v) { return norm_quantile(v); }, 0.73, 1e-6);
  fd_check([](auto v) { return gamma_p(v, decltype(v)(5.0)); }, 3.0, 1e-5);
  fd_check([](auto v) { return gamma_p(decltype(v)(3.0), v); }, 5.0, 1e-6);
  fd_check([](auto v) { return gamma_p(decltype(v)(3.0), v); }, 1.5, 1e-6);
  fd_check([](auto v) { return student_t_cdf(v, 4.0); }, 0.8, 1e-7);
  fd_check([](auto v) { return student_t_quantile(v, 4.0); }, 0.81, 1e-6);
  {
    const double h = 1e-6;
    Dual<3> x = Dual<3>::seed(0.4, 0), y = Dual<3>::seed(-0.2, 1),
            r = Dual<3>::seed(0.55, 2);
    const Dual<3> v = binormal_cdf(x, y, r);
    CHECK(v.d[0] == doctest::Approx((binormal_cdf(0.4 + h, -0.2, 0.55) -
                                     binormal_cdf(0.4 - h, -0.2, 0.55)) /
                                    (2 * h))
                        .epsilon(1e-6));
    CHECK(v.d[1] == doctest::Approx((binormal_cdf(0.4, -0.2 + h, 0.55) -
                                     binormal_cdf(0.4, -0.2 - h, 0.55)) /
                                    (2 * h))
                        .epsilon(1e-6));
    CHECK(v.d[2] == doctest::Approx((binormal_cdf(0.4, -0.2, 0.55 + h) -
                                     binormal_cdf(0.4, -0.2, 0.55 - h)) /
                                    (2 * h))
                        .epsilon(1e-6));
  }
}

TEST_CASE("gradient driver chunks dimensions above eight") {
  const auto f = []<typename S>(std::span<const S> x) {
    S acc(0.0);
    for (size_t i = 0; i < x.size(); ++i)
      acc += (static_cast<double>(i) + 1.0) * x[i] * x[i];
    return acc;
  };
  std::vector<double> x(11), g(11);
  for (int i = 0; i < 11; ++i) x[i] = 0.1 * (i - 5);
  gradient(f, x, g);
  for (int i = 0; i < 11; ++i)
    CHECK(g[i] == doctest::Approx(2.0 * (i + 1.0) * x[i]).epsilon(1e-14));
}

TEST_SUITE_END();
