#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cutcop/marginals.hpp"
#include "cutcop/quadrature.hpp"
#include "cutcop/rng.hpp"

using namespace cutcop;

namespace {

const MarginalSpec kSpecs[] = {
    {MarginalFamily::Normal, 0.7, 2.3},
    {MarginalFamily::TruncatedNormalPositive, 0.4, 1.8},
    {MarginalFamily::TruncatedNormalPositive, -1.5, 2.0},
    {MarginalFamily::LogNormal, 0.3, 0.8},
    {MarginalFamily::Gamma, 7.0, 3.0},
    {MarginalFamily::Gamma, 0.9, 0.5},
};

}  // namespace

TEST_SUITE_BEGIN("marginals");

TEST_CASE("log pdf spec points") {
  CHECK(marginal_log_pdf({MarginalFamily::Normal, 0.0, 1.0}, 0.0) ==
        doctest::Approx(-0.9189385332046727).epsilon(1e-12));
  const double e = std::exp(1.0);
  CHECK(marginal_log_pdf({MarginalFamily::LogNormal, 1.0, 1.0}, e) ==
        doctest::Approx(-1.0 - 0.9189385332046727).epsilon(1e-12));
  // independent direct evaluation of the gamma formula
  const double a = 7.0, b = 3.0, y = 2.0;
  const double want = a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(y) - b * y;
  CHECK(marginal_log_pdf({MarginalFamily::Gamma, a, b}, y) ==
        doctest::Approx(want).epsilon(1e-13));
  // outside support
  CHECK(marginal_log_pdf({MarginalFamily::LogNormal, 1.0, 1.0}, -0.5) ==
        -std::numeric_limits<double>::infinity());
  CHECK(marginal_log_pdf({MarginalFamily::Gamma, 7.0, 3.0}, 0.0) ==
        -std::numeric_limits<double>::infinity());
  CHECK(marginal_log_pdf({MarginalFamily::TruncatedNormalPositive, 0.0, 1.0}, -1.0) ==
        -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(marginal_log_pdf({MarginalFamily::Gamma, -1.0, 3.0}, 1.0),
                  std::domain_error);
  CHECK_THROWS_AS(marginal_log_pdf({MarginalFamily::Normal, 0.0, -1.0}, 1.0),
                  std::domain_error);
}

TEST_CASE("cdf spec points") {
  CHECK(marginal_cdf({MarginalFamily::Normal, 0.0, 1.0}, 0.0) ==
        doctest::Approx(0.5).epsilon(1e-14));
  CHECK(marginal_cdf({MarginalFamily::LogNormal, 1.0, 1.0}, std::exp(1.0)) ==
        doctest::Approx(0.5).epsilon(1e-12));
  const MarginalSpec g{MarginalFamily::Gamma, 7.0, 3.0};
  CHECK(marginal_cdf(g, marginal_quantile(g, 0.3)) ==
        doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("quantile spec points") {
  CHECK(marginal_quantile({MarginalFamily::Normal, 0.0, 1.0}, 0.5) ==
        doctest::Approx(0.0).epsilon(1e-12));
  // bisection oracle on erf for the 97.5% point
  double lo = 0.0, hi = 5.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / kSqrt2) < 0.975) lo = mid; else hi = mid;
  }
  CHECK(marginal_quantile({MarginalFamily::Normal, 0.0, 1.0}, 0.975) ==
        doctest::Approx(0.5 * (lo + hi)).epsilon(1e-5));
  // truncated normal lower limit
  CHECK(marginal_quantile({MarginalFamily::TruncatedNormalPositive, 0.0, 1.0}, 1e-10) ==
        doctest::Approx(0.0).epsilon(1e-6));
  CHECK(marginal_quantile({MarginalFamily::TruncatedNormalPositive, 0.0, 1.0}, 1e-10) > 0.0);
  CHECK_THROWS_AS(marginal_quantile({MarginalFamily::Normal, 0.0, 1.0}, 0.0),
                  std::domain_error);
}

TEST_CASE("unconstrained transform round trip and jacobian") {
  {
    const MarginalSpec g{MarginalFamily::Gamma, 7.0, 3.0};
    const auto u = params_to_unconstrained(g);
    CHECK(u.x[0] == doctest::Approx(std::log(7.0)).epsilon(1e-14));
    CHECK(u.x[1] == doctest::Approx(std::log(3.0)).epsilon(1e-14));
    const auto back = unconstrained_to_params(MarginalFamily::Gamma, u.x);
    CHECK(back.p1 == doctest::Approx(7.0).epsilon(1e-13));
    CHECK(back.p2 == doctest::Approx(3.0).epsilon(1e-13));
  }
  {
    const auto u = params_to_unconstrained({MarginalFamily::Normal, 0.0, 1.0});
    CHECK(u.x[0] == 0.0);
    CHECK(u.x[1] == 0.0);
  }
  // Half-Normal(0, 100^2) prior density on sigma2 through the transform:
  // p_x(x) = p(sigma2 = e^x) * e^x; check against a finite difference of the
  // half-normal CDF in x.
  const double b = 100.0;
  const auto halfnormal_cdf = [&](double s2) { return std::erf(s2 / (b * kSqrt2)); };
  const double x = std::log(2.5);
  const double h = 1e-6;
  const double fd = (halfnormal_cdf(std::exp(x + h)) - halfnormal_cdf(std::exp(x - h))) / (2.0 * h);
  const double s2 = std::exp(x);
  const double direct = 2.0 * value_of(norm_pdf(s2 / b)) / b * s2;
  CHECK(direct == doctest::Approx(fd).epsilon(1e-8));
}

TEST_CASE("densities integrate to one") {
  for (const auto& spec : kSpecs) {
    const double lo = std::max(spec.support_lower() == 0.0 ? 1e-13 : -60.0,
                               marginal_quantile(spec, 1e-9) - 1.0);
    const double hi = marginal_quantile(spec, 1.0 - 1e-9) + 1.0;
    const auto dens = [&](double y) {
      const double lp = marginal_log_pdf(spec, y);
      return std::isfinite(lp) ? std::exp(lp) : 0.0;
    };
    const double mass = integrate_adaptive(dens, std::max(lo, spec.support_lower() + 1e-13), hi, 1e-8, 56);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("sampling matches the cdf (Kolmogorov-Smirnov)") {
  Rng rng(7);
  const int n = 10000;
  for (const auto& spec : kSpecs) {
    std::vector<double> u(n);
    for (int i = 0; i < n; ++i)
      u[i] = marginal_cdf(spec, marginal_sample(spec, rng));
    std::sort(u.begin(), u.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
      ks = std::max(ks, std::fabs(u[i] - (i + 1.0) / n));
      ks = std::max(ks, std::fabs(u[i] - static_cast<double>(i) / n));
    }
    // 1% critical value ~ 1.628 / sqrt(n)
    CHECK(ks < 1.628 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("quantile and cdf are mutual inverses on a grid") {
  for (const auto& spec : kSpecs) {
    for (int k = 1; k <= 100; ++k) {
      const double p = k / 101.0;
      const double y = marginal_quantile(spec, p);
      CHECK(marginal_cdf(spec, y) == doctest::Approx(p).epsilon(1e-8));
      const double y2 = marginal_quantile(spec, marginal_cdf(spec, y));
      CHECK(y2 == doctest::Approx(y).epsilon(1e-8));
    }
  }
}

TEST_CASE("cdf monotone and grounded") {
  for (const auto& spec : kSpecs) {
    double prev = 0.0;
    for (int k = 0; k <= 60; ++k) {
      const double y = spec.support_lower() == 0.0
                           ? 0.02 + 0.3 * k
                           : -8.0 + 0.3 * k;
      const double c = marginal_cdf(spec, y);
      CHECK(c >= prev - 1e-15);
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);
      prev = c;
    }
    CHECK(marginal_cdf(spec, spec.support_lower() == 0.0 ? 0.0 : -1e308) == 0.0);
    CHECK(marginal_cdf(spec, std::numeric_limits<double>::infinity()) == 1.0);
  }
}

TEST_SUITE_END();
