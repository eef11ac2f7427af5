#pragma once

#include <Eigen/Dense>
#include <span>
#include <stdexcept>
#include <string>

#include "cutcop/rng.hpp"
#include "cutcop/special.hpp"

namespace cutcop {

enum class CopulaFamily {
  Independence,
  GaussianBivariate,
  GumbelBivariate,
  StudentTBivariate,
  GaussianM
};

std::string copula_name(CopulaFamily f);
CopulaFamily copula_from_name(const std::string& name);

// Kendall's tau is the canonical dependence parameter for the bivariate
// families; the internal Gumbel theta / elliptical rho are derived on demand.
// The Student-t degrees of freedom and the GaussianM correlation matrix are
// fixed at configuration time and never estimated.
struct CopulaSpec {
  CopulaFamily family = CopulaFamily::Independence;
  double tau = 0.0;
  double nu = 1.0;
  int m = 2;               // dimension (>=2); bivariate families force 2
  Eigen::MatrixXd corr;    // GaussianM only

  void validate() const;
  int dim() const { return family == CopulaFamily::GaussianM
                        ? static_cast<int>(corr.rows()) : m; }
  bool has_tau() const {
    return family == CopulaFamily::GaussianBivariate ||
           family == CopulaFamily::GumbelBivariate ||
           family == CopulaFamily::StudentTBivariate;
  }
};

double tau_to_dependence(CopulaFamily family, double tau);
double dependence_to_tau(CopulaFamily family, double dep);

// Column-wise ranks with the cell bounds a = (r-1)/(n+1), b = r/(n+1) used by
// the rank likelihood. Ties are broken by first occurrence and flagged.
struct RankData {
  Eigen::MatrixXi ranks;
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
  int n = 0;
  int m = 0;
  bool had_ties = false;
};

RankData compute_ranks(const Eigen::MatrixXd& data);

struct RankLikelihoodError : std::runtime_error {
  RankLikelihoodError(const std::string& what, int row_index)
      : std::runtime_error(what), row(row_index) {}
  int row;
};

double copula_log_density(const CopulaSpec& spec, std::span<const double> u);
double copula_cdf(const CopulaSpec& spec, std::span<const double> u);
Eigen::MatrixXd copula_sample(const CopulaSpec& spec, int n, Rng& rng);
double rank_log_likelihood(const CopulaSpec& spec, const RankData& ranks);

// O(n log n) sample version of Kendall's tau (tau-a; data assumed tie-free).
double kendall_tau_empirical(std::span<const double> x, std::span<const double> y);

// ---- scalar-generic bivariate kernels (Dual-capable in u, v and tau) ----

template <typename S>
S log_sum_exp(const S& a, const S& b) {
  using std::exp;
  using std::log1p;
  if (value_of(a) >= value_of(b)) return a + log1p(exp(b - a));
  return b + log1p(exp(a - b));
}

template <typename S>
S gumbel_log_density(const S& u, const S& v, const S& tau) {
  using std::exp;
  using std::log;
  if (value_of(tau) < 1e-14) return S(0.0);  // theta = 1 is independence
  const S theta = 1.0 / (1.0 - tau);
  const S x = -log(u), y = -log(v);
  const S lx = log(x), ly = log(y);
  const S log_s = log_sum_exp(theta * lx, theta * ly);
  const S log_w = log_s / theta;
  const S w = exp(log_w);
  return -w + (theta - 1.0) * (lx + ly) + (x + y) + (1.0 - 2.0 * theta) * log_w +
         log(w + theta - 1.0);
}

template <typename S>
S gumbel_cdf(const S& u, const S& v, const S& tau) {
  using std::exp;
  using std::log;
  if (value_of(u) <= 0.0 || value_of(v) <= 0.0) return S(0.0);
  if (value_of(tau) < 1e-14) return u * v;
  const S theta = 1.0 / (1.0 - tau);
  const S x = -log(u), y = -log(v);
  if (value_of(x) <= 0.0) return v;
  if (value_of(y) <= 0.0) return u;
  const S log_s = log_sum_exp(theta * log(x), theta * log(y));
  return exp(-exp(log_s / theta));
}

template <typename S>
S elliptical_rho(const S& tau) {
  using std::sin;
  return sin(0.5 * kPi * tau);
}

template <typename S>
S gaussian_biv_log_density(const S& u, const S& v, const S& tau) {
  using std::log;
  const S rho = elliptical_rho(tau);
  const S z1 = norm_quantile(u);
  const S z2 = norm_quantile(v);
  const S r2 = rho * rho;
  const S om = 1.0 - r2;
  return -0.5 * log(om) -
         (r2 * (z1 * z1 + z2 * z2) - 2.0 * rho * z1 * z2) / (2.0 * om);
}

template <typename S>
S gaussian_biv_cdf(const S& u, const S& v, const S& tau) {
  if (value_of(u) <= 0.0 || value_of(v) <= 0.0) return S(0.0);
  if (value_of(u) >= 1.0) return value_of(v) >= 1.0 ? S(1.0) : v;
  if (value_of(v) >= 1.0) return u;
  return binormal_cdf(norm_quantile(u), norm_quantile(v), elliptical_rho(tau));
}

template <typename S>
S studentt_log_density(const S& u, const S& v, const S& tau, double nu) {
  using std::log;
  using std::log1p;
  const S rho = elliptical_rho(tau);
  const S x = student_t_quantile(u, nu);
  const S y = student_t_quantile(v, nu);
  const S om = 1.0 - rho * rho;
  const double lc = std::lgamma(0.5 * (nu + 2.0)) + std::lgamma(0.5 * nu) -
                    2.0 * std::lgamma(0.5 * (nu + 1.0));
  const S q = (x * x - 2.0 * rho * x * y + y * y) / (nu * om);
  return lc - 0.5 * log(om) - 0.5 * (nu + 2.0) * log1p(q) +
         0.5 * (nu + 1.0) * (log1p(x * x / nu) + log1p(y * y / nu));
}

template <typename S>
S studentt_cdf(const S& u, const S& v, const S& tau, double nu) {
  if (value_of(u) <= 0.0 || value_of(v) <= 0.0) return S(0.0);
  if (value_of(u) >= 1.0) return value_of(v) >= 1.0 ? S(1.0) : v;
  if (value_of(v) >= 1.0) return u;
  return bvt_cdf(student_t_quantile(u, nu), student_t_quantile(v, nu),
                 elliptical_rho(tau), nu);
}

template <typename S>
S bivariate_log_density(CopulaFamily family, const S& u, const S& v,
                        const S& tau, double nu) {
  switch (family) {
    case CopulaFamily::Independence: return S(0.0);
    case CopulaFamily::GaussianBivariate: return gaussian_biv_log_density(u, v, tau);
    case CopulaFamily::GumbelBivariate: return gumbel_log_density(u, v, tau);
    case CopulaFamily::StudentTBivariate: return studentt_log_density(u, v, tau, nu);
    default:
      throw std::domain_error("bivariate_log_density: not a bivariate family");
  }
}

template <typename S>
S bivariate_cdf(CopulaFamily family, const S& u, const S& v, const S& tau,
                double nu) {
  switch (family) {
    case CopulaFamily::Independence: {
      const S uc = value_of(u) < 0.0 ? S(0.0) : (value_of(u) > 1.0 ? S(1.0) : u);
      const S vc = value_of(v) < 0.0 ? S(0.0) : (value_of(v) > 1.0 ? S(1.0) : v);
      return uc * vc;
    }
    case CopulaFamily::GaussianBivariate: return gaussian_biv_cdf(u, v, tau);
    case CopulaFamily::GumbelBivariate: return gumbel_cdf(u, v, tau);
    case CopulaFamily::StudentTBivariate: return studentt_cdf(u, v, tau, nu);
    default:
      throw std::domain_error("bivariate_cdf: not a bivariate family");
  }
}

// Rank log-likelihood for the bivariate families as a function of tau;
// Dual-capable for the type-2 stage-1 gradient. Inclusion-exclusion over the
// 4 cell corners with compensated summation.
template <typename S>
S rank_loglik_bivariate(CopulaFamily family, const RankData& rd, const S& tau,
                        double nu) {
  using std::log;
  if (rd.m != 2)
    throw std::domain_error("rank_loglik_bivariate: m != 2");
  S total(0.0);
  for (int i = 0; i < rd.n; ++i) {
    const double a1 = rd.a(i, 0), b1 = rd.b(i, 0);
    const double a2 = rd.a(i, 1), b2 = rd.b(i, 1);
    S rect = bivariate_cdf(family, S(b1), S(b2), tau, nu);
    S comp(0.0);
    const auto add = [&](S term) {  // Neumaier
      const S t = rect + term;
      if (std::fabs(value_of(rect)) >= std::fabs(value_of(term)))
        comp += (rect - t) + term;
      else
        comp += (term - t) + rect;
      rect = t;
    };
    add(-bivariate_cdf(family, S(a1), S(b2), tau, nu));
    add(-bivariate_cdf(family, S(b1), S(a2), tau, nu));
    add(bivariate_cdf(family, S(a1), S(a2), tau, nu));
    rect += comp;
    if (!(value_of(rect) > 0.0))
      throw RankLikelihoodError("rank likelihood: nonpositive cell probability", i);
    total += log(rect);
  }
  return total;
}

}  // namespace cutcop
