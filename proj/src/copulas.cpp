#include "cutcop/copulas.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace cutcop {

std::string copula_name(CopulaFamily f) {
  switch (f) {
    case CopulaFamily::Independence: return "independence";
    case CopulaFamily::GaussianBivariate: return "gaussian";
    case CopulaFamily::GumbelBivariate: return "gumbel";
    case CopulaFamily::StudentTBivariate: return "studentt";
    case CopulaFamily::GaussianM: return "gaussianm";
  }
  return "?";
}

CopulaFamily copula_from_name(const std::string& name) {
  if (name == "independence") return CopulaFamily::Independence;
  if (name == "gaussian") return CopulaFamily::GaussianBivariate;
  if (name == "gumbel") return CopulaFamily::GumbelBivariate;
  if (name == "studentt") return CopulaFamily::StudentTBivariate;
  if (name == "gaussianm") return CopulaFamily::GaussianM;
  throw std::domain_error("unknown copula family: " + name);
}

void CopulaSpec::validate() const {
  switch (family) {
    case CopulaFamily::Independence:
      if (m < 2) throw std::domain_error("copula spec: m < 2");
      break;
    case CopulaFamily::GumbelBivariate:
      if (!(tau >= 0.0 && tau < 1.0))
        throw std::domain_error("copula spec: Gumbel tau outside [0,1)");
      break;
    case CopulaFamily::GaussianBivariate:
    case CopulaFamily::StudentTBivariate:
      if (!(tau > -1.0 && tau < 1.0))
        throw std::domain_error("copula spec: elliptical tau outside (-1,1)");
      if (family == CopulaFamily::StudentTBivariate && nu <= 0.0)
        throw std::domain_error("copula spec: nu <= 0");
      break;
    case CopulaFamily::GaussianM: {
      const auto mm = corr.rows();
      if (mm < 2 || corr.cols() != mm)
        throw std::domain_error("copula spec: correlation matrix not square");
      if (!corr.isApprox(corr.transpose(), 1e-12))
        throw std::domain_error("copula spec: correlation matrix not symmetric");
      for (Eigen::Index i = 0; i < mm; ++i)
        if (std::fabs(corr(i, i) - 1.0) > 1e-12)
          throw std::domain_error("copula spec: diagonal not unit");
      Eigen::LLT<Eigen::MatrixXd> llt(corr);
      if (llt.info() != Eigen::Success)
        throw std::domain_error("copula spec: correlation matrix not SPD");
      break;
    }
  }
}

double tau_to_dependence(CopulaFamily family, double tau) {
  switch (family) {
    case CopulaFamily::Independence:
      return 0.0;
    case CopulaFamily::GumbelBivariate:
      if (!(tau >= 0.0 && tau < 1.0))
        throw std::domain_error("tau_to_dependence: Gumbel tau outside [0,1)");
      return 1.0 / (1.0 - tau);
    case CopulaFamily::GaussianBivariate:
    case CopulaFamily::StudentTBivariate:
      if (!(tau > -1.0 && tau < 1.0))
        throw std::domain_error("tau_to_dependence: tau outside (-1,1)");
      return std::sin(0.5 * kPi * tau);
    case CopulaFamily::GaussianM:
      throw std::domain_error("tau_to_dependence: GaussianM has no scalar tau");
  }
  return 0.0;
}

double dependence_to_tau(CopulaFamily family, double dep) {
  switch (family) {
    case CopulaFamily::Independence:
      return 0.0;
    case CopulaFamily::GumbelBivariate:
      if (dep < 1.0) throw std::domain_error("dependence_to_tau: theta < 1");
      return 1.0 - 1.0 / dep;
    case CopulaFamily::GaussianBivariate:
    case CopulaFamily::StudentTBivariate:
      if (!(dep > -1.0 && dep < 1.0))
        throw std::domain_error("dependence_to_tau: rho outside (-1,1)");
      return 2.0 / kPi * std::asin(dep);
    case CopulaFamily::GaussianM:
      throw std::domain_error("dependence_to_tau: GaussianM has no scalar tau");
  }
  return 0.0;
}

RankData compute_ranks(const Eigen::MatrixXd& data) {
  const int n = static_cast<int>(data.rows());
  const int m = static_cast<int>(data.cols());
  if (n < 2) throw std::domain_error("compute_ranks: need n >= 2");
  RankData rd;
  rd.n = n;
  rd.m = m;
  rd.ranks.resize(n, m);
  rd.a.resize(n, m);
  rd.b.resize(n, m);
  std::vector<int> idx(n);
  const double denom = 1.0 / (n + 1.0);
  for (int j = 0; j < m; ++j) {
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int p, int q) {
      return data(p, j) < data(q, j);
    });
    for (int k = 1; k < n; ++k)
      if (data(idx[k], j) == data(idx[k - 1], j)) rd.had_ties = true;
    for (int k = 0; k < n; ++k) {
      const int i = idx[k];
      const int r = k + 1;
      rd.ranks(i, j) = r;
      rd.a(i, j) = (r - 1) * denom;
      rd.b(i, j) = r * denom;
    }
  }
  return rd;
}

namespace {

struct GaussianMDensity {
  Eigen::MatrixXd prec_minus_identity;
  double logdet;
  explicit GaussianMDensity(const Eigen::MatrixXd& corr) {
    Eigen::LLT<Eigen::MatrixXd> llt(corr);
    if (llt.info() != Eigen::Success)
      throw std::domain_error("GaussianM: correlation matrix not SPD");
    const auto m = corr.rows();
    prec_minus_identity =
        llt.solve(Eigen::MatrixXd::Identity(m, m)) - Eigen::MatrixXd::Identity(m, m);
    logdet = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
      logdet += 2.0 * std::log(llt.matrixL()(i, i));
  }
  double log_density(std::span<const double> u) const {
    const auto m = prec_minus_identity.rows();
    Eigen::VectorXd z(m);
    for (Eigen::Index j = 0; j < m; ++j) z[j] = norm_quantile(u[j]);
    return -0.5 * logdet - 0.5 * z.dot(prec_minus_identity * z);
  }
};

double gaussianm_cdf(const Eigen::MatrixXd& corr, std::span<const double> u) {
  const int m = static_cast<int>(corr.rows());
  std::vector<double> z(m);
  for (int j = 0; j < m; ++j) {
    const double uj = std::min(1.0, std::max(0.0, u[j]));
    if (uj <= 0.0) return 0.0;
    z[j] = uj >= 1.0 ? std::numeric_limits<double>::infinity() : norm_quantile(uj);
  }
  if (m == 2) return binormal_cdf(z[0], z[1], corr(0, 1));
  if (m == 3) {
    // send any +inf coordinate last so conditioning degrades gracefully
    int order[3] = {0, 1, 2};
    std::sort(std::begin(order), std::end(order),
              [&](int p, int q) { return z[p] < z[q]; });
    const int i0 = order[0], i1 = order[1], i2 = order[2];
    if (std::isinf(z[i2])) {
      if (std::isinf(z[i1]))
        return std::isinf(z[i0]) ? 1.0 : value_of(norm_cdf(z[i0]));
      return binormal_cdf(z[i0], z[i1], corr(i0, i1));
    }
    return trinormal_cdf(z[i0], z[i1], z[i2], corr(i0, i1), corr(i0, i2),
                         corr(i1, i2));
  }
  throw std::domain_error("copula_cdf: GaussianM supported for m <= 3 only");
}

}  // namespace

double copula_log_density(const CopulaSpec& spec, std::span<const double> u) {
  spec.validate();
  const int m = spec.dim();
  if (static_cast<int>(u.size()) != m)
    throw std::domain_error("copula_log_density: dimension mismatch");
  for (double uj : u)
    if (!(uj > 0.0 && uj < 1.0))
      throw std::domain_error("copula_log_density: u on boundary");
  switch (spec.family) {
    case CopulaFamily::Independence:
      return 0.0;
    case CopulaFamily::GaussianM:
      return GaussianMDensity(spec.corr).log_density(u);
    default:
      return bivariate_log_density(spec.family, u[0], u[1], spec.tau, spec.nu);
  }
}

double copula_cdf(const CopulaSpec& spec, std::span<const double> u) {
  spec.validate();
  const int m = spec.dim();
  if (static_cast<int>(u.size()) != m)
    throw std::domain_error("copula_cdf: dimension mismatch");
  switch (spec.family) {
    case CopulaFamily::Independence: {
      double p = 1.0;
      for (double uj : u) p *= std::min(1.0, std::max(0.0, uj));
      return p;
    }
    case CopulaFamily::GaussianM:
      return gaussianm_cdf(spec.corr, u);
    default: {
      const double uc = std::min(1.0, std::max(0.0, u[0]));
      const double vc = std::min(1.0, std::max(0.0, u[1]));
      return bivariate_cdf(spec.family, uc, vc, spec.tau, spec.nu);
    }
  }
}

namespace {

// inverse of the Gumbel h-function h(v|u) = dC/du by bisection
double gumbel_hinv(double u, double p, double theta) {
  const double x = -std::log(u);
  const double lx = std::log(x);
  const auto h = [&](double v) {
    const double y = -std::log(v);
    const double ls = value_of(log_sum_exp(theta * lx, theta * std::log(y)));
    const double lw = ls / theta;
    // log h = -w + (1/theta - 1) ls + (theta-1) lx + x
    return -std::exp(lw) + (1.0 / theta - 1.0) * ls + (theta - 1.0) * lx + x;
  };
  const double lp = std::log(p);
  double lo = 1e-300, hi = 1.0 - 1e-16;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (h(mid) < lp) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Eigen::MatrixXd copula_sample(const CopulaSpec& spec, int n, Rng& rng) {
  spec.validate();
  const int m = spec.dim();
  Eigen::MatrixXd out(n, m);
  switch (spec.family) {
    case CopulaFamily::Independence: {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out(i, j) = rng.uniform();
      break;
    }
    case CopulaFamily::GaussianBivariate: {
      const double rho = tau_to_dependence(spec.family, spec.tau);
      const double s = std::sqrt(1.0 - rho * rho);
      for (int i = 0; i < n; ++i) {
        const double z1 = rng.normal();
        const double z2 = rho * z1 + s * rng.normal();
        out(i, 0) = value_of(norm_cdf(z1));
        out(i, 1) = value_of(norm_cdf(z2));
      }
      break;
    }
    case CopulaFamily::StudentTBivariate: {
      const double rho = tau_to_dependence(spec.family, spec.tau);
      const double s2 = 1.0 - rho * rho;
      for (int i = 0; i < n; ++i) {
        const double u1 = rng.uniform();
        const double x1 = student_t_quantile(u1, spec.nu);
        const double scale =
            std::sqrt((spec.nu + x1 * x1) * s2 / (spec.nu + 1.0));
        const double x2 =
            rho * x1 + scale * student_t_quantile(rng.uniform(), spec.nu + 1.0);
        out(i, 0) = u1;
        out(i, 1) = value_of(student_t_cdf(x2, spec.nu));
      }
      break;
    }
    case CopulaFamily::GumbelBivariate: {
      if (spec.tau < 1e-14) {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < 2; ++j) out(i, j) = rng.uniform();
        break;
      }
      const double theta = tau_to_dependence(spec.family, spec.tau);
      for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        out(i, 0) = u;
        out(i, 1) = gumbel_hinv(u, rng.uniform(), theta);
      }
      break;
    }
    case CopulaFamily::GaussianM: {
      Eigen::LLT<Eigen::MatrixXd> llt(spec.corr);
      const Eigen::MatrixXd L = llt.matrixL();
      Eigen::VectorXd z(m);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) z[j] = rng.normal();
        const Eigen::VectorXd x = L * z;
        for (int j = 0; j < m; ++j) out(i, j) = value_of(norm_cdf(x[j]));
      }
      break;
    }
  }
  return out;
}

double rank_log_likelihood(const CopulaSpec& spec, const RankData& rd) {
  spec.validate();
  const int m = rd.m;
  if (m != spec.dim())
    throw std::domain_error("rank_log_likelihood: dimension mismatch");
  if (m > 10)
    throw std::domain_error("rank_log_likelihood: m > 10 (2^m corner cap)");
  if (spec.family == CopulaFamily::Independence) {
    // cell probability factorizes exactly into the cell volume
    double total = 0.0;
    for (int i = 0; i < rd.n; ++i)
      for (int j = 0; j < m; ++j)
        total += std::log(rd.b(i, j) - rd.a(i, j));
    return total;
  }
  if (spec.family != CopulaFamily::GaussianM)
    return rank_loglik_bivariate(spec.family, rd, spec.tau, spec.nu);

  double total = 0.0;
  std::vector<double> corner(m);
  for (int i = 0; i < rd.n; ++i) {
    double rect = 0.0, comp = 0.0;
    for (int mask = 0; mask < (1 << m); ++mask) {
      int lower = 0;
      for (int j = 0; j < m; ++j) {
        const bool upper = mask & (1 << j);
        corner[j] = upper ? rd.b(i, j) : rd.a(i, j);
        lower += upper ? 0 : 1;
      }
      const double sign = (lower % 2 == 0) ? 1.0 : -1.0;
      const double term = sign * gaussianm_cdf(spec.corr, corner);
      const double t = rect + term;  // Neumaier
      comp += std::fabs(rect) >= std::fabs(term) ? (rect - t) + term
                                                 : (term - t) + rect;
      rect = t;
    }
    rect += comp;
    if (!(rect > 0.0))
      throw RankLikelihoodError("rank likelihood: nonpositive cell probability", i);
    total += std::log(rect);
  }
  return total;
}

namespace {

long long merge_count(std::vector<double>& v, std::vector<double>& buf, int lo,
                      int hi) {
  if (hi - lo <= 1) return 0;
  const int mid = (lo + hi) / 2;
  long long cnt = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  int i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      cnt += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
  return cnt;
}

}  // namespace

double kendall_tau_empirical(std::span<const double> x, std::span<const double> y) {
  const int n = static_cast<int>(x.size());
  if (n < 2 || y.size() != x.size())
    throw std::domain_error("kendall_tau_empirical: bad input");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int p, int q) { return x[p] < x[q]; });
  std::vector<double> ys(n), buf(n);
  for (int k = 0; k < n; ++k) ys[k] = y[idx[k]];
  const long long inv = merge_count(ys, buf, 0, n);
  return 1.0 - 4.0 * static_cast<double>(inv) /
                   (static_cast<double>(n) * (n - 1.0));
}

}  // namespace cutcop
