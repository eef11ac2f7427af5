#include "cutcop/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "cutcop/quadrature.hpp"

namespace cutcop {

PointMetrics point_metrics(const Eigen::MatrixXd& estimates,
                           const Eigen::VectorXd& truth) {
  const int S = static_cast<int>(estimates.rows());
  const int d = static_cast<int>(estimates.cols());
  if (S < 2) throw std::invalid_argument("point_metrics: need S >= 2");
  if (truth.size() != d)
    throw std::invalid_argument("point_metrics: dimension mismatch");
  PointMetrics out;
  out.bias = estimates.colwise().mean() - truth.transpose();
  out.rmse.resize(d);
  for (int k = 0; k < d; ++k)
    out.rmse[k] =
        std::sqrt((estimates.col(k).array() - truth[k]).square().mean());
  return out;
}

double quantile_type7(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("quantile: empty");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

CredibleInterval equal_tailed_interval(std::span<const double> draws,
                                       double level) {
  std::vector<double> v(draws.begin(), draws.end());
  const double alpha = 0.5 * (1.0 - level);
  return {quantile_type7(v, alpha), quantile_type7(std::move(v), 1.0 - alpha)};
}

Eigen::VectorXd interval_coverage(const std::vector<Eigen::MatrixXd>& sample_sets,
                                  const Eigen::VectorXd& truth, double level) {
  if (sample_sets.empty())
    throw std::invalid_argument("interval_coverage: no sample sets");
  const int d = static_cast<int>(truth.size());
  Eigen::VectorXd hits = Eigen::VectorXd::Zero(d);
  for (const auto& draws : sample_sets) {
    if (draws.cols() != d || draws.rows() == 0)
      throw std::invalid_argument("interval_coverage: bad sample set shape");
    for (int k = 0; k < d; ++k) {
      std::vector<double> col(draws.col(k).data(),
                              draws.col(k).data() + draws.rows());
      const auto ci = equal_tailed_interval(col, level);
      if (ci.contains(truth[k])) hits[k] += 1.0;
    }
  }
  return hits / static_cast<double>(sample_sets.size());
}

double predictive_kl_marginal(const MarginalSpec& fitted,
                              const std::function<double(double)>& true_log_pdf) {
  fitted.validate();
  const double lo = marginal_quantile(fitted, 1e-11);
  const double hi = marginal_quantile(fitted, 1.0 - 1e-11);
  const auto integrand = [&](double y) {
    const double lf = marginal_log_pdf(fitted, y);
    if (!std::isfinite(lf)) return 0.0;
    const double f = std::exp(lf);
    if (f <= 0.0) return 0.0;
    return f * (lf - true_log_pdf(y));
  };
  return integrate_adaptive(integrand, lo, hi, 1e-7, 60);
}

double predictive_kl_marginal(const MarginalSpec& fitted,
                              const MarginalSpec& truth) {
  return predictive_kl_marginal(
      fitted, [&](double y) { return marginal_log_pdf(truth, y); });
}

double predictive_kl_copula(const CopulaSpec& fitted, const CopulaSpec& truth) {
  fitted.validate();
  truth.validate();
  if (fitted.dim() != 2 || truth.dim() != 2)
    throw std::invalid_argument("predictive_kl_copula: bivariate only");
  const double delta = 1e-4;
  const auto integrand = [&](double u, double v) {
    const double lf =
        fitted.family == CopulaFamily::Independence
            ? 0.0
            : bivariate_log_density(fitted.family, u, v, fitted.tau, fitted.nu);
    const double lt =
        truth.family == CopulaFamily::Independence
            ? 0.0
            : bivariate_log_density(truth.family, u, v, truth.tau, truth.nu);
    return std::exp(lf) * (lf - lt);
  };
  return integrate2d_tensor(integrand, delta, 1.0 - delta, delta, 1.0 - delta,
                            1e-4);
}

namespace {

double projected_tv(const Eigen::VectorXd& s) {
  // Gaussian KDE vs the standard normal on a fixed grid
  const int S = static_cast<int>(s.size());
  std::vector<double> v(s.data(), s.data() + S);
  std::sort(v.begin(), v.end());
  const double mean = s.mean();
  const double sd = std::sqrt((s.array() - mean).square().sum() / (S - 1));
  const double iqr = quantile_type7(v, 0.75) - quantile_type7(v, 0.25);
  const double h = 0.9 * std::min(sd, iqr / 1.349) *
                   std::pow(static_cast<double>(S), -0.2);
  const int grid_n = 481;
  const double lo = -6.0, hi = 6.0;
  const double step = (hi - lo) / (grid_n - 1);
  double tv = 0.0;
  const double inv_h = 1.0 / h;
  for (int g = 0; g < grid_n; ++g) {
    const double t = lo + g * step;
    double kde = 0.0;
    for (int k = 0; k < S; ++k)
      kde += value_of(norm_pdf((t - s[k]) * inv_h));
    kde *= inv_h / S;
    const double w = (g == 0 || g == grid_n - 1) ? 0.5 : 1.0;
    tv += w * std::fabs(kde - value_of(norm_pdf(t)));
  }
  return 0.5 * tv * step;
}

}  // namespace

GaussianLimitDiagnostic gaussian_limit_diagnostic(const Eigen::MatrixXd& samples,
                                                  const Eigen::VectorXd& center,
                                                  const Eigen::MatrixXd& covariance,
                                                  Rng& rng) {
  const int S = static_cast<int>(samples.rows());
  const int d = static_cast<int>(samples.cols());
  if (S < 2 || center.size() != d || covariance.rows() != d)
    throw std::invalid_argument("gaussian_limit_diagnostic: bad shapes");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("gaussian_limit_diagnostic: covariance not SPD");

  GaussianLimitDiagnostic out;
  const Eigen::VectorXd mean = samples.colwise().mean();
  const Eigen::VectorXd md =
      llt.matrixL().solve(mean - center);
  out.standardized_mean_discrepancy = md.norm();

  Eigen::MatrixXd centered = samples.rowwise() - mean.transpose();
  const Eigen::MatrixXd sample_cov =
      centered.transpose() * centered / (S - 1.0);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(sample_cov,
                                                                covariance);
  out.cov_ratio_eigenvalues = ges.eigenvalues();

  for (int r = 0; r < 3; ++r) {
    Eigen::VectorXd w(d);
    for (int k = 0; k < d; ++k) w[k] = rng.normal();
    w.normalize();
    const double scale = std::sqrt(w.dot(covariance * w));
    Eigen::VectorXd proj = (samples * w).array() - center.dot(w);
    proj /= scale;
    out.tv_estimates[r] = projected_tv(proj);
  }
  return out;
}

}  // namespace cutcop
