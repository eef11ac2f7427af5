#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <string>
#include <vector>

#include "cutcop/copulas.hpp"
#include "cutcop/marginals.hpp"
#include "cutcop/rng.hpp"

namespace cutcop {

struct PointMetrics {
  Eigen::VectorXd bias;
  Eigen::VectorXd rmse;
};

// bias = mean(est) - truth, RMSE = sqrt(mean((est - truth)^2)), per column
PointMetrics point_metrics(const Eigen::MatrixXd& estimates,
                           const Eigen::VectorXd& truth);

double quantile_type7(std::vector<double> v, double p);

struct CredibleInterval {
  double lo, hi;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

// equal-tailed interval from the 2.5/97.5 percentiles (constrained scale)
CredibleInterval equal_tailed_interval(std::span<const double> draws,
                                       double level = 0.95);

// fraction of replicates whose interval contains the truth, per parameter
Eigen::VectorXd interval_coverage(const std::vector<Eigen::MatrixXd>& sample_sets,
                                  const Eigen::VectorXd& truth,
                                  double level = 0.95);

// KL(fitted || true) for a marginal by adaptive quadrature over the fitted
// quantile range, abs tol 1e-6.
double predictive_kl_marginal(const MarginalSpec& fitted,
                              const std::function<double(double)>& true_log_pdf);
double predictive_kl_marginal(const MarginalSpec& fitted,
                              const MarginalSpec& truth);

// KL(fitted || true) for a bivariate copula over [delta, 1-delta]^2 with
// delta = 1e-4: tensor Gauss-Legendre, order doubled until successive
// estimates differ by less than 1e-4.
double predictive_kl_copula(const CopulaSpec& fitted, const CopulaSpec& truth);

struct GaussianLimitDiagnostic {
  double standardized_mean_discrepancy;    // |Sigma^{-1/2} (mean - center)|
  Eigen::VectorXd cov_ratio_eigenvalues;   // eig of Sigma^{-1} SampleCov
  std::array<double, 3> tv_estimates;      // KDE-vs-normal TV on 3 projections
};

GaussianLimitDiagnostic gaussian_limit_diagnostic(const Eigen::MatrixXd& samples,
                                                  const Eigen::VectorXd& center,
                                                  const Eigen::MatrixXd& covariance,
                                                  Rng& rng);

struct MetricsReport {
  std::string method;
  int n = 0;
  int S = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> param_names;
  Eigen::VectorXd bias;
  Eigen::VectorXd rmse;
  Eigen::VectorXd coverage;  // NaN entries for point-only estimators
  std::vector<std::string> component_names;  // f1, ..., fm, copula
  Eigen::VectorXd mean_kl;
};

}  // namespace cutcop
