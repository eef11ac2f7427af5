#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cutcop/copulas.hpp"
#include "cutcop/dual.hpp"
#include "cutcop/marginals.hpp"

namespace cutcop {

enum class PriorKind { Normal, HalfNormal, LogNormal, UniformTau, LogitTauNormal };

// One independent prior term per packed parameter, evaluated on the
// constrained scale; the unconstrained density picks up the transform
// Jacobian. UniformTau / LogitTauNormal double as the tau transform choice:
// tau = sigmoid(x) on (0,1), respectively tau = 2*sigmoid(x)-1 on (-1,1).
struct PriorTerm {
  PriorKind kind = PriorKind::Normal;
  double a = 0.0;
  double b = 1.0;  // scale (the paper's b in N(a, b^2))
};

struct PriorSpec {
  std::vector<PriorTerm> terms;  // aligned with the packed parameter order
};

struct Dataset {
  Eigen::MatrixXd values;
  std::vector<std::string> columns;
};

// Marginal specs + copula spec + priors. Packed parameter order is
// (theta_1, ..., theta_m, psi), all on unconstrained scales: identity for
// means, log for positive parameters, and the tau transform above for psi.
struct CopulaModel {
  std::vector<MarginalSpec> marginals;
  CopulaSpec copula;
  PriorSpec priors;

  int theta_dim() const { return 2 * static_cast<int>(marginals.size()); }
  int psi_dim() const { return copula.has_tau() ? 1 : 0; }
  int dim() const { return theta_dim() + psi_dim(); }
  void validate() const;
  std::vector<std::string> param_names() const;
};

template <typename S>
S sigmoid(const S& x) {
  using std::exp;
  if (value_of(x) >= 0.0) return 1.0 / (1.0 + exp(-x));
  const S e = exp(x);
  return e / (1.0 + e);
}

template <typename S>
S softplus(const S& x) {
  using std::exp;
  using std::log1p;
  if (value_of(x) > 0.0) return x + log1p(exp(-x));
  return log1p(exp(x));
}

template <typename S>
S prior_term_log_pdf(const PriorTerm& t, const S& x) {
  const double halflog2pi = 0.5 * kLogTwoPi;
  switch (t.kind) {
    case PriorKind::Normal: {
      const S z = (x - t.a) / t.b;
      return -std::log(t.b) - halflog2pi - 0.5 * z * z;
    }
    case PriorKind::HalfNormal: {
      using std::exp;
      const S p = exp(x);
      return std::log(2.0) - std::log(t.b) - halflog2pi -
             0.5 * (p / t.b) * (p / t.b) + x;
    }
    case PriorKind::LogNormal: {
      // log-normal prior on e^x plus Jacobian collapses to a normal in x
      const S z = (x - t.a) / t.b;
      return -std::log(t.b) - halflog2pi - 0.5 * z * z;
    }
    case PriorKind::UniformTau:
      return -softplus(x) - softplus(-x);
    case PriorKind::LogitTauNormal: {
      const S z = x / t.b;
      return -std::log(t.b) - halflog2pi - 0.5 * z * z;
    }
  }
  return S(0.0);
}

// Immutable model + dataset pair exposing all log-targets on the packed
// unconstrained scale. Shareable across threads.
class ModelData {
 public:
  ModelData(CopulaModel model, Eigen::MatrixXd values);

  const CopulaModel& model() const { return model_; }
  const Eigen::MatrixXd& values() const { return values_; }
  const RankData& ranks() const { return ranks_; }
  int n() const { return static_cast<int>(values_.rows()); }
  int m() const { return static_cast<int>(values_.cols()); }
  int theta_dim() const { return model_.theta_dim(); }
  int psi_dim() const { return model_.psi_dim(); }
  int dim() const { return model_.dim(); }

  template <typename S>
  S tau_from_psi(const S& x) const {
    if (psi_kind_ == PriorKind::LogitTauNormal) return 2.0 * sigmoid(x) - 1.0;
    return sigmoid(x);
  }
  double psi_from_tau(double tau) const;

  // constrained-scale view of a packed unconstrained point
  Eigen::VectorXd to_constrained(std::span<const double> x) const;
  Eigen::VectorXd to_unconstrained(std::span<const double> c) const;

  template <typename S>
  MarginalEval<S> margin_eval(int j, std::span<const S> theta) const {
    using std::exp;
    const auto& spec = model_.marginals[j];
    const S x1 = theta[2 * j];
    const S p1 = spec.positive()[0] ? S(exp(x1)) : x1;
    return MarginalEval<S>(spec.family, p1, exp(theta[2 * j + 1]));
  }

  template <typename S>
  S log_g1(std::span<const S> theta) const {
    S total(0.0);
    for (int j = 0; j < m(); ++j) total += log_margin_lik(j, theta);
    return total;
  }

  // single-margin likelihood term of g1 (separable across margins)
  template <typename S>
  S log_margin_lik(int j, std::span<const S> theta) const {
    const auto eval = margin_eval(j, theta);
    S total(0.0);
    for (int i = 0; i < n(); ++i)
      total += eval.log_pdf(values_(i, j), logy_(i, j));
    return total;
  }

  template <typename S>
  S log_g2(std::span<const S> x) const {
    const int mm = m();
    std::vector<MarginalEval<S>> evals;
    evals.reserve(mm);
    for (int j = 0; j < mm; ++j) evals.push_back(margin_eval(j, x));
    const S tau = psi_dim() > 0 ? tau_from_psi(x[theta_dim()]) : S(0.0);
    if (!tau_valid(value_of(tau)))
      return S(-std::numeric_limits<double>::infinity());
    if (model_.copula.family == CopulaFamily::Independence) return S(0.0);
    S total(0.0);
    std::vector<S> u(mm);
    for (int i = 0; i < n(); ++i) {
      for (int j = 0; j < mm; ++j)
        u[j] = clamp_pit(evals[j].cdf(values_(i, j), logy_(i, j)));
      total += row_copula_log_density(std::span<const S>(u), tau);
    }
    return total;
  }

  // g2 as a function of psi only, at probability-integral transforms cached
  // for a fixed theta (the nested sampler's inner-target fast path).
  Eigen::MatrixXd pit(std::span<const double> theta) const;

  template <typename S>
  S log_g2_fixed_pit(const Eigen::MatrixXd& u, const S& psi) const {
    const S tau = tau_from_psi(psi);
    if (!tau_valid(value_of(tau)))
      return S(-std::numeric_limits<double>::infinity());
    if (model_.copula.family == CopulaFamily::Independence) return S(0.0);
    S total(0.0);
    std::vector<S> row(m());
    for (int i = 0; i < static_cast<int>(u.rows()); ++i) {
      for (int j = 0; j < m(); ++j) row[j] = S(u(i, j));
      total += row_copula_log_density(std::span<const S>(row), tau);
    }
    return total;
  }

  template <typename S>
  S log_prior_theta(std::span<const S> theta) const {
    S total(0.0);
    for (int k = 0; k < theta_dim(); ++k)
      total += prior_term_log_pdf(model_.priors.terms[k], theta[k]);
    return total;
  }

  template <typename S>
  S log_prior_psi(const S& psi) const {
    if (psi_dim() == 0) return S(0.0);
    return prior_term_log_pdf(model_.priors.terms[theta_dim()], psi);
  }

  template <typename S>
  S log_joint(std::span<const S> x) const {
    const S g2 = log_g2(x);
    if (!std::isfinite(value_of(g2))) return g2;
    S total = log_g1(x) + g2 + log_prior_theta(x);
    if (psi_dim() > 0) total += log_prior_psi(x[theta_dim()]);
    return total;
  }

  template <typename S>
  S log_cut1_stage1(std::span<const S> theta) const {
    return log_g1(theta) + log_prior_theta(theta);
  }

  template <typename S>
  S log_cut2_stage1(std::span<const S> psi) const {
    const S prior = psi_dim() > 0 ? log_prior_psi(psi[0]) : S(0.0);
    if (model_.copula.family == CopulaFamily::Independence ||
        model_.copula.family == CopulaFamily::GaussianM)
      return S(rank_log_likelihood(model_.copula, ranks_)) + prior;
    const S tau = tau_from_psi(psi[0]);
    if (!tau_valid(value_of(tau)))
      return S(-std::numeric_limits<double>::infinity());
    return rank_loglik_bivariate(model_.copula.family, ranks_, tau,
                                 model_.copula.nu) +
           prior;
  }

  // conditional stage-2 targets
  template <typename S>
  S log_cond_psi_given_theta(const Eigen::MatrixXd& u, const S& psi) const {
    const S g2 = log_g2_fixed_pit(u, psi);
    if (!std::isfinite(value_of(g2))) return g2;
    return g2 + log_prior_psi(psi);
  }

  template <typename S>
  S log_cond_theta_given_psi(std::span<const S> theta, double psi) const {
    std::vector<S> x(theta.begin(), theta.end());
    if (psi_dim() > 0) x.push_back(S(psi));
    const S g2 = log_g2(std::span<const S>(x));
    if (!std::isfinite(value_of(g2))) return g2;
    return log_g1(std::span<const S>(x)) + g2 +
           log_prior_theta(std::span<const S>(x));
  }

  // joint over (psi, theta) ordering, used by the type-2 cut family
  template <typename S>
  S log_joint_psi_first(std::span<const S> xp) const {
    std::vector<S> x(dim());
    for (int k = 0; k < theta_dim(); ++k) x[k] = xp[psi_dim() + k];
    for (int k = 0; k < psi_dim(); ++k) x[theta_dim() + k] = xp[k];
    return log_joint(std::span<const S>(x));
  }

  std::vector<std::string> names_psi_first() const;

 private:
  template <typename S>
  static S clamp_pit(const S& u) {
    constexpr double lo = 1e-12, hi = 1.0 - 1e-12;
    if (value_of(u) < lo) return S(lo);
    if (value_of(u) > hi) return S(hi);
    return u;
  }

  bool tau_valid(double tau) const {
    if (model_.copula.family == CopulaFamily::GumbelBivariate)
      return tau >= 0.0 && tau < 1.0;
    return true;
  }

  template <typename S>
  S row_copula_log_density(std::span<const S> u, const S& tau) const {
    if (model_.copula.family == CopulaFamily::GaussianM) {
      S quad(0.0);
      std::vector<S> z(m());
      for (int j = 0; j < m(); ++j) z[j] = norm_quantile(u[j]);
      for (int r = 0; r < m(); ++r)
        for (int c = 0; c < m(); ++c)
          if (gm_prec_(r, c) != 0.0) quad += gm_prec_(r, c) * z[r] * z[c];
      return -0.5 * gm_logdet_ - 0.5 * quad;
    }
    return bivariate_log_density(model_.copula.family, u[0], u[1], tau,
                                 model_.copula.nu);
  }

  CopulaModel model_;
  Eigen::MatrixXd values_;
  Eigen::MatrixXd logy_;
  RankData ranks_;
  PriorKind psi_kind_ = PriorKind::UniformTau;
  Eigen::MatrixXd gm_prec_;  // R^{-1} - I for GaussianM
  double gm_logdet_ = 0.0;
};

// Type-erased log-target with gradient, the contract both inference back
// ends consume.
struct TargetFn {
  int dim = 0;
  std::function<double(std::span<const double>)> value;
  std::function<double(std::span<const double>, std::span<double>)> value_and_grad;
};

TargetFn make_joint_target(std::shared_ptr<const ModelData> md);
TargetFn make_joint_target_psi_first(std::shared_ptr<const ModelData> md);
TargetFn make_cut1_stage1_target(std::shared_ptr<const ModelData> md);
TargetFn make_cut2_stage1_target(std::shared_ptr<const ModelData> md);
TargetFn make_type1_stage2_target(std::shared_ptr<const ModelData> md,
                                  std::span<const double> theta);
TargetFn make_type2_stage2_target(std::shared_ptr<const ModelData> md,
                                  double psi);
// likelihood-only targets for the frequentist two-stage estimator
TargetFn make_margin_lik_target(std::shared_ptr<const ModelData> md, int j);
TargetFn make_g2_lik_target(std::shared_ptr<const ModelData> md,
                            std::span<const double> theta);

}  // namespace cutcop
