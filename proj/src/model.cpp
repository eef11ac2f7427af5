#include "cutcop/model.hpp"

#include <cmath>
#include <stdexcept>

namespace cutcop {

void CopulaModel::validate() const {
  if (marginals.size() < 2)
    throw std::domain_error("model: need m >= 2 marginals");
  copula.validate();
  if (copula.dim() != static_cast<int>(marginals.size()))
    throw std::domain_error("model: copula dimension != number of marginals");
  if (static_cast<int>(priors.terms.size()) != dim())
    throw std::domain_error("model: need exactly one prior term per parameter");
  for (size_t j = 0; j < marginals.size(); ++j) {
    const auto pos = marginals[j].positive();
    for (int k = 0; k < 2; ++k) {
      const auto kind = priors.terms[2 * j + k].kind;
      if (pos[k] && kind != PriorKind::HalfNormal && kind != PriorKind::LogNormal)
        throw std::domain_error(
            "model: positive parameter needs HalfNormal or LogNormal prior");
      if (!pos[k] && kind != PriorKind::Normal)
        throw std::domain_error("model: unconstrained mean needs Normal prior");
    }
  }
  if (psi_dim() == 1) {
    const auto kind = priors.terms[theta_dim()].kind;
    if (kind != PriorKind::UniformTau && kind != PriorKind::LogitTauNormal)
      throw std::domain_error("model: tau needs UniformTau or LogitTauNormal prior");
  }
}

std::vector<std::string> CopulaModel::param_names() const {
  std::vector<std::string> names;
  for (size_t j = 0; j < marginals.size(); ++j) {
    const auto pn = marginals[j].param_names();
    names.push_back(std::string(pn[0]) + "_" + std::to_string(j + 1));
    names.push_back(std::string(pn[1]) + "_" + std::to_string(j + 1));
  }
  if (psi_dim() == 1) names.emplace_back("tau");
  return names;
}

ModelData::ModelData(CopulaModel model, Eigen::MatrixXd values)
    : model_(std::move(model)), values_(std::move(values)) {
  model_.validate();
  if (psi_dim() == 1) psi_kind_ = model_.priors.terms[theta_dim()].kind;
  const int nn = static_cast<int>(values_.rows());
  int mm = static_cast<int>(values_.cols());
  if (nn == 0) {
    // empty dataset: targets reduce to the prior
    mm = static_cast<int>(model_.marginals.size());
    values_.resize(0, mm);
    logy_.resize(0, mm);
    return;
  }
  if (nn < 2) throw std::domain_error("dataset: need n >= 2");
  if (mm != static_cast<int>(model_.marginals.size()))
    throw std::domain_error("dataset: column count != number of marginals");
  logy_.resize(nn, mm);
  for (int j = 0; j < mm; ++j) {
    const bool positive_support =
        model_.marginals[j].family != MarginalFamily::Normal;
    for (int i = 0; i < nn; ++i) {
      const double y = values_(i, j);
      if (!std::isfinite(y))
        throw std::domain_error("dataset: non-finite value");
      if (positive_support && y <= 0.0)
        throw std::domain_error("dataset: value outside marginal support");
      logy_(i, j) = positive_support ? std::log(y) : 0.0;
    }
  }
  ranks_ = compute_ranks(values_);
  if (model_.copula.family == CopulaFamily::GaussianM) {
    Eigen::LLT<Eigen::MatrixXd> llt(model_.copula.corr);
    gm_prec_ = llt.solve(Eigen::MatrixXd::Identity(mm, mm)) -
               Eigen::MatrixXd::Identity(mm, mm);
    gm_logdet_ = 0.0;
    for (int i = 0; i < mm; ++i)
      gm_logdet_ += 2.0 * std::log(llt.matrixL()(i, i));
  }
}

double ModelData::psi_from_tau(double tau) const {
  if (psi_kind_ == PriorKind::LogitTauNormal) {
    const double p = 0.5 * (tau + 1.0);
    return std::log(p / (1.0 - p));
  }
  return std::log(tau / (1.0 - tau));
}

Eigen::VectorXd ModelData::to_constrained(std::span<const double> x) const {
  Eigen::VectorXd c(dim());
  for (int j = 0; j < m(); ++j) {
    const auto pos = model_.marginals[j].positive();
    c[2 * j] = pos[0] ? std::exp(x[2 * j]) : x[2 * j];
    c[2 * j + 1] = std::exp(x[2 * j + 1]);
  }
  if (psi_dim() == 1) c[theta_dim()] = tau_from_psi(x[theta_dim()]);
  return c;
}

Eigen::VectorXd ModelData::to_unconstrained(std::span<const double> c) const {
  Eigen::VectorXd x(dim());
  for (int j = 0; j < m(); ++j) {
    const auto pos = model_.marginals[j].positive();
    x[2 * j] = pos[0] ? std::log(c[2 * j]) : c[2 * j];
    x[2 * j + 1] = std::log(c[2 * j + 1]);
  }
  if (psi_dim() == 1) x[theta_dim()] = psi_from_tau(c[theta_dim()]);
  return x;
}

Eigen::MatrixXd ModelData::pit(std::span<const double> theta) const {
  Eigen::MatrixXd u(n(), m());
  for (int j = 0; j < m(); ++j) {
    const auto eval = margin_eval<double>(j, theta);
    for (int i = 0; i < n(); ++i) {
      const double v = eval.cdf(values_(i, j), logy_(i, j));
      u(i, j) = std::min(1.0 - 1e-12, std::max(1e-12, v));
    }
  }
  return u;
}

std::vector<std::string> ModelData::names_psi_first() const {
  auto names = model_.param_names();
  std::vector<std::string> out;
  if (psi_dim() == 1) out.push_back(names.back());
  out.insert(out.end(), names.begin(), names.begin() + theta_dim());
  return out;
}

namespace {

template <typename F>
TargetFn wrap_target(int dim, F f) {
  TargetFn t;
  t.dim = dim;
  t.value = [f](std::span<const double> x) { return f(x); };
  t.value_and_grad = [f](std::span<const double> x, std::span<double> g) {
    return gradient(f, x, g);
  };
  return t;
}

}  // namespace

TargetFn make_joint_target(std::shared_ptr<const ModelData> md) {
  return wrap_target(md->dim(), [md]<typename S>(std::span<const S> x) {
    return md->log_joint(x);
  });
}

TargetFn make_joint_target_psi_first(std::shared_ptr<const ModelData> md) {
  return wrap_target(md->dim(), [md]<typename S>(std::span<const S> x) {
    return md->log_joint_psi_first(x);
  });
}

TargetFn make_cut1_stage1_target(std::shared_ptr<const ModelData> md) {
  return wrap_target(md->theta_dim(), [md]<typename S>(std::span<const S> x) {
    return md->log_cut1_stage1(x);
  });
}

TargetFn make_cut2_stage1_target(std::shared_ptr<const ModelData> md) {
  return wrap_target(md->psi_dim(), [md]<typename S>(std::span<const S> x) {
    return md->log_cut2_stage1(x);
  });
}

TargetFn make_type1_stage2_target(std::shared_ptr<const ModelData> md,
                                  std::span<const double> theta) {
  auto u = std::make_shared<Eigen::MatrixXd>(md->pit(theta));
  return wrap_target(md->psi_dim(), [md, u]<typename S>(std::span<const S> x) {
    return md->log_cond_psi_given_theta(*u, x[0]);
  });
}

TargetFn make_type2_stage2_target(std::shared_ptr<const ModelData> md,
                                  double psi) {
  return wrap_target(md->theta_dim(),
                     [md, psi]<typename S>(std::span<const S> x) {
                       return md->log_cond_theta_given_psi(x, psi);
                     });
}

TargetFn make_margin_lik_target(std::shared_ptr<const ModelData> md, int j) {
  // operates on the 2-vector of margin-j parameters
  return wrap_target(2, [md, j]<typename S>(std::span<const S> xj) {
    std::vector<S> theta(md->theta_dim(), S(0.0));
    theta[2 * j] = xj[0];
    theta[2 * j + 1] = xj[1];
    return md->log_margin_lik(j, std::span<const S>(theta));
  });
}

TargetFn make_g2_lik_target(std::shared_ptr<const ModelData> md,
                            std::span<const double> theta) {
  auto u = std::make_shared<Eigen::MatrixXd>(md->pit(theta));
  return wrap_target(md->psi_dim(), [md, u]<typename S>(std::span<const S> x) {
    return md->log_g2_fixed_pit(*u, x[0]);
  });
}

}  // namespace cutcop
