#include "cutcop/marginals.hpp"

#include <cmath>
#include <stdexcept>

namespace cutcop {

std::string family_name(MarginalFamily f) {
  switch (f) {
    case MarginalFamily::Normal: return "normal";
    case MarginalFamily::TruncatedNormalPositive: return "truncnormal";
    case MarginalFamily::LogNormal: return "lognormal";
    case MarginalFamily::Gamma: return "gamma";
  }
  return "?";
}

MarginalFamily family_from_name(const std::string& name) {
  if (name == "normal") return MarginalFamily::Normal;
  if (name == "truncnormal") return MarginalFamily::TruncatedNormalPositive;
  if (name == "lognormal") return MarginalFamily::LogNormal;
  if (name == "gamma") return MarginalFamily::Gamma;
  throw std::domain_error("unknown marginal family: " + name);
}

void MarginalSpec::validate() const {
  if (!std::isfinite(p1) || !std::isfinite(p2))
    throw std::domain_error("marginal spec: non-finite parameter");
  if (p2 <= 0.0)
    throw std::domain_error("marginal spec: variance/rate must be positive");
  if (family == MarginalFamily::Gamma && p1 <= 0.0)
    throw std::domain_error("marginal spec: gamma shape must be positive");
}

std::array<const char*, 2> MarginalSpec::param_names() const {
  if (family == MarginalFamily::Gamma) return {"alpha", "beta"};
  return {"mu", "sigma2"};
}

double marginal_log_pdf(const MarginalSpec& spec, double y) {
  spec.validate();
  if (!std::isfinite(y)) throw std::domain_error("marginal_log_pdf: y not finite");
  if (!spec.in_support(y)) return -std::numeric_limits<double>::infinity();
  const double ly = spec.family == MarginalFamily::Normal ? 0.0 : std::log(y);
  return MarginalEval<double>(spec.family, spec.p1, spec.p2).log_pdf(y, ly);
}

double marginal_cdf(const MarginalSpec& spec, double y) {
  spec.validate();
  if (std::isnan(y)) throw std::domain_error("marginal_cdf: y is NaN");
  if (y == std::numeric_limits<double>::infinity()) return 1.0;
  if (!spec.in_support(y)) return y <= spec.support_lower() ? 0.0 : 1.0;
  const double ly = spec.family == MarginalFamily::Normal ? 0.0 : std::log(y);
  const double u = MarginalEval<double>(spec.family, spec.p1, spec.p2).cdf(y, ly);
  return std::min(1.0, std::max(0.0, u));
}

double marginal_quantile(const MarginalSpec& spec, double p) {
  spec.validate();
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("marginal_quantile: p outside (0,1)");
  const double sd = std::sqrt(spec.p2);
  switch (spec.family) {
    case MarginalFamily::Normal:
      return spec.p1 + sd * norm_quantile(p);
    case MarginalFamily::TruncatedNormalPositive: {
      // upper-tail form: F(y) = 1 - Q(z)/Q(z0), so z = -Phi^{-1}((1-p) Q(z0))
      const double q0 = 0.5 * std::erfc(-spec.p1 / (sd * kSqrt2));
      const double arg = (1.0 - p) * q0;
      if (arg <= 0.0) return spec.p1 + sd * 8.5;  // beyond double resolution
      return spec.p1 - sd * norm_quantile(arg);
    }
    case MarginalFamily::LogNormal:
      return std::exp(spec.p1 + sd * norm_quantile(p));
    case MarginalFamily::Gamma:
      return gamma_quantile(p, spec.p1, spec.p2);
  }
  return 0.0;
}

double marginal_sample(const MarginalSpec& spec, Rng& rng) {
  return marginal_quantile(spec, rng.uniform());
}

UnconstrainedParams params_to_unconstrained(const MarginalSpec& spec) {
  spec.validate();
  const auto pos = spec.positive();
  UnconstrainedParams out{};
  out.x[0] = pos[0] ? std::log(spec.p1) : spec.p1;
  out.x[1] = std::log(spec.p2);
  out.log_jacobian = (pos[0] ? out.x[0] : 0.0) + out.x[1];
  return out;
}

MarginalSpec unconstrained_to_params(MarginalFamily family,
                                     const std::array<double, 2>& x) {
  MarginalSpec spec;
  spec.family = family;
  spec.p1 = (family == MarginalFamily::Gamma) ? std::exp(x[0]) : x[0];
  spec.p2 = std::exp(x[1]);
  return spec;
}

}  // namespace cutcop
