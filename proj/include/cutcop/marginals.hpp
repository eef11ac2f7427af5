#pragma once

#include <array>
#include <limits>
#include <string>

#include "cutcop/rng.hpp"
#include "cutcop/special.hpp"

namespace cutcop {

enum class MarginalFamily { Normal, TruncatedNormalPositive, LogNormal, Gamma };

std::string family_name(MarginalFamily f);
MarginalFamily family_from_name(const std::string& name);

// Two-parameter families: (mu, sigma2) for the normal-type families and the
// log-normal (log-scale mean/variance), (shape, rate) for the gamma.
struct MarginalSpec {
  MarginalFamily family = MarginalFamily::Normal;
  double p1 = 0.0;
  double p2 = 1.0;

  void validate() const;
  double support_lower() const {
    return family == MarginalFamily::Normal
               ? -std::numeric_limits<double>::infinity()
               : 0.0;
  }
  bool in_support(double y) const {
    return family == MarginalFamily::Normal ? std::isfinite(y) : y > 0.0;
  }
  // parameter names for packing/reporting, e.g. {"mu","sigma2"}
  std::array<const char*, 2> param_names() const;
  // true where the parameter lives on (0, inf) and packs as its log
  std::array<bool, 2> positive() const {
    return {family == MarginalFamily::Gamma, true};
  }
};

// Per-parameter-value evaluator with hoisted constants; Scalar may be a Dual
// so that derivatives w.r.t. the parameters flow through log_pdf/cdf.
template <typename S>
class MarginalEval {
 public:
  MarginalEval(MarginalFamily family, const S& p1, const S& p2)
      : family_(family), a_(p1), b_(p2) {
    using std::lgamma;
    using std::log;
    using std::sqrt;
    switch (family_) {
      case MarginalFamily::Normal:
      case MarginalFamily::TruncatedNormalPositive:
      case MarginalFamily::LogNormal: {
        sd_ = sqrt(b_);
        inv_sd_ = 1.0 / sd_;
        lognorm_ = -0.5 * (log(b_) + kLogTwoPi);
        if (family_ == MarginalFamily::TruncatedNormalPositive) {
          using std::erfc;
          // upper-tail mass P(Y > 0) via erfc; stable for mu far below zero
          q0_ = 0.5 * erfc(-a_ * inv_sd_ * (1.0 / kSqrt2));
          lognorm_ -= log(q0_);
        }
        break;
      }
      case MarginalFamily::Gamma:
        lognorm_ = a_ * log(b_) - lgamma(a_);
        break;
    }
  }

  // log_y must equal log(y) for the positive-support families; unused for
  // the normal family (callers may pass anything there).
  S log_pdf(double y, double log_y) const {
    switch (family_) {
      case MarginalFamily::Normal: {
        const S z = (y - a_) * inv_sd_;
        return lognorm_ - 0.5 * z * z;
      }
      case MarginalFamily::TruncatedNormalPositive: {
        if (y <= 0.0) return S(-std::numeric_limits<double>::infinity());
        const S z = (y - a_) * inv_sd_;
        return lognorm_ - 0.5 * z * z;
      }
      case MarginalFamily::LogNormal: {
        if (y <= 0.0) return S(-std::numeric_limits<double>::infinity());
        const S z = (log_y - a_) * inv_sd_;
        return lognorm_ - 0.5 * z * z - log_y;
      }
      case MarginalFamily::Gamma: {
        if (y <= 0.0) return S(-std::numeric_limits<double>::infinity());
        return lognorm_ + (a_ - 1.0) * log_y - b_ * y;
      }
    }
    return S(0.0);
  }

  S cdf(double y, double log_y) const {
    switch (family_) {
      case MarginalFamily::Normal:
        return norm_cdf((y - a_) * inv_sd_);
      case MarginalFamily::TruncatedNormalPositive: {
        using std::erfc;
        if (y <= 0.0) return S(0.0);
        // (Q(z0) - Q(z)) / Q(z0) with Q the normal upper tail; free of the
        // 1 - 1 cancellation when the truncation point is deep in the tail
        const S qz = 0.5 * erfc((y - a_) * inv_sd_ * (1.0 / kSqrt2));
        return (q0_ - qz) / q0_;
      }
      case MarginalFamily::LogNormal:
        if (y <= 0.0) return S(0.0);
        return norm_cdf((log_y - a_) * inv_sd_);
      case MarginalFamily::Gamma:
        if (y <= 0.0) return S(0.0);
        return gamma_p(a_, b_ * y);
    }
    return S(0.0);
  }

 private:
  MarginalFamily family_;
  S a_, b_;
  S sd_{1.0}, inv_sd_{1.0}, lognorm_{0.0}, q0_{1.0};
};

double marginal_log_pdf(const MarginalSpec& spec, double y);
double marginal_cdf(const MarginalSpec& spec, double y);
double marginal_quantile(const MarginalSpec& spec, double p);
double marginal_sample(const MarginalSpec& spec, Rng& rng);

// Bijection to the unconstrained scale (identity for means, log for positive
// parameters). log_jacobian is the log-derivative of the inverse map at x,
// the term added to log-priors stated on the constrained scale.
struct UnconstrainedParams {
  std::array<double, 2> x;
  double log_jacobian;
};
UnconstrainedParams params_to_unconstrained(const MarginalSpec& spec);
MarginalSpec unconstrained_to_params(MarginalFamily family,
                                     const std::array<double, 2>& x);

}  // namespace cutcop
