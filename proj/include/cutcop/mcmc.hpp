#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cutcop/model.hpp"
#include "cutcop/rng.hpp"

namespace cutcop {

struct SampleSet {
  Eigen::MatrixXd draws;  // retained draws (rows), unconstrained scale
  std::vector<std::string> names;
  double acceptance_rate = 1.0;
  std::uint64_t seed = 0;
  int burn_in = 0;

  void validate() const;
  Eigen::VectorXd mean() const { return draws.colwise().mean(); }
};

struct LaplaceApprox {
  Eigen::VectorXd mode;
  Eigen::MatrixXd cov;  // SPD after jitter
};

struct OptimizationError : std::runtime_error {
  OptimizationError(const std::string& what, std::string trace_)
      : std::runtime_error(what), trace(std::move(trace_)) {}
  std::string trace;
};

struct StuckChainError : std::runtime_error {
  StuckChainError(const std::string& what, long long at)
      : std::runtime_error(what), at_step(at) {}
  long long at_step;
};

struct FindModeOptions {
  int max_iters = 600;
  double grad_tol = 1e-6;     // infinity norm of the gradient at the mode
  double fd_step = 1e-4;      // Hessian step scale, h_i = fd_step*(1+|x_i|)
  bool want_cov = true;
};

// BFGS ascent to the mode, then covariance = (-Hessian)^{-1} with the
// Hessian from central differences of the exact gradient; 1e-8 jitter added
// (escalating) until SPD.
LaplaceApprox find_mode(const TargetFn& target, const Eigen::VectorXd& init,
                        const FindModeOptions& opts = {});

// maximizer only (used by the IFM stages)
Eigen::VectorXd maximize(const TargetFn& target, const Eigen::VectorXd& init,
                         double grad_tol = 1e-6, int max_iters = 600);

// Metropolis-Hastings with a fixed Gaussian independence proposal. n_draws
// counts total steps; the first burn_in are discarded. Evaluation errors in
// proposed points reject the proposal; an error at the starting point throws.
SampleSet mh_independence(const TargetFn& target, const LaplaceApprox& proposal,
                          int n_draws, int burn_in, Rng& rng,
                          std::vector<std::string> names = {});

struct NestedSettings {
  int outer_draws = 15000;   // total stage-1 steps
  int outer_burnin = 5000;
  int inner_burnin = 100;    // per-draw stage-2 burn-in (type-2 default 1000)
  int pairs = 0;             // 0 = one inner chain per retained outer draw
  double proposal_sd_scale = 1.2;  // stage-2 proposal rescale
};

using Stage2Factory = std::function<TargetFn(std::span<const double> eta1)>;

// Algorithm: sample eta1 from the stage-1 cut target, then for each retained
// (or evenly thinned) eta1 draw run one inner independence-MH chain on the
// conditional target and keep a single draw. Inner chains start from the
// previous outer iterate's eta2; the inner proposal is computed once at the
// stage-1 mean and reused.
SampleSet nested_mcmc_cut(const TargetFn& stage1, const Stage2Factory& stage2,
                          const Eigen::VectorXd& stage1_init,
                          const Eigen::VectorXd& stage2_init,
                          const NestedSettings& settings, Rng& rng,
                          std::vector<std::string> names = {});

struct IfmResult {
  Eigen::VectorXd theta_unconstrained;
  Eigen::VectorXd psi_unconstrained;  // empty when the copula has no tau
  Eigen::VectorXd constrained;        // packed constrained-scale estimates
  double tau_hat = 0.0;               // 0 by convention for tau-less copulas
};

// Two-stage maximum likelihood: per-margin MLE, then copula MLE at the fixed
// margins. tau-less copulas get tau-hat = 0 by convention.
IfmResult ifm_fit(const std::shared_ptr<const ModelData>& md);

// moment-matched starting values on the unconstrained scale
Eigen::VectorXd moment_init_theta(const ModelData& md);
double empirical_psi_init(const ModelData& md);

}  // namespace cutcop
