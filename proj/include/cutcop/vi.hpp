#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "cutcop/model.hpp"
#include "cutcop/rng.hpp"

namespace cutcop {

// Gaussian family N(mu, L L^T) with lower-triangular L, diag(L) > 0 (the
// optimizer works on log-diagonals). d1 marks the (eta1, eta2) block split:
// lambda-tilde = (mu_1, vech L_11), lambda-breve = (mu_2, vec L_21, vech L_22).
struct GaussianVI {
  Eigen::VectorXd mu;
  Eigen::MatrixXd L;
  int d1 = 0;

  int dim() const { return static_cast<int>(mu.size()); }
  static GaussianVI make(int dim, double init_scale = 0.1, int d1 = 0);

  Eigen::VectorXd sample(Rng& rng, Eigen::VectorXd* z_out = nullptr) const;
  double log_density(const Eigen::VectorXd& eta) const;
  double entropy() const;  // 0.5 log|2 pi e LL^T|
};

// lambda packing used by the optimizer and the gradient ops:
// [mu (d)] [log diag L (d)] [strict lower triangle of L, row-major]
int lambda_dim(int d);
Eigen::VectorXd pack_lambda(const GaussianVI& q);
GaussianVI unpack_lambda(const Eigen::VectorXd& lambda, int d, int d1);

struct AdadeltaState {
  double rho = 0.85;
  double eps = 1e-6;
  Eigen::VectorXd eg2;  // running squared-gradient accumulator
  Eigen::VectorXd ed2;  // running squared-update accumulator

  AdadeltaState(int dim, double rho_ = 0.85, double eps_ = 1e-6)
      : rho(rho_), eps(eps_), eg2(Eigen::VectorXd::Zero(dim)),
        ed2(Eigen::VectorXd::Zero(dim)) {}
  // returns the (ascent) update Delta-lambda for gradient g
  Eigen::VectorXd step(const Eigen::VectorXd& g);
};

struct VISettings {
  int steps = 10000;
  int samples_per_step = 1;
  double rho = 0.85;
  double eps = 1e-6;
  double init_scale = 0.1;
  // fraction of final iterates averaged into the returned parameters
  double tail_avg_frac = 0.25;
  int max_resample = 100;
};

// Monte-Carlo ELBO estimate: mean of log h(eta) - log q(eta) over draws from
// q. Non-finite log_h draws are resampled up to 10 times, then error.
double elbo_estimate(const GaussianVI& q,
                     const std::function<double(std::span<const double>)>& log_h,
                     Rng& rng, int n_samples);

// Pathwise (reparameterized) ELBO gradient in the lambda packing above, with
// the Gaussian entropy term handled analytically.
Eigen::VectorXd elbo_grad(const GaussianVI& q, const TargetFn& target, Rng& rng,
                          int n_samples);

struct VIFitResult {
  GaussianVI q;
  std::vector<double> elbo_trace;  // per-step estimates (energy + entropy)
  int steps = 0;
};

// Stochastic-gradient ascent under ADADELTA. When frozen_d1 > 0 the
// lambda-tilde block (mu_1, L_11) of `init` is held bit-identical and only
// lambda-breve is optimized.
VIFitResult fit_gaussian_vi(const TargetFn& target, int dim,
                            const VISettings& settings, Rng& rng,
                            const GaussianVI* init = nullptr, int frozen_d1 = 0);

enum class CutType { Type1, Type2Exact };

struct CutVIResult {
  GaussianVI family;  // eta ordering: Type1 = (theta, psi); Type2 = (psi, theta)
  std::vector<double> stage1_trace;
  std::vector<double> stage2_trace;
  Eigen::VectorXd frozen_mu1;  // stage-1 parameters, for the bit-identity check
  Eigen::MatrixXd frozen_L1;
};

// Two-stage cut VI: stage 1 fits the eta1 marginal against the cut target,
// stage 2 fits the conditional blocks against the full joint posterior with
// the stage-1 parameters frozen.
CutVIResult fit_cut_vi(const std::shared_ptr<const ModelData>& md, CutType type,
                       const VISettings& settings, Rng& rng);

// Per-cell location/scale family for the latent uniforms of the extended
// rank likelihood: u_ij = a_ij + (b_ij - a_ij) * Phi(delta_ij + omega^{1/2} z).
struct AuxiliaryVariationalFamily {
  Eigen::MatrixXd delta;
  Eigen::MatrixXd log_omega;
  Eigen::MatrixXd a, b;  // cell bounds from the RankData

  Eigen::MatrixXd sample_u(Rng& rng) const;
  double log_density(const Eigen::MatrixXd& u) const;
  double entropy() const;  // exact, cellwise
};

struct AugmentedVIResult {
  CutVIResult cut;  // family over (psi, theta)
  AuxiliaryVariationalFamily aux;
};

// Type-2 cut VI through the augmented posterior: stage 1 jointly fits
// q(psi) q(u) against p(r(D)|u) p(u|psi) p(psi) with O(nm) cost per step;
// stage 2 is the same conditional fit as fit_cut_vi.
AugmentedVIResult fit_augmented_type2_vi(const std::shared_ptr<const ModelData>& md,
                                         const VISettings& settings, Rng& rng);

}  // namespace cutcop
