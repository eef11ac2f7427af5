#include "cutcop/vi.hpp"

#include <cmath>
#include <sstream>

namespace cutcop {

GaussianVI GaussianVI::make(int dim, double init_scale, int d1) {
  GaussianVI q;
  q.mu = Eigen::VectorXd::Zero(dim);
  q.L = init_scale * Eigen::MatrixXd::Identity(dim, dim);
  q.d1 = d1;
  return q;
}

Eigen::VectorXd GaussianVI::sample(Rng& rng, Eigen::VectorXd* z_out) const {
  Eigen::VectorXd z(dim());
  for (int i = 0; i < dim(); ++i) z[i] = rng.normal();
  if (z_out) *z_out = z;
  return mu + L.triangularView<Eigen::Lower>() * z;
}

double GaussianVI::log_density(const Eigen::VectorXd& eta) const {
  const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(eta - mu);
  double logdet = 0.0;
  for (int i = 0; i < dim(); ++i) logdet += std::log(L(i, i));
  return -0.5 * dim() * kLogTwoPi - logdet - 0.5 * z.squaredNorm();
}

double GaussianVI::entropy() const {
  double logdet = 0.0;
  for (int i = 0; i < dim(); ++i) logdet += std::log(L(i, i));
  return 0.5 * dim() * (kLogTwoPi + 1.0) + logdet;
}

int lambda_dim(int d) { return 2 * d + d * (d - 1) / 2; }

Eigen::VectorXd pack_lambda(const GaussianVI& q) {
  const int d = q.dim();
  Eigen::VectorXd lam(lambda_dim(d));
  lam.head(d) = q.mu;
  for (int i = 0; i < d; ++i) lam[d + i] = std::log(q.L(i, i));
  int k = 2 * d;
  for (int i = 1; i < d; ++i)
    for (int j = 0; j < i; ++j) lam[k++] = q.L(i, j);
  return lam;
}

GaussianVI unpack_lambda(const Eigen::VectorXd& lam, int d, int d1) {
  GaussianVI q;
  q.d1 = d1;
  q.mu = lam.head(d);
  q.L = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) q.L(i, i) = std::exp(lam[d + i]);
  int k = 2 * d;
  for (int i = 1; i < d; ++i)
    for (int j = 0; j < i; ++j) q.L(i, j) = lam[k++];
  return q;
}

Eigen::VectorXd AdadeltaState::step(const Eigen::VectorXd& g) {
  eg2 = rho * eg2 + (1.0 - rho) * g.array().square().matrix();
  const Eigen::ArrayXd rate =
      ((ed2.array() + eps) / (eg2.array() + eps)).sqrt();
  const Eigen::VectorXd delta = (rate * g.array()).matrix();
  ed2 = rho * ed2 + (1.0 - rho) * delta.array().square().matrix();
  return delta;
}

double elbo_estimate(const GaussianVI& q,
                     const std::function<double(std::span<const double>)>& log_h,
                     Rng& rng, int n_samples) {
  double acc = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    double v = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd eta;
    int attempt = 0;
    for (; attempt < 10; ++attempt) {
      eta = q.sample(rng);
      v = log_h(std::span<const double>(eta.data(), eta.size()));
      if (std::isfinite(v)) break;
    }
    if (!std::isfinite(v))
      throw std::runtime_error("elbo_estimate: log_h non-finite after 10 resamples");
    acc += v - q.log_density(eta);
  }
  return acc / n_samples;
}

namespace {

// one pathwise gradient accumulation; returns the per-sample ELBO estimate
// (energy + analytic entropy)
double accumulate_pathwise(const GaussianVI& q, const TargetFn& target,
                           Rng& rng, int max_resample, Eigen::VectorXd& g_mu,
                           Eigen::MatrixXd& g_L) {
  const int d = q.dim();
  Eigen::VectorXd z(d), eta(d), g(d);
  double v = -std::numeric_limits<double>::infinity();
  bool ok = false;
  for (int attempt = 0; attempt < max_resample; ++attempt) {
    eta = q.sample(rng, &z);
    try {
      v = target.value_and_grad(std::span<const double>(eta.data(), d),
                                std::span<double>(g.data(), d));
    } catch (const std::exception&) {
      continue;
    }
    if (std::isfinite(v) && g.allFinite()) {
      ok = true;
      break;
    }
  }
  if (!ok)
    throw std::runtime_error("fit_gaussian_vi: target non-finite after resampling");
  g_mu += g;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) g_L(i, j) += g[i] * z[j];
  return v + q.entropy();
}

Eigen::VectorXd assemble_lambda_grad(const GaussianVI& q,
                                     const Eigen::VectorXd& g_mu,
                                     const Eigen::MatrixXd& g_L) {
  const int d = q.dim();
  Eigen::VectorXd lam_g(lambda_dim(d));
  lam_g.head(d) = g_mu;
  // entropy contributes d/dL_ii [sum log L_ii] = 1/L_ii; on the log-diagonal
  // scale the chain rule multiplies by L_ii.
  for (int i = 0; i < d; ++i) lam_g[d + i] = g_L(i, i) * q.L(i, i) + 1.0;
  int k = 2 * d;
  for (int i = 1; i < d; ++i)
    for (int j = 0; j < i; ++j) lam_g[k++] = g_L(i, j);
  return lam_g;
}

void freeze_block(const GaussianVI& ref, int d1, Eigen::VectorXd& lam) {
  const int d = ref.dim();
  for (int i = 0; i < d1; ++i) {
    lam[i] = ref.mu[i];
    lam[d + i] = std::log(ref.L(i, i));
  }
  int k = 2 * d;
  for (int i = 1; i < d; ++i)
    for (int j = 0; j < i; ++j) {
      if (i < d1) lam[k] = ref.L(i, j);
      ++k;
    }
}

void zero_frozen_grad(int d, int d1, Eigen::VectorXd& g) {
  for (int i = 0; i < d1; ++i) {
    g[i] = 0.0;
    g[d + i] = 0.0;
  }
  int k = 2 * d;
  for (int i = 1; i < d; ++i)
    for (int j = 0; j < i; ++j) {
      if (i < d1) g[k] = 0.0;
      ++k;
    }
}

}  // namespace

Eigen::VectorXd elbo_grad(const GaussianVI& q, const TargetFn& target, Rng& rng,
                          int n_samples) {
  const int d = q.dim();
  Eigen::VectorXd g_mu = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd g_L = Eigen::MatrixXd::Zero(d, d);
  for (int s = 0; s < n_samples; ++s)
    accumulate_pathwise(q, target, rng, 100, g_mu, g_L);
  g_mu /= n_samples;
  g_L /= n_samples;
  return assemble_lambda_grad(q, g_mu, g_L);
}

VIFitResult fit_gaussian_vi(const TargetFn& target, int dim,
                            const VISettings& st, Rng& rng,
                            const GaussianVI* init, int frozen_d1) {
  GaussianVI q = init ? *init : GaussianVI::make(dim, st.init_scale);
  const GaussianVI ref = q;  // frozen-block reference
  Eigen::VectorXd lam = pack_lambda(q);
  AdadeltaState ada(static_cast<int>(lam.size()), st.rho, st.eps);
  VIFitResult out;
  out.elbo_trace.reserve(st.steps);

  const int tail_start =
      st.tail_avg_frac > 0.0
          ? st.steps - std::max(1, static_cast<int>(st.tail_avg_frac * st.steps))
          : st.steps;
  Eigen::VectorXd lam_avg = Eigen::VectorXd::Zero(lam.size());
  int avg_count = 0;

  Eigen::VectorXd g_mu(dim);
  Eigen::MatrixXd g_L(dim, dim);
  for (int step = 0; step < st.steps; ++step) {
    g_mu.setZero();
    g_L.setZero();
    double elbo = 0.0;
    for (int s = 0; s < st.samples_per_step; ++s)
      elbo += accumulate_pathwise(q, target, rng, st.max_resample, g_mu, g_L);
    elbo /= st.samples_per_step;
    g_mu /= st.samples_per_step;
    g_L /= st.samples_per_step;
    Eigen::VectorXd lam_g = assemble_lambda_grad(q, g_mu, g_L);
    if (frozen_d1 > 0) zero_frozen_grad(dim, frozen_d1, lam_g);
    lam += ada.step(lam_g);
    if (frozen_d1 > 0) freeze_block(ref, frozen_d1, lam);
    if (!lam.allFinite()) {
      std::ostringstream trace;
      trace << "divergence at step " << step << ", last elbo " << elbo;
      throw std::runtime_error("fit_gaussian_vi: " + trace.str());
    }
    q = unpack_lambda(lam, dim, q.d1);
    out.elbo_trace.push_back(elbo);
    if (step >= tail_start) {
      lam_avg += lam;
      ++avg_count;
    }
  }
  if (avg_count > 0) {
    lam = lam_avg / avg_count;
    if (frozen_d1 > 0) freeze_block(ref, frozen_d1, lam);
    q = unpack_lambda(lam, dim, q.d1);
  }
  if (frozen_d1 > 0) {
    // restore the lambda-tilde block bit-exactly
    q.mu.head(frozen_d1) = ref.mu.head(frozen_d1);
    q.L.topLeftCorner(frozen_d1, frozen_d1) =
        ref.L.topLeftCorner(frozen_d1, frozen_d1);
  }
  out.q = q;
  out.steps = st.steps;
  return out;
}

namespace {

GaussianVI stack_family(const GaussianVI& q1, int d2, double init_scale) {
  const int d1 = q1.dim();
  GaussianVI q;
  q.d1 = d1;
  q.mu = Eigen::VectorXd::Zero(d1 + d2);
  q.mu.head(d1) = q1.mu;
  q.L = Eigen::MatrixXd::Zero(d1 + d2, d1 + d2);
  q.L.topLeftCorner(d1, d1) = q1.L;
  q.L.bottomRightCorner(d2, d2) = init_scale * Eigen::MatrixXd::Identity(d2, d2);
  return q;
}

}  // namespace

CutVIResult fit_cut_vi(const std::shared_ptr<const ModelData>& md, CutType type,
                       const VISettings& st, Rng& rng) {
  if (type == CutType::Type2Exact && md->m() > 10)
    throw std::domain_error("fit_cut_vi: exact rank likelihood capped at m <= 10");
  const int d1 = type == CutType::Type1 ? md->theta_dim() : md->psi_dim();
  const int d2 = md->dim() - d1;
  if (d1 == 0)
    throw std::domain_error("fit_cut_vi: stage-1 block is empty");
  const TargetFn stage1 = type == CutType::Type1
                              ? make_cut1_stage1_target(md)
                              : make_cut2_stage1_target(md);
  Rng rng1 = rng.derive({11});
  Rng rng2 = rng.derive({12});
  VIFitResult fit1 = fit_gaussian_vi(stage1, d1, st, rng1);

  GaussianVI q = stack_family(fit1.q, d2, st.init_scale);
  const TargetFn joint = type == CutType::Type1
                             ? make_joint_target(md)
                             : make_joint_target_psi_first(md);
  VIFitResult fit2 = fit_gaussian_vi(joint, d1 + d2, st, rng2, &q, d1);

  CutVIResult out;
  out.family = fit2.q;
  out.family.d1 = d1;
  out.stage1_trace = std::move(fit1.elbo_trace);
  out.stage2_trace = std::move(fit2.elbo_trace);
  out.frozen_mu1 = fit1.q.mu;
  out.frozen_L1 = fit1.q.L;
  return out;
}

Eigen::MatrixXd AuxiliaryVariationalFamily::sample_u(Rng& rng) const {
  const int n = static_cast<int>(delta.rows());
  const int m = static_cast<int>(delta.cols());
  Eigen::MatrixXd u(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      const double zt =
          delta(i, j) + std::exp(0.5 * log_omega(i, j)) * rng.normal();
      u(i, j) = a(i, j) + (b(i, j) - a(i, j)) * value_of(norm_cdf(zt));
    }
  return u;
}

double AuxiliaryVariationalFamily::log_density(const Eigen::MatrixXd& u) const {
  double total = 0.0;
  for (int i = 0; i < u.rows(); ++i)
    for (int j = 0; j < u.cols(); ++j) {
      const double w = b(i, j) - a(i, j);
      const double frac = (u(i, j) - a(i, j)) / w;
      if (!(frac > 0.0 && frac < 1.0))
        return -std::numeric_limits<double>::infinity();
      const double zt = norm_quantile(frac);
      const double omega = std::exp(log_omega(i, j));
      const double zc = zt - delta(i, j);
      total += -0.5 * std::log(omega) - 0.5 * zc * zc / omega - std::log(w) +
               0.5 * zt * zt;  // phi(zt;delta,omega) / (w * phi(zt;0,1))
    }
  return total;
}

double AuxiliaryVariationalFamily::entropy() const {
  double total = 0.0;
  for (int i = 0; i < delta.rows(); ++i)
    for (int j = 0; j < delta.cols(); ++j) {
      const double omega = std::exp(log_omega(i, j));
      const double d = delta(i, j);
      total += 0.5 * log_omega(i, j) + 0.5 + std::log(b(i, j) - a(i, j)) -
               0.5 * (d * d + omega);
    }
  return total;
}

AugmentedVIResult fit_augmented_type2_vi(const std::shared_ptr<const ModelData>& md,
                                         const VISettings& st, Rng& rng) {
  const auto& copula = md->model().copula;
  const int n = md->n();
  const int m = md->m();
  if (m > 50)
    throw std::domain_error("fit_augmented_type2_vi: m > 50");
  const bool bivariate = copula.has_tau();
  if (!bivariate && copula.family != CopulaFamily::Independence &&
      copula.family != CopulaFamily::GaussianM)
    throw std::domain_error("fit_augmented_type2_vi: unsupported copula");
  const int dpsi = md->psi_dim();
  const RankData& rd = md->ranks();

  AuxiliaryVariationalFamily aux;
  aux.delta = Eigen::MatrixXd::Zero(n, m);
  aux.log_omega = Eigen::MatrixXd::Zero(n, m);
  aux.a = rd.a;
  aux.b = rd.b;

  GaussianVI qpsi = GaussianVI::make(std::max(dpsi, 0), st.init_scale);

  // GaussianM precision offset for the hand-coded latent gradient
  Eigen::MatrixXd gm_prec;
  double gm_logdet = 0.0;
  if (copula.family == CopulaFamily::GaussianM) {
    Eigen::LLT<Eigen::MatrixXd> llt(copula.corr);
    gm_prec = llt.solve(Eigen::MatrixXd::Identity(m, m));
    for (int i = 0; i < m; ++i)
      gm_logdet += 2.0 * std::log(llt.matrixL()(i, i));
  }

  // lambda layout: [mu_psi, logdiagL_psi, lower_psi, delta (n*m), logomega (n*m)]
  const int psi_lam = dpsi > 0 ? lambda_dim(dpsi) : 0;
  const int total_dim = psi_lam + 2 * n * m;
  Eigen::VectorXd lam(total_dim);
  if (dpsi > 0) lam.head(psi_lam) = pack_lambda(qpsi);
  lam.segment(psi_lam, n * m).setZero();
  lam.tail(n * m).setZero();

  AdadeltaState ada(total_dim, st.rho, st.eps);
  Rng rng1 = rng.derive({21});
  Rng rng2 = rng.derive({22});
  std::vector<double> trace;
  trace.reserve(st.steps);

  const int tail_start =
      st.tail_avg_frac > 0.0
          ? st.steps - std::max(1, static_cast<int>(st.tail_avg_frac * st.steps))
          : st.steps;
  Eigen::VectorXd lam_avg = Eigen::VectorXd::Zero(total_dim);
  int avg_count = 0;

  Eigen::MatrixXd zmat(n, m), umat(n, m), du(n, m);
  Eigen::VectorXd zrow(m);
  for (int step = 0; step < st.steps; ++step) {
    // unpack current lambda
    if (dpsi > 0) qpsi = unpack_lambda(lam.head(psi_lam), dpsi, 0);
    Eigen::Map<const Eigen::MatrixXd> delta(lam.data() + psi_lam, n, m);
    Eigen::Map<const Eigen::MatrixXd> lomega(lam.data() + psi_lam + n * m, n, m);

    double energy = 0.0;
    Eigen::VectorXd g_lam = Eigen::VectorXd::Zero(total_dim);
    bool ok = false;
    for (int attempt = 0; attempt < st.max_resample && !ok; ++attempt) {
      g_lam.setZero();
      energy = 0.0;
      // draw psi and the latent cells
      Eigen::VectorXd zpsi(dpsi), psi(dpsi);
      if (dpsi > 0) psi = qpsi.sample(rng1, &zpsi);
      const double psi0 = dpsi > 0 ? psi[0] : 0.0;
      const double tau = dpsi > 0 ? md->tau_from_psi(psi0) : 0.0;
      if (copula.family == CopulaFamily::GumbelBivariate && tau <= 0.0)
        continue;  // outside the Gumbel domain; resample
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          const double z = rng1.normal();
          const double zt = delta(i, j) + std::exp(0.5 * lomega(i, j)) * z;
          zmat(i, j) = z;
          umat(i, j) = rd.a(i, j) +
                       (rd.b(i, j) - rd.a(i, j)) * value_of(norm_cdf(zt));
        }
      double dpsi_acc = 0.0;
      bool finite = true;
      if (copula.family == CopulaFamily::GaussianM) {
        energy -= 0.5 * n * gm_logdet;
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < m; ++j) zrow[j] = norm_quantile(umat(i, j));
          const Eigen::VectorXd pz = gm_prec * zrow;
          energy -= 0.5 * (zrow.dot(pz) - zrow.squaredNorm());
          for (int j = 0; j < m; ++j)
            du(i, j) = -(pz[j] - zrow[j]) / value_of(norm_pdf(zrow[j]));
        }
      } else if (copula.family == CopulaFamily::Independence) {
        du.setZero();
      } else {
        for (int i = 0; i < n && finite; ++i) {
          Dual<3> u1 = Dual<3>::seed(umat(i, 0), 0);
          Dual<3> u2 = Dual<3>::seed(umat(i, 1), 1);
          Dual<3> ps = Dual<3>::seed(psi0, 2);
          const Dual<3> t = md->tau_from_psi(ps);
          const Dual<3> lc =
              bivariate_log_density(copula.family, u1, u2, t, copula.nu);
          if (!std::isfinite(lc.v)) {
            finite = false;
            break;
          }
          energy += lc.v;
          du(i, 0) = lc.d[0];
          du(i, 1) = lc.d[1];
          dpsi_acc += lc.d[2];
        }
      }
      if (!finite) continue;
      if (dpsi > 0) {
        Dual<1> ps = Dual<1>::seed(psi0, 0);
        const Dual<1> lp = md->log_prior_psi(ps);
        energy += lp.v;
        dpsi_acc += lp.d[0];
        // psi-block gradient with analytic Gaussian entropy
        Eigen::VectorXd g_mu = Eigen::VectorXd::Zero(dpsi);
        Eigen::MatrixXd g_L = Eigen::MatrixXd::Zero(dpsi, dpsi);
        g_mu[0] = dpsi_acc;
        g_L(0, 0) = dpsi_acc * zpsi[0];
        Eigen::VectorXd gq = assemble_lambda_grad(qpsi, g_mu, g_L);
        g_lam.head(psi_lam) = gq;
      }
      // latent-cell gradients (pathwise energy + analytic entropy)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          const double w = rd.b(i, j) - rd.a(i, j);
          const double sd = std::exp(0.5 * lomega(i, j));
          const double zt = delta(i, j) + sd * zmat(i, j);
          const double dudzt = w * value_of(norm_pdf(zt));
          const double omega = sd * sd;
          const int kk = psi_lam + j * n + i;
          g_lam[kk] = du(i, j) * dudzt - delta(i, j);
          g_lam[psi_lam + n * m + j * n + i] =
              du(i, j) * dudzt * zmat(i, j) * 0.5 * sd +
              (0.5 - 0.5 * omega);
        }
      ok = true;
      double elbo = energy;
      if (dpsi > 0) elbo += qpsi.entropy();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          const double dd = delta(i, j);
          elbo += 0.5 * lomega(i, j) + 0.5 + std::log(rd.b(i, j) - rd.a(i, j)) -
                  0.5 * (dd * dd + std::exp(lomega(i, j)));
        }
      trace.push_back(elbo);
    }
    if (!ok)
      throw std::runtime_error("fit_augmented_type2_vi: resampling exhausted");
    lam += ada.step(g_lam);
    if (!lam.allFinite())
      throw std::runtime_error("fit_augmented_type2_vi: divergence");
    if (step >= tail_start) {
      lam_avg += lam;
      ++avg_count;
    }
  }
  if (avg_count > 0) lam = lam_avg / avg_count;

  AugmentedVIResult out;
  out.aux = aux;
  out.aux.delta = Eigen::Map<const Eigen::MatrixXd>(lam.data() + psi_lam, n, m);
  out.aux.log_omega =
      Eigen::Map<const Eigen::MatrixXd>(lam.data() + psi_lam + n * m, n, m);
  GaussianVI q1 = dpsi > 0 ? unpack_lambda(lam.head(psi_lam), dpsi, 0)
                           : GaussianVI::make(0, st.init_scale);
  out.cut.stage1_trace = std::move(trace);

  // stage 2: conditional q(theta | psi) against the joint, psi block frozen
  GaussianVI q = stack_family(q1, md->theta_dim(), st.init_scale);
  const TargetFn joint = make_joint_target_psi_first(md);
  VIFitResult fit2 = fit_gaussian_vi(joint, md->dim(), st, rng2, &q, dpsi);
  out.cut.family = fit2.q;
  out.cut.family.d1 = dpsi;
  out.cut.stage2_trace = std::move(fit2.elbo_trace);
  out.cut.frozen_mu1 = q1.mu;
  out.cut.frozen_L1 = q1.L;
  return out;
}

}  // namespace cutcop
