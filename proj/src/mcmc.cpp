#include "cutcop/mcmc.hpp"

#include <cmath>
#include <sstream>

namespace cutcop {

void SampleSet::validate() const {
  if (!draws.allFinite())
    throw std::runtime_error("SampleSet: non-finite draws");
  if (!(acceptance_rate > 0.0 && acceptance_rate <= 1.0))
    throw std::runtime_error("SampleSet: acceptance rate outside (0,1]");
}

namespace {

double guarded_value(const TargetFn& target, std::span<const double> x) {
  try {
    return target.value(x);
  } catch (const std::exception&) {
    // proposals into numerically invalid regions are rejected
    return -std::numeric_limits<double>::infinity();
  }
}

double guarded_value_and_grad(const TargetFn& target, std::span<const double> x,
                              std::span<double> g) {
  try {
    return target.value_and_grad(x, g);
  } catch (const std::exception&) {
    return -std::numeric_limits<double>::infinity();
  }
}

struct BfgsResult {
  Eigen::VectorXd x;
  Eigen::VectorXd grad;
  double f;
  int iters;
  bool converged;
};

// Ascent with BFGS inverse-Hessian updates and Armijo backtracking. Stops
// early (converged = false) once steps fall below floating-point resolution
// of the objective; the caller polishes with Newton on the gradient.
BfgsResult bfgs_ascent(const TargetFn& target, const Eigen::VectorXd& init,
                       double grad_tol, int max_iters) {
  const int d = static_cast<int>(init.size());
  Eigen::VectorXd x = init, g(d);
  double f = target.value_and_grad(std::span<const double>(x.data(), d),
                                   std::span<double>(g.data(), d));
  if (!std::isfinite(f))
    throw OptimizationError("find_mode: target not finite at init", "");
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);  // inverse Hessian of -f
  for (int it = 0; it < max_iters; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= grad_tol)
      return {x, g, f, it, true};
    Eigen::VectorXd p = H * g;  // ascent direction
    if (p.dot(g) <= 0.0) {
      H.setIdentity();
      p = g;
    }
    double t = 1.0;
    const double slope = p.dot(g);
    Eigen::VectorXd xn(d), gn(d);
    double fn = -std::numeric_limits<double>::infinity();
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      xn = x + t * p;
      fn = guarded_value_and_grad(target, std::span<const double>(xn.data(), d),
                                  std::span<double>(gn.data(), d));
      if (std::isfinite(fn) && gn.allFinite() && fn >= f + 1e-4 * t * slope) {
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved || t * p.lpNorm<Eigen::Infinity>() <
                      1e-13 * (1.0 + x.lpNorm<Eigen::Infinity>()))
      return {x, g, f, it, false};
    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd yv = -(gn - g);  // gradient change of -f
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const Eigen::VectorXd Hy = H * yv;
      const double yHy = yv.dot(Hy);
      H += ((sy + yHy) / (sy * sy)) * (s * s.transpose()) -
           (Hy * s.transpose() + s * Hy.transpose()) / sy;
    }
    x = xn;
    g = gn;
    f = fn;
  }
  return {x, g, f, max_iters, g.lpNorm<Eigen::Infinity>() <= grad_tol};
}

Eigen::MatrixXd fd_hessian(const TargetFn& target, const Eigen::VectorXd& x,
                           double fd_step) {
  const int d = static_cast<int>(x.size());
  Eigen::MatrixXd hess(d, d);
  Eigen::VectorXd gp(d), gm(d), xp(d);
  for (int i = 0; i < d; ++i) {
    const double h = fd_step * (1.0 + std::fabs(x[i]));
    xp = x;
    xp[i] += h;
    target.value_and_grad(std::span<const double>(xp.data(), d),
                          std::span<double>(gp.data(), d));
    xp[i] = x[i] - h;
    target.value_and_grad(std::span<const double>(xp.data(), d),
                          std::span<double>(gm.data(), d));
    hess.col(i) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

// Damped Newton iterations on the gradient; immune to objective-value
// roundoff and ravine overshoot.
BfgsResult newton_polish(const TargetFn& target, BfgsResult state,
                         double grad_tol, double fd_step) {
  const int d = static_cast<int>(state.x.size());
  for (int it = 0; it < 60 && state.grad.lpNorm<Eigen::Infinity>() > grad_tol;
       ++it) {
    Eigen::MatrixXd neg_hess = -fd_hessian(target, state.x, fd_step);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_hess);
    if (ldlt.info() != Eigen::Success) break;
    const Eigen::VectorXd step = ldlt.solve(state.grad);
    if (!step.allFinite()) break;
    const double gnorm = state.grad.lpNorm<Eigen::Infinity>();
    bool improved = false;
    double t = 1.0;
    Eigen::VectorXd xn(d), gn(d);
    for (int ls = 0; ls < 25; ++ls) {
      xn = state.x + t * step;
      const double fn =
          guarded_value_and_grad(target, std::span<const double>(xn.data(), d),
                                 std::span<double>(gn.data(), d));
      if (std::isfinite(fn) && gn.allFinite() &&
          gn.lpNorm<Eigen::Infinity>() < gnorm) {
        state.x = xn;
        state.grad = gn;
        state.f = fn;
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved) break;
  }
  state.converged = state.grad.lpNorm<Eigen::Infinity>() <= grad_tol;
  return state;
}

BfgsResult ascend(const TargetFn& target, const Eigen::VectorXd& init,
                  double grad_tol, int max_iters, double fd_step) {
  BfgsResult res = bfgs_ascent(target, init, grad_tol, max_iters);
  if (!res.converged) res = newton_polish(target, res, grad_tol, fd_step);
  if (!res.converged) {
    std::ostringstream trace;
    trace << "stalled at f=" << res.f
          << ", |g|_inf=" << res.grad.lpNorm<Eigen::Infinity>() << " after "
          << res.iters << " BFGS iters + polish";
    throw OptimizationError("find_mode: no convergence", trace.str());
  }
  return res;
}

}  // namespace

Eigen::VectorXd maximize(const TargetFn& target, const Eigen::VectorXd& init,
                         double grad_tol, int max_iters) {
  return ascend(target, init, grad_tol, max_iters, 1e-4).x;
}

LaplaceApprox find_mode(const TargetFn& target, const Eigen::VectorXd& init,
                        const FindModeOptions& opts) {
  const int d = static_cast<int>(init.size());
  const BfgsResult res =
      ascend(target, init, opts.grad_tol, opts.max_iters, opts.fd_step);
  LaplaceApprox la;
  la.mode = res.x;
  if (!opts.want_cov) return la;
  Eigen::MatrixXd neg_hess = -fd_hessian(target, res.x, opts.fd_step);
  double jitter = 1e-8;
  for (int attempt = 0; attempt < 40; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(neg_hess);
    if (llt.info() == Eigen::Success) {
      la.cov = llt.solve(Eigen::MatrixXd::Identity(d, d));
      return la;
    }
    neg_hess += jitter * Eigen::MatrixXd::Identity(d, d);
    jitter *= 10.0;
  }
  throw OptimizationError("find_mode: Hessian not SPD after jitter", "");
}

namespace {

struct GaussianProposal {
  Eigen::VectorXd mode;
  Eigen::MatrixXd chol;  // lower
  double log_norm;

  explicit GaussianProposal(const LaplaceApprox& la) : mode(la.mode) {
    Eigen::LLT<Eigen::MatrixXd> llt(la.cov);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("mh_independence: proposal covariance not SPD");
    chol = llt.matrixL();
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < chol.rows(); ++i)
      logdet += std::log(chol(i, i));
    log_norm = -0.5 * static_cast<double>(chol.rows()) * kLogTwoPi - logdet;
  }
  Eigen::VectorXd draw(Rng& rng) const {
    Eigen::VectorXd z(mode.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return mode + chol * z;
  }
  double log_pdf(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd z =
        chol.triangularView<Eigen::Lower>().solve(x - mode);
    return log_norm - 0.5 * z.squaredNorm();
  }
};

}  // namespace

SampleSet mh_independence(const TargetFn& target, const LaplaceApprox& proposal,
                          int n_draws, int burn_in, Rng& rng,
                          std::vector<std::string> names) {
  if (burn_in >= n_draws)
    throw std::invalid_argument("mh_independence: burn_in >= n_draws");
  const int d = static_cast<int>(proposal.mode.size());
  const GaussianProposal q(proposal);
  Eigen::VectorXd x = proposal.mode;
  double fx = target.value(std::span<const double>(x.data(), d));
  if (!std::isfinite(fx))
    throw std::runtime_error("mh_independence: target not finite at start");
  double lqx = q.log_pdf(x);
  SampleSet out;
  out.names = std::move(names);
  out.burn_in = burn_in;
  out.draws.resize(n_draws - burn_in, d);
  long long accepted = 0, since_accept = 0;
  for (int t = 0; t < n_draws; ++t) {
    const Eigen::VectorXd xp = q.draw(rng);
    const double fp = guarded_value(target, std::span<const double>(xp.data(), d));
    const double lqp = q.log_pdf(xp);
    const double log_alpha = (fp - lqp) - (fx - lqx);
    if (std::log(rng.uniform()) < log_alpha) {
      x = xp;
      fx = fp;
      lqx = lqp;
      ++accepted;
      since_accept = 0;
    } else if (++since_accept >= 1000) {
      throw StuckChainError("mh_independence: no acceptances in 1000 steps", t);
    }
    if (t >= burn_in) out.draws.row(t - burn_in) = x;
  }
  out.acceptance_rate = static_cast<double>(accepted) / n_draws;
  out.validate();
  return out;
}

SampleSet nested_mcmc_cut(const TargetFn& stage1, const Stage2Factory& stage2,
                          const Eigen::VectorXd& stage1_init,
                          const Eigen::VectorXd& stage2_init,
                          const NestedSettings& st, Rng& rng,
                          std::vector<std::string> names) {
  Rng rng1 = rng.derive({1});
  Rng rng2 = rng.derive({2});
  const int d1 = static_cast<int>(stage1_init.size());
  const int d2 = static_cast<int>(stage2_init.size());

  const LaplaceApprox la1 = find_mode(stage1, stage1_init);
  SampleSet s1 = mh_independence(stage1, la1, st.outer_draws, st.outer_burnin, rng1);
  const int retained = static_cast<int>(s1.draws.rows());

  const Eigen::VectorXd eta1_mean = s1.mean();
  const TargetFn t2_at_mean =
      stage2(std::span<const double>(eta1_mean.data(), d1));
  LaplaceApprox la2 = find_mode(t2_at_mean, stage2_init);
  la2.cov *= st.proposal_sd_scale * st.proposal_sd_scale;
  const GaussianProposal q2(la2);

  const int pairs = st.pairs > 0 ? std::min(st.pairs, retained) : retained;
  SampleSet out;
  out.names = std::move(names);
  out.burn_in = st.outer_burnin;
  out.draws.resize(pairs, d1 + d2);
  out.seed = s1.seed;

  Eigen::VectorXd eta2 = la2.mode;
  long long inner_accepts = 0, inner_steps = 0, since_accept = 0;
  for (int t = 0; t < pairs; ++t) {
    const int s = static_cast<int>((static_cast<long long>(t) * retained) / pairs);
    const Eigen::VectorXd eta1 = s1.draws.row(s);
    const TargetFn cond = stage2(std::span<const double>(eta1.data(), d1));
    double fx = guarded_value(cond, std::span<const double>(eta2.data(), d2));
    if (!std::isfinite(fx)) {
      eta2 = la2.mode;
      fx = cond.value(std::span<const double>(eta2.data(), d2));
    }
    double lqx = q2.log_pdf(eta2);
    for (int step = 0; step <= st.inner_burnin; ++step) {
      const Eigen::VectorXd xp = q2.draw(rng2);
      const double fp = guarded_value(cond, std::span<const double>(xp.data(), d2));
      const double lqp = q2.log_pdf(xp);
      ++inner_steps;
      if (std::log(rng2.uniform()) < (fp - lqp) - (fx - lqx)) {
        eta2 = xp;
        fx = fp;
        lqx = lqp;
        ++inner_accepts;
        since_accept = 0;
      } else if (++since_accept >= 1000) {
        throw StuckChainError("nested_mcmc_cut: stage-2 chain stuck", s);
      }
    }
    out.draws.row(t).head(d1) = eta1;
    out.draws.row(t).tail(d2) = eta2;
  }
  out.acceptance_rate = s1.acceptance_rate;
  out.validate();
  return out;
}

Eigen::VectorXd moment_init_theta(const ModelData& md) {
  const auto& model = md.model();
  Eigen::VectorXd theta(md.theta_dim());
  for (int j = 0; j < md.m(); ++j) {
    const Eigen::VectorXd col = md.values().col(j);
    const double mean = col.mean();
    const double var =
        (col.array() - mean).square().sum() / std::max(1, md.n() - 1);
    double p1 = mean, p2 = std::max(var, 1e-8);
    switch (model.marginals[j].family) {
      case MarginalFamily::LogNormal: {
        const Eigen::VectorXd lcol = col.array().log();
        const double lm = lcol.mean();
        p1 = lm;
        p2 = std::max((lcol.array() - lm).square().sum() / std::max(1, md.n() - 1),
                      1e-8);
        break;
      }
      case MarginalFamily::Gamma:
        p1 = std::max(mean * mean / std::max(var, 1e-12), 1e-4);
        p2 = std::max(mean / std::max(var, 1e-12), 1e-4);
        break;
      default:
        break;  // normal-type families start at mean/var
    }
    const auto pos = model.marginals[j].positive();
    theta[2 * j] = pos[0] ? std::log(p1) : p1;
    theta[2 * j + 1] = std::log(p2);
  }
  return theta;
}

double empirical_psi_init(const ModelData& md) {
  const auto& model = md.model();
  if (md.psi_dim() == 0) return 0.0;
  const Eigen::VectorXd c0 = md.values().col(0);
  const Eigen::VectorXd c1 = md.values().col(1);
  double tau = kendall_tau_empirical(
      std::span<const double>(c0.data(), c0.size()),
      std::span<const double>(c1.data(), c1.size()));
  const bool gumbel = model.copula.family == CopulaFamily::GumbelBivariate;
  const double lo = gumbel ? 0.02 : -0.95;
  tau = std::min(0.95, std::max(lo, tau));
  return md.psi_from_tau(tau);
}

IfmResult ifm_fit(const std::shared_ptr<const ModelData>& md) {
  IfmResult res;
  res.theta_unconstrained.resize(md->theta_dim());
  const Eigen::VectorXd init = moment_init_theta(*md);
  for (int j = 0; j < md->m(); ++j) {
    const TargetFn lik = make_margin_lik_target(md, j);
    const Eigen::VectorXd xj = maximize(lik, init.segment(2 * j, 2));
    res.theta_unconstrained.segment(2 * j, 2) = xj;
  }
  Eigen::VectorXd packed(md->dim());
  packed.head(md->theta_dim()) = res.theta_unconstrained;
  if (md->psi_dim() == 1) {
    const TargetFn g2 = make_g2_lik_target(
        md, std::span<const double>(res.theta_unconstrained.data(),
                                    md->theta_dim()));
    Eigen::VectorXd pinit(1);
    pinit[0] = empirical_psi_init(*md);
    res.psi_unconstrained = maximize(g2, pinit);
    packed[md->theta_dim()] = res.psi_unconstrained[0];
  }
  res.constrained = md->to_constrained(
      std::span<const double>(packed.data(), packed.size()));
  if (md->psi_dim() == 1) res.tau_hat = res.constrained[md->theta_dim()];
  return res;
}

}  // namespace cutcop
