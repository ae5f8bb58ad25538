#include "ssqp/sqp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ssqp/errors.hpp"

namespace ssqp {

namespace {

constexpr double kLemmaSlack = 1e-10;   // relative slack on lemma checks
constexpr double kOrderSlack = 1e-12;   // interval ordering slack
constexpr double kZeroDirTol = 1e-12;   // |d|_inf <= tol*(1+|x|_inf) is zero

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void validate_hessian(const dmat& h, const SqpParams& p) {
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvariantViolated("hessian oracle: not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<dmat> es(h, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo < p.zeta * (1 - 1e-10) || hi > p.kappa_h * (1 + 1e-10)) {
    throw InvariantViolated("hessian oracle: eigenvalues outside [zeta, kappa_h]");
  }
}

}  // namespace

BetaSchedule BetaSchedule::constant(double beta) {
  if (!(beta > 0.0) || beta > 1.0) {
    throw UsageError("constant beta must lie in (0, 1]");
  }
  BetaSchedule b;
  b.kind = Kind::kConstant;
  b.value = beta;
  return b;
}

BetaSchedule BetaSchedule::diminishing() {
  BetaSchedule b;
  b.kind = Kind::kDiminishing;
  return b;
}

BetaSchedule BetaSchedule::complexity(double omega_beta, int k_max) {
  if (k_max < 1) throw UsageError("complexity schedule: k_max < 1");
  BetaSchedule b;
  b.kind = Kind::kComplexity;
  b.omega_beta = omega_beta;
  b.k_max = k_max;
  b.value = omega_beta / std::sqrt(static_cast<double>(k_max));
  if (!(b.value > 0.0) || b.value > 1.0) {
    throw UsageError("complexity schedule: beta outside (0, 1]");
  }
  return b;
}

double BetaSchedule::at(int k) const {
  if (k < 1) throw InvariantViolated("beta schedule: k < 1");
  if (kind == Kind::kDiminishing) {
    // Stairstep decay: flat over 500-iteration blocks.
    const int block = (k + 499) / 500;
    const double base = static_cast<double>((block - 1) * 500 + 1);
    return std::pow(base, -0.6);
  }
  return value;
}

std::string BetaSchedule::label() const {
  switch (kind) {
    case Kind::kConstant:
      return "const:" + fmt_g(value);
    case Kind::kDiminishing:
      return "dimin";
    case Kind::kComplexity:
      return "complexity:" + fmt_g(omega_beta) + ":" + std::to_string(k_max);
  }
  return "?";
}

BetaSchedule BetaSchedule::parse(const std::string& text) {
  try {
    if (text == "dimin") return diminishing();
    if (text.rfind("const:", 0) == 0) return constant(std::stod(text.substr(6)));
    if (text.rfind("complexity:", 0) == 0) {
      const std::string rest = text.substr(11);
      const auto colon = rest.find(':');
      if (colon == std::string::npos) throw UsageError("");
      return complexity(std::stod(rest.substr(0, colon)),
                        std::stoi(rest.substr(colon + 1)));
    }
  } catch (const UsageError&) {
  } catch (const std::exception&) {
  }
  throw UsageError("bad beta schedule (want const:<v> | dimin | "
                   "complexity:<omega>:<k_max>): " + text);
}

void SqpParams::validate(const BetaSchedule& betas) const {
  auto in_open01 = [](double v) { return v > 0.0 && v < 1.0; };
  if (!(tau0 > 0)) throw UsageError("tau0 must be positive");
  if (!(xi0 > 0)) throw UsageError("xi0 must be positive");
  if (!in_open01(eta)) throw UsageError("eta must lie in (0, 1)");
  if (!in_open01(sigma)) throw UsageError("sigma must lie in (0, 1)");
  if (!in_open01(eps_tau)) throw UsageError("eps_tau must lie in (0, 1)");
  if (!in_open01(eps_xi)) throw UsageError("eps_xi must lie in (0, 1)");
  if (!(theta >= 0)) throw UsageError("theta must be nonnegative");
  if (!(lip_l > 0)) throw UsageError("lip_l must be positive");
  if (!(lip_gamma >= 0)) throw UsageError("lip_gamma must be nonnegative");
  if (!(zeta > 0) || !(kappa_h >= zeta)) {
    throw UsageError("need 0 < zeta <= kappa_h");
  }
  if (max_iter < 0) throw UsageError("max_iter must be nonnegative");
  // Schedule requirement: 2(1-eta) beta_k xi0 tau0 / (tau0 L + Gamma) in
  // (0, 1] for every k. The left side is nonincreasing in (tau, xi), so
  // checking the initial pair over the whole schedule suffices.
  const double w = 2.0 * (1.0 - eta) * xi0 * tau0 / (tau0 * lip_l + lip_gamma);
  for (int k = 1; k <= max_iter; ++k) {
    const double u = w * betas.at(k);
    if (!(u > 0.0) || u > 1.0 + 1e-12) {
      throw UsageError("beta schedule violates the step-size requirement at k=" +
                       std::to_string(k) + " (value " + fmt_g(u) + ")");
    }
  }
}

ExtReal trial_merit_parameter(const dvec& gbar, const dvec& dbar,
                              const dmat& h, const dvec& cbar, double sigma) {
  return trial_merit_parameter(gbar.dot(dbar), dbar.dot(h * dbar),
                               cbar.lpNorm<1>(), sigma);
}

ExtReal trial_merit_parameter(double gd, double dhd, double cbar_l1,
                              double sigma) {
  const double quad = gd + 0.5 * dhd;
  if (quad <= 0.0) return ExtReal::infinity();
  return ExtReal::finite((1.0 - sigma) * cbar_l1 / quad);
}

double update_merit_parameter(double tau_prev, const ExtReal& tau_trial,
                              double eps_tau) {
  if (!(tau_prev > 0)) throw InvariantViolated("update_merit_parameter: tau_prev <= 0");
  if (!tau_trial.is_finite()) return tau_prev;
  const double gate = (1.0 - eps_tau) * tau_trial.value();
  if (tau_prev <= gate) return tau_prev;
  return (1.0 - eps_tau) * std::min(tau_prev, tau_trial.value());
}

double model_reduction(double tau, const dvec& gbar, const dvec& cbar,
                       const dvec& dbar) {
  return model_reduction(tau, gbar.dot(dbar), cbar.lpNorm<1>());
}

double model_reduction(double tau, double gd, double cbar_l1) {
  return -tau * gd + cbar_l1;
}

ExtReal trial_ratio(double delta_l, double tau, double d_norm_sq) {
  if (d_norm_sq <= 0.0) return ExtReal::infinity();
  if (!(tau > 0)) throw InvariantViolated("trial_ratio: tau <= 0");
  return ExtReal::finite(delta_l / (tau * d_norm_sq));
}

double update_ratio(double xi_prev, const ExtReal& xi_trial, double eps_xi) {
  if (!(xi_prev > 0)) throw InvariantViolated("update_ratio: xi_prev <= 0");
  if (!xi_trial.is_finite()) return xi_prev;
  if (xi_prev <= xi_trial.value()) return xi_prev;
  return std::min((1.0 - eps_xi) * xi_prev, xi_trial.value());
}

double StepModel::phi(double alpha) const {
  const double edge = std::abs(1.0 - alpha) - (1.0 - alpha);
  return (eta - 1.0) * alpha * beta * delta_l + edge * cbar_l1 +
         quad_coeff() * alpha * alpha;
}

double compute_alpha_phi(const StepModel& m) {
  if (!(m.d_norm_sq > 0)) {
    throw InvariantViolated("compute_alpha_phi: needs d != 0");
  }
  const double a = m.quad_coeff();
  if (!(a > 0)) throw InvariantViolated("compute_alpha_phi: curvature <= 0");
  const double drive = (1.0 - m.eta) * m.beta * m.delta_l;
  if (drive < 0) throw InvariantViolated("compute_alpha_phi: negative drive");

  // Piece alpha <= 1: a t^2 - drive t, root drive/a. When that lands at or
  // beyond 1, phi(1) <= 0 and the root sits on the alpha > 1 piece
  // a t^2 + (2 c1 - drive) t - 2 c1.
  double root = drive / a;
  if (root >= 1.0) {
    const double b = 2.0 * m.cbar_l1 - drive;
    const double c = -2.0 * m.cbar_l1;
    const double disc = b * b - 4.0 * a * c;
    const double r2 = b <= 0 ? (-b + std::sqrt(disc)) / (2.0 * a)
                             : -2.0 * c / (b + std::sqrt(disc));
    root = std::max(1.0, r2);
  }

  const double scale =
      1.0 + drive * root + a * root * root + 2.0 * m.cbar_l1 * root;
  if (std::isfinite(root) && std::abs(m.phi(root)) <= 1e-10 * scale) {
    return root;
  }

  // Fallback: expand until phi turns positive, then bisect. phi(0) = 0 and
  // the nonpositive set is a single interval [0, alpha_phi].
  double lo = 0.0;
  double hi = 1.0;
  while (m.phi(hi) <= 0.0) {
    hi *= 2.0;
    if (!std::isfinite(hi)) {
      throw NonConvergent("compute_alpha_phi: no positive phi found");
    }
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (m.phi(mid) <= 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

StepInterval step_interval(const StepModel& m, double xi, double theta) {
  const double denom = m.tau * m.lip_l + m.lip_gamma;
  if (!(denom > 0)) throw InvariantViolated("step_interval: tau*L + Gamma <= 0");
  StepInterval iv;
  iv.beta_k = m.beta;
  iv.alpha_min = 2.0 * (1.0 - m.eta) * m.beta * xi * m.tau / denom;
  if (m.d_norm_sq > 0) {
    iv.alpha_phi = compute_alpha_phi(m);
    iv.alpha_max = std::min(iv.alpha_min + theta * m.beta, iv.alpha_phi);
  } else {
    // Zero direction: phi vanishes identically and only the additive cap binds.
    iv.alpha_phi = iv.alpha_min + theta * m.beta;
    iv.alpha_max = iv.alpha_phi;
  }
  if (!(iv.alpha_min > 0) ||
      iv.alpha_min > iv.alpha_max + kOrderSlack * (1.0 + iv.alpha_min)) {
    throw InvariantViolated("step_interval: ordering 0 < alpha_min <= alpha_max failed");
  }
  return iv;
}

double select_alpha(const StepInterval& interval, const StepModel& model,
                    SqpParams::StepPolicy policy) {
  if (policy == SqpParams::StepPolicy::kMinStep) return interval.alpha_min;
  // The phi <= 0 set is one interval and the cap is a single threshold, so
  // the first failing candidate ends the scan.
  double best = interval.alpha_min;
  double cand = interval.alpha_min;
  while (true) {
    cand *= 1.1;
    if (cand > interval.alpha_max) break;
    if (model.phi(cand) > 0.0) break;
    best = cand;
  }
  return best;
}

std::pair<SolverState, IterateRecord> iterate(const SolverState& state,
                                              const StochasticEstimate& est,
                                              const dmat& h,
                                              const SqpParams& params,
                                              double beta_k,
                                              const ProblemOracle& truth) {
  IterateRecord rec;
  rec.k = state.k;
  rec.x = state.x;
  rec.beta = beta_k;

  const dvec c_true = truth.eval_c(state.x);
  rec.feas_err = c_true.size() > 0 ? c_true.lpNorm<Eigen::Infinity>() : 0.0;
  const auto [y_ls, resid] =
      least_squares_multiplier(truth.eval_grad(state.x), truth.eval_jac(state.x));
  rec.stat_err = resid.lpNorm<Eigen::Infinity>();

  const KktSolution sol = solve_kkt({h, est.jbar, est.gbar, est.cbar});
  dvec d = sol.d;
  const bool zero_d = d.lpNorm<Eigen::Infinity>() <=
                      kZeroDirTol * (1.0 + state.x.lpNorm<Eigen::Infinity>());
  rec.cbar_l1 = est.cbar.lpNorm<1>();

  SolverState next = state;
  next.k = state.k + 1;

  if (!zero_d) {
    // g'd evaluated through the solved system (Hd + J'y = -g, Jd = -c). The
    // literal dot product cancels O(1) gradients against each other and its
    // sign turns into rounding noise once d is small; this form keeps the
    // sign structure of every update exact for the computed (d, y).
    const double dhd = d.dot(h * d);
    const double gd = -dhd + sol.y.dot(est.cbar);
    rec.tau_trial = trial_merit_parameter(gd, dhd, rec.cbar_l1, params.sigma);
    next.tau = update_merit_parameter(state.tau, rec.tau_trial, params.eps_tau);
    rec.d_norm_sq = d.squaredNorm();
    rec.model_reduction = model_reduction(next.tau, gd, rec.cbar_l1);
    rec.xi_trial = trial_ratio(rec.model_reduction, next.tau, rec.d_norm_sq);
    next.xi = update_ratio(state.xi, rec.xi_trial, params.eps_xi);

    StepModel m;
    m.eta = params.eta;
    m.beta = beta_k;
    m.tau = next.tau;
    m.lip_l = params.lip_l;
    m.lip_gamma = params.lip_gamma;
    m.delta_l = rec.model_reduction;
    m.cbar_l1 = rec.cbar_l1;
    m.d_norm_sq = rec.d_norm_sq;

    const StepInterval iv = step_interval(m, next.xi, params.theta);
    rec.alpha_min = iv.alpha_min;
    rec.alpha_max = iv.alpha_max;
    rec.alpha_phi = iv.alpha_phi;
    rec.alpha = select_alpha(iv, m, params.step_policy);
    next.x = state.x + rec.alpha * d;
  } else {
    // Zero direction: parameters freeze and the interval degenerates.
    next.tau = state.tau;
    next.xi = state.xi;
    rec.tau_trial = ExtReal::infinity();
    rec.xi_trial = ExtReal::infinity();
    rec.d_norm_sq = 0.0;
    rec.model_reduction = rec.cbar_l1;

    StepModel m;
    m.eta = params.eta;
    m.beta = beta_k;
    m.tau = next.tau;
    m.lip_l = params.lip_l;
    m.lip_gamma = params.lip_gamma;
    m.delta_l = rec.model_reduction;
    m.cbar_l1 = rec.cbar_l1;
    m.d_norm_sq = 0.0;

    const StepInterval iv = step_interval(m, next.xi, params.theta);
    rec.alpha_min = iv.alpha_min;
    rec.alpha_max = iv.alpha_max;
    rec.alpha_phi = iv.alpha_phi;
    rec.alpha = iv.alpha_min;
  }

  rec.tau = next.tau;
  rec.xi = next.xi;

  // Inline lemma checks; failures are bugs, not data.
  const auto fail = [&](const char* what) {
    throw InvariantViolated(std::string("iterate k=") +
                            std::to_string(state.k) + ": " + what);
  };
  if (!(next.tau > 0)) fail("merit parameter not positive");
  if (next.tau > state.tau * (1 + kLemmaSlack)) fail("merit parameter increased");
  if (rec.tau_trial.is_finite() &&
      next.tau > (1 - params.eps_tau) * rec.tau_trial.value() *
                     (1 + kLemmaSlack)) {
    fail("merit parameter above (1-eps_tau)*trial");
  }
  const double mr_floor = 0.5 * params.zeta * next.tau * rec.d_norm_sq +
                          params.sigma * rec.cbar_l1;
  if (rec.model_reduction <
      mr_floor - kLemmaSlack * (1 + std::abs(mr_floor))) {
    fail("model reduction below its floor");
  }
  if (rec.xi_trial.is_finite() &&
      rec.xi_trial.value() < 0.5 * params.zeta * (1 - kLemmaSlack)) {
    fail("finite trial ratio below zeta/2");
  }
  if (next.xi > state.xi * (1 + kLemmaSlack)) fail("ratio parameter increased");
  if (next.xi <
      (1 - params.eps_xi) * 0.5 * params.zeta * (1 - kLemmaSlack)) {
    fail("ratio parameter below (1-eps_xi)*zeta/2");
  }
  if (!next.x.allFinite()) throw NonFinite("iterate: next x");

  return {next, rec};
}

SqpRun run_sqp(const ProblemOracle& truth, EstimateSource& estimates,
               const SqpParams& params, const BetaSchedule& betas,
               std::optional<dvec> x1_override, const HessianOracle& hessian) {
  params.validate(betas);
  if (!hessian && !(params.zeta <= 1.0 && 1.0 <= params.kappa_h)) {
    throw UsageError("identity Hessian lies outside [zeta, kappa_h]");
  }

  if (truth.m > truth.n) {
    // The KKT solve needs a full-row-rank Jacobian; more constraints than
    // variables cannot satisfy that.
    throw UsageError("problem has " + std::to_string(truth.m) +
                     " constraints over " + std::to_string(truth.n) +
                     " variables; the KKT system needs m <= n");
  }

  SolverState state;
  state.x = x1_override ? *x1_override : truth.x1;
  if (state.x.size() != truth.n) throw UsageError("x1 dimension mismatch");
  state.tau = params.tau0;
  state.xi = params.xi0;
  state.k = 1;

  const dmat identity = dmat::Identity(truth.n, truth.n);
  SqpRun run;
  run.records.reserve(std::min(params.max_iter, 65536));
  for (int k = 1; k <= params.max_iter; ++k) {
    const double beta_k = betas.at(k);
    const StochasticEstimate est =
        estimates.at(state.x, static_cast<std::uint32_t>(k), beta_k);
    ++run.oracle_calls;
    dmat h;
    if (hessian) {
      h = hessian(state.x, k);
      validate_hessian(h, params);
    }
    auto [next, rec] =
        iterate(state, est, hessian ? h : identity, params, beta_k, truth);
    run.records.push_back(std::move(rec));
    state = std::move(next);
  }
  run.x_final = state.x;
  run.tau_final = state.tau;
  run.xi_final = state.xi;
  return run;
}

}  // namespace ssqp
