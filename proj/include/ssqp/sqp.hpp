#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ssqp/ext_real.hpp"
#include "ssqp/kkt.hpp"
#include "ssqp/noise.hpp"
#include "ssqp/oracle.hpp"

namespace ssqp {

// Exogenous step-size parameter sequence; k is 1-based.
struct BetaSchedule {
  enum class Kind { kConstant, kDiminishing, kComplexity };
  Kind kind = Kind::kConstant;
  double value = 0.1;       // constant value; omega_beta/sqrt(k_max) in
                            // complexity mode
  double omega_beta = 1.0;  // complexity mode inputs, kept for the label
  int k_max = 0;

  static BetaSchedule constant(double beta);
  static BetaSchedule diminishing();
  static BetaSchedule complexity(double omega_beta, int k_max);
  // "const:<v>", "dimin", "complexity:<omega_beta>:<k_max>"
  static BetaSchedule parse(const std::string& text);

  double at(int k) const;
  std::string label() const;
};

struct SqpParams {
  double tau0 = 1.0;
  double xi0 = 1.0;
  double eta = 0.5;
  double sigma = 0.1;
  double eps_tau = 0.01;
  double eps_xi = 0.01;
  double theta = 10.0;
  double lip_l = 1.0;      // L
  double lip_gamma = 0.0;  // Gamma
  double zeta = 1.0;       // Hessian eigenvalue floor
  double kappa_h = 1e6;    // Hessian eigenvalue cap
  int max_iter = 5000;

  enum class StepPolicy { kGeometricScan, kMinStep };
  StepPolicy step_policy = StepPolicy::kGeometricScan;

  // Range checks plus the schedule requirement
  // 2(1-eta) beta_k xi0 tau0 / (tau0 L + Gamma) in (0, 1] for every k.
  void validate(const BetaSchedule& betas) const;
};

struct SolverState {
  dvec x;
  double tau = 1.0;
  double xi = 1.0;
  int k = 1;  // next iteration index
};

// One row of a run log. Row k describes iteration k evaluated at the
// pre-step iterate x_k. Baseline rows reuse the schema with NaN for fields
// that have no subgradient meaning.
struct IterateRecord {
  int k = 0;
  dvec x;
  double beta = std::numeric_limits<double>::quiet_NaN();
  double feas_err = 0.0;
  double stat_err = 0.0;
  double tau = std::numeric_limits<double>::quiet_NaN();
  double xi = std::numeric_limits<double>::quiet_NaN();
  ExtReal tau_trial = ExtReal::infinity();
  ExtReal xi_trial = ExtReal::infinity();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double alpha_min = std::numeric_limits<double>::quiet_NaN();
  double alpha_max = std::numeric_limits<double>::quiet_NaN();
  double alpha_phi = std::numeric_limits<double>::quiet_NaN();
  double d_norm_sq = std::numeric_limits<double>::quiet_NaN();
  double model_reduction = std::numeric_limits<double>::quiet_NaN();
  double cbar_l1 = std::numeric_limits<double>::quiet_NaN();
};

// tau_trial: +inf when the quadratic term g'd + d'Hd/2 is nonpositive, else
// (1-sigma)|c|_1 divided by it.
ExtReal trial_merit_parameter(const dvec& gbar, const dvec& dbar,
                              const dmat& h, const dvec& cbar, double sigma);

// Scalar form over precomputed g'd, d'Hd, |c|_1.
ExtReal trial_merit_parameter(double gd, double dhd, double cbar_l1,
                              double sigma);

// Keep tau_prev when it already sits below (1-eps_tau) * trial, else cut to
// (1-eps_tau) * min(tau_prev, trial).
double update_merit_parameter(double tau_prev, const ExtReal& tau_trial,
                              double eps_tau);

// delta_l = -tau * g'd + |c|_1, the linear model reduction. Valid whenever d
// satisfies the linearized constraint c + J d = 0.
double model_reduction(double tau, const dvec& gbar, const dvec& cbar,
                       const dvec& dbar);

// Scalar form over precomputed g'd and |c|_1.
double model_reduction(double tau, double gd, double cbar_l1);

// xi_trial = delta_l / (tau |d|^2), +inf at d = 0.
ExtReal trial_ratio(double delta_l, double tau, double d_norm_sq);

// Keep xi_prev when xi_prev <= trial, else min((1-eps_xi) xi_prev, trial).
double update_ratio(double xi_prev, const ExtReal& xi_trial, double eps_xi);

// Data entering the sufficient-decrease certificate
//   phi(a) = (eta-1) a beta delta_l + (|1-a| - (1-a)) |c|_1
//            + (tau L + Gamma)/2 a^2 |d|^2,
// a piecewise quadratic in a that is zero at zero.
struct StepModel {
  double eta = 0.5;
  double beta = 0.1;
  double tau = 1.0;
  double lip_l = 1.0;
  double lip_gamma = 0.0;
  double delta_l = 0.0;
  double cbar_l1 = 0.0;
  double d_norm_sq = 0.0;

  double phi(double alpha) const;
  double quad_coeff() const {
    return 0.5 * (tau * lip_l + lip_gamma) * d_norm_sq;
  }
};

// Largest alpha with phi(alpha) <= 0: closed-form roots of the two quadratic
// pieces, residual-verified, with a bisection-plus-expansion fallback.
// Requires d_norm_sq > 0. Returns 0 when no positive alpha qualifies.
double compute_alpha_phi(const StepModel& model);

struct StepInterval {
  double alpha_min = 0.0;
  double alpha_max = 0.0;
  double alpha_phi = 0.0;
  double beta_k = 0.0;
};

// alpha_min = 2(1-eta) beta xi tau / (tau L + Gamma),
// alpha_max = min(alpha_min + theta beta, alpha_phi). Throws
// InvariantViolated when the ordering 0 < alpha_min <= alpha_max fails
// beyond 1e-12 relative slack.
StepInterval step_interval(const StepModel& model, double xi, double theta);

// Geometric scan from alpha_min by factors of 1.1: last candidate within
// [alpha_min, alpha_max] whose phi is nonpositive; t = 0 is always taken.
// kMinStep returns alpha_min.
double select_alpha(const StepInterval& interval, const StepModel& model,
                    SqpParams::StepPolicy policy);

// One full iteration: solve the KKT system on the estimates, update tau and
// xi, pick the step, advance x. Lemma checks run inline and throw
// InvariantViolated on failure.
std::pair<SolverState, IterateRecord> iterate(const SolverState& state,
                                              const StochasticEstimate& est,
                                              const dmat& h,
                                              const SqpParams& params,
                                              double beta_k,
                                              const ProblemOracle& truth);

using HessianOracle = std::function<dmat(const dvec& x, int k)>;

struct SqpRun {
  std::vector<IterateRecord> records;  // one row per iteration, k = 1..max_iter
  dvec x_final;
  double tau_final = 0.0;
  double xi_final = 0.0;
  long oracle_calls = 0;
};

// Full run from truth.x1 (or the override). hessian == nullptr means H = I
// every iteration; a supplied oracle is eigenvalue-checked against
// [zeta, kappa_h] each call.
SqpRun run_sqp(const ProblemOracle& truth, EstimateSource& estimates,
               const SqpParams& params, const BetaSchedule& betas,
               std::optional<dvec> x1_override = std::nullopt,
               const HessianOracle& hessian = nullptr);

}  // namespace ssqp
