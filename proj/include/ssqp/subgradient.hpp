#pragma once

#include <vector>

#include "ssqp/noise.hpp"
#include "ssqp/oracle.hpp"
#include "ssqp/sqp.hpp"

namespace ssqp {

// Stochastic subgradient descent on the exact penalty tau*f(x) + |c(x)|_1
// with a fixed merit parameter and non-adaptive steps
// alpha_k = beta_k * tau / (tau*L + Gamma).
struct SubgradConfig {
  double tau = 1.0;
  double lip_l = 1.0;
  double lip_gamma = 0.0;
  int max_iter = 5000;
  double max_seconds = 0.0;  // > 0 adds a wall-clock cutoff

  void validate() const;
};

// The seven-value decade sweep the comparison protocol uses by default.
std::vector<double> default_tau_sweep();

// tau * gbar + jbar^T sign(cbar), with sign(0) = 0.
dvec subgradient(double tau, const dvec& gbar, const dvec& cbar,
                 const dmat& jbar);

// Logs the shared IterateRecord schema; fields without subgradient meaning
// (trials, interval bounds, model reduction) stay NaN. d_norm_sq holds the
// squared norm of the step direction.
std::vector<IterateRecord> run_subgradient(const ProblemOracle& truth,
                                           EstimateSource& estimates,
                                           const SubgradConfig& cfg,
                                           const BetaSchedule& betas,
                                           std::optional<dvec> x1_override =
                                               std::nullopt);

}  // namespace ssqp
