#include "ssqp/subgradient.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "ssqp/errors.hpp"
#include "ssqp/kkt.hpp"

namespace ssqp {

void SubgradConfig::validate() const {
  if (!(tau > 0)) throw UsageError("subgradient: tau must be positive");
  if (!(lip_l > 0)) throw UsageError("subgradient: lip_l must be positive");
  if (!(lip_gamma >= 0)) throw UsageError("subgradient: lip_gamma negative");
  if (max_iter < 0) throw UsageError("subgradient: max_iter negative");
  if (!(tau * lip_l + lip_gamma > 0)) {
    throw UsageError("subgradient: tau*L + Gamma must be positive");
  }
}

std::vector<double> default_tau_sweep() {
  return {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1e0};
}

dvec subgradient(double tau, const dvec& gbar, const dvec& cbar,
                 const dmat& jbar) {
  if (!gbar.allFinite() || !cbar.allFinite() || !jbar.allFinite()) {
    throw NonFinite("subgradient");
  }
  dvec s(cbar.size());
  for (int i = 0; i < cbar.size(); ++i) {
    s(i) = cbar(i) > 0 ? 1.0 : (cbar(i) < 0 ? -1.0 : 0.0);
  }
  return tau * gbar + jbar.transpose() * s;
}

std::vector<IterateRecord> run_subgradient(const ProblemOracle& truth,
                                           EstimateSource& estimates,
                                           const SubgradConfig& cfg,
                                           const BetaSchedule& betas,
                                           std::optional<dvec> x1_override) {
  cfg.validate();
  dvec x = x1_override ? *x1_override : truth.x1;
  if (x.size() != truth.n) throw UsageError("x1 dimension mismatch");

  const auto start = std::chrono::steady_clock::now();
  std::vector<IterateRecord> records;
  // Wall-clock budgets pass max_iter = INT_MAX; cap the upfront allocation.
  records.reserve(std::min(cfg.max_iter, 65536));
  for (int k = 1; k <= cfg.max_iter; ++k) {
    if (cfg.max_seconds > 0) {
      const std::chrono::duration<double> elapsed =
          std::chrono::steady_clock::now() - start;
      if (elapsed.count() >= cfg.max_seconds) break;
    }
    const double beta_k = betas.at(k);
    const StochasticEstimate est =
        estimates.at(x, static_cast<std::uint32_t>(k), beta_k);

    IterateRecord rec;
    rec.k = k;
    rec.x = x;
    rec.beta = beta_k;
    const dvec c_true = truth.eval_c(x);
    rec.feas_err = c_true.size() > 0 ? c_true.lpNorm<Eigen::Infinity>() : 0.0;
    const auto [y_ls, resid] =
        least_squares_multiplier(truth.eval_grad(x), truth.eval_jac(x));
    rec.stat_err = resid.lpNorm<Eigen::Infinity>();
    rec.tau = cfg.tau;
    rec.cbar_l1 = est.cbar.lpNorm<1>();

    const dvec dir = subgradient(cfg.tau, est.gbar, est.cbar, est.jbar);
    rec.d_norm_sq = dir.squaredNorm();
    rec.alpha = beta_k * cfg.tau / (cfg.tau * cfg.lip_l + cfg.lip_gamma);
    x -= rec.alpha * dir;
    if (!x.allFinite()) throw NonFinite("run_subgradient: iterate");
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace ssqp
