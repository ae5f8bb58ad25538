#include "ssqp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ssqp/errors.hpp"
#include "ssqp/kkt.hpp"

namespace ssqp {

namespace {

constexpr double kSlack = 1e-10;

bool has(double v) { return !std::isnan(v); }

}  // namespace

ErrorPair error_pair(const ProblemOracle& oracle, const dvec& x) {
  if (!x.allFinite()) throw NonFinite("error_pair: x");
  ErrorPair e;
  const dvec c = oracle.eval_c(x);
  e.feas = c.size() > 0 ? c.lpNorm<Eigen::Infinity>() : 0.0;
  const auto [y, resid] =
      least_squares_multiplier(oracle.eval_grad(x), oracle.eval_jac(x));
  e.stat = resid.lpNorm<Eigen::Infinity>();
  return e;
}

BestIterate best_iterate(std::span<const IterateRecord> run,
                         const ProblemOracle& oracle) {
  if (run.empty()) throw EmptyRun("best_iterate");
  std::vector<ErrorPair> errors;
  errors.reserve(run.size());
  for (const auto& rec : run) errors.push_back(error_pair(oracle, rec.x));

  double min_feas = errors[0].feas;
  for (const auto& e : errors) min_feas = std::min(min_feas, e.feas);

  BestIterate best;
  best.branch = min_feas <= kFeasGate ? BestIterate::Branch::kKkt
                                      : BestIterate::Branch::kFeasibility;
  std::size_t pick = 0;
  double pick_score = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < run.size(); ++i) {
    const double score = best.branch == BestIterate::Branch::kKkt
                             ? std::max(errors[i].stat, errors[i].feas)
                             : errors[i].feas;
    if (score < pick_score) {  // strict: ties keep the earliest index
      pick_score = score;
      pick = i;
    }
  }
  best.index = run[pick].k;
  best.x = run[pick].x;
  best.errors = errors[pick];
  return best;
}

std::vector<std::string> check_iteration_invariants(const IterateRecord& rec,
                                                    const IterateRecord* prev,
                                                    const SqpParams& p) {
  std::vector<std::string> out;
  const auto flag = [&](const char* tag) { out.emplace_back(tag); };

  if (has(rec.tau) && !(rec.tau > 0)) flag("merit-positive");
  if (prev && has(rec.tau) && has(prev->tau) &&
      rec.tau > prev->tau * (1 + kSlack)) {
    flag("merit-monotone");
  }
  if (has(rec.tau) && rec.tau_trial.is_finite() &&
      rec.tau > (1 - p.eps_tau) * rec.tau_trial.value() * (1 + kSlack)) {
    flag("merit-gap");
  }

  if (has(rec.model_reduction) && has(rec.d_norm_sq) && has(rec.cbar_l1) &&
      has(rec.tau)) {
    const double floor =
        0.5 * p.zeta * rec.tau * rec.d_norm_sq + p.sigma * rec.cbar_l1;
    if (rec.model_reduction < floor - kSlack * (1 + std::abs(floor))) {
      flag("model-reduction");
    }
  }

  if (rec.xi_trial.is_finite() &&
      rec.xi_trial.value() < 0.5 * p.zeta * (1 - kSlack)) {
    flag("ratio-floor");
  }
  if (prev && has(rec.xi) && has(prev->xi) && rec.xi > prev->xi * (1 + kSlack)) {
    flag("ratio-monotone");
  }
  if (has(rec.xi) && rec.xi < (1 - p.eps_xi) * 0.5 * p.zeta * (1 - kSlack)) {
    flag("ratio-lower");
  }

  if (has(rec.alpha_min) && has(rec.alpha_max) && has(rec.alpha_phi)) {
    if (!(rec.alpha_min > 0) ||
        rec.alpha_min > rec.alpha_max + kSlack * (1 + rec.alpha_max) ||
        rec.alpha_max > rec.alpha_phi + kSlack * (1 + rec.alpha_phi)) {
      flag("step-ordering");
    }
    if (rec.alpha_min > 1 + kSlack) flag("alpha-min-cap");
    if (has(rec.alpha) &&
        (rec.alpha < rec.alpha_min * (1 - kSlack) ||
         rec.alpha > rec.alpha_max + kSlack * (1 + rec.alpha_max))) {
      flag("alpha-in-interval");
    }

    // Certificate sign along (0, alpha_phi], sampled on a grid. Skipped for
    // zero directions, where the interval is assigned rather than derived and
    // phi degenerates to a multiple of the (tiny) sampled |c|_1.
    if (has(rec.d_norm_sq) && rec.d_norm_sq > 0 && has(rec.model_reduction) &&
        has(rec.cbar_l1) && has(rec.beta) && has(rec.tau)) {
      StepModel m;
      m.eta = p.eta;
      m.beta = rec.beta;
      m.tau = rec.tau;
      m.lip_l = p.lip_l;
      m.lip_gamma = p.lip_gamma;
      m.delta_l = rec.model_reduction;
      m.cbar_l1 = rec.cbar_l1;
      m.d_norm_sq = rec.d_norm_sq;
      const double drive = (1 - m.eta) * m.beta * m.delta_l;
      for (int i = 1; i <= 100; ++i) {
        const double a = rec.alpha_phi * i / 100.0;
        const double scale = 1 + drive * a + m.quad_coeff() * a * a +
                             2 * m.cbar_l1 * a;
        if (m.phi(a) > kSlack * scale) {
          flag("phi-sign");
          break;
        }
      }
    }
  }
  return out;
}

std::vector<std::string> check_iteration_invariants(const IterateRecord& rec,
                                                    const SqpParams& p) {
  return check_iteration_invariants(rec, nullptr, p);
}

std::vector<std::string> check_run_invariants(
    std::span<const IterateRecord> run, const SqpParams& params) {
  std::vector<std::string> out;
  const IterateRecord* prev = nullptr;
  for (const auto& rec : run) {
    for (auto& v : check_iteration_invariants(rec, prev, params)) {
      out.push_back("k=" + std::to_string(rec.k) + ":" + v);
    }
    prev = &rec;
  }
  return out;
}

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) throw EmptyRun("quantile of no data");
  if (!(p >= 0.0 && p <= 1.0)) throw UsageError("quantile: p outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - lo) * (values[lo + 1] - values[lo]);
}

std::vector<SummaryRow> summarize(
    const std::vector<std::pair<SummaryKey, ErrorPair>>& results) {
  std::map<SummaryKey, std::vector<ErrorPair>> groups;
  for (const auto& [key, err] : results) groups[key].push_back(err);

  std::vector<SummaryRow> rows;
  rows.reserve(groups.size());
  for (const auto& [key, errs] : groups) {
    std::vector<double> feas, stat;
    feas.reserve(errs.size());
    stat.reserve(errs.size());
    for (const auto& e : errs) {
      feas.push_back(e.feas);
      stat.push_back(e.stat);
    }
    SummaryRow row;
    row.key = key;
    row.count = static_cast<int>(errs.size());
    row.feas_min = quantile_type7(feas, 0.0);
    row.feas_q1 = quantile_type7(feas, 0.25);
    row.feas_median = quantile_type7(feas, 0.5);
    row.feas_q3 = quantile_type7(feas, 0.75);
    row.feas_max = quantile_type7(feas, 1.0);
    row.stat_min = quantile_type7(stat, 0.0);
    row.stat_q1 = quantile_type7(stat, 0.25);
    row.stat_median = quantile_type7(stat, 0.5);
    row.stat_q3 = quantile_type7(stat, 0.75);
    row.stat_max = quantile_type7(stat, 1.0);
    double fs = 0, ss = 0;
    for (const auto& e : errs) {
      fs += e.feas;
      ss += e.stat;
    }
    row.feas_mean = fs / errs.size();
    row.stat_mean = ss / errs.size();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ssqp
