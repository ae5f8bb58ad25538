#pragma once

#include <span>
#include <string>
#include <vector>

#include "ssqp/oracle.hpp"
#include "ssqp/sqp.hpp"

namespace ssqp {

// True-oracle error metrics at a point: feas = |c(x)|_inf and stat =
// |grad f(x) + jac(x)^T y_LS|_inf with y_LS the least-squares multiplier.
struct ErrorPair {
  double feas = 0.0;
  double stat = 0.0;
};

ErrorPair error_pair(const ProblemOracle& oracle, const dvec& x);

// Two-branch selection rule gated at feasibility 1e-4: when any iterate is
// that feasible, pick the minimizer of the stacked KKT residual norm
// max(stat, feas) over ALL iterates (including infeasible ones, which is what
// the rule literally says); otherwise pick the most feasible iterate. Ties
// break toward the smallest index.
struct BestIterate {
  enum class Branch { kKkt, kFeasibility };
  int index = 0;  // iteration number k of the chosen record
  dvec x;
  ErrorPair errors;
  Branch branch = Branch::kKkt;
};

constexpr double kFeasGate = 1e-4;

BestIterate best_iterate(std::span<const IterateRecord> run,
                         const ProblemOracle& oracle);

// Per-iteration theory checks with 1e-10 relative slack. Returns violation
// tags; empty on a clean record. Tags: merit-positive, merit-monotone,
// merit-gap, model-reduction, ratio-floor, ratio-monotone, ratio-lower,
// step-ordering, alpha-min-cap, phi-sign, alpha-in-interval.
std::vector<std::string> check_iteration_invariants(const IterateRecord& record,
                                                    const SqpParams& params);

// Runs the per-record checks plus cross-record monotonicity of tau and xi.
// prev: the preceding record, or nullptr for the first.
std::vector<std::string> check_iteration_invariants(const IterateRecord& record,
                                                    const IterateRecord* prev,
                                                    const SqpParams& params);

std::vector<std::string> check_run_invariants(
    std::span<const IterateRecord> run, const SqpParams& params);

// Linear-interpolation (type-7) quantile of unsorted data; p in [0, 1].
double quantile_type7(std::vector<double> values, double p);

// One grouped row of the summary table.
struct SummaryKey {
  std::string problem;
  std::string method;
  std::string noise;  // "eps_g,eps_c,eps_j" label
  std::string beta_mode;
  auto operator<=>(const SummaryKey&) const = default;
};

struct SummaryRow {
  SummaryKey key;
  int count = 0;
  double feas_min = 0, feas_q1 = 0, feas_median = 0, feas_q3 = 0, feas_max = 0,
         feas_mean = 0;
  double stat_min = 0, stat_q1 = 0, stat_median = 0, stat_q3 = 0, stat_max = 0,
         stat_mean = 0;
};

// Quantiles and means of best-iterate errors per group; rows sorted by key.
std::vector<SummaryRow> summarize(
    const std::vector<std::pair<SummaryKey, ErrorPair>>& results);

}  // namespace ssqp
