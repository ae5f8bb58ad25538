#pragma once

#include <functional>
#include <optional>
#include <string>

#include "ssqp/kkt.hpp"

namespace ssqp {

// Deterministic description of one equality-constrained problem
//   min f(x)  s.t.  c(x) = 0,  f: R^n -> R, c: R^n -> R^m.
// Callbacks must be thread-safe and pure. known_solution, when present, is a
// point satisfying the first-order conditions to high accuracy and is used
// only by tests and reports, never by solvers.
struct ProblemOracle {
  std::string name;
  int n = 0;
  int m = 0;
  std::function<double(const dvec&)> eval_f;
  std::function<dvec(const dvec&)> eval_grad;
  std::function<dvec(const dvec&)> eval_c;
  std::function<dmat(const dvec&)> eval_jac;
  dvec x1;
  std::optional<dvec> known_solution;
  // Analytic per-row gradient Lipschitz constants for c, when known exactly
  // (e.g. 2 for a sphere row, 0 for a linear row). Used instead of sampling.
  std::optional<dvec> constraint_curvatures;
};

// Max componentwise gap between eval_grad and central differences with the
// given step, relative to 1 + the gradient's inf norm. Test helper.
double grad_check_error(const ProblemOracle& p, const dvec& x,
                        double step = 1e-6);

// Same for one row of the constraint Jacobian.
double jac_check_error(const ProblemOracle& p, const dvec& x,
                       double step = 1e-6);

}  // namespace ssqp
