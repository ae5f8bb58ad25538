#include "ssqp/oracle.hpp"

namespace ssqp {

double grad_check_error(const ProblemOracle& p, const dvec& x, double step) {
  const dvec g = p.eval_grad(x);
  double worst = 0.0;
  dvec e = x;
  for (int i = 0; i < p.n; ++i) {
    e(i) = x(i) + step;
    const double fp = p.eval_f(e);
    e(i) = x(i) - step;
    const double fm = p.eval_f(e);
    e(i) = x(i);
    worst = std::max(worst, std::abs((fp - fm) / (2 * step) - g(i)));
  }
  return worst / (1.0 + g.lpNorm<Eigen::Infinity>());
}

double jac_check_error(const ProblemOracle& p, const dvec& x, double step) {
  const dmat j = p.eval_jac(x);
  double worst = 0.0;
  dvec e = x;
  for (int i = 0; i < p.n; ++i) {
    e(i) = x(i) + step;
    const dvec cp = p.eval_c(e);
    e(i) = x(i) - step;
    const dvec cm = p.eval_c(e);
    e(i) = x(i);
    const dvec fd = (cp - cm) / (2 * step);
    for (int r = 0; r < p.m; ++r) {
      worst = std::max(worst, std::abs(fd(r) - j(r, i)));
    }
  }
  const double scale =
      1.0 + (j.size() > 0 ? j.cwiseAbs().maxCoeff() : 0.0);
  return worst / scale;
}

}  // namespace ssqp
