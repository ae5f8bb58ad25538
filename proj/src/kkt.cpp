#include "ssqp/kkt.hpp"

#include <cmath>
#include <string>

#include "ssqp/errors.hpp"

namespace ssqp {

namespace {

void require_finite(const dmat& a, const char* what) {
  if (!a.allFinite()) throw NonFinite(what);
}

void require_finite(const dvec& a, const char* what) {
  if (!a.allFinite()) throw NonFinite(what);
}

double residual_inf_norm(const KktSystem& sys, const dvec& d, const dvec& y) {
  const dvec rg = sys.h * d + sys.jac.transpose() * y + sys.rhs_g;
  const dvec rc = sys.jac * d + sys.rhs_c;
  return std::max(rg.lpNorm<Eigen::Infinity>(), rc.lpNorm<Eigen::Infinity>());
}

}  // namespace

KktSolution solve_kkt(const KktSystem& sys) {
  const auto n = sys.h.rows();
  const auto m = sys.jac.rows();
  if (sys.h.cols() != n || sys.jac.cols() != n || sys.rhs_g.size() != n ||
      sys.rhs_c.size() != m) {
    throw InvariantViolated("solve_kkt: inconsistent block dimensions");
  }
  require_finite(sys.h, "solve_kkt: h");
  require_finite(sys.jac, "solve_kkt: jac");
  require_finite(sys.rhs_g, "solve_kkt: rhs_g");
  require_finite(sys.rhs_c, "solve_kkt: rhs_c");

  Eigen::LLT<dmat> hf(sys.h);
  if (hf.info() != Eigen::Success) throw NotSpd("solve_kkt: h block");

  // Schur complement on the constraint block: s = jac h^-1 jac^T.
  const dmat hinv_jt = hf.solve(sys.jac.transpose());
  const dmat s = sys.jac * hinv_jt;
  Eigen::LDLT<dmat> sf(s);
  if (m > 0 && sf.info() != Eigen::Success) {
    throw RankDeficient("solve_kkt: schur factorization failed");
  }
  if (m > 0) {
    const dvec dv = sf.vectorD();
    const double dmax = dv.cwiseAbs().maxCoeff();
    const double dmin = dv.cwiseAbs().minCoeff();
    if (!(dmax > 0.0) || dmin < 1e-12 * dmax || dv.minCoeff() <= 0.0) {
      throw RankDeficient("solve_kkt: schur pivot below threshold");
    }
  }

  auto eliminate = [&](const dvec& rg, const dvec& rc) {
    const dvec w = hf.solve(rg);
    dvec y(m);
    if (m > 0) {
      y = sf.solve((rc - sys.jac * w).eval());
    }
    const dvec d = (-w - hinv_jt * y).eval();
    return std::make_pair(d, y);
  };

  KktSolution sol;
  std::tie(sol.d, sol.y) = eliminate(sys.rhs_g, sys.rhs_c);
  sol.residual_inf = residual_inf_norm(sys, sol.d, sol.y);

  const double rhs_scale =
      1.0 + std::max(sys.rhs_g.lpNorm<Eigen::Infinity>(),
                     sys.rhs_c.size() > 0
                         ? sys.rhs_c.lpNorm<Eigen::Infinity>()
                         : 0.0);
  if (sol.residual_inf > 1e-10 * rhs_scale) {
    // One refinement step: the correction solves the same system with the
    // current residual as right-hand side.
    const dvec rg = sys.h * sol.d + sys.jac.transpose() * sol.y + sys.rhs_g;
    const dvec rc = sys.jac * sol.d + sys.rhs_c;
    auto [dd, dy] = eliminate(rg, rc);
    sol.d += dd;
    sol.y += dy;
    sol.residual_inf = residual_inf_norm(sys, sol.d, sol.y);
  }

  require_finite(sol.d, "solve_kkt: d");
  require_finite(sol.y, "solve_kkt: y");
  return sol;
}

std::pair<dvec, dvec> least_squares_multiplier(const dvec& g,
                                               const dmat& jac) {
  require_finite(g, "least_squares_multiplier: g");
  require_finite(jac, "least_squares_multiplier: jac");
  if (jac.cols() != g.size()) {
    throw InvariantViolated("least_squares_multiplier: dimension mismatch");
  }
  if (jac.rows() == 0) return {dvec(0), g};

  Eigen::ColPivHouseholderQR<dmat> qr(jac.transpose());
  const dvec diag = qr.matrixR()
                        .topLeftCorner(std::min(jac.rows(), jac.cols()),
                                       std::min(jac.rows(), jac.cols()))
                        .diagonal()
                        .cwiseAbs();
  const double rmax = diag.maxCoeff();
  if (!(rmax > 0.0) || diag.minCoeff() < 1e-12 * rmax) {
    throw RankDeficient("least_squares_multiplier: jac^T");
  }
  const dvec y = qr.solve((-g).eval());
  const dvec residual = g + jac.transpose() * y;
  return {y, residual};
}

double min_singular_value(const dmat& block) {
  require_finite(block, "min_singular_value");
  if (block.size() == 0) throw InvariantViolated("min_singular_value: empty");
  Eigen::JacobiSVD<dmat> svd(block);
  return svd.singularValues().minCoeff();
}

dmat assemble_kkt_matrix(const dmat& h, const dmat& jac) {
  const auto n = h.rows();
  const auto m = jac.rows();
  dmat k(n + m, n + m);
  k.topLeftCorner(n, n) = h;
  k.topRightCorner(n, m) = jac.transpose();
  k.bottomLeftCorner(m, n) = jac;
  k.bottomRightCorner(m, m).setZero();
  return k;
}

}  // namespace ssqp
