#pragma once

#include <Eigen/Dense>
#include <utility>

namespace ssqp {

using dvec = Eigen::VectorXd;
using dmat = Eigen::MatrixXd;

// Newton-KKT system
//   [ h   jac^T ] [ d ]   [ rhs_g ]
//   [ jac  0    ] [ y ] = [ rhs_c ]  with the sign convention d,y solve
// h*d + jac^T*y = -rhs_g, jac*d = -rhs_c. h must be symmetric positive
// definite and jac full row rank; violations surface as NotSpd/RankDeficient.
struct KktSystem {
  dmat h;      // n x n
  dmat jac;    // m x n
  dvec rhs_g;  // n
  dvec rhs_c;  // m
};

struct KktSolution {
  dvec d;
  dvec y;
  double residual_inf = 0.0;  // inf norm of the assembled-system residual
};

// Block elimination through a Cholesky factorization of h and an LDLT of the
// Schur complement jac*h^-1*jac^T, plus one iterative refinement pass when the
// first residual exceeds 1e-10 * (1 + inf norm of the right-hand side).
KktSolution solve_kkt(const KktSystem& sys);

// argmin_y || g + jac^T y ||_2 via column-pivoted QR of jac^T.
// Returns (y, residual vector g + jac^T y).
std::pair<dvec, dvec> least_squares_multiplier(const dvec& g, const dmat& jac);

// Smallest singular value of an arbitrary dense block; throws NonFinite on
// non-finite input. Diagnostic helper for conditioning reports.
double min_singular_value(const dmat& block);

// Full (n+m) x (n+m) symmetric KKT matrix, for conditioning diagnostics.
dmat assemble_kkt_matrix(const dmat& h, const dmat& jac);

}  // namespace ssqp
