#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ssqp/oracle.hpp"
#include "ssqp/rng.hpp"

namespace ssqp {

// Registry of analytic equality-constrained test problems with known KKT
// points. Names: sphere-linear, quad-plane, rosenbrock-eq, circle-two,
// powell-like. Throws UnknownProblem otherwise.
ProblemOracle builtin_problem(const std::string& name);
std::vector<std::string> builtin_problem_names();

// Finite-sum logistic regression over labeled data with synthetic equality
// constraints: 10 averaged linear rows plus one sphere row |x|^2 = a2.
struct LogisticProblemConfig {
  dmat features;  // N x n
  dvec labels;    // entries in {-1, +1}
  int pool_size = 1000;                   // K
  double sphere_rhs = 1.0;                // a2
  dmat base_mat;                          // 10 x n, the unperturbed A1
  dvec base_vec;                          // 10, the unperturbed a1
  double perturbation_var = 1e-3;         // pool noise scale v: matrix entries
                                          // get variance v/n, vector entries v
  void validate() const;
};

// The K realized (A_k, a_k) pairs plus their exact means; the deterministic
// constraint is defined from these means, so mini-batch estimates are
// unbiased for it by construction.
struct ConstraintPool {
  std::vector<dmat> mats;
  std::vector<dvec> vecs;
  dmat mean_mat;
  dvec mean_vec;
  double sphere_rhs = 1.0;
};

// Draws base_mat/base_vec entries from N(1, 100) when the config leaves them
// empty, mirroring the synthetic constraint recipe.
LogisticProblemConfig default_logistic_config(dmat features, dvec labels,
                                              std::uint64_t seed);

std::pair<ProblemOracle, ConstraintPool> build_logistic_problem(
    const LogisticProblemConfig& cfg, std::uint64_t seed);

// Labeled dataset in LIBSVM sparse text format. Lines are
// "<label> <index>:<value> ..." with 1-based strictly increasing indices;
// '#' starts a comment. Labels 0/1 map to -1/+1.
std::pair<dmat, dvec> parse_libsvm(std::istream& in, int n_features = -1);
std::pair<dmat, dvec> parse_libsvm_file(const std::string& path,
                                        int n_features = -1);
void emit_libsvm(std::ostream& out, const dmat& features, const dvec& labels);

// Synthetic binary classification data: Gaussian features, labels from a
// planted separator drawn on the same stream.
std::pair<dmat, dvec> synthetic_dataset(int n_rows, int n_cols,
                                        std::uint64_t seed);

struct LipschitzEstimate {
  double lip_l = 0.0;      // L, objective-gradient Lipschitz bound
  double lip_gamma = 0.0;  // Gamma, summed constraint-gradient bounds
  std::string method;      // "analytic" when gamma came from the registry
};

// Sampled difference-quotient bounds near x1, inflated by 1.5. Registered
// analytic constraint curvatures short-circuit the gamma sampling.
LipschitzEstimate estimate_lipschitz(const ProblemOracle& oracle,
                                     const dvec& x1, int n_samples,
                                     double radius, const RandomStream& stream);

// Convenience wrapper with the defaults used by the CLI and harness: 64
// samples in a unit ball around the oracle's x1, stream derived from the
// problem name so the estimate is fixed across runs.
LipschitzEstimate default_lipschitz(const ProblemOracle& oracle);

}  // namespace ssqp
