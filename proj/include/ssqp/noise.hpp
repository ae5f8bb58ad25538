#pragma once

#include <cstdint>
#include <memory>

#include "ssqp/oracle.hpp"
#include "ssqp/problems.hpp"
#include "ssqp/rng.hpp"

namespace ssqp {

// How target variances evolve with the iteration counter.
enum class VarianceMode {
  kBetaCoupled,   // rho = eps * beta_k^2, the experimental regime
  kConstantRaw,   // rho = eps, independent of beta
  kComplexity,    // rho = eps with eps preset from (omega_rho, k_max)
};

struct NoiseConfig {
  double eps_g = 0.0;
  double eps_c = 0.0;
  double eps_j = 0.0;
  VarianceMode mode = VarianceMode::kBetaCoupled;

  // Complexity-budget preset: each eps = (omega_rho/3)^2 / k_max, so
  // sqrt(rho_g) + sqrt(rho_c) + sqrt(rho_j) <= omega_rho / sqrt(k_max).
  static NoiseConfig complexity(double omega_rho, int k_max);

  // The experimental sweep keeps eps_c = eps_j^2; call to enforce it.
  void validate_coupled_sweep() const;
  void validate() const;
};

struct Variances {
  double g = 0.0;
  double c = 0.0;
  double j = 0.0;
};

// Target total variances (E of squared deviation norms) for iteration k.
Variances variance_schedule(const NoiseConfig& cfg, double beta_k);

struct StochasticEstimate {
  dvec gbar;
  dvec cbar;
  dmat jbar;
  Variances variances;  // the per-iteration targets (or realized, minibatch)
};

// Additive Gaussian perturbation of exact values. Per-coordinate variances
// g: rho_g/n, c: rho_c/m, jac entries: rho_j/(mn), so the total squared
// deviation of each block has expectation rho. The jbar draw uses a stream
// tag disjoint from (gbar, cbar); a rank-deficient jbar is redrawn on a fresh
// attempt counter, at most 10 times.
StochasticEstimate gaussian_estimate(const dvec& g, const dvec& c,
                                     const dmat& jac, double beta_k,
                                     const NoiseConfig& cfg,
                                     const RandomStream& stream,
                                     std::uint32_t k);

// Mini-batch estimate for the logistic problem: b1 data gradients without
// replacement for gbar, b2 pool pairs without replacement for the linear
// constraint block; the sphere row is appended exactly. Variances are the
// realized within-batch sample variances divided by the batch size.
StochasticEstimate minibatch_estimate(const dmat& features, const dvec& labels,
                                      const ConstraintPool& pool, const dvec& x,
                                      int b1, int b2,
                                      const RandomStream& stream,
                                      std::uint32_t k);

// Uniform interface the solvers consume: one estimate per (x, k).
class EstimateSource {
 public:
  virtual ~EstimateSource() = default;
  virtual StochasticEstimate at(const dvec& x, std::uint32_t k,
                                double beta_k) = 0;
};

class GaussianNoiseSource final : public EstimateSource {
 public:
  GaussianNoiseSource(const ProblemOracle& oracle, NoiseConfig cfg,
                      RandomStream stream)
      : oracle_(oracle), cfg_(cfg), stream_(stream) {}
  StochasticEstimate at(const dvec& x, std::uint32_t k,
                        double beta_k) override {
    return gaussian_estimate(oracle_.eval_grad(x), oracle_.eval_c(x),
                             oracle_.eval_jac(x), beta_k, cfg_, stream_, k);
  }

 private:
  const ProblemOracle& oracle_;
  NoiseConfig cfg_;
  RandomStream stream_;
};

class MinibatchSource final : public EstimateSource {
 public:
  MinibatchSource(std::shared_ptr<const dmat> features,
                  std::shared_ptr<const dvec> labels,
                  std::shared_ptr<const ConstraintPool> pool, int b1, int b2,
                  RandomStream stream)
      : features_(std::move(features)),
        labels_(std::move(labels)),
        pool_(std::move(pool)),
        b1_(b1),
        b2_(b2),
        stream_(stream) {}
  StochasticEstimate at(const dvec& x, std::uint32_t k, double) override {
    return minibatch_estimate(*features_, *labels_, *pool_, x, b1_, b2_,
                              stream_, k);
  }

 private:
  std::shared_ptr<const dmat> features_;
  std::shared_ptr<const dvec> labels_;
  std::shared_ptr<const ConstraintPool> pool_;
  int b1_, b2_;
  RandomStream stream_;
};

}  // namespace ssqp
