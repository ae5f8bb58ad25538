#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "ssqp/errors.hpp"
#include "ssqp/noise.hpp"
#include "ssqp/problems.hpp"
#include "ssqp/subgradient.hpp"

using namespace ssqp;

namespace {

dvec vec2(double a, double b) {
  dvec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("penalty subgradient hand cases") {
  dmat j1(1, 2);
  j1 << 0, 1;
  const dvec s1 = subgradient(1.0, vec2(1, 0), dvec::Constant(1, -2.0), j1);
  CHECK(s1(0) == 1.0);
  CHECK(s1(1) == -1.0);

  const dvec s2 = subgradient(1.0, vec2(1, 0), dvec::Zero(1), j1);
  CHECK(s2(0) == 1.0);
  CHECK(s2(1) == 0.0);  // sign(0) = 0

  dmat j3(1, 2);
  j3 << 1, 0;
  const dvec s3 = subgradient(0.01, vec2(100, 0), dvec::Constant(1, 1.0), j3);
  CHECK(s3(0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(s3(1) == 0.0);
}

TEST_CASE("step size is the fixed penalty ratio") {
  const ProblemOracle p = builtin_problem("quad-plane");
  GaussianNoiseSource src(p, NoiseConfig{}, RandomStream(0));
  SubgradConfig cfg;
  cfg.tau = 1.0;
  cfg.lip_l = 1.0;
  cfg.lip_gamma = 1.0;
  cfg.max_iter = 5;
  const auto records =
      run_subgradient(p, src, cfg, BetaSchedule::constant(0.1));
  REQUIRE(records.size() == 5);
  for (const auto& rec : records) {
    CHECK(rec.alpha == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(std::isnan(rec.model_reduction));  // no SQP meaning
    CHECK(std::isnan(rec.alpha_min));
    CHECK(rec.tau == 1.0);
  }
}

TEST_CASE("zero noise penalty decreases over early iterations") {
  const ProblemOracle p = builtin_problem("quad-plane");
  GaussianNoiseSource src(p, NoiseConfig{}, RandomStream(0));
  SubgradConfig cfg;
  cfg.tau = 1.0;
  cfg.lip_l = 1.5;  // sampled bound for the quadratic objective
  cfg.lip_gamma = 0.0;
  cfg.max_iter = 101;
  // Step 1/300 keeps the first hundred iterates on the smooth side of the
  // penalty kink, where plain descent applies.
  const auto records =
      run_subgradient(p, src, cfg, BetaSchedule::constant(0.005));
  REQUIRE(records.size() == 101);
  auto penalty = [&](const dvec& x) {
    return cfg.tau * p.eval_f(x) + p.eval_c(x).lpNorm<1>();
  };
  for (std::size_t i = 1; i < records.size(); ++i) {
    CHECK(penalty(records[i].x) <= penalty(records[i - 1].x) + 1e-12);
  }
}

TEST_CASE("budgets and determinism") {
  const ProblemOracle p = builtin_problem("sphere-linear");
  SubgradConfig cfg;
  cfg.tau = 0.1;
  cfg.lip_l = 1.0;
  cfg.lip_gamma = 2.0;
  cfg.max_iter = 0;
  {
    GaussianNoiseSource src(p, NoiseConfig{}, RandomStream(0));
    CHECK(run_subgradient(p, src, cfg, BetaSchedule::constant(0.1)).empty());
  }

  cfg.max_iter = 40;
  NoiseConfig noisy;
  noisy.eps_g = 1e-4;
  noisy.eps_c = 1e-4;
  noisy.eps_j = 1e-2;
  GaussianNoiseSource a(p, noisy, RandomStream(42));
  GaussianNoiseSource b(p, noisy, RandomStream(42));
  const auto ra = run_subgradient(p, a, cfg, BetaSchedule::constant(0.1));
  const auto rb = run_subgradient(p, b, cfg, BetaSchedule::constant(0.1));
  REQUIRE(ra.size() == 40);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK((ra[i].x - rb[i].x).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("config validation") {
  SubgradConfig cfg;
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg.tau = 1.0;
  cfg.lip_l = -1.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg.lip_l = 1.0;
  cfg.max_iter = -1;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("default sweep spans the seven decades") {
  const auto sweep = default_tau_sweep();
  REQUIRE(sweep.size() == 7);
  CHECK(sweep.front() == 1e-6);
  CHECK(sweep.back() == 1e0);
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    CHECK(sweep[i] == doctest::Approx(10.0 * sweep[i - 1]).epsilon(1e-12));
  }
}

TEST_CASE("subgradient feasibility floor on the plane constraint") {
  // Small tau drives x toward the constraint set; the linear constraint is
  // exactly attainable, so the feasibility error settles near zero.
  const ProblemOracle p = builtin_problem("quad-plane");
  GaussianNoiseSource src(p, NoiseConfig{}, RandomStream(0));
  SubgradConfig cfg;
  cfg.tau = 1e-3;
  cfg.lip_l = 1.5;
  cfg.lip_gamma = 0.0;
  cfg.max_iter = 10000;
  const auto records =
      run_subgradient(p, src, cfg, BetaSchedule::diminishing());
  double best_feas = records.front().feas_err;
  for (const auto& rec : records) best_feas = std::min(best_feas, rec.feas_err);
  CHECK(best_feas <= 1e-3);
}
