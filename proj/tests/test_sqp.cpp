#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>

#include "doctest.h"
#include "ssqp/errors.hpp"
#include "ssqp/metrics.hpp"
#include "ssqp/noise.hpp"
#include "ssqp/problems.hpp"
#include "ssqp/rng.hpp"
#include "ssqp/sqp.hpp"

using namespace ssqp;

namespace {

dvec vec2(double a, double b) {
  dvec v(2);
  v << a, b;
  return v;
}

// Zero-noise estimates straight from the oracle.
GaussianNoiseSource exact_source(const ProblemOracle& p) {
  return GaussianNoiseSource(p, NoiseConfig{}, RandomStream(0));
}

// Bisection on [lo, hi] for the sign change of phi, oracle for alpha_phi.
double bisect_alpha_phi(const StepModel& m) {
  double lo = 0.0, hi = 1.0;
  while (m.phi(hi) <= 0.0 && hi < 1e8) hi *= 2.0;
  if (hi >= 1e8) return hi;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (m.phi(mid) <= 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("trial merit parameter branches") {
  const dmat h = dmat::Identity(2, 2);

  // g'd + d'Hd/2 = -2 + 1 <= 0.
  CHECK(!trial_merit_parameter(vec2(1, 1), vec2(-1, -1), h,
                               dvec::Constant(1, 1.0), 0.1)
             .is_finite());
  CHECK(!trial_merit_parameter(vec2(1, 1), vec2(0, 0), h,
                               dvec::Constant(1, 1.0), 0.1)
             .is_finite());

  const ExtReal t = trial_merit_parameter(vec2(1, 0), vec2(1, 0), h,
                                          dvec::Constant(1, 1.0), 0.1);
  REQUIRE(t.is_finite());
  CHECK(t.value() == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("merit parameter update") {
  CHECK(update_merit_parameter(1.0, ExtReal::finite(0.6), 0.01) ==
        doctest::Approx(0.594).epsilon(1e-15));
  CHECK(update_merit_parameter(0.5, ExtReal::finite(0.6), 0.01) == 0.5);
  CHECK(update_merit_parameter(1.0, ExtReal::infinity(), 0.01) == 1.0);
}

TEST_CASE("model reduction arithmetic") {
  CHECK(model_reduction(1.0, vec2(1, 1), dvec::Constant(1, 1.0),
                        vec2(-1, -1)) == doctest::Approx(3.0));
  CHECK(model_reduction(1.0, vec2(0, 0), dvec::Zero(1), vec2(0, 0)) == 0.0);
  CHECK(model_reduction(0.594, vec2(1, 1), dvec::Constant(1, 1.0),
                        vec2(-1, -1)) == doctest::Approx(2.188).epsilon(1e-15));
}

TEST_CASE("trial ratio branches") {
  const ExtReal a = trial_ratio(3.0, 1.0, 2.0);
  REQUIRE(a.is_finite());
  CHECK(a.value() == doctest::Approx(1.5).epsilon(1e-15));

  CHECK(!trial_ratio(1.0, 1.0, 0.0).is_finite());

  const ExtReal b = trial_ratio(2.188, 0.594, 2.0);
  REQUIRE(b.is_finite());
  CHECK(b.value() == doctest::Approx(2.188 / 1.188).epsilon(1e-14));
}

TEST_CASE("ratio parameter update") {
  CHECK(update_ratio(1.0, ExtReal::finite(1.5), 0.01) == 1.0);
  CHECK(update_ratio(3.0, ExtReal::finite(1.5), 0.01) == 1.5);
  CHECK(update_ratio(1.0, ExtReal::infinity(), 0.01) == 1.0);
}

TEST_CASE("phi pieces evaluate by hand") {
  StepModel m;
  m.eta = 0.5;
  m.beta = 1.0;
  m.cbar_l1 = 1.0;
  m.tau = 1.0;
  m.lip_l = 2.0;
  m.lip_gamma = 0.0;  // tau L + Gamma = 2
  m.d_norm_sq = 1.0;

  m.delta_l = 2.0;
  CHECK(m.phi(1.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(m.phi(0.0) == 0.0);
  CHECK(m.phi(2.0) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("alpha phi closed form") {
  StepModel m;
  m.eta = 0.5;
  m.beta = 1.0;
  m.cbar_l1 = 1.0;
  m.tau = 1.0;
  m.lip_l = 2.0;
  m.lip_gamma = 0.0;
  m.d_norm_sq = 1.0;

  m.delta_l = 2.0;
  CHECK(compute_alpha_phi(m) == doctest::Approx(1.0).epsilon(1e-10));

  m.delta_l = 4.0;
  CHECK(compute_alpha_phi(m) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-10));
}

TEST_CASE("alpha phi agrees with bisection on random models") {
  RandomStream stream = RandomStream::from_key("alpha-phi-random");
  for (int trial = 0; trial < 300; ++trial) {
    SubStream s = stream.at(trial, StreamTag::kDataset);
    StepModel m;
    m.eta = 0.05 + 0.9 * s.uniform();
    m.beta = 0.05 + 0.95 * s.uniform();
    m.tau = 0.01 + s.uniform();
    m.lip_l = 0.1 + 10.0 * s.uniform();
    m.lip_gamma = 10.0 * s.uniform();
    m.d_norm_sq = 1e-6 + 4.0 * s.uniform();
    m.cbar_l1 = 2.0 * s.uniform();
    // Keep delta_l above the certificate floor so the root is positive.
    m.delta_l = 0.5 * m.tau * m.d_norm_sq + m.cbar_l1 + s.uniform();

    const double root = compute_alpha_phi(m);
    const double oracle = bisect_alpha_phi(m);
    CHECK(root == doctest::Approx(oracle).epsilon(1e-8));
    // Defining property at interior roots: zero crossing, positive beyond.
    const double scale =
        1.0 + std::abs(m.delta_l) + m.cbar_l1 + m.quad_coeff();
    CHECK(std::abs(m.phi(root)) <= 1e-9 * scale);
    CHECK(m.phi(root * (1.0 + 1e-6)) > 0.0);
  }
}

TEST_CASE("step interval arithmetic") {
  StepModel m;
  m.eta = 0.5;
  m.beta = 0.1;
  m.tau = 1.0;
  m.lip_l = 1.0;
  m.lip_gamma = 1.0;  // tau L + Gamma = 2
  m.cbar_l1 = 1.0;
  m.d_norm_sq = 1.0;
  m.delta_l = 20.0;  // first-piece root lands exactly at 1

  const StepInterval iv = step_interval(m, 1.0, 10.0);
  CHECK(iv.alpha_min == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(iv.alpha_phi == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(iv.alpha_max == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(iv.alpha_min <= iv.alpha_max);
  CHECK(iv.alpha_max <= iv.alpha_phi + 1e-12);
}

TEST_CASE("zero direction interval uses the additive cap") {
  StepModel m;
  m.eta = 0.5;
  m.beta = 1.0;
  m.tau = 1.0;
  m.lip_l = 1.0;
  m.lip_gamma = 0.0;
  m.d_norm_sq = 0.0;
  m.delta_l = 0.0;
  m.cbar_l1 = 0.0;

  const StepInterval iv = step_interval(m, 0.05, 10.0);
  CHECK(iv.alpha_min == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(iv.alpha_max == doctest::Approx(10.05).epsilon(1e-15));
  CHECK(iv.alpha_phi == doctest::Approx(10.05).epsilon(1e-15));
}

TEST_CASE("geometric scan picks the last admissible power") {
  // phi(a) = a^2 - a for a <= 1; root exactly 1.
  StepModel m;
  m.eta = 0.5;
  m.beta = 1.0;
  m.cbar_l1 = 1.0;
  m.tau = 1.0;
  m.lip_l = 2.0;
  m.lip_gamma = 0.0;
  m.d_norm_sq = 1.0;
  m.delta_l = 2.0;

  StepInterval iv;
  iv.alpha_min = 0.05;
  iv.alpha_max = 1.0;
  iv.alpha_phi = 1.0;
  iv.beta_k = 1.0;
  const double a = select_alpha(iv, m, SqpParams::StepPolicy::kGeometricScan);
  CHECK(a == doctest::Approx(0.05 * std::pow(1.1, 31)).epsilon(1e-12));
  CHECK(a == doctest::Approx(0.95970).epsilon(1e-4));

  iv.alpha_min = 0.9;
  iv.alpha_max = 0.95;
  const double b = select_alpha(iv, m, SqpParams::StepPolicy::kGeometricScan);
  CHECK(b == 0.9);  // t=1 gives 0.99, beyond the cap

  iv.alpha_min = 0.5;
  iv.alpha_max = 0.5;
  CHECK(select_alpha(iv, m, SqpParams::StepPolicy::kGeometricScan) == 0.5);

  iv.alpha_min = 0.05;
  iv.alpha_max = 1.0;
  CHECK(select_alpha(iv, m, SqpParams::StepPolicy::kMinStep) == 0.05);
}

TEST_CASE("one iteration on the sphere from a hand-solved point") {
  const ProblemOracle p = builtin_problem("sphere-linear");
  auto src = exact_source(p);

  SqpParams params;
  params.lip_l = 1.0;
  params.lip_gamma = 2.0;

  SolverState state;
  state.x = vec2(2, 0);
  state.tau = 1.0;
  state.xi = 1.0;
  state.k = 1;

  const auto est = src.at(state.x, 1, 0.1);
  CHECK((est.gbar - p.eval_grad(state.x)).lpNorm<Eigen::Infinity>() == 0.0);
  const auto [next, rec] =
      iterate(state, est, dmat::Identity(2, 2), params, 0.1, p);

  // g=(1,1), c=(3), jac=[4 0]: d=(-0.75,-1), y=-1/16.
  CHECK(rec.d_norm_sq == doctest::Approx(1.5625).epsilon(1e-12));
  CHECK(!rec.tau_trial.is_finite());  // g'd + d'd/2 = -1.75 + 0.78125 < 0
  CHECK(rec.tau == 1.0);
  CHECK(rec.model_reduction == doctest::Approx(4.75).epsilon(1e-12));
  REQUIRE(rec.xi_trial.is_finite());
  CHECK(rec.xi_trial.value() == doctest::Approx(3.04).epsilon(1e-12));
  CHECK(rec.xi == 1.0);
  const dvec expect = vec2(2, 0) + rec.alpha * vec2(-0.75, -1.0);
  CHECK((next.x - expect).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(rec.alpha >= rec.alpha_min);
  CHECK(rec.alpha <= rec.alpha_max + 1e-15);
}

TEST_CASE("a stationary point freezes the iteration") {
  const ProblemOracle p = builtin_problem("quad-plane");
  auto src = exact_source(p);
  REQUIRE(p.known_solution.has_value());

  SqpParams params;
  SolverState state;
  state.x = *p.known_solution;
  state.tau = 0.7;
  state.xi = 0.9;
  state.k = 1;

  const auto est = src.at(state.x, 1, 0.1);
  const auto [next, rec] =
      iterate(state, est, dmat::Identity(p.n, p.n), params, 0.1, p);

  CHECK((next.x - state.x).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(rec.tau == 0.7);
  CHECK(rec.xi == 0.9);
  CHECK(!rec.tau_trial.is_finite());
  CHECK(!rec.xi_trial.is_finite());
  CHECK(rec.alpha == rec.alpha_min);
  CHECK(rec.alpha_max == rec.alpha_phi);
  CHECK(rec.alpha_max ==
        doctest::Approx(rec.alpha_min + params.theta * 0.1).epsilon(1e-15));
}

TEST_CASE("runs are deterministic and support an empty budget") {
  const ProblemOracle p = builtin_problem("sphere-linear");
  const BetaSchedule betas = BetaSchedule::constant(0.1);

  SqpParams params;
  params.lip_l = 1.0;
  params.lip_gamma = 2.0;
  params.max_iter = 0;
  {
    auto src = exact_source(p);
    const SqpRun empty = run_sqp(p, src, params, betas);
    CHECK(empty.records.empty());
    CHECK((empty.x_final - p.x1).lpNorm<Eigen::Infinity>() == 0.0);
  }

  params.max_iter = 50;
  NoiseConfig noisy;
  noisy.eps_g = 1e-4;
  noisy.eps_c = 1e-4;
  noisy.eps_j = 1e-2;
  GaussianNoiseSource a(p, noisy, RandomStream(1234));
  GaussianNoiseSource b(p, noisy, RandomStream(1234));
  const SqpRun ra = run_sqp(p, a, params, betas);
  const SqpRun rb = run_sqp(p, b, params, betas);
  REQUIRE(ra.records.size() == 50);
  REQUIRE(rb.records.size() == 50);
  CHECK(ra.oracle_calls == 50);
  for (std::size_t i = 0; i < ra.records.size(); ++i) {
    CHECK((ra.records[i].x - rb.records[i].x).lpNorm<Eigen::Infinity>() ==
          0.0);
    CHECK(ra.records[i].alpha == rb.records[i].alpha);
    CHECK(ra.records[i].tau == rb.records[i].tau);
  }
}

TEST_CASE("zero noise run converges on the sphere") {
  const ProblemOracle p = builtin_problem("sphere-linear");
  auto src = exact_source(p);
  SqpParams params;
  params.lip_l = 1.0;
  params.lip_gamma = 2.0;
  params.max_iter = 5000;
  const SqpRun run = run_sqp(p, src, params, BetaSchedule::constant(0.1));
  const auto& last = run.records.back();
  CHECK(last.feas_err <= 1e-8);
  CHECK(last.stat_err <= 1e-6);
  // Matches the analytic minimizer -(1,1)/sqrt(2).
  REQUIRE(p.known_solution.has_value());
  CHECK((run.x_final - *p.known_solution).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("zero noise trajectory equals the deterministic one") {
  const ProblemOracle p = builtin_problem("quad-plane");
  SqpParams params;
  params.max_iter = 200;

  GaussianNoiseSource zero_a(p, NoiseConfig{}, RandomStream(7));
  GaussianNoiseSource zero_b(p, NoiseConfig{}, RandomStream(99999));
  const SqpRun ra = run_sqp(p, zero_a, params, BetaSchedule::constant(0.1));
  const SqpRun rb = run_sqp(p, zero_b, params, BetaSchedule::constant(0.1));
  // Stream identity is irrelevant at zero variance.
  for (std::size_t i = 0; i < ra.records.size(); ++i) {
    CHECK((ra.records[i].x - rb.records[i].x).lpNorm<Eigen::Infinity>() <=
          1e-12);
  }
}

TEST_CASE("beta schedules parse and evaluate") {
  const BetaSchedule c = BetaSchedule::parse("const:0.25");
  CHECK(c.at(1) == 0.25);
  CHECK(c.at(9999) == 0.25);
  CHECK(c.label() == "const:0.25");

  const BetaSchedule d = BetaSchedule::parse("dimin");
  CHECK(d.at(1) == 1.0);
  CHECK(d.at(500) == 1.0);
  CHECK(d.at(501) == doctest::Approx(std::pow(501.0, -0.6)).epsilon(1e-15));
  CHECK(d.at(1000) == doctest::Approx(std::pow(501.0, -0.6)).epsilon(1e-15));
  CHECK(d.at(1001) == doctest::Approx(std::pow(1001.0, -0.6)).epsilon(1e-15));

  const BetaSchedule x = BetaSchedule::parse("complexity:1:10000");
  CHECK(x.at(3) == doctest::Approx(0.01).epsilon(1e-15));

  CHECK_THROWS_AS(BetaSchedule::parse("linear:0.1"), UsageError);
  CHECK_THROWS_AS(BetaSchedule::parse("const:nope"), UsageError);
  CHECK_THROWS_AS(BetaSchedule::constant(0.0), UsageError);
  CHECK_THROWS_AS(BetaSchedule::constant(1.5), UsageError);
}

TEST_CASE("parameter validation enforces ranges and the schedule bound") {
  SqpParams params;
  params.max_iter = 10;
  params.validate(BetaSchedule::constant(0.1));

  SqpParams bad = params;
  bad.eta = 1.0;
  CHECK_THROWS_AS(bad.validate(BetaSchedule::constant(0.1)), UsageError);

  bad = params;
  bad.zeta = 2.0;
  bad.kappa_h = 1.0;
  CHECK_THROWS_AS(bad.validate(BetaSchedule::constant(0.1)), UsageError);

  // w = 2(1-eta) xi0 tau0 / (tau0 L + Gamma) = 1 at the defaults, so
  // beta = 1 passes and any xi0 > 1 pushes w*beta past 1.
  params.validate(BetaSchedule::constant(1.0));
  bad = params;
  bad.xi0 = 1.2;
  CHECK_THROWS_AS(bad.validate(BetaSchedule::constant(1.0)), UsageError);
}

TEST_CASE("hessian oracle bounds are enforced") {
  const ProblemOracle p = builtin_problem("sphere-linear");
  auto src = exact_source(p);
  SqpParams params;
  params.lip_l = 1.0;
  params.lip_gamma = 2.0;
  params.max_iter = 3;

  const HessianOracle too_small = [](const dvec& x, int) {
    return 0.5 * dmat::Identity(int(x.size()), int(x.size()));
  };
  CHECK_THROWS_AS(run_sqp(p, src, params, BetaSchedule::constant(0.1),
                          std::nullopt, too_small),
                  InvariantViolated);

  auto src2 = exact_source(p);
  const HessianOracle scaled = [](const dvec& x, int) {
    return 2.0 * dmat::Identity(int(x.size()), int(x.size()));
  };
  const SqpRun run = run_sqp(p, src2, params, BetaSchedule::constant(0.1),
                             std::nullopt, scaled);
  CHECK(run.records.size() == 3);
}
