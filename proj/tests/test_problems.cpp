#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ssqp/errors.hpp"
#include "ssqp/kkt.hpp"
#include "ssqp/noise.hpp"
#include "ssqp/problems.hpp"
#include "ssqp/rng.hpp"

using namespace ssqp;

namespace {

dvec ball_sample(const dvec& center, SubStream& s) {
  dvec d(center.size());
  for (int i = 0; i < center.size(); ++i) d(i) = s.gaussian();
  return center + d / std::max(d.norm(), 1e-12) * s.uniform();
}

}  // namespace

TEST_CASE("registry lists five problems and rejects strangers") {
  const auto names = builtin_problem_names();
  REQUIRE(names.size() == 5);
  for (const auto& name : names) {
    const ProblemOracle p = builtin_problem(name);
    CHECK(p.name == name);
    CHECK(p.n >= p.m);
    CHECK(p.x1.size() == p.n);
    REQUIRE(p.known_solution.has_value());
  }
  CHECK_THROWS_AS(builtin_problem("nope"), UnknownProblem);
}

TEST_CASE("gradients match finite differences near the start point") {
  RandomStream stream = RandomStream::from_key("fd-check");
  for (const auto& name : builtin_problem_names()) {
    const ProblemOracle p = builtin_problem(name);
    for (int t = 0; t < 20; ++t) {
      SubStream s = stream.at(t, StreamTag::kDataset);
      const dvec x = ball_sample(p.x1, s);
      CHECK(grad_check_error(p, x) < 1e-5);
      CHECK(jac_check_error(p, x) < 1e-5);
    }
  }
}

TEST_CASE("start points satisfy the constraint qualification") {
  for (const auto& name : builtin_problem_names()) {
    const ProblemOracle p = builtin_problem(name);
    CHECK(min_singular_value(p.eval_jac(p.x1)) > 1e-8);
  }
}

TEST_CASE("known solutions are first order stationary") {
  for (const auto& name : builtin_problem_names()) {
    const ProblemOracle p = builtin_problem(name);
    const dvec& xs = *p.known_solution;
    CHECK(p.eval_c(xs).lpNorm<Eigen::Infinity>() < 1e-9);
    const auto [y, resid] =
        least_squares_multiplier(p.eval_grad(xs), p.eval_jac(xs));
    CHECK(resid.lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("quad plane optimum by hand") {
  const ProblemOracle p = builtin_problem("quad-plane");
  const dvec xs = dvec::Constant(5, 0.2);
  CHECK(p.eval_f(xs) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(p.eval_c(xs).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("sphere linear stationarity by hand") {
  const ProblemOracle p = builtin_problem("sphere-linear");
  const dvec& xs = *p.known_solution;
  CHECK(xs(0) == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-12));
  // grad f + jac' y = (1,1) - sqrt(2)(1,1) / sqrt(2) = 0 at y = 1/sqrt(2).
  const dvec resid =
      p.eval_grad(xs) + p.eval_jac(xs).transpose() *
                            dvec::Constant(1, 1.0 / std::sqrt(2.0));
  CHECK(resid.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("libsvm lines parse into dense rows") {
  std::istringstream in("1 1:0.5 3:-2\n-1\n");
  const auto [features, labels] = parse_libsvm(in, 3);
  REQUIRE(features.rows() == 2);
  REQUIRE(features.cols() == 3);
  CHECK(labels(0) == 1.0);
  CHECK(labels(1) == -1.0);
  CHECK(features(0, 0) == 0.5);
  CHECK(features(0, 1) == 0.0);
  CHECK(features(0, 2) == -2.0);
  CHECK(features.row(1).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("libsvm width defaults to the largest index") {
  std::istringstream in("0 2:1\n1 4:2 # tail comment\n# full comment line\n");
  const auto [features, labels] = parse_libsvm(in);
  REQUIRE(features.cols() == 4);
  REQUIRE(features.rows() == 2);
  CHECK(labels(0) == -1.0);  // 0/1 labels map to -1/+1
  CHECK(labels(1) == 1.0);
  CHECK(features(1, 3) == 2.0);
}

TEST_CASE("libsvm rejects malformed input") {
  {
    std::istringstream in("2 1:1\n");
    CHECK_THROWS_AS(parse_libsvm(in), NonBinaryLabel);
  }
  {
    std::istringstream in("1 3:1 2:1\n");  // indices must increase
    CHECK_THROWS_AS(parse_libsvm(in), MalformedLine);
  }
  {
    std::istringstream in("1 0:1\n");  // 1-based
    CHECK_THROWS_AS(parse_libsvm(in), MalformedLine);
  }
  {
    std::istringstream in("1 2:2 2:3\n");  // duplicate index
    CHECK_THROWS_AS(parse_libsvm(in), MalformedLine);
  }
  {
    std::istringstream in("1 a:1\n");
    CHECK_THROWS_AS(parse_libsvm(in), MalformedLine);
  }
  {
    std::istringstream in("1 5:1\n");  // exceeds the declared width
    CHECK_THROWS_AS(parse_libsvm(in, 3), MalformedLine);
  }
}

TEST_CASE("emit then parse round trips exactly") {
  const auto [features, labels] = synthetic_dataset(20, 6, 99);
  std::ostringstream out;
  emit_libsvm(out, features, labels);
  std::istringstream in(out.str());
  const auto [f2, l2] = parse_libsvm(in, 6);
  CHECK((features - f2).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((labels - l2).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("synthetic data is labeled in the unit alphabet") {
  const auto [features, labels] = synthetic_dataset(50, 4, 7);
  REQUIRE(features.rows() == 50);
  REQUIRE(features.cols() == 4);
  for (int i = 0; i < 50; ++i) {
    CHECK(std::abs(labels(i)) == 1.0);
  }
  const auto [f2, l2] = synthetic_dataset(50, 4, 7);
  CHECK((features - f2).lpNorm<Eigen::Infinity>() == 0.0);
  const auto [f3, l3] = synthetic_dataset(50, 4, 8);
  CHECK((features - f3).lpNorm<Eigen::Infinity>() != 0.0);
}

TEST_CASE("logistic problem from a tiny dataset") {
  dmat features(1, 2);
  features << 1, 0;
  dvec labels = dvec::Ones(1);
  LogisticProblemConfig cfg =
      default_logistic_config(features, labels, 3);
  cfg.pool_size = 5;
  const auto [oracle, pool] = build_logistic_problem(cfg, 3);

  CHECK(oracle.n == 2);
  CHECK(oracle.m == 11);
  CHECK(oracle.x1.norm() == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(oracle.eval_f(dvec::Zero(2)) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const dvec g0 = oracle.eval_grad(dvec::Zero(2));
  CHECK(g0(0) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(g0(1) == 0.0);

  // Pool means define the linear constraint block exactly.
  REQUIRE(pool.mats.size() == 5);
  dvec x(2);
  x << 0.3, -0.2;
  const dvec c = oracle.eval_c(x);
  REQUIRE(c.size() == 11);
  CHECK((c.head(10) - (pool.mean_mat * x - pool.mean_vec))
            .lpNorm<Eigen::Infinity>() < 1e-14);
  CHECK(c(10) == doctest::Approx(x.squaredNorm() - 1.0).epsilon(1e-15));
}

TEST_CASE("logistic sphere row shows up in the jacobian") {
  const auto [features, labels] = synthetic_dataset(40, 20, 5);
  LogisticProblemConfig cfg = default_logistic_config(features, labels, 5);
  cfg.pool_size = 8;
  const auto [oracle, pool] = build_logistic_problem(cfg, 5);

  dvec x = dvec::Zero(20);
  x(0) = 0.1;
  const dmat j = oracle.eval_jac(x);
  REQUIRE(j.rows() == 11);
  CHECK(j(10, 0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(j.row(10).tail(19).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("a zero variance pool collapses to the base pair") {
  const auto [features, labels] = synthetic_dataset(30, 20, 2);
  LogisticProblemConfig cfg = default_logistic_config(features, labels, 2);
  cfg.pool_size = 4;
  cfg.perturbation_var = 0.0;
  const auto [oracle, pool] = build_logistic_problem(cfg, 2);
  for (const auto& m : pool.mats) {
    CHECK((m - pool.mean_mat).lpNorm<Eigen::Infinity>() == 0.0);
  }
  // Exact pool means make every batch estimate deterministic.
  auto fp = std::make_shared<const dmat>(features);
  auto lp = std::make_shared<const dvec>(labels);
  auto pp = std::make_shared<const ConstraintPool>(pool);
  const auto est = minibatch_estimate(*fp, *lp, *pp, oracle.x1, 30, 2,
                                      RandomStream(4), 3);
  CHECK((est.cbar - oracle.eval_c(oracle.x1)).lpNorm<Eigen::Infinity>() <
        1e-13);
  CHECK((est.jbar - oracle.eval_jac(oracle.x1)).lpNorm<Eigen::Infinity>() <
        1e-13);
}

TEST_CASE("logistic construction is deterministic in the seed") {
  const auto [features, labels] = synthetic_dataset(25, 20, 9);
  LogisticProblemConfig ca = default_logistic_config(features, labels, 42);
  LogisticProblemConfig cb = default_logistic_config(features, labels, 42);
  ca.pool_size = cb.pool_size = 3;
  const auto [oa, pa] = build_logistic_problem(ca, 42);
  const auto [ob, pb] = build_logistic_problem(cb, 42);
  CHECK((oa.x1 - ob.x1).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((pa.mean_mat - pb.mean_mat).lpNorm<Eigen::Infinity>() == 0.0);

  LogisticProblemConfig cc = default_logistic_config(features, labels, 43);
  cc.pool_size = 3;
  const auto [oc, pc] = build_logistic_problem(cc, 43);
  CHECK((pa.mean_mat - pc.mean_mat).lpNorm<Eigen::Infinity>() != 0.0);
}

TEST_CASE("logistic config validation") {
  dmat features(2, 2);
  features << 1, 0, 0, 1;
  dvec labels(2);
  labels << 1, 2;  // not a binary label
  LogisticProblemConfig cfg = default_logistic_config(features, labels, 1);
  CHECK_THROWS_AS(cfg.validate(), UsageError);

  labels << 1, -1;
  cfg = default_logistic_config(features, labels, 1);
  cfg.pool_size = 0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);

  cfg.pool_size = 2;
  cfg.sphere_rhs = -1.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("lipschitz samples recover exact quadratic curvature") {
  // quad-plane: grad f = x, so every difference quotient is exactly 1.
  const ProblemOracle p = builtin_problem("quad-plane");
  const LipschitzEstimate est = estimate_lipschitz(
      p, p.x1, 32, 1.0, RandomStream::from_key("lip-test"));
  CHECK(est.lip_l == doctest::Approx(1.5).epsilon(1e-12));
  // Linear constraint: analytic gamma 0.
  CHECK(est.lip_gamma == 0.0);
  CHECK(est.method == "analytic");
}

TEST_CASE("sphere constraint carries analytic curvature two") {
  const ProblemOracle p = builtin_problem("sphere-linear");
  const LipschitzEstimate est = default_lipschitz(p);
  CHECK(est.lip_gamma == 2.0);
  CHECK(est.method == "analytic");
  CHECK(est.lip_l > 0.0);

  const LipschitzEstimate again = default_lipschitz(p);
  CHECK(est.lip_l == again.lip_l);
}

TEST_CASE("degenerate sampling inputs are rejected") {
  const ProblemOracle p = builtin_problem("quad-plane");
  CHECK_THROWS_AS(
      estimate_lipschitz(p, p.x1, 1, 1.0, RandomStream::from_key("x")),
      UsageError);
  CHECK_THROWS_AS(
      estimate_lipschitz(p, p.x1, 8, 0.0, RandomStream::from_key("x")),
      UsageError);
}
