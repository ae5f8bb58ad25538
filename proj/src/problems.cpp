#include "ssqp/problems.hpp"

#include <cmath>
#include <memory>

#include "ssqp/errors.hpp"

namespace ssqp {

namespace {

ProblemOracle sphere_linear() {
  ProblemOracle p;
  p.name = "sphere-linear";
  p.n = 2;
  p.m = 1;
  p.eval_f = [](const dvec& x) { return x(0) + x(1); };
  p.eval_grad = [](const dvec&) { return dvec::Ones(2); };
  p.eval_c = [](const dvec& x) {
    dvec c(1);
    c(0) = x.squaredNorm() - 1.0;
    return c;
  };
  p.eval_jac = [](const dvec& x) {
    dmat j(1, 2);
    j << 2 * x(0), 2 * x(1);
    return j;
  };
  p.x1 = dvec(2);
  p.x1 << 2, 0;
  dvec sol(2);
  sol << -1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0);
  p.known_solution = sol;
  dvec curv(1);
  curv << 2.0;
  p.constraint_curvatures = curv;
  return p;
}

ProblemOracle quad_plane() {
  ProblemOracle p;
  p.name = "quad-plane";
  p.n = 5;
  p.m = 1;
  p.eval_f = [](const dvec& x) { return 0.5 * x.squaredNorm(); };
  p.eval_grad = [](const dvec& x) { return x; };
  p.eval_c = [](const dvec& x) {
    dvec c(1);
    c(0) = x.sum() - 1.0;
    return c;
  };
  p.eval_jac = [](const dvec& x) { return dmat::Ones(1, x.size()); };
  p.x1 = dvec::Ones(5);
  p.known_solution = dvec::Constant(5, 0.2);
  p.constraint_curvatures = dvec::Zero(1);
  return p;
}

ProblemOracle rosenbrock_eq() {
  ProblemOracle p;
  p.name = "rosenbrock-eq";
  p.n = 2;
  p.m = 1;
  p.eval_f = [](const dvec& x) {
    const double a = x(1) - x(0) * x(0);
    const double b = 1.0 - x(0);
    return 100.0 * a * a + b * b;
  };
  p.eval_grad = [](const dvec& x) {
    const double a = x(1) - x(0) * x(0);
    dvec g(2);
    g(0) = -400.0 * a * x(0) - 2.0 * (1.0 - x(0));
    g(1) = 200.0 * a;
    return g;
  };
  p.eval_c = [](const dvec& x) {
    dvec c(1);
    c(0) = x.squaredNorm() - 2.0;
    return c;
  };
  p.eval_jac = [](const dvec& x) {
    dmat j(1, 2);
    j << 2 * x(0), 2 * x(1);
    return j;
  };
  p.x1 = dvec(2);
  p.x1 << -1.2, 1.0;
  p.known_solution = dvec::Ones(2);
  dvec curv(1);
  curv << 2.0;
  p.constraint_curvatures = curv;
  return p;
}

// min x1 + 2 x2 + x3^2/2 on the unit sphere sliced by the plane x3 = 0.
// KKT point x* = -(1, 2, 0)/sqrt(5), y* = (sqrt(5)/2, 0).
ProblemOracle circle_two() {
  ProblemOracle p;
  p.name = "circle-two";
  p.n = 3;
  p.m = 2;
  p.eval_f = [](const dvec& x) {
    return x(0) + 2.0 * x(1) + 0.5 * x(2) * x(2);
  };
  p.eval_grad = [](const dvec& x) {
    dvec g(3);
    g << 1.0, 2.0, x(2);
    return g;
  };
  p.eval_c = [](const dvec& x) {
    dvec c(2);
    c(0) = x.squaredNorm() - 1.0;
    c(1) = x(2);
    return c;
  };
  p.eval_jac = [](const dvec& x) {
    dmat j(2, 3);
    j << 2 * x(0), 2 * x(1), 2 * x(2), 0, 0, 1;
    return j;
  };
  p.x1 = dvec::Ones(3);
  const double s = std::sqrt(5.0);
  dvec sol(3);
  sol << -1.0 / s, -2.0 / s, 0.0;
  p.known_solution = sol;
  dvec curv(2);
  curv << 2.0, 0.0;
  p.constraint_curvatures = curv;
  return p;
}

// Strongly convex objective with one sphere and one linear constraint.
// KKT point x* = (1, 1, 1, -1), y* = (1/4, -1/2).
ProblemOracle powell_like() {
  ProblemOracle p;
  p.name = "powell-like";
  p.n = 4;
  p.m = 2;
  dvec z(4);
  z << 1.0, 1.0, 2.0, -1.5;
  p.eval_f = [z](const dvec& x) { return 0.5 * (x - z).squaredNorm(); };
  p.eval_grad = [z](const dvec& x) { return dvec(x - z); };
  p.eval_c = [](const dvec& x) {
    dvec c(2);
    c(0) = x.squaredNorm() - 4.0;
    c(1) = x(0) + x(1) - x(2) - 1.0;
    return c;
  };
  p.eval_jac = [](const dvec& x) {
    dmat j(2, 4);
    j << 2 * x(0), 2 * x(1), 2 * x(2), 2 * x(3), 1, 1, -1, 0;
    return j;
  };
  p.x1 = dvec(4);
  p.x1 << 2.0, 0.5, 1.0, -0.5;
  dvec sol(4);
  sol << 1.0, 1.0, 1.0, -1.0;
  p.known_solution = sol;
  dvec curv(2);
  curv << 2.0, 0.0;
  p.constraint_curvatures = curv;
  return p;
}

// Point uniform in the ball of the given radius around center.
dvec ball_point(const dvec& center, double radius, SubStream& sub) {
  dvec dir(center.size());
  for (int i = 0; i < center.size(); ++i) dir(i) = sub.gaussian();
  const double norm = dir.norm();
  if (norm == 0.0) return center;
  const double r =
      radius * std::pow(sub.uniform(), 1.0 / static_cast<double>(center.size()));
  return center + (r / norm) * dir;
}

}  // namespace

std::vector<std::string> builtin_problem_names() {
  return {"sphere-linear", "quad-plane", "rosenbrock-eq", "circle-two",
          "powell-like"};
}

ProblemOracle builtin_problem(const std::string& name) {
  if (name == "sphere-linear") return sphere_linear();
  if (name == "quad-plane") return quad_plane();
  if (name == "rosenbrock-eq") return rosenbrock_eq();
  if (name == "circle-two") return circle_two();
  if (name == "powell-like") return powell_like();
  throw UnknownProblem(name);
}

void LogisticProblemConfig::validate() const {
  if (features.rows() == 0 || features.cols() == 0) {
    throw UsageError("logistic config: empty dataset");
  }
  if (labels.size() != features.rows()) {
    throw UsageError("logistic config: label count mismatch");
  }
  for (int i = 0; i < labels.size(); ++i) {
    if (labels(i) != 1.0 && labels(i) != -1.0) {
      throw UsageError("logistic config: labels must be +1/-1");
    }
  }
  if (pool_size < 1) throw UsageError("logistic config: pool_size < 1");
  if (!(sphere_rhs > 0.0)) throw UsageError("logistic config: a2 <= 0");
  if (base_mat.cols() != features.cols() ||
      base_vec.size() != base_mat.rows()) {
    throw UsageError("logistic config: base constraint shape mismatch");
  }
  if (!(perturbation_var >= 0.0)) {
    throw UsageError("logistic config: negative perturbation variance");
  }
}

LogisticProblemConfig default_logistic_config(dmat features, dvec labels,
                                              std::uint64_t seed) {
  LogisticProblemConfig cfg;
  const int n = static_cast<int>(features.cols());
  cfg.features = std::move(features);
  cfg.labels = std::move(labels);
  cfg.base_mat.resize(10, n);
  cfg.base_vec.resize(10);
  // Base constraint data: entries from N(1, 100).
  SubStream sub = RandomStream(seed).at(1, StreamTag::kConstraintPool);
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < n; ++c) cfg.base_mat(r, c) = 1.0 + 10.0 * sub.gaussian();
  }
  for (int r = 0; r < 10; ++r) cfg.base_vec(r) = 1.0 + 10.0 * sub.gaussian();
  cfg.perturbation_var = 1e-3;
  return cfg;
}

std::pair<ProblemOracle, ConstraintPool> build_logistic_problem(
    const LogisticProblemConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int n = static_cast<int>(cfg.features.cols());
  const int rows = static_cast<int>(cfg.base_mat.rows());
  const RandomStream stream(seed);

  ConstraintPool pool;
  pool.sphere_rhs = cfg.sphere_rhs;
  pool.mats.reserve(cfg.pool_size);
  pool.vecs.reserve(cfg.pool_size);
  pool.mean_mat = dmat::Zero(rows, n);
  pool.mean_vec = dvec::Zero(rows);
  const double mat_sd = std::sqrt(cfg.perturbation_var / n);
  const double vec_sd = std::sqrt(cfg.perturbation_var);
  SubStream sub = stream.at(0, StreamTag::kConstraintPool);
  for (int k = 0; k < cfg.pool_size; ++k) {
    dmat a = cfg.base_mat;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < n; ++c) a(r, c) += mat_sd * sub.gaussian();
    }
    dvec b = cfg.base_vec;
    for (int r = 0; r < rows; ++r) b(r) += vec_sd * sub.gaussian();
    pool.mean_mat += a;
    pool.mean_vec += b;
    pool.mats.push_back(std::move(a));
    pool.vecs.push_back(std::move(b));
  }
  pool.mean_mat /= cfg.pool_size;
  pool.mean_vec /= cfg.pool_size;

  struct Shared {
    dmat x_feats;
    dvec y_labels;
    dmat a_mean;
    dvec b_mean;
    double a2;
  };
  auto sh = std::make_shared<Shared>(Shared{cfg.features, cfg.labels,
                                            pool.mean_mat, pool.mean_vec,
                                            cfg.sphere_rhs});
  const auto n_data = static_cast<double>(sh->x_feats.rows());

  ProblemOracle p;
  p.name = "logistic";
  p.n = n;
  p.m = rows + 1;
  p.eval_f = [sh, n_data](const dvec& x) {
    const dvec t = sh->y_labels.cwiseProduct(sh->x_feats * x);
    double total = 0.0;
    for (int i = 0; i < t.size(); ++i) {
      // log(1 + e^{-t}) without overflow on either sign.
      total += t(i) > 0 ? std::log1p(std::exp(-t(i)))
                        : -t(i) + std::log1p(std::exp(t(i)));
    }
    return total / n_data;
  };
  p.eval_grad = [sh, n_data](const dvec& x) {
    const dvec t = sh->y_labels.cwiseProduct(sh->x_feats * x);
    dvec w(t.size());
    for (int i = 0; i < t.size(); ++i) {
      // sigmoid(-t), evaluated on the stable side.
      if (t(i) >= 0) {
        const double e = std::exp(-t(i));
        w(i) = e / (1.0 + e);
      } else {
        w(i) = 1.0 / (1.0 + std::exp(t(i)));
      }
    }
    return dvec(-(sh->x_feats.transpose() *
                  sh->y_labels.cwiseProduct(w)) /
                n_data);
  };
  p.eval_c = [sh](const dvec& x) {
    dvec c(sh->a_mean.rows() + 1);
    c.head(sh->a_mean.rows()) = sh->a_mean * x - sh->b_mean;
    c(sh->a_mean.rows()) = x.squaredNorm() - sh->a2;
    return c;
  };
  p.eval_jac = [sh](const dvec& x) {
    dmat j(sh->a_mean.rows() + 1, x.size());
    j.topRows(sh->a_mean.rows()) = sh->a_mean;
    j.bottomRows(1) = 2.0 * x.transpose();
    return j;
  };
  dvec x1(n);
  SubStream init = stream.at(0, StreamTag::kInitialPoint);
  for (int i = 0; i < n; ++i) x1(i) = init.gaussian();
  p.x1 = 0.1 * x1 / x1.norm();
  dvec curv = dvec::Zero(rows + 1);
  curv(rows) = 2.0;
  p.constraint_curvatures = curv;
  return {std::move(p), std::move(pool)};
}

LipschitzEstimate estimate_lipschitz(const ProblemOracle& oracle,
                                     const dvec& x1, int n_samples,
                                     double radius,
                                     const RandomStream& stream) {
  if (n_samples < 2) throw UsageError("estimate_lipschitz: n_samples < 2");
  if (!(radius > 0)) throw UsageError("estimate_lipschitz: radius <= 0");

  SubStream sub = stream.at(0, StreamTag::kLipschitzSamples);
  std::vector<dvec> pts(n_samples);
  std::vector<dvec> grads(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    pts[i] = ball_point(x1, radius, sub);
    grads[i] = oracle.eval_grad(pts[i]);
  }

  const bool need_jac = !oracle.constraint_curvatures.has_value();
  std::vector<dmat> jacs;
  if (need_jac) {
    jacs.reserve(n_samples);
    for (int i = 0; i < n_samples; ++i) jacs.push_back(oracle.eval_jac(pts[i]));
  }

  double max_quot = 0.0;
  dvec row_quot = dvec::Zero(oracle.m);
  bool any_pair = false;
  for (int i = 0; i < n_samples; ++i) {
    for (int j = i + 1; j < n_samples; ++j) {
      const double dist = (pts[i] - pts[j]).norm();
      if (dist == 0.0) continue;
      any_pair = true;
      max_quot = std::max(max_quot, (grads[i] - grads[j]).norm() / dist);
      if (need_jac) {
        for (int r = 0; r < oracle.m; ++r) {
          row_quot(r) = std::max(
              row_quot(r),
              (jacs[i].row(r) - jacs[j].row(r)).norm() / dist);
        }
      }
    }
  }
  if (!any_pair) throw DegenerateSamples("estimate_lipschitz: coincident points");

  LipschitzEstimate est;
  // Floor keeps L positive for linear objectives, whose quotients vanish.
  est.lip_l = std::max(1.5 * max_quot, 1e-8);
  if (oracle.constraint_curvatures) {
    est.lip_gamma = oracle.constraint_curvatures->sum();
    est.method = "analytic";
  } else {
    est.lip_gamma = 1.5 * row_quot.sum();
    est.method = "sampled";
  }
  if (!std::isfinite(est.lip_l) || !std::isfinite(est.lip_gamma)) {
    throw NonFinite("estimate_lipschitz");
  }
  return est;
}

LipschitzEstimate default_lipschitz(const ProblemOracle& oracle) {
  return estimate_lipschitz(oracle, oracle.x1, 64, 1.0,
                            RandomStream::from_key("lipschitz|" + oracle.name));
}

}  // namespace ssqp
