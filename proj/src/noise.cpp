#include "ssqp/noise.hpp"

#include <cmath>
#include <vector>

#include "ssqp/errors.hpp"
#include "ssqp/kkt.hpp"

namespace ssqp {

namespace {

// Full row rank test for the perturbed Jacobian.
bool full_row_rank(const dmat& j) {
  if (j.rows() == 0) return true;
  if (j.rows() > j.cols()) return false;
  Eigen::JacobiSVD<dmat> svd(j);
  const double smax = svd.singularValues().maxCoeff();
  const double smin = svd.singularValues().minCoeff();
  return smin > 1e-12 * std::max(1.0, smax);
}

// First `count` elements of a partial Fisher-Yates shuffle of [0, total).
std::vector<int> sample_without_replacement(int total, int count,
                                            SubStream& sub) {
  std::vector<int> ids(total);
  for (int i = 0; i < total; ++i) ids[i] = i;
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(sub.below(
                          static_cast<std::uint64_t>(total - i)));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(count);
  return ids;
}

}  // namespace

NoiseConfig NoiseConfig::complexity(double omega_rho, int k_max) {
  if (!(omega_rho >= 0) || k_max < 1) {
    throw UsageError("complexity noise preset: need omega_rho >= 0, k_max >= 1");
  }
  NoiseConfig cfg;
  const double each = (omega_rho / 3.0) * (omega_rho / 3.0) / k_max;
  cfg.eps_g = cfg.eps_c = cfg.eps_j = each;
  cfg.mode = VarianceMode::kComplexity;
  return cfg;
}

void NoiseConfig::validate() const {
  if (eps_g < 0 || eps_c < 0 || eps_j < 0) {
    throw UsageError("noise config: negative variance");
  }
}

void NoiseConfig::validate_coupled_sweep() const {
  validate();
  if (std::abs(eps_c - eps_j * eps_j) > 1e-12 * (1 + eps_c)) {
    throw UsageError("coupled-sweep noise config requires eps_c = eps_j^2");
  }
}

Variances variance_schedule(const NoiseConfig& cfg, double beta_k) {
  cfg.validate();
  Variances v;
  const double scale =
      cfg.mode == VarianceMode::kBetaCoupled ? beta_k * beta_k : 1.0;
  v.g = cfg.eps_g * scale;
  v.c = cfg.eps_c * scale;
  v.j = cfg.eps_j * scale;
  return v;
}

StochasticEstimate gaussian_estimate(const dvec& g, const dvec& c,
                                     const dmat& jac, double beta_k,
                                     const NoiseConfig& cfg,
                                     const RandomStream& stream,
                                     std::uint32_t k) {
  if (!g.allFinite() || !c.allFinite() || !jac.allFinite()) {
    throw NonFinite("gaussian_estimate: truth");
  }
  const int n = static_cast<int>(g.size());
  const int m = static_cast<int>(c.size());
  StochasticEstimate est;
  est.variances = variance_schedule(cfg, beta_k);

  est.gbar = g;
  est.cbar = c;
  if (est.variances.g > 0) {
    const double sd = std::sqrt(est.variances.g / n);
    SubStream sub = stream.at(k, StreamTag::kGradientNoise);
    for (int i = 0; i < n; ++i) est.gbar(i) += sd * sub.gaussian();
  }
  if (est.variances.c > 0 && m > 0) {
    const double sd = std::sqrt(est.variances.c / m);
    SubStream sub = stream.at(k, StreamTag::kConstraintNoise);
    for (int i = 0; i < m; ++i) est.cbar(i) += sd * sub.gaussian();
  }

  const double jac_sd =
      m > 0 && est.variances.j > 0
          ? std::sqrt(est.variances.j / (static_cast<double>(m) * n))
          : 0.0;
  for (std::uint32_t attempt = 0; attempt < 10; ++attempt) {
    est.jbar = jac;
    if (jac_sd > 0) {
      SubStream sub = stream.at(k, StreamTag::kJacobianNoise, attempt);
      for (int r = 0; r < m; ++r) {
        for (int cidx = 0; cidx < n; ++cidx) {
          est.jbar(r, cidx) += jac_sd * sub.gaussian();
        }
      }
    }
    if (full_row_rank(est.jbar)) return est;
    if (jac_sd == 0) break;  // deterministic jbar cannot improve by redraw
  }
  throw RankDeficient("gaussian_estimate: jbar after 10 redraws");
}

StochasticEstimate minibatch_estimate(const dmat& features, const dvec& labels,
                                      const ConstraintPool& pool, const dvec& x,
                                      int b1, int b2,
                                      const RandomStream& stream,
                                      std::uint32_t k) {
  const int n_data = static_cast<int>(features.rows());
  const int n = static_cast<int>(features.cols());
  const int pool_size = static_cast<int>(pool.mats.size());
  const int rows = static_cast<int>(pool.mean_mat.rows());
  if (!x.allFinite()) throw NonFinite("minibatch_estimate: x");
  if (b1 < 1 || b1 > n_data) throw BatchTooLarge(b1, n_data);
  if (b2 < 1 || b2 > pool_size) throw BatchTooLarge(b2, pool_size);

  StochasticEstimate est;

  SubStream obj_sub = stream.at(k, StreamTag::kObjectiveBatch);
  const auto obj_ids = sample_without_replacement(n_data, b1, obj_sub);
  est.gbar = dvec::Zero(n);
  dvec sq_sum = dvec::Zero(n);
  for (const int i : obj_ids) {
    const double t = labels(i) * features.row(i).dot(x);
    double w;  // sigmoid(-t), stable on both sides
    if (t >= 0) {
      const double e = std::exp(-t);
      w = e / (1.0 + e);
    } else {
      w = 1.0 / (1.0 + std::exp(t));
    }
    const dvec gi = -labels(i) * w * features.row(i).transpose();
    est.gbar += gi;
    sq_sum += gi.cwiseProduct(gi);
  }
  est.gbar /= b1;
  // Realized variance of the batch mean: sample variance / b1.
  est.variances.g =
      b1 > 1 ? (sq_sum.sum() - b1 * est.gbar.squaredNorm()) / (b1 - 1) / b1
             : 0.0;

  SubStream con_sub = stream.at(k, StreamTag::kConstraintBatch);
  const auto con_ids = sample_without_replacement(pool_size, b2, con_sub);
  dmat a_bar = dmat::Zero(rows, n);
  dvec b_bar = dvec::Zero(rows);
  for (const int i : con_ids) {
    a_bar += pool.mats[i];
    b_bar += pool.vecs[i];
  }
  a_bar /= b2;
  b_bar /= b2;
  double c_sq = 0.0, j_sq = 0.0;
  for (const int i : con_ids) {
    c_sq += (pool.mats[i] * x - pool.vecs[i] - (a_bar * x - b_bar))
                .squaredNorm();
    j_sq += (pool.mats[i] - a_bar).squaredNorm();
  }
  est.variances.c = b2 > 1 ? c_sq / (b2 - 1) / b2 : 0.0;
  est.variances.j = b2 > 1 ? j_sq / (b2 - 1) / b2 : 0.0;

  est.cbar = dvec(rows + 1);
  est.cbar.head(rows) = a_bar * x - b_bar;
  est.cbar(rows) = x.squaredNorm() - pool.sphere_rhs;
  est.jbar = dmat(rows + 1, n);
  est.jbar.topRows(rows) = a_bar;
  est.jbar.bottomRows(1) = 2.0 * x.transpose();

  if (!full_row_rank(est.jbar)) {
    throw RankDeficient("minibatch_estimate: averaged constraint block");
  }
  return est;
}

}  // namespace ssqp
