#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssqp/metrics.hpp"
#include "ssqp/noise.hpp"
#include "ssqp/problems.hpp"
#include "ssqp/sqp.hpp"
#include "ssqp/subgradient.hpp"

namespace ssqp {

// One grid point of the variance sweep.
struct NoisePoint {
  double eps_g = 0.0;
  double eps_c = 0.0;
  double eps_j = 0.0;

  std::string label() const;  // "g,c,j" with %.12g fields
};

// Declarative description of a sweep: the cross product of problems x noise
// points x seeds, run per method. Problem entries that are not registry
// names are treated as LIBSVM dataset paths and get mini-batch estimates
// instead of Gaussian noise.
struct ExperimentConfig {
  std::vector<std::string> problems;
  std::vector<std::string> methods{"sqp"};
  std::vector<NoisePoint> noise_grid;
  std::string beta_mode = "const:0.1";
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int iters = 1000;
  std::vector<double> tau_sweep = default_tau_sweep();
  std::string output_dir = "runs";
  int workers = 1;
  std::uint64_t master_seed = 0;
  // Baseline budgets are iteration-matched by default; this switches to
  // wall-clock matching, which sacrifices bitwise reproducibility.
  bool wall_clock_match = false;
  bool raw_variances = false;  // drop the beta_k^2 coupling
  double omega_rho = 1.0;      // complexity beta mode only
  int batch_objective = 128;   // b1, dataset problems
  int batch_constraint = 128;  // b2
  int pool_size = 1000;        // K realized constraint pairs
  double sphere_rhs = 1.0;     // a2
  double perturbation_var = 1e-3;
  SqpParams params;  // max_iter is overridden by iters
  std::optional<double> lip_l;      // skip estimation when set
  std::optional<double> lip_gamma;

  void validate() const;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// Canonical identity of one run. Field order is the sort order; methods
// lead so budget-donor runs land before budget-receiver runs.
struct RunKey {
  std::string method;  // "sqp" | "subgradient"
  std::string problem;
  std::string noise;  // NoisePoint label, "minibatch:b1=..,b2=..", or
                      // "complexity:<omega>:<k_max>"
  std::string beta_mode;
  std::uint64_t seed = 0;
  std::optional<double> tau;  // baseline sweep value

  auto operator<=>(const RunKey&) const = default;

  std::string canonical() const;
  // fnv1a64 of canonical() + "|master=<seed>"; doubles as the RNG stream id,
  // so adding runs to a grid never shifts the draws of existing ones.
  std::uint64_t stream_id(std::uint64_t master_seed) const;
  std::string run_id(std::uint64_t master_seed) const;  // 16 hex digits
};

// One row of best.csv: the official two-branch selection plus both branch
// candidates, which lets a later comparison reduce a baseline tau sweep over
// the union of its iterate sequences exactly.
struct BestRow {
  std::string run_id;
  RunKey key;
  std::optional<NoisePoint> eps;  // empty for mini-batch runs
  int best_k = 0;
  double best_feas = 0.0;
  double best_stat = 0.0;
  std::string branch;  // "kkt" | "feas"
  int kkt_k = 0;       // argmin of max(stat, feas)
  double kkt_feas = 0.0;
  double kkt_stat = 0.0;
  int feas_k = 0;  // argmin of feas
  double feas_feas = 0.0;
  double feas_stat = 0.0;
  double final_feas = 0.0;  // last record
  double final_stat = 0.0;
  long oracle_calls = 0;
  int iters = 0;
};

std::string runs_csv_header();
std::string best_csv_header();

// Appends one runs.csv line per record; NaN fields become empty cells.
void append_runs_rows(std::string& buf, const std::string& run_id,
                      const RunKey& key, const std::optional<NoisePoint>& eps,
                      std::span<const IterateRecord> records);

std::vector<BestRow> parse_best_csv(const std::string& path);

struct ExperimentResult {
  std::filesystem::path runs_csv;
  std::filesystem::path best_csv;
  std::filesystem::path summary_csv;
  std::vector<BestRow> best_rows;  // canonical order, same as best.csv
  int runs = 0;
};

// Executes the full cross product on a bounded worker pool. All CSV bytes
// are a pure function of (config, master_seed) regardless of worker count;
// timing goes to budget.log only. Partial results are flushed when a run
// throws, then the error is rethrown.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream& log);

// One run outside a sweep: cfg supplies the knobs (problems must hold
// exactly the one entry), ident picks method, seed, and baseline tau. The
// noise identity comes from cfg, so ident.noise may stay empty. Returns the
// serialized runs.csv body and the best row; the run reproduces the bytes an
// equal experiment sweep would emit for the same key.
struct SingleRun {
  std::string method = "sqp";
  std::uint64_t seed = 1;
  std::optional<double> tau;  // subgradient merit value
};

std::pair<std::string, BestRow> run_single(const ExperimentConfig& cfg,
                                           const SingleRun& ident);

struct ComparePair {
  std::string problem;
  std::string noise;
  std::string beta_mode;
  std::uint64_t seed = 0;
  double sqp_feas = 0.0;
  double sqp_stat = 0.0;
  double base_tau = 0.0;  // winning sweep value
  double base_feas = 0.0;
  double base_stat = 0.0;
};

struct CompareMedian {
  std::string problem;
  std::string noise;
  std::string beta_mode;
  int seeds = 0;
  double sqp_feas = 0.0;
  double sqp_stat = 0.0;
  double base_feas = 0.0;
  double base_stat = 0.0;
};

struct CompareResult {
  std::vector<ComparePair> pairs;      // one per (problem, noise, beta, seed)
  std::vector<CompareMedian> medians;  // one per (problem, noise, beta)
  int stat_wins = 0;  // sqp strictly better on the pair rows
  int stat_losses = 0;
  int stat_ties = 0;
  int feas_wins = 0;
  int feas_losses = 0;
  int feas_ties = 0;
  // Groups where the baseline got less total oracle work than the SQP run;
  // zero under iteration-matched budgets.
  int budget_violations = 0;
  std::filesystem::path out_csv;
};

// Joins best.csv files, reduces each baseline tau sweep to its best iterate
// over the union of sequences, and emits paired rows plus per-group medians.
CompareResult run_compare(const std::vector<std::string>& best_csv_paths,
                          const std::string& out_csv_path, std::ostream& log);

// gen-data building blocks.
void write_synthetic_dataset(const std::string& path, int n_rows, int n_cols,
                             std::uint64_t seed);
// Flat text form of the pool: header "k,row,col,value"; vector entries use
// col 0, matrix entries cols 1..n.
void write_constraint_pool(const std::string& path, const ConstraintPool& pool);

}  // namespace ssqp
