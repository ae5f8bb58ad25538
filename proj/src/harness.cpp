#include "ssqp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <semaphore>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "ssqp/errors.hpp"

namespace ssqp {

namespace {

std::string fmt17(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

double cell_to_double(const std::string& cell, const char* what,
                      std::size_t line_no) {
  if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != cell.size()) {
    throw SchemaMismatch(std::string(what) + " not numeric at line " +
                         std::to_string(line_no) + ": " + cell);
  }
  return v;
}

long cell_to_long(const std::string& cell, const char* what,
                  std::size_t line_no) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (cell.empty() || used != cell.size()) {
    throw SchemaMismatch(std::string(what) + " not an integer at line " +
                         std::to_string(line_no) + ": " + cell);
  }
  return v;
}

std::uint64_t cell_to_u64(const std::string& cell, const char* what,
                          std::size_t line_no) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (cell.empty() || used != cell.size()) {
    throw SchemaMismatch(std::string(what) + " not an integer at line " +
                         std::to_string(line_no) + ": " + cell);
  }
  return v;
}

bool is_builtin(const std::string& name) {
  const auto names = builtin_problem_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

// Shared read-only state for one problem entry, prepared before any run.
struct PreparedProblem {
  ProblemOracle oracle;
  bool is_dataset = false;
  std::shared_ptr<const dmat> features;
  std::shared_ptr<const dvec> labels;
  std::shared_ptr<const ConstraintPool> pool;
  double lip_l = 1.0;
  double lip_gamma = 0.0;
  std::string lip_method;
};

struct Task {
  RunKey key;
  std::optional<NoisePoint> eps;
  const PreparedProblem* prob = nullptr;
};

// Everything one finished run hands to the writer.
struct RunOutput {
  RunKey key;
  std::string runs_rows;
  BestRow best;
  bool has_best = false;
  std::string budget_line;
  double elapsed_s = 0.0;
};

std::string group_key(const RunKey& key) {
  return "problem=" + key.problem + "|noise=" + key.noise +
         "|beta=" + key.beta_mode + "|seed=" + std::to_string(key.seed);
}

dvec scaled_gaussian_start(std::uint64_t stream_id, int n, double norm) {
  SubStream sub(stream_id, 0, StreamTag::kInitialPoint);
  dvec x(n);
  for (int i = 0; i < n; ++i) x[i] = sub.gaussian();
  const double len = x.norm();
  if (!(len > 0)) throw NonFinite("initial point draw");
  return x * (norm / len);
}

struct Candidates {
  int kkt_k = 0;
  ErrorPair kkt;
  int feas_k = 0;
  ErrorPair feas;
};

// Both branch candidates from the stored true-oracle errors.
Candidates scan_candidates(std::span<const IterateRecord> records) {
  Candidates out;
  double best_kkt = std::numeric_limits<double>::infinity();
  double best_feas = std::numeric_limits<double>::infinity();
  for (const IterateRecord& r : records) {
    const double kkt = std::max(r.feas_err, r.stat_err);
    if (kkt < best_kkt) {
      best_kkt = kkt;
      out.kkt_k = r.k;
      out.kkt = {r.feas_err, r.stat_err};
    }
    if (r.feas_err < best_feas) {
      best_feas = r.feas_err;
      out.feas_k = r.k;
      out.feas = {r.feas_err, r.stat_err};
    }
  }
  return out;
}

std::string best_row_csv(const BestRow& b) {
  std::string line;
  line += b.run_id;
  line += ',' + b.key.problem;
  line += ',' + b.key.method;
  line += ',';
  line += b.eps ? fmt17(b.eps->eps_g) : "";
  line += ',';
  line += b.eps ? fmt17(b.eps->eps_c) : "";
  line += ',';
  line += b.eps ? fmt17(b.eps->eps_j) : "";
  line += ',' + b.key.beta_mode;
  line += ',' + std::to_string(b.key.seed);
  line += ',';
  line += b.key.tau ? fmt17(*b.key.tau) : "";
  line += ',' + std::to_string(b.best_k);
  line += ',' + fmt17(b.best_feas);
  line += ',' + fmt17(b.best_stat);
  line += ',' + b.branch;
  line += ',' + std::to_string(b.kkt_k);
  line += ',' + fmt17(b.kkt_feas);
  line += ',' + fmt17(b.kkt_stat);
  line += ',' + std::to_string(b.feas_k);
  line += ',' + fmt17(b.feas_feas);
  line += ',' + fmt17(b.feas_stat);
  line += ',' + fmt17(b.final_feas);
  line += ',' + fmt17(b.final_stat);
  line += ',' + std::to_string(b.oracle_calls);
  line += ',' + std::to_string(b.iters);
  line += '\n';
  return line;
}

}  // namespace

std::string NoisePoint::label() const {
  return fmt12(eps_g) + "," + fmt12(eps_c) + "," + fmt12(eps_j);
}

std::string RunKey::canonical() const {
  return "method=" + method + "|problem=" + problem + "|noise=" + noise +
         "|beta=" + beta_mode + "|seed=" + std::to_string(seed) +
         "|tau=" + (tau ? fmt12(*tau) : "-");
}

std::uint64_t RunKey::stream_id(std::uint64_t master_seed) const {
  return fnv1a64(canonical() + "|master=" + std::to_string(master_seed));
}

std::string RunKey::run_id(std::uint64_t master_seed) const {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(stream_id(master_seed)));
  return buf;
}

std::string runs_csv_header() {
  return "run_id,problem,method,eps_g,eps_c,eps_j,beta_mode,seed,"
         "tau_sweep_value,k,feas_err,stat_err,tau,xi,alpha,d_norm,"
         "model_reduction";
}

std::string best_csv_header() {
  return "run_id,problem,method,eps_g,eps_c,eps_j,beta_mode,seed,"
         "tau_sweep_value,best_k,best_feas,best_stat,branch,kkt_k,kkt_feas,"
         "kkt_stat,feas_k,feas_feas,feas_stat,final_feas,final_stat,"
         "oracle_calls,iters";
}

void append_runs_rows(std::string& buf, const std::string& run_id,
                      const RunKey& key, const std::optional<NoisePoint>& eps,
                      std::span<const IterateRecord> records) {
  const std::string prefix = run_id + ',' + key.problem + ',' + key.method +
                             ',' + (eps ? fmt17(eps->eps_g) : "") + ',' +
                             (eps ? fmt17(eps->eps_c) : "") + ',' +
                             (eps ? fmt17(eps->eps_j) : "") + ',' +
                             key.beta_mode + ',' + std::to_string(key.seed) +
                             ',' + (key.tau ? fmt17(*key.tau) : "") + ',';
  buf.reserve(buf.size() + records.size() * (prefix.size() + 120));
  for (const IterateRecord& r : records) {
    buf += prefix;
    buf += std::to_string(r.k);
    buf += ',' + fmt17(r.feas_err);
    buf += ',' + fmt17(r.stat_err);
    buf += ',' + fmt17(r.tau);
    buf += ',' + fmt17(r.xi);
    buf += ',' + fmt17(r.alpha);
    buf += ',' + fmt17(std::isnan(r.d_norm_sq)
                           ? r.d_norm_sq
                           : std::sqrt(std::max(0.0, r.d_norm_sq)));
    buf += ',' + fmt17(r.model_reduction);
    buf += '\n';
  }
}

void ExperimentConfig::validate() const {
  if (problems.empty()) throw UsageError("config: problems is empty");
  if (methods.empty()) throw UsageError("config: methods is empty");
  std::set<std::string> mset;
  for (const auto& m : methods) {
    if (m != "sqp" && m != "subgradient") {
      throw UsageError("config: unknown method: " + m);
    }
    if (!mset.insert(m).second) {
      throw UsageError("config: duplicate method: " + m);
    }
  }
  if (seeds.empty()) throw UsageError("config: seeds is empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() !=
      seeds.size()) {
    throw UsageError("config: duplicate seeds");
  }
  if (iters < 1) throw UsageError("config: iters must be >= 1");
  if (workers < 1) throw UsageError("config: workers must be >= 1");
  if (batch_objective < 1 || batch_constraint < 1) {
    throw UsageError("config: batch sizes must be >= 1");
  }
  if (pool_size < 2) throw UsageError("config: pool_size must be >= 2");
  if (batch_constraint > pool_size) {
    throw BatchTooLarge(batch_constraint, pool_size);
  }
  if (!(sphere_rhs > 0)) throw UsageError("config: sphere_rhs must be positive");
  if (!(perturbation_var >= 0)) {
    throw UsageError("config: perturbation_var must be nonnegative");
  }
  if (!(omega_rho > 0)) throw UsageError("config: omega_rho must be positive");
  if (lip_l && !(*lip_l > 0)) throw UsageError("config: lip_l must be positive");
  if (lip_gamma && !(*lip_gamma >= 0)) {
    throw UsageError("config: lip_gamma must be nonnegative");
  }
  const BetaSchedule betas = BetaSchedule::parse(beta_mode);
  const bool complexity = betas.kind == BetaSchedule::Kind::kComplexity;
  if (complexity && !noise_grid.empty()) {
    throw UsageError(
        "config: the complexity schedule fixes the variances; drop noise_grid");
  }
  bool any_builtin = false;
  for (const auto& p : problems) any_builtin = any_builtin || is_builtin(p);
  if (any_builtin && !complexity && noise_grid.empty()) {
    throw UsageError("config: registry problems need a noise_grid");
  }
  for (const NoisePoint& np : noise_grid) {
    if (!(np.eps_g >= 0) || !(np.eps_c >= 0) || !(np.eps_j >= 0)) {
      throw UsageError("config: noise_grid entries must be nonnegative");
    }
  }
  const bool baseline =
      std::find(methods.begin(), methods.end(), "subgradient") != methods.end();
  if (baseline) {
    if (tau_sweep.empty()) throw UsageError("config: tau_sweep is empty");
    std::set<double> tset;
    for (double t : tau_sweep) {
      if (!(t > 0)) throw UsageError("config: tau_sweep values must be positive");
      if (!tset.insert(t).second) {
        throw UsageError("config: duplicate tau_sweep value");
      }
    }
  }
  if (wall_clock_match && !baseline) {
    throw UsageError("config: wall_clock_match without the subgradient method");
  }
  if (wall_clock_match &&
      std::find(methods.begin(), methods.end(), "sqp") == methods.end()) {
    throw UsageError("config: wall_clock_match needs sqp runs as budget donors");
  }
}

namespace {

using njson = nlohmann::json;

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
  throw UsageError("config key '" + key + "': " + why);
}

template <typename T>
T get_as(const njson& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const njson::exception& e) {
    bad_key(key, e.what());
  }
}

void parse_params(const njson& j, SqpParams& p) {
  for (const auto& [key, value] : j.items()) {
    if (key == "tau0") p.tau0 = get_as<double>(value, key);
    else if (key == "xi0") p.xi0 = get_as<double>(value, key);
    else if (key == "eta") p.eta = get_as<double>(value, key);
    else if (key == "sigma") p.sigma = get_as<double>(value, key);
    else if (key == "eps_tau") p.eps_tau = get_as<double>(value, key);
    else if (key == "eps_xi") p.eps_xi = get_as<double>(value, key);
    else if (key == "theta") p.theta = get_as<double>(value, key);
    else if (key == "zeta") p.zeta = get_as<double>(value, key);
    else if (key == "kappa_h") p.kappa_h = get_as<double>(value, key);
    else if (key == "step_policy") {
      const auto s = get_as<std::string>(value, key);
      if (s == "scan") p.step_policy = SqpParams::StepPolicy::kGeometricScan;
      else if (s == "min-step") p.step_policy = SqpParams::StepPolicy::kMinStep;
      else bad_key(key, "want scan | min-step, got " + s);
    } else {
      throw UsageError("config: unknown params key: " + key);
    }
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  njson j;
  try {
    j = njson::parse(json_text);
  } catch (const njson::exception& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("config root must be a JSON object");

  ExperimentConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "problems") {
      cfg.problems = get_as<std::vector<std::string>>(value, key);
    } else if (key == "methods") {
      cfg.methods = get_as<std::vector<std::string>>(value, key);
    } else if (key == "noise_grid") {
      cfg.noise_grid.clear();
      if (!value.is_array()) bad_key(key, "want an array of [g,c,j] triples");
      for (const auto& entry : value) {
        const auto triple = get_as<std::vector<double>>(entry, key);
        if (triple.size() != 3) bad_key(key, "each entry needs 3 values");
        cfg.noise_grid.push_back({triple[0], triple[1], triple[2]});
      }
    } else if (key == "beta_mode") {
      cfg.beta_mode = get_as<std::string>(value, key);
    } else if (key == "seeds") {
      cfg.seeds = get_as<std::vector<std::uint64_t>>(value, key);
    } else if (key == "iters") {
      cfg.iters = get_as<int>(value, key);
    } else if (key == "tau_sweep") {
      cfg.tau_sweep = get_as<std::vector<double>>(value, key);
    } else if (key == "output_dir") {
      cfg.output_dir = get_as<std::string>(value, key);
    } else if (key == "workers") {
      cfg.workers = get_as<int>(value, key);
    } else if (key == "master_seed") {
      cfg.master_seed = get_as<std::uint64_t>(value, key);
    } else if (key == "wall_clock_match") {
      cfg.wall_clock_match = get_as<bool>(value, key);
    } else if (key == "raw_variances") {
      cfg.raw_variances = get_as<bool>(value, key);
    } else if (key == "omega_rho") {
      cfg.omega_rho = get_as<double>(value, key);
    } else if (key == "b1") {
      cfg.batch_objective = get_as<int>(value, key);
    } else if (key == "b2") {
      cfg.batch_constraint = get_as<int>(value, key);
    } else if (key == "pool_size") {
      cfg.pool_size = get_as<int>(value, key);
    } else if (key == "sphere_rhs") {
      cfg.sphere_rhs = get_as<double>(value, key);
    } else if (key == "perturbation_var") {
      cfg.perturbation_var = get_as<double>(value, key);
    } else if (key == "lip_l") {
      cfg.lip_l = get_as<double>(value, key);
    } else if (key == "lip_gamma") {
      cfg.lip_gamma = get_as<double>(value, key);
    } else if (key == "params") {
      parse_params(value, cfg.params);
    } else {
      throw UsageError("config: unknown key: " + key);
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

namespace {

PreparedProblem prepare_problem(const std::string& entry,
                                const ExperimentConfig& cfg) {
  PreparedProblem pp;
  if (is_builtin(entry)) {
    pp.oracle = builtin_problem(entry);
  } else {
    pp.is_dataset = true;
    auto [features, labels] = parse_libsvm_file(entry);
    if (features.rows() == 0) {
      throw UsageError("dataset has no records: " + entry);
    }
    if (cfg.batch_objective > features.rows()) {
      throw BatchTooLarge(cfg.batch_objective,
                          static_cast<int>(features.rows()));
    }
    const std::uint64_t pool_seed = fnv1a64(
        "logistic-pool|" + entry + "|master=" + std::to_string(cfg.master_seed));
    LogisticProblemConfig lc =
        default_logistic_config(features, labels, pool_seed);
    lc.pool_size = cfg.pool_size;
    lc.sphere_rhs = cfg.sphere_rhs;
    lc.perturbation_var = cfg.perturbation_var;
    auto [oracle, pool] = build_logistic_problem(lc, pool_seed);
    pp.oracle = std::move(oracle);
    pp.pool = std::make_shared<const ConstraintPool>(std::move(pool));
    pp.features = std::make_shared<const dmat>(std::move(features));
    pp.labels = std::make_shared<const dvec>(std::move(labels));
  }
  if (cfg.lip_l && cfg.lip_gamma) {
    pp.lip_l = *cfg.lip_l;
    pp.lip_gamma = *cfg.lip_gamma;
    pp.lip_method = "override";
  } else {
    const LipschitzEstimate est = default_lipschitz(pp.oracle);
    pp.lip_l = cfg.lip_l.value_or(est.lip_l);
    pp.lip_gamma = cfg.lip_gamma.value_or(est.lip_gamma);
    pp.lip_method = est.method;
  }
  return pp;
}

// The (label, eps) pairs one problem contributes to the grid.
std::vector<std::pair<std::string, std::optional<NoisePoint>>> noise_entries(
    const ExperimentConfig& cfg, const PreparedProblem& pp,
    const BetaSchedule& betas) {
  std::vector<std::pair<std::string, std::optional<NoisePoint>>> noises;
  if (pp.is_dataset) {
    noises.emplace_back(
        "minibatch:b1=" + std::to_string(cfg.batch_objective) +
            ",b2=" + std::to_string(cfg.batch_constraint),
        std::nullopt);
  } else if (betas.kind == BetaSchedule::Kind::kComplexity) {
    const NoiseConfig nc = NoiseConfig::complexity(cfg.omega_rho, betas.k_max);
    noises.emplace_back("complexity:" + fmt12(cfg.omega_rho) + ":" +
                            std::to_string(betas.k_max),
                        NoisePoint{nc.eps_g, nc.eps_c, nc.eps_j});
  } else {
    for (const NoisePoint& np : cfg.noise_grid) {
      noises.emplace_back(np.label(), np);
    }
  }
  return noises;
}

RunOutput execute_task(const Task& t, const ExperimentConfig& cfg,
                       const BetaSchedule& betas,
                       const std::map<std::string, double>* wall_budget) {
  const PreparedProblem& pp = *t.prob;
  const std::uint64_t stream_id = t.key.stream_id(cfg.master_seed);
  const std::string run_id = t.key.run_id(cfg.master_seed);

  std::optional<dvec> x1;
  if (pp.is_dataset) {
    // Shared across methods and tau values: only problem and seed enter.
    const std::uint64_t x1_id =
        fnv1a64("x1|problem=" + t.key.problem +
                "|seed=" + std::to_string(t.key.seed) +
                "|master=" + std::to_string(cfg.master_seed));
    x1 = scaled_gaussian_start(x1_id, pp.oracle.n, 0.1);
  }

  std::unique_ptr<EstimateSource> source;
  if (pp.is_dataset) {
    source = std::make_unique<MinibatchSource>(
        pp.features, pp.labels, pp.pool, cfg.batch_objective,
        cfg.batch_constraint, RandomStream(stream_id));
  } else {
    NoiseConfig nc;
    if (betas.kind == BetaSchedule::Kind::kComplexity) {
      nc = NoiseConfig::complexity(cfg.omega_rho, betas.k_max);
    } else {
      nc.eps_g = t.eps->eps_g;
      nc.eps_c = t.eps->eps_c;
      nc.eps_j = t.eps->eps_j;
      nc.mode = cfg.raw_variances ? VarianceMode::kConstantRaw
                                  : VarianceMode::kBetaCoupled;
    }
    source = std::make_unique<GaussianNoiseSource>(pp.oracle, nc,
                                                   RandomStream(stream_id));
  }

  RunOutput out;
  out.key = t.key;
  std::vector<IterateRecord> records;
  long oracle_calls = 0;
  const auto t0 = std::chrono::steady_clock::now();
  if (t.key.method == "sqp") {
    SqpParams params = cfg.params;
    params.max_iter = cfg.iters;
    params.lip_l = pp.lip_l;
    params.lip_gamma = pp.lip_gamma;
    SqpRun run = run_sqp(pp.oracle, *source, params, betas, x1);
    records = std::move(run.records);
    oracle_calls = run.oracle_calls;
  } else {
    SubgradConfig sc;
    sc.tau = *t.key.tau;
    sc.lip_l = pp.lip_l;
    sc.lip_gamma = pp.lip_gamma;
    sc.max_iter = cfg.iters;
    if (wall_budget) {
      sc.max_iter = std::numeric_limits<int>::max();
      sc.max_seconds = wall_budget->at(group_key(t.key));
    }
    records = run_subgradient(pp.oracle, *source, sc, betas, x1);
    oracle_calls = static_cast<long>(records.size());
  }
  out.elapsed_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  append_runs_rows(out.runs_rows, run_id, t.key, t.eps, records);
  if (!records.empty()) {
    const BestIterate best = best_iterate(records, pp.oracle);
    const Candidates cand = scan_candidates(records);
    BestRow& b = out.best;
    b.run_id = run_id;
    b.key = t.key;
    b.eps = t.eps;
    b.best_k = best.index;
    b.best_feas = best.errors.feas;
    b.best_stat = best.errors.stat;
    b.branch = best.branch == BestIterate::Branch::kKkt ? "kkt" : "feas";
    b.kkt_k = cand.kkt_k;
    b.kkt_feas = cand.kkt.feas;
    b.kkt_stat = cand.kkt.stat;
    b.feas_k = cand.feas_k;
    b.feas_feas = cand.feas.feas;
    b.feas_stat = cand.feas.stat;
    b.final_feas = records.back().feas_err;
    b.final_stat = records.back().stat_err;
    b.oracle_calls = oracle_calls;
    b.iters = static_cast<int>(records.size());
    out.has_best = true;

    char line[512];
    std::snprintf(line, sizeof(line),
                  "%s %s iters=%d oracle_calls=%ld elapsed=%.3fs best_k=%d "
                  "best_feas=%.6e best_stat=%.6e branch=%s\n",
                  run_id.c_str(), t.key.canonical().c_str(), b.iters,
                  oracle_calls, out.elapsed_s, b.best_k, b.best_feas,
                  b.best_stat, b.branch.c_str());
    out.budget_line = line;
  } else {
    out.budget_line = run_id + " " + t.key.canonical() +
                      " iters=0 oracle_calls=0 (no records)\n";
  }
  return out;
}

// Bounded pool running tasks [lo, hi); the caller's thread is the single
// writer and consumes outputs strictly in index order, which makes the
// output bytes independent of scheduling.
class TaskPool {
 public:
  TaskPool(const std::vector<Task>& tasks, const ExperimentConfig& cfg,
           const BetaSchedule& betas,
           const std::map<std::string, double>* wall_budget)
      : tasks_(tasks),
        cfg_(cfg),
        betas_(betas),
        wall_budget_(wall_budget),
        slots_(tasks.size()),
        errors_(tasks.size()),
        ready_(tasks.size(), 0),
        backlog_(cfg.workers + 2) {}

  template <typename Consume>
  void run_range(std::size_t lo, std::size_t hi, Consume&& consume) {
    if (lo >= hi) return;
    next_.store(lo);
    const int n_workers =
        static_cast<int>(std::min<std::size_t>(cfg_.workers, hi - lo));
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (int w = 0; w < n_workers; ++w) {
      threads.emplace_back([this, hi] { worker_loop(hi); });
    }
    try {
      for (std::size_t i = lo; i < hi; ++i) {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return ready_[i] != 0; });
        lock.unlock();
        if (errors_[i]) {
          std::rethrow_exception(errors_[i]);
        }
        consume(i, *slots_[i]);
        slots_[i].reset();
        backlog_.release();
      }
    } catch (...) {
      abort_.store(true);
      backlog_.release(static_cast<std::ptrdiff_t>(tasks_.size()) + 16);
      for (auto& th : threads) th.join();
      throw;
    }
    for (auto& th : threads) th.join();
  }

 private:
  void worker_loop(std::size_t hi) {
    while (true) {
      const std::size_t i = next_.fetch_add(1);
      if (i >= hi || abort_.load()) return;
      backlog_.acquire();
      if (abort_.load()) return;
      try {
        auto out = std::make_unique<RunOutput>(
            execute_task(tasks_[i], cfg_, betas_, wall_budget_));
        std::lock_guard<std::mutex> lock(mu_);
        slots_[i] = std::move(out);
        ready_[i] = 1;
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu_);
        errors_[i] = std::current_exception();
        ready_[i] = 1;
      }
      cv_.notify_all();
    }
  }

  const std::vector<Task>& tasks_;
  const ExperimentConfig& cfg_;
  const BetaSchedule& betas_;
  const std::map<std::string, double>* wall_budget_;
  std::vector<std::unique_ptr<RunOutput>> slots_;
  std::vector<std::exception_ptr> errors_;
  std::vector<char> ready_;
  std::counting_semaphore<> backlog_;
  std::atomic<std::size_t> next_{0};
  std::atomic<bool> abort_{false};
  std::mutex mu_;
  std::condition_variable cv_;
};

void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<SummaryKey, ErrorPair>>&
                           results) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << "problem,method,noise,beta_mode,count,feas_min,feas_q1,feas_median,"
         "feas_q3,feas_max,feas_mean,stat_min,stat_q1,stat_median,stat_q3,"
         "stat_max,stat_mean\n";
  for (const SummaryRow& row : summarize(results)) {
    out << row.key.problem << ',' << row.key.method << ',' << row.key.noise
        << ',' << row.key.beta_mode << ',' << row.count << ','
        << fmt17(row.feas_min) << ',' << fmt17(row.feas_q1) << ','
        << fmt17(row.feas_median) << ',' << fmt17(row.feas_q3) << ','
        << fmt17(row.feas_max) << ',' << fmt17(row.feas_mean) << ','
        << fmt17(row.stat_min) << ',' << fmt17(row.stat_q1) << ','
        << fmt17(row.stat_median) << ',' << fmt17(row.stat_q3) << ','
        << fmt17(row.stat_max) << ',' << fmt17(row.stat_mean) << '\n';
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                std::ostream& log) {
  cfg.validate();
  const BetaSchedule betas = BetaSchedule::parse(cfg.beta_mode);

  std::map<std::string, PreparedProblem> prepared;
  for (const std::string& entry : cfg.problems) {
    if (prepared.count(entry)) throw UsageError("duplicate problem: " + entry);
    prepared.emplace(entry, prepare_problem(entry, cfg));
    const PreparedProblem& pp = prepared.at(entry);
    log << "problem " << entry << ": n=" << pp.oracle.n << " m=" << pp.oracle.m
        << " L=" << fmt12(pp.lip_l) << " Gamma=" << fmt12(pp.lip_gamma) << " ("
        << pp.lip_method << ")\n";
  }

  std::vector<Task> tasks;
  for (const std::string& method : cfg.methods) {
    for (const std::string& entry : cfg.problems) {
      const PreparedProblem& pp = prepared.at(entry);
      for (const auto& [label, eps] : noise_entries(cfg, pp, betas)) {
        for (std::uint64_t seed : cfg.seeds) {
          RunKey key;
          key.method = method;
          key.problem = entry;
          key.noise = label;
          key.beta_mode = betas.label();
          key.seed = seed;
          if (method == "subgradient") {
            for (double tau : cfg.tau_sweep) {
              key.tau = tau;
              tasks.push_back({key, eps, &pp});
            }
          } else {
            key.tau = std::nullopt;
            tasks.push_back({key, eps, &pp});
          }
        }
      }
    }
  }
  std::sort(tasks.begin(), tasks.end(),
            [](const Task& a, const Task& b) { return a.key < b.key; });
  const std::size_t split = static_cast<std::size_t>(
      std::count_if(tasks.begin(), tasks.end(),
                    [](const Task& t) { return t.key.method == "sqp"; }));

  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  ExperimentResult result;
  result.runs_csv = dir / "runs.csv";
  result.best_csv = dir / "best.csv";
  result.summary_csv = dir / "summary.csv";
  result.runs = static_cast<int>(tasks.size());

  std::ofstream runs_out(result.runs_csv, std::ios::binary);
  std::ofstream budget_out(dir / "budget.log", std::ios::binary);
  if (!runs_out || !budget_out) {
    throw UsageError("cannot write into " + cfg.output_dir);
  }
  runs_out << runs_csv_header() << '\n';

  std::map<std::string, double> wall_budget;
  std::vector<std::pair<SummaryKey, ErrorPair>> summary_inputs;

  const auto consume = [&](std::size_t, const RunOutput& out) {
    runs_out << out.runs_rows;
    budget_out << out.budget_line;
    if (out.has_best) {
      result.best_rows.push_back(out.best);
      summary_inputs.push_back(
          {{out.best.key.problem, out.best.key.method, out.best.key.noise,
            out.best.key.beta_mode},
           {out.best.best_feas, out.best.best_stat}});
    }
    if (cfg.wall_clock_match && out.key.method == "sqp") {
      wall_budget[group_key(out.key)] = out.elapsed_s;
    }
  };

  const auto flush_tables = [&] {
    std::ofstream best_out(result.best_csv, std::ios::binary);
    if (!best_out) throw UsageError("cannot write " + result.best_csv.string());
    best_out << best_csv_header() << '\n';
    for (const BestRow& b : result.best_rows) best_out << best_row_csv(b);
    write_summary_csv(result.summary_csv, summary_inputs);
  };

  TaskPool pool(tasks, cfg, betas,
                cfg.wall_clock_match ? &wall_budget : nullptr);
  try {
    // Budget donors first; the second range sees the finished wall budgets.
    pool.run_range(0, split, consume);
    pool.run_range(split, tasks.size(), consume);
  } catch (...) {
    runs_out.flush();
    flush_tables();
    throw;
  }
  flush_tables();
  log << "wrote " << tasks.size() << " runs to " << cfg.output_dir << "\n";
  return result;
}

std::vector<BestRow> parse_best_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatch(path + ": empty file");
  if (line != best_csv_header()) {
    throw SchemaMismatch(path + ": unexpected header");
  }
  std::vector<BestRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 23) {
      throw SchemaMismatch(path + ": wrong column count at line " +
                           std::to_string(line_no));
    }
    BestRow b;
    b.run_id = cells[0];
    b.key.problem = cells[1];
    b.key.method = cells[2];
    if (!cells[3].empty() || !cells[4].empty() || !cells[5].empty()) {
      b.eps = NoisePoint{cell_to_double(cells[3], "eps_g", line_no),
                         cell_to_double(cells[4], "eps_c", line_no),
                         cell_to_double(cells[5], "eps_j", line_no)};
      b.key.noise = cells[3] + "," + cells[4] + "," + cells[5];
    } else {
      b.key.noise = "minibatch";
    }
    b.key.beta_mode = cells[6];
    b.key.seed = cell_to_u64(cells[7], "seed", line_no);
    if (!cells[8].empty()) {
      b.key.tau = cell_to_double(cells[8], "tau_sweep_value", line_no);
    }
    b.best_k = static_cast<int>(cell_to_long(cells[9], "best_k", line_no));
    b.best_feas = cell_to_double(cells[10], "best_feas", line_no);
    b.best_stat = cell_to_double(cells[11], "best_stat", line_no);
    b.branch = cells[12];
    b.kkt_k = static_cast<int>(cell_to_long(cells[13], "kkt_k", line_no));
    b.kkt_feas = cell_to_double(cells[14], "kkt_feas", line_no);
    b.kkt_stat = cell_to_double(cells[15], "kkt_stat", line_no);
    b.feas_k = static_cast<int>(cell_to_long(cells[16], "feas_k", line_no));
    b.feas_feas = cell_to_double(cells[17], "feas_feas", line_no);
    b.feas_stat = cell_to_double(cells[18], "feas_stat", line_no);
    b.final_feas = cell_to_double(cells[19], "final_feas", line_no);
    b.final_stat = cell_to_double(cells[20], "final_stat", line_no);
    b.oracle_calls = cell_to_long(cells[21], "oracle_calls", line_no);
    b.iters = static_cast<int>(cell_to_long(cells[22], "iters", line_no));
    rows.push_back(std::move(b));
  }
  return rows;
}

namespace {

const char* verdict(double sqp, double base) {
  if (sqp < base) return "sqp";
  if (base < sqp) return "baseline";
  return "tie";
}

}  // namespace

CompareResult run_compare(const std::vector<std::string>& best_csv_paths,
                          const std::string& out_csv_path, std::ostream& log) {
  if (best_csv_paths.empty()) throw UsageError("compare: no input files");
  std::vector<BestRow> rows;
  for (const std::string& p : best_csv_paths) {
    auto part = parse_best_csv(p);
    rows.insert(rows.end(), part.begin(), part.end());
  }

  using Group = std::tuple<std::string, std::string, std::string,
                           std::uint64_t>;
  std::map<Group, std::pair<std::vector<const BestRow*>,
                            std::vector<const BestRow*>>>
      groups;
  for (const BestRow& b : rows) {
    const Group g{b.key.problem, b.key.noise, b.key.beta_mode, b.key.seed};
    if (b.key.method == "sqp") {
      groups[g].first.push_back(&b);
    } else if (b.key.method == "subgradient") {
      groups[g].second.push_back(&b);
    } else {
      throw SchemaMismatch("unknown method in best.csv: " + b.key.method);
    }
  }

  CompareResult result;
  int skipped = 0;
  for (auto& [g, pair_rows] : groups) {
    auto& [sqp_rows, base_rows] = pair_rows;
    if (sqp_rows.size() != 1 || base_rows.empty()) {
      ++skipped;
      continue;
    }
    const BestRow& s = *sqp_rows[0];
    std::sort(base_rows.begin(), base_rows.end(),
              [](const BestRow* a, const BestRow* b) {
                return a->key.tau.value_or(0) < b->key.tau.value_or(0);
              });

    // Best iterate over the union of the tau sequences: the per-run branch
    // candidates make this exact without the raw iterate logs.
    double min_feas = std::numeric_limits<double>::infinity();
    long base_calls = 0;
    for (const BestRow* b : base_rows) {
      min_feas = std::min(min_feas, b->feas_feas);
      base_calls += b->oracle_calls;
    }
    const BestRow* win = nullptr;
    if (min_feas <= kFeasGate) {
      double best = std::numeric_limits<double>::infinity();
      for (const BestRow* b : base_rows) {
        const double v = std::max(b->kkt_feas, b->kkt_stat);
        if (v < best) {
          best = v;
          win = b;
        }
      }
    } else {
      double best = std::numeric_limits<double>::infinity();
      for (const BestRow* b : base_rows) {
        if (b->feas_feas < best) {
          best = b->feas_feas;
          win = b;
        }
      }
    }
    const bool kkt_branch = min_feas <= kFeasGate;
    ComparePair cp;
    cp.problem = std::get<0>(g);
    cp.noise = std::get<1>(g);
    cp.beta_mode = std::get<2>(g);
    cp.seed = std::get<3>(g);
    cp.sqp_feas = s.best_feas;
    cp.sqp_stat = s.best_stat;
    cp.base_tau = win->key.tau.value_or(0);
    cp.base_feas = kkt_branch ? win->kkt_feas : win->feas_feas;
    cp.base_stat = kkt_branch ? win->kkt_stat : win->feas_stat;
    result.pairs.push_back(cp);

    if (cp.sqp_stat < cp.base_stat) ++result.stat_wins;
    else if (cp.base_stat < cp.sqp_stat) ++result.stat_losses;
    else ++result.stat_ties;
    if (cp.sqp_feas < cp.base_feas) ++result.feas_wins;
    else if (cp.base_feas < cp.sqp_feas) ++result.feas_losses;
    else ++result.feas_ties;
    if (base_calls < s.oracle_calls) ++result.budget_violations;
  }

  std::map<std::tuple<std::string, std::string, std::string>,
           std::array<std::vector<double>, 4>>
      series;
  for (const ComparePair& cp : result.pairs) {
    auto& s = series[{cp.problem, cp.noise, cp.beta_mode}];
    s[0].push_back(cp.sqp_feas);
    s[1].push_back(cp.sqp_stat);
    s[2].push_back(cp.base_feas);
    s[3].push_back(cp.base_stat);
  }
  for (auto& [g, s] : series) {
    CompareMedian m;
    m.problem = std::get<0>(g);
    m.noise = std::get<1>(g);
    m.beta_mode = std::get<2>(g);
    m.seeds = static_cast<int>(s[0].size());
    m.sqp_feas = quantile_type7(s[0], 0.5);
    m.sqp_stat = quantile_type7(s[1], 0.5);
    m.base_feas = quantile_type7(s[2], 0.5);
    m.base_stat = quantile_type7(s[3], 0.5);
    result.medians.push_back(m);
  }

  result.out_csv = out_csv_path;
  std::ofstream out(out_csv_path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + out_csv_path);
  out << "scope,problem,noise,beta_mode,seed,sqp_feas,sqp_stat,base_tau,"
         "base_feas,base_stat,stat_winner,feas_winner\n";
  for (const ComparePair& cp : result.pairs) {
    out << "pair," << cp.problem << ',' << cp.noise << ',' << cp.beta_mode
        << ',' << cp.seed << ',' << fmt17(cp.sqp_feas) << ','
        << fmt17(cp.sqp_stat) << ',' << fmt17(cp.base_tau) << ','
        << fmt17(cp.base_feas) << ',' << fmt17(cp.base_stat) << ','
        << verdict(cp.sqp_stat, cp.base_stat) << ','
        << verdict(cp.sqp_feas, cp.base_feas) << '\n';
  }
  for (const CompareMedian& m : result.medians) {
    out << "median," << m.problem << ',' << m.noise << ',' << m.beta_mode
        << ",," << fmt17(m.sqp_feas) << ',' << fmt17(m.sqp_stat) << ",,"
        << fmt17(m.base_feas) << ',' << fmt17(m.base_stat) << ','
        << verdict(m.sqp_stat, m.base_stat) << ','
        << verdict(m.sqp_feas, m.base_feas) << '\n';
  }

  log << "stat: sqp wins " << result.stat_wins << ", baseline wins "
      << result.stat_losses << ", ties " << result.stat_ties << "\n";
  log << "feas: sqp wins " << result.feas_wins << ", baseline wins "
      << result.feas_losses << ", ties " << result.feas_ties << "\n";
  if (skipped > 0) {
    log << "skipped " << skipped << " incomplete group(s)\n";
  }
  if (result.budget_violations > 0) {
    log << "WARNING: " << result.budget_violations
        << " group(s) gave the baseline less work than sqp\n";
  }
  return result;
}

std::pair<std::string, BestRow> run_single(const ExperimentConfig& cfg,
                                           const SingleRun& ident) {
  if (cfg.problems.size() != 1) {
    throw UsageError("run_single: exactly one problem");
  }
  ExperimentConfig local = cfg;
  local.methods = {ident.method};
  local.seeds = {ident.seed};
  if (ident.method == "subgradient") {
    if (!ident.tau) throw UsageError("the subgradient method needs a tau value");
    local.tau_sweep = {*ident.tau};
  }
  local.validate();
  const BetaSchedule betas = BetaSchedule::parse(local.beta_mode);
  const PreparedProblem pp = prepare_problem(local.problems[0], local);
  const auto noises = noise_entries(local, pp, betas);
  if (noises.size() != 1) {
    throw UsageError("run_single: needs exactly one noise point");
  }
  Task t;
  t.key.method = ident.method;
  t.key.problem = local.problems[0];
  t.key.noise = noises[0].first;
  t.key.beta_mode = betas.label();
  t.key.seed = ident.seed;
  if (ident.method == "subgradient") t.key.tau = ident.tau;
  t.eps = noises[0].second;
  t.prob = &pp;
  RunOutput out = execute_task(t, local, betas, nullptr);
  if (!out.has_best) throw EmptyRun("solver produced no iterations");
  return {std::move(out.runs_rows), std::move(out.best)};
}

void write_synthetic_dataset(const std::string& path, int n_rows, int n_cols,
                             std::uint64_t seed) {
  if (n_rows < 0 || n_cols < 1) {
    throw UsageError("gen-data: need n_rows >= 0 and n_cols >= 1");
  }
  auto [features, labels] = synthetic_dataset(n_rows, n_cols, seed);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path);
  emit_libsvm(out, features, labels);
}

void write_constraint_pool(const std::string& path,
                           const ConstraintPool& pool) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path);
  out << "k,row,col,value\n";
  for (std::size_t k = 0; k < pool.mats.size(); ++k) {
    const dmat& mat = pool.mats[k];
    const dvec& vec = pool.vecs[k];
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
      out << (k + 1) << ',' << (i + 1) << ",0," << fmt17(vec[i]) << '\n';
      for (Eigen::Index j = 0; j < mat.cols(); ++j) {
        out << (k + 1) << ',' << (i + 1) << ',' << (j + 1) << ','
            << fmt17(mat(i, j)) << '\n';
      }
    }
  }
}

}  // namespace ssqp
