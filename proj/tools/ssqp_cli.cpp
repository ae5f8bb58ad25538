#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssqp/errors.hpp"
#include "ssqp/harness.hpp"
#include "ssqp/problems.hpp"

namespace {

using namespace ssqp;

bool registry_has(const std::string& name) {
  const auto names = builtin_problem_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

struct SolveArgs {
  std::string problem;
  double eps_g = 0, eps_c = 0, eps_j = 0;
  bool eps_given = false;
  std::string beta = "const:0.1";
  int iters = 1000;
  std::uint64_t seed = 1;
  std::uint64_t master_seed = 0;
  std::string out;
  std::string method = "sqp";
  double tau = 1.0;
  SqpParams params;
  std::optional<double> lip_l, lip_gamma;
  std::string step_policy = "scan";
  bool raw_variances = false;
  double omega_rho = 1.0;
  int b1 = 128, b2 = 128;
  int pool_size = 1000;
  double sphere_rhs = 1.0;
  double perturbation_var = 1e-3;
};

int do_solve(const SolveArgs& a) {
  ExperimentConfig cfg;
  cfg.problems = {a.problem};
  cfg.beta_mode = a.beta;
  cfg.iters = a.iters;
  cfg.master_seed = a.master_seed;
  cfg.raw_variances = a.raw_variances;
  cfg.omega_rho = a.omega_rho;
  cfg.batch_objective = a.b1;
  cfg.batch_constraint = a.b2;
  cfg.pool_size = a.pool_size;
  cfg.sphere_rhs = a.sphere_rhs;
  cfg.perturbation_var = a.perturbation_var;
  cfg.params = a.params;
  if (a.step_policy == "scan") {
    cfg.params.step_policy = SqpParams::StepPolicy::kGeometricScan;
  } else if (a.step_policy == "min-step") {
    cfg.params.step_policy = SqpParams::StepPolicy::kMinStep;
  } else {
    throw UsageError("--step-policy: want scan | min-step, got " +
                     a.step_policy);
  }
  cfg.lip_l = a.lip_l;
  cfg.lip_gamma = a.lip_gamma;

  const bool complexity = a.beta.rfind("complexity:", 0) == 0;
  if (registry_has(a.problem)) {
    if (a.eps_given && complexity) {
      throw UsageError("--eps-g/--eps-c/--eps-j conflict with the complexity "
                       "schedule, which fixes the variances");
    }
    if (!complexity) cfg.noise_grid = {{a.eps_g, a.eps_c, a.eps_j}};
  } else if (a.eps_given) {
    throw UsageError("--eps-g/--eps-c/--eps-j apply to registry problems; "
                     "dataset problems use mini-batch noise (--b1/--b2)");
  }

  SingleRun ident;
  ident.method = a.method;
  ident.seed = a.seed;
  if (a.method == "subgradient") ident.tau = a.tau;

  const auto [rows, best] = run_single(cfg, ident);
  char summary[256];
  std::snprintf(summary, sizeof(summary),
                "best k=%d feas=%.6e stat=%.6e branch=%s run_id=%s",
                best.best_k, best.best_feas, best.best_stat,
                best.branch.c_str(), best.run_id.c_str());
  if (!a.out.empty()) {
    std::ofstream f(a.out, std::ios::binary);
    if (!f) throw UsageError("cannot write " + a.out);
    f << runs_csv_header() << '\n' << rows;
    std::cout << summary << "\n";
  } else {
    std::cout << runs_csv_header() << '\n' << rows;
    std::cout << "# " << summary << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic SQP solver and experiment driver"};
  app.require_subcommand(1);

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "run one solver instance");
  solve->add_option("--problem", sa.problem,
                    "registry name or LIBSVM dataset path")
      ->required();
  auto* og = solve->add_option("--eps-g", sa.eps_g, "gradient noise level");
  auto* oc = solve->add_option("--eps-c", sa.eps_c, "constraint noise level");
  auto* oj = solve->add_option("--eps-j", sa.eps_j, "jacobian noise level");
  solve->add_option("--beta", sa.beta,
                    "const:<v> | dimin | complexity:<omega>:<k_max>");
  solve->add_option("--iters", sa.iters, "iteration budget");
  solve->add_option("--seed", sa.seed, "run seed");
  solve->add_option("--master-seed", sa.master_seed, "stream derivation salt");
  solve->add_option("--out", sa.out, "per-iteration CSV path (default stdout)");
  solve->add_option("--method", sa.method, "sqp | subgradient")
      ->check(CLI::IsMember({"sqp", "subgradient"}));
  solve->add_option("--tau", sa.tau, "subgradient merit parameter");
  solve->add_option("--tau0", sa.params.tau0, "initial merit parameter");
  solve->add_option("--xi0", sa.params.xi0, "initial ratio parameter");
  solve->add_option("--eta", sa.params.eta, "decrease fraction");
  solve->add_option("--sigma", sa.params.sigma, "merit trial margin");
  solve->add_option("--eps-tau", sa.params.eps_tau, "merit update margin");
  solve->add_option("--eps-xi", sa.params.eps_xi, "ratio update margin");
  solve->add_option("--theta", sa.params.theta, "step interval width factor");
  solve->add_option("--zeta", sa.params.zeta, "hessian eigenvalue floor");
  solve->add_option("--kappa-h", sa.params.kappa_h, "hessian eigenvalue cap");
  solve->add_option("--lip-l", [&sa](const CLI::results_t& r) {
    sa.lip_l = std::stod(r[0]);
    return true;
  }, "objective gradient Lipschitz constant (default: estimated)");
  solve->add_option("--lip-gamma", [&sa](const CLI::results_t& r) {
    sa.lip_gamma = std::stod(r[0]);
    return true;
  }, "constraint curvature constant (default: estimated)");
  solve->add_option("--step-policy", sa.step_policy, "scan | min-step");
  solve->add_flag("--raw-variances", sa.raw_variances,
                  "drop the beta^2 variance coupling");
  solve->add_option("--omega-rho", sa.omega_rho,
                    "variance budget, complexity schedule only");
  solve->add_option("--b1", sa.b1, "objective batch size (dataset problems)");
  solve->add_option("--b2", sa.b2, "constraint batch size (dataset problems)");
  solve->add_option("--pool-size", sa.pool_size, "constraint pool size K");
  solve->add_option("--sphere-rhs", sa.sphere_rhs, "norm constraint target");
  solve->add_option("--perturbation-var", sa.perturbation_var,
                    "constraint pool perturbation variance");

  std::string config_path, exp_out_dir, exp_beta;
  int exp_workers = 0, exp_iters = 0;
  std::uint64_t exp_master = 0;
  bool exp_wall = false;
  auto* experiment =
      app.add_subcommand("experiment", "run a sweep from a JSON config");
  experiment->add_option("config", config_path, "JSON config path")
      ->required()
      ->check(CLI::ExistingFile);
  auto* eo = experiment->add_option("--output-dir", exp_out_dir,
                                    "override output directory");
  auto* ew = experiment->add_option("--workers", exp_workers,
                                    "override worker count");
  auto* em = experiment->add_option("--master-seed", exp_master,
                                    "override master seed");
  auto* ei = experiment->add_option("--iters", exp_iters,
                                    "override iteration budget");
  auto* eb = experiment->add_option("--beta", exp_beta,
                                    "override beta schedule");
  experiment->add_flag("--wall-clock-match", exp_wall,
                       "baseline budgets from measured wall time");

  std::vector<std::string> best_paths;
  std::string compare_out = "compare.csv";
  auto* compare = app.add_subcommand(
      "compare", "pair sqp runs against the baseline tau sweep");
  compare->add_option("best_csv", best_paths, "best.csv files to join")
      ->required()
      ->check(CLI::ExistingFile);
  compare->add_option("--out", compare_out, "paired output CSV path");

  int gen_n = 0, gen_rows = 0, gen_pool_size = 1000;
  std::uint64_t gen_seed = 1;
  std::string gen_out, gen_pool_out;
  double gen_var = 1e-3, gen_sphere = 1.0;
  auto* gen = app.add_subcommand("gen-data",
                                 "emit a synthetic LIBSVM dataset");
  gen->add_option("--n", gen_n, "feature count")->required();
  gen->add_option("--N", gen_rows, "record count")->required();
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "dataset path")->required();
  gen->add_option("--pool-out", gen_pool_out,
                  "also write the constraint pool CSV here");
  gen->add_option("--pool-size", gen_pool_size, "pool size K");
  gen->add_option("--perturbation-var", gen_var,
                  "pool perturbation variance");
  gen->add_option("--sphere-rhs", gen_sphere, "norm constraint target");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*solve) {
      sa.eps_given = og->count() + oc->count() + oj->count() > 0;
      return do_solve(sa);
    }
    if (*experiment) {
      ExperimentConfig cfg = load_experiment_config(config_path);
      if (eo->count()) cfg.output_dir = exp_out_dir;
      if (ew->count()) cfg.workers = exp_workers;
      if (em->count()) cfg.master_seed = exp_master;
      if (ei->count()) cfg.iters = exp_iters;
      if (eb->count()) cfg.beta_mode = exp_beta;
      if (exp_wall) cfg.wall_clock_match = true;
      run_experiment(cfg, std::cout);
      return 0;
    }
    if (*compare) {
      run_compare(best_paths, compare_out, std::cout);
      return 0;
    }
    if (*gen) {
      write_synthetic_dataset(gen_out, gen_rows, gen_n, gen_seed);
      std::cout << "wrote " << gen_rows << " records to " << gen_out << "\n";
      if (!gen_pool_out.empty()) {
        if (gen_rows < 1) {
          throw UsageError("--pool-out needs at least one record");
        }
        auto [features, labels] = synthetic_dataset(gen_rows, gen_n, gen_seed);
        LogisticProblemConfig lc =
            default_logistic_config(std::move(features), std::move(labels),
                                    gen_seed);
        lc.pool_size = gen_pool_size;
        lc.sphere_rhs = gen_sphere;
        lc.perturbation_var = gen_var;
        auto [oracle, pool] = build_logistic_problem(lc, gen_seed);
        write_constraint_pool(gen_pool_out, pool);
        std::cout << "wrote pool (K=" << gen_pool_size << ") to "
                  << gen_pool_out << "\n";
      }
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const InvariantViolated& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
