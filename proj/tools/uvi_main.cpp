#include <atomic>
#include <csignal>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uvi/inference.hpp"
#include "uvi/io.hpp"
#include "uvi/montecarlo.hpp"
#include "uvi/var.hpp"

namespace {

// Exit codes: 0 ok, 2 invalid flags or config schema, 3 assumption
// failure, 4 singular/degenerate moments, 5 optimizer budget, 130
// interrupted. Statistical rejection is never an error.
constexpr int kExitUsage = 2;
constexpr int kExitAssumption = 3;
constexpr int kExitSingular = 4;
constexpr int kExitBudget = 5;

std::atomic<bool> g_interrupted{false};

void handle_interrupt(int) { g_interrupted.store(true); }

uvi::json matrix_json(const uvi::MatrixXd& m) {
  uvi::json rows = uvi::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    uvi::json row = uvi::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

void print_matrix(const std::string& name, const uvi::MatrixXd& m) {
  std::printf("%s:\n", name.c_str());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::printf(" ");
    for (Eigen::Index j = 0; j < m.cols(); ++j) std::printf(" % .6f", m(i, j));
    std::printf("\n");
  }
}

void emit(const uvi::json& doc, bool as_json) {
  if (as_json) std::printf("%s\n", doc.dump().c_str());
}

struct CoordArg {
  int i = 1;
  int j = 1;
};

// "--coord 1,1" names the paper-style one-based entry of Gamma.
CoordArg parse_coord(const std::string& text) {
  CoordArg c;
  std::size_t comma = text.find(',');
  if (comma == std::string::npos) throw uvi::InvalidArgument("--coord expects i,j");
  try {
    c.i = std::stoi(text.substr(0, comma));
    c.j = std::stoi(text.substr(comma + 1));
  } catch (const std::exception&) {
    throw uvi::InvalidArgument("--coord expects integers i,j");
  }
  if (c.i < 1 || c.j < 1) throw uvi::InvalidArgument("--coord is one-based");
  return c;
}

std::vector<double> parse_spectrum(const std::string& text, int d, int n) {
  if (text == "auto:paper") {
    uvi::VectorXd lam = uvi::cascade_spectrum(d, n);
    return {lam.data(), lam.data() + lam.size()};
  }
  std::vector<double> out;
  std::string cur;
  for (char ch : text + ",") {
    if (ch == ',') {
      if (cur.empty()) throw uvi::InvalidArgument("--spectrum has an empty entry");
      out.push_back(uvi::io::parse_double(cur, "--spectrum"));
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      cur += ch;
    }
  }
  return out;
}

struct SimulateArgs {
  int d = 0;
  int n = 0;
  std::string spectrum;
  std::string gamma_file;
  std::string sigma_file;
  std::uint64_t basis_seed = 0;
  bool basis_seed_given = false;
  bool force = false;
  std::string out = "path.csv";
};

int run_simulate(const SimulateArgs& a, std::uint64_t seed, bool as_json) {
  if (a.spectrum.empty() == a.gamma_file.empty()) {
    throw uvi::InvalidArgument("simulate: give exactly one of --spectrum / --gamma-file");
  }
  uvi::ModelParams params;
  if (!a.gamma_file.empty()) {
    params.gamma = uvi::io::load_matrix(a.gamma_file);
    if (params.gamma.rows() != a.d || params.gamma.cols() != a.d) {
      throw uvi::InvalidArgument("simulate: --gamma-file is not d x d");
    }
  } else {
    std::vector<double> lam = parse_spectrum(a.spectrum, a.d, a.n);
    if (static_cast<int>(lam.size()) != a.d) {
      throw uvi::InvalidArgument("simulate: spectrum length must equal --d");
    }
    uvi::VectorXd lv = Eigen::Map<uvi::VectorXd>(lam.data(), static_cast<Eigen::Index>(lam.size()));
    std::uint64_t bs = a.basis_seed_given ? a.basis_seed : uvi::rng::derive_seed(seed, "basis-seed");
    uvi::SpectrumGamma sg = uvi::construct_gamma_from_spectrum(lv, bs);
    params.gamma = sg.gamma;
    params.spectrum = uvi::VectorXcd(sg.lambdas.cast<std::complex<double>>());
  }
  if (!a.sigma_file.empty()) {
    params.sigma = uvi::io::load_matrix(a.sigma_file);
  } else {
    params.sigma = 0.5 * (uvi::MatrixXd::Identity(a.d, a.d) + uvi::MatrixXd::Ones(a.d, a.d));
  }
  uvi::AssumptionReport report = uvi::check_assumptions(params);
  if (!report.pass && !a.force) {
    uvi::json rj = report;
    std::fprintf(stderr, "assumption check failed: %s\n(--force to simulate anyway)\n",
                 rj.dump().c_str());
    return kExitAssumption;
  }
  uvi::VarPath path = uvi::simulate_var(params, a.n, uvi::ErrorSpec::gaussian_errors(), seed);
  uvi::io::save_path(path, a.out);
  std::string sidecar = a.out + ".params.json";
  uvi::json pj = params;
  pj["seed"] = seed;
  uvi::io::save_text(pj.dump(2) + "\n", sidecar);
  if (as_json) {
    emit(uvi::json{{"path", a.out}, {"params", sidecar}, {"d", a.d}, {"n", a.n}, {"seed", seed},
                   {"assumptions_ok", report.pass}},
         true);
  } else {
    std::printf("wrote %s (n=%d, d=%d) and %s\n", a.out.c_str(), a.n, a.d, sidecar.c_str());
  }
  return 0;
}

int run_estimate(const std::string& path_file, const std::string& method, double beta,
                 bool as_json) {
  uvi::VarPath path = uvi::io::load_path(path_file);
  uvi::json doc;
  doc["method"] = method;
  if (method == "ols") {
    uvi::OlsFit fit = uvi::ols_estimate(path);
    doc["gamma_hat"] = matrix_json(fit.gamma_hat);
    doc["sigma_hat"] = matrix_json(fit.sigma_hat);
    if (!as_json) {
      print_matrix("gamma_hat", fit.gamma_hat);
      print_matrix("sigma_hat", fit.sigma_hat);
    }
  } else if (method == "la") {
    uvi::LagAugFit fit = uvi::lag_augmented_estimate(path);
    doc["gamma_hat"] = matrix_json(fit.gamma_hat);
    doc["sigma_hat"] = matrix_json(fit.sigma_hat);
    doc["n_eff"] = fit.n_eff;
    if (!as_json) {
      print_matrix("gamma_hat", fit.gamma_hat);
      print_matrix("sigma_hat", fit.sigma_hat);
      std::printf("n_eff: %d\n", fit.n_eff);
    }
  } else {
    uvi::IvxFit fit = uvi::ivx_estimate(path, beta);
    doc["gamma_hat"] = matrix_json(fit.gamma_hat);
    doc["beta"] = fit.beta;
    if (!as_json) {
      print_matrix("gamma_hat", fit.gamma_hat);
      std::printf("beta: %g\n", fit.beta);
    }
  }
  emit(doc, as_json);
  return 0;
}

struct CiArgs {
  std::string path_file;
  std::string coord = "1,1";
  std::string method = "b";
  double alpha = 0.05;
  int quantile_reps = 999;
  int eam_iterations = 60;
  double beta = 0.9;
};

int run_ci(const CiArgs& a, std::uint64_t seed, bool as_json) {
  uvi::VarPath path = uvi::io::load_path(a.path_file);
  CoordArg coord = parse_coord(a.coord);
  const int d = path.d();
  if (coord.i > d || coord.j > d) throw uvi::InvalidArgument("--coord exceeds path dimension");
  uvi::json doc;
  doc["alpha"] = a.alpha;
  doc["coord"] = {coord.i, coord.j};
  int code = 0;
  if (a.method == "la") {
    uvi::CoordInterval ci =
        uvi::ci_la(uvi::lag_augmented_estimate(path), coord.i - 1, coord.j - 1, a.alpha);
    doc["method"] = "ci_la";
    doc["interval"] = {ci.lower, ci.upper};
    doc["evaluations"] = 0;
    doc["flags"] = uvi::json::object();
    if (!as_json) std::printf("ci_la [%g, %g]\n", ci.lower, ci.upper);
  } else {
    uvi::RegionSpec spec;
    spec.method = a.method == "b" ? uvi::RegionMethod::cr_b : uvi::RegionMethod::cr_iv;
    spec.alpha = a.alpha;
    spec.B = a.quantile_reps;
    spec.ivx_beta = a.beta;
    spec.seed = seed;
    uvi::EamOptions opts;
    opts.max_iterations = a.eam_iterations;
    uvi::IntervalResult r = uvi::project_ci(path, coord.i - 1, coord.j - 1, spec, opts);
    doc["method"] = a.method == "b" ? "ci_b" : "ci_iv";
    doc["interval"] = {r.lower, r.upper};
    doc["evaluations"] = r.evaluations;
    doc["iterations"] = r.iterations;
    doc["flags"] =
        uvi::json{{"budget_exhausted", r.budget_exhausted}, {"box_hit", r.box_hit}};
    if (!as_json) {
      std::printf("%s [%g, %g]  (%d quantile evaluations%s%s)\n", doc["method"].get<std::string>().c_str(),
                  r.lower, r.upper, r.evaluations, r.budget_exhausted ? ", budget exhausted" : "",
                  r.box_hit ? ", box hit" : "");
    }
    if (r.budget_exhausted) code = kExitBudget;
  }
  emit(doc, as_json);
  return code;
}

struct PrArgs {
  std::string path_file;
  std::string method = "b";
  double alpha1 = 0.05;
  double alpha2 = 0.05;
  int quantile_reps = 199;
  int eam_iterations = 60;
  double beta = 0.9;
};

int run_test_pr(const PrArgs& a, std::uint64_t seed, bool as_json) {
  uvi::VarPath path = uvi::io::load_path(a.path_file);
  uvi::PrMethod method = a.method == "b"    ? uvi::PrMethod::phi_b
                         : a.method == "iv" ? uvi::PrMethod::phi_iv
                                            : uvi::PrMethod::phi_la;
  uvi::EamOptions opts;
  opts.max_iterations = a.eam_iterations;
  uvi::PrConfig cfg;
  cfg.B = a.quantile_reps;
  cfg.ivx_beta = a.beta;
  cfg.seed = seed;
  uvi::PrTestResult r = uvi::pr_test(path, a.alpha1, a.alpha2, method, opts, cfg);
  uvi::json doc{{"method", uvi::pr_method_name(r.method)},
                {"alpha1", r.alpha1},
                {"alpha2", r.alpha2},
                {"reject", r.reject},
                {"statistic", r.inf_statistic},
                {"critical_value", r.critical_value},
                {"evaluations", r.evaluations},
                {"flags", uvi::json{{"budget_exhausted", r.budget_exhausted}}}};
  if (!as_json) {
    std::printf("%s: %s (statistic %g, critical value %g)\n", uvi::pr_method_name(r.method),
                r.reject ? "reject" : "no rejection", r.inf_statistic, r.critical_value);
  }
  emit(doc, as_json);
  return r.budget_exhausted ? kExitBudget : 0;
}

struct RegionArgs {
  std::string path_file;
  std::string gamma0_file;
  std::string method = "b";
  double alpha = 0.05;
  int quantile_reps = 999;
  int ou_steps = 500;
  double beta = 0.9;
};

int run_region_contains(const RegionArgs& a, std::uint64_t seed, bool as_json) {
  uvi::VarPath path = uvi::io::load_path(a.path_file);
  uvi::MatrixXd gamma0 = uvi::io::load_matrix(a.gamma0_file);
  uvi::RegionSpec spec;
  spec.method = a.method == "a"   ? uvi::RegionMethod::cr_a
                : a.method == "b" ? uvi::RegionMethod::cr_b
                                  : uvi::RegionMethod::cr_iv;
  spec.alpha = a.alpha;
  spec.B = a.quantile_reps;
  spec.ou_steps = a.ou_steps;
  spec.ivx_beta = a.beta;
  spec.seed = seed;
  bool contained = uvi::region_contains(path, gamma0, spec);
  uvi::json doc{{"method", uvi::region_method_name(spec.method)},
                {"alpha", a.alpha},
                {"contained", contained}};
  if (!as_json) {
    std::printf("%s: gamma0 %s the %.0f%% region\n", uvi::region_method_name(spec.method),
                contained ? "inside" : "outside", 100.0 * (1.0 - a.alpha));
  }
  emit(doc, as_json);
  return 0;
}

void print_cells(const uvi::ExperimentResult& result) {
  std::printf("%-9s %2s %4s %7s %-13s %-6s %5s %5s %9s %9s\n", "kind", "d", "n", "delta",
              "regime", "meth", "ok", "fail", "value", "medlen");
  for (const uvi::CellResult& c : result.cells) {
    std::printf("%-9s %2d %4d %7.4f %-13s %-6s %5d %5d %9.4f %9.4f%s\n", c.kind.c_str(), c.d, c.n,
                c.delta, c.regime.c_str(), c.method.c_str(), c.successes, c.failures, c.value,
                c.median_length, c.invalid ? "  INVALID" : "");
  }
}

int run_experiment_cmd(const std::string& config_file, const std::string& out_prefix,
                       std::uint64_t seed, bool seed_given, int threads, bool as_json) {
  uvi::json cj;
  try {
    cj = uvi::json::parse(uvi::io::load_text(config_file));
  } catch (const uvi::json::parse_error& e) {
    throw uvi::InvalidArgument(std::string("config parse error: ") + e.what());
  }
  uvi::ExperimentConfig cfg = cj.get<uvi::ExperimentConfig>();
  if (seed_given) cfg.seed = seed;
  cfg.validate(true);

  std::signal(SIGINT, handle_interrupt);
  uvi::ExperimentResult result = uvi::run_experiment(cfg, threads, &g_interrupted);

  std::string stem = out_prefix;
  if (stem.empty()) {
    stem = config_file;
    std::size_t dot = stem.rfind('.');
    if (dot != std::string::npos && dot > stem.rfind('/') + 1) stem = stem.substr(0, dot);
  }
  uvi::io::save_text(uvi::result_csv(result), stem + ".results.csv");
  uvi::io::save_text(uvi::result_json(result).dump(2) + "\n", stem + ".results.json");
  if (as_json) {
    emit(uvi::result_json(result), true);
  } else {
    print_cells(result);
    std::printf("wrote %s.results.csv and %s.results.json (digest %s)%s\n", stem.c_str(),
                stem.c_str(), result.digest.c_str(), result.partial ? "  [PARTIAL]" : "");
  }
  return result.partial ? 130 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uniformly valid inference for possibly cointegrated VAR(1) processes"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  int threads = 0;
  bool as_json = false;
  auto* seed_opt = app.add_option("--seed", seed, "master seed (default 0)");
  app.add_option("--threads", threads, "worker threads for experiments (0 = all cores)");
  app.add_flag("--json", as_json, "machine-readable stdout");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "simulate a VAR(1) path to a CSV file");
  sim_cmd->add_option("--d", sim.d, "dimension")->required();
  sim_cmd->add_option("--n", sim.n, "observations")->required();
  sim_cmd->add_option("--spectrum", sim.spectrum,
                      "eigenvalues '1,0.98,...' or auto:paper for the cascade design");
  sim_cmd->add_option("--gamma-file", sim.gamma_file, "explicit d x d coefficient matrix (CSV)");
  auto* basis_opt = sim_cmd->add_option("--basis-seed", sim.basis_seed,
                                        "seed for the random similarity basis");
  sim_cmd->add_option("--sigma-file", sim.sigma_file,
                      "error covariance (CSV); default (I + 11')/2");
  sim_cmd->add_flag("--force", sim.force, "simulate even if assumption checks fail");
  sim_cmd->add_option("--out", sim.out, "output path file");

  std::string est_path, est_method = "ols";
  double est_beta = 0.9;
  auto* est_cmd = app.add_subcommand("estimate", "fit OLS / lag-augmented / IVX estimators");
  est_cmd->add_option("--path", est_path, "path file")->required();
  est_cmd->add_option("--method", est_method, "ols | la | ivx")
      ->check(CLI::IsMember({"ols", "la", "ivx"}));
  est_cmd->add_option("--beta", est_beta, "IVX instrument exponent");

  CiArgs ci;
  auto* ci_cmd = app.add_subcommand("ci", "projected confidence interval for one coordinate");
  ci_cmd->add_option("--path", ci.path_file, "path file")->required();
  ci_cmd->add_option("--coord", ci.coord, "one-based target coordinate i,j");
  ci_cmd->add_option("--method", ci.method, "b | iv | la")
      ->check(CLI::IsMember({"b", "iv", "la"}));
  ci_cmd->add_option("--alpha", ci.alpha, "miscoverage level");
  ci_cmd->add_option("--quantile-reps", ci.quantile_reps, "replicas behind simulated quantiles");
  ci_cmd->add_option("--eam-iterations", ci.eam_iterations, "optimizer iteration cap");
  ci_cmd->add_option("--beta", ci.beta, "IVX instrument exponent");

  PrArgs pr;
  auto* pr_cmd = app.add_subcommand("test-pr", "predictive-regression test of the first coordinate");
  pr_cmd->add_option("--path", pr.path_file, "path file")->required();
  pr_cmd->add_option("--method", pr.method, "b | iv | la")
      ->check(CLI::IsMember({"b", "iv", "la"}));
  pr_cmd->add_option("--alpha1", pr.alpha1, "first-stage level");
  pr_cmd->add_option("--alpha2", pr.alpha2, "second-stage level");
  pr_cmd->add_option("--quantile-reps", pr.quantile_reps, "replicas behind simulated quantiles");
  pr_cmd->add_option("--eam-iterations", pr.eam_iterations, "optimizer iteration cap");
  pr_cmd->add_option("--beta", pr.beta, "IVX instrument exponent");

  RegionArgs rc;
  auto* rc_cmd = app.add_subcommand("region-contains", "membership test for a candidate Gamma");
  rc_cmd->add_option("--path", rc.path_file, "path file")->required();
  rc_cmd->add_option("--gamma0-file", rc.gamma0_file, "candidate matrix (CSV)")->required();
  rc_cmd->add_option("--method", rc.method, "a | b | iv")
      ->check(CLI::IsMember({"a", "b", "iv"}));
  rc_cmd->add_option("--alpha", rc.alpha, "miscoverage level");
  rc_cmd->add_option("--quantile-reps", rc.quantile_reps, "replicas behind simulated quantiles");
  rc_cmd->add_option("--ou-steps", rc.ou_steps, "discretization steps for cr_a");
  rc_cmd->add_option("--beta", rc.beta, "IVX instrument exponent");

  std::string exp_config, exp_prefix;
  auto* exp_cmd = app.add_subcommand("experiment", "run a Monte Carlo experiment config");
  exp_cmd->add_option("config", exp_config, "experiment config (JSON)")->required();
  exp_cmd->add_option("--out-prefix", exp_prefix, "output file stem (default: config stem)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sim_cmd) {
      sim.basis_seed_given = basis_opt->count() > 0;
      return run_simulate(sim, seed, as_json);
    }
    if (*est_cmd) return run_estimate(est_path, est_method, est_beta, as_json);
    if (*ci_cmd) return run_ci(ci, seed, as_json);
    if (*pr_cmd) return run_test_pr(pr, seed, as_json);
    if (*rc_cmd) return run_region_contains(rc, seed, as_json);
    if (*exp_cmd) {
      return run_experiment_cmd(exp_config, exp_prefix, seed, seed_opt->count() > 0, threads,
                                as_json);
    }
  } catch (const uvi::InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const uvi::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const uvi::AssumptionViolation& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitAssumption;
  } catch (const uvi::SingularBasis& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitAssumption;
  } catch (const uvi::NonDiagonalSpectrum& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitAssumption;
  } catch (const uvi::Error& e) {
    // SingularMoments, RankDeficient, EmptyRegion, IllConditioned,
    // DegenerateReplications, DegenerateDesign: the data defeated the
    // moment machinery.
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitSingular;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
