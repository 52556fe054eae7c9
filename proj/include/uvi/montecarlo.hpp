#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "uvi/errors.hpp"
#include "uvi/estimators.hpp"
#include "uvi/inference.hpp"
#include "uvi/io.hpp"
#include "uvi/rng.hpp"
#include "uvi/stats.hpp"
#include "uvi/var.hpp"

namespace uvi {

struct ExperimentConfig {
  std::string kind;  // ci_table | pr_level | pr_power
  std::string id;    // seed namespace; defaults to kind
  std::vector<int> dims;
  std::vector<int> sample_sizes;  // ci_table, pr_level
  std::vector<double> deltas;     // pr_power
  int n = 100;                    // pr_power sample size
  int replications = 200;
  std::vector<std::string> methods;
  std::vector<std::string> regimes;  // pr kinds: mixed | nonstationary
  double alpha = 0.05;
  double alpha1 = 0.05;
  double alpha2 = 0.05;
  double ivx_beta = 0.9;
  int quantile_replications = 199;
  int eam_max_iterations = 40;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = all hardware threads

  bool is_pr() const { return kind == "pr_level" || kind == "pr_power"; }

  std::string seed_namespace() const { return id.empty() ? kind : id; }

  std::vector<std::string> effective_methods() const {
    if (!methods.empty()) return methods;
    if (is_pr()) return {"phi_b", "phi_iv", "phi_la"};
    return {"ci_b", "ci_iv", "ci_la"};
  }

  std::vector<std::string> effective_regimes() const {
    if (!is_pr()) return {"-"};
    if (!regimes.empty()) return regimes;
    return {"mixed", "nonstationary"};
  }

  // strict = the published config schema (CLI boundary); library callers
  // may run degenerate replication counts for smoke tests.
  void validate(bool strict = false) const {
    if (kind != "ci_table" && kind != "pr_level" && kind != "pr_power") {
      throw InvalidArgument("ExperimentConfig: unknown kind '" + kind + "'");
    }
    if (dims.empty()) throw InvalidArgument("ExperimentConfig: dims empty");
    for (int d : dims) {
      if (d < 1) throw InvalidArgument("ExperimentConfig: dims must be positive");
      if (is_pr() && d < 2) throw InvalidArgument("ExperimentConfig: pr kinds need d >= 2");
    }
    if (kind == "pr_power") {
      if (deltas.empty()) throw InvalidArgument("ExperimentConfig: deltas empty");
      if (n < 4) throw InvalidArgument("ExperimentConfig: n too small");
    } else if (sample_sizes.empty()) {
      throw InvalidArgument("ExperimentConfig: sample_sizes empty");
    }
    for (int sz : sample_sizes) {
      if (sz < 4) throw InvalidArgument("ExperimentConfig: sample size too small");
    }
    if (replications < 1) throw InvalidArgument("ExperimentConfig: replications < 1");
    if (strict && replications < 10) {
      throw InvalidArgument("ExperimentConfig: replications < 10");
    }
    for (const std::string& m : effective_methods()) {
      bool ok = is_pr() ? (m == "phi_b" || m == "phi_iv" || m == "phi_la")
                        : (m == "ci_b" || m == "ci_iv" || m == "ci_la");
      if (!ok) throw InvalidArgument("ExperimentConfig: method '" + m + "' not valid for " + kind);
    }
    if (is_pr()) {
      for (const std::string& r : effective_regimes()) {
        if (r != "mixed" && r != "nonstationary") {
          throw InvalidArgument("ExperimentConfig: unknown regime '" + r + "'");
        }
      }
      if (!(alpha1 > 0.0 && alpha2 > 0.0 && alpha1 + alpha2 < 1.0)) {
        throw InvalidArgument("ExperimentConfig: bad alpha1/alpha2");
      }
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("ExperimentConfig: alpha in (0,1)");
    if (!(ivx_beta > 0.0 && ivx_beta <= 1.0)) throw InvalidArgument("ExperimentConfig: beta in (0,1]");
    if (quantile_replications < 99) throw InvalidArgument("ExperimentConfig: quantile_replications < 99");
    if (eam_max_iterations < 5) throw InvalidArgument("ExperimentConfig: eam_max_iterations < 5");
    if (threads < 0) throw InvalidArgument("ExperimentConfig: threads < 0");
  }
};

inline void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"kind", c.kind},
           {"id", c.id},
           {"dims", c.dims},
           {"sample_sizes", c.sample_sizes},
           {"deltas", c.deltas},
           {"n", c.n},
           {"replications", c.replications},
           {"methods", c.methods},
           {"regimes", c.regimes},
           {"alpha", c.alpha},
           {"alpha1", c.alpha1},
           {"alpha2", c.alpha2},
           {"ivx_beta", c.ivx_beta},
           {"quantile_replications", c.quantile_replications},
           {"eam_max_iterations", c.eam_max_iterations},
           {"seed", c.seed},
           {"threads", c.threads}};
}

inline void from_json(const json& j, ExperimentConfig& c) {
  static const char* known[] = {"kind", "id", "dims", "sample_sizes", "deltas", "n",
                                "replications", "methods", "regimes", "alpha", "alpha1",
                                "alpha2", "ivx_beta", "quantile_replications",
                                "eam_max_iterations", "seed", "threads"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw InvalidArgument("ExperimentConfig: unknown key '" + it.key() + "'");
  }
  c = ExperimentConfig{};
  j.at("kind").get_to(c.kind);
  if (j.contains("id")) j.at("id").get_to(c.id);
  j.at("dims").get_to(c.dims);
  if (j.contains("sample_sizes")) j.at("sample_sizes").get_to(c.sample_sizes);
  if (j.contains("deltas")) j.at("deltas").get_to(c.deltas);
  if (j.contains("n")) j.at("n").get_to(c.n);
  if (j.contains("replications")) j.at("replications").get_to(c.replications);
  if (j.contains("methods")) j.at("methods").get_to(c.methods);
  if (j.contains("regimes")) j.at("regimes").get_to(c.regimes);
  if (j.contains("alpha")) j.at("alpha").get_to(c.alpha);
  if (j.contains("alpha1")) j.at("alpha1").get_to(c.alpha1);
  if (j.contains("alpha2")) j.at("alpha2").get_to(c.alpha2);
  if (j.contains("ivx_beta")) j.at("ivx_beta").get_to(c.ivx_beta);
  if (j.contains("quantile_replications")) j.at("quantile_replications").get_to(c.quantile_replications);
  if (j.contains("eam_max_iterations")) j.at("eam_max_iterations").get_to(c.eam_max_iterations);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("threads")) j.at("threads").get_to(c.threads);
}

inline std::string config_digest(const ExperimentConfig& cfg) {
  json j = cfg;
  std::string dump = j.dump();  // object keys are sorted, so this is canonical
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct CellResult {
  std::string kind;
  int d = 0;
  int n = 0;
  double delta = 0.0;
  std::string regime = "-";
  std::string method;
  int replications = 0;  // attempted
  int successes = 0;
  int failures = 0;
  double value = 0.0;          // coverage or rejection rate over successes
  double median_length = 0.0;  // ci_table only
  bool invalid = false;        // failures exceed 5% of attempted
  double seconds = 0.0;        // summed replication time, reporting only
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string digest;
  bool partial = false;
  double total_seconds = 0.0;
  std::vector<CellResult> cells;
};

namespace mc_detail {

struct MethodOutcome {
  bool ok = false;
  bool hit = false;      // containment (ci) or rejection (pr)
  double length = 0.0;   // interval length (ci)
  std::string error;
};

struct TaskResult {
  bool attempted = false;
  double seconds = 0.0;
  std::vector<MethodOutcome> methods;
};

struct CellSpec {
  int d = 0;
  int n = 0;
  double delta = 0.0;
  std::string regime = "-";
  std::string key;
};

inline MatrixXd ones_sigma(int d) {
  return 0.5 * (MatrixXd::Identity(d, d) + MatrixXd::Ones(d, d));
}

inline std::vector<CellSpec> enumerate_cells(const ExperimentConfig& cfg) {
  std::vector<CellSpec> cells;
  for (int d : cfg.dims) {
    if (cfg.kind == "ci_table") {
      for (int n : cfg.sample_sizes) {
        CellSpec c;
        c.d = d;
        c.n = n;
        c.key = "d=" + std::to_string(d) + ",n=" + std::to_string(n);
        cells.push_back(c);
      }
    } else if (cfg.kind == "pr_level") {
      for (int n : cfg.sample_sizes) {
        for (const std::string& r : cfg.effective_regimes()) {
          CellSpec c;
          c.d = d;
          c.n = n;
          c.regime = r;
          c.key = "d=" + std::to_string(d) + ",n=" + std::to_string(n) + ",regime=" + r;
          cells.push_back(c);
        }
      }
    } else {
      for (double delta : cfg.deltas) {
        for (const std::string& r : cfg.effective_regimes()) {
          CellSpec c;
          c.d = d;
          c.n = cfg.n;
          c.delta = delta;
          c.regime = r;
          c.key = "d=" + std::to_string(d) + ",delta=" + io::format_double(delta) + ",regime=" + r;
          cells.push_back(c);
        }
      }
    }
  }
  return cells;
}

// One ci_table replication: draw the cascade-spectrum DGP, interval the
// (1,1) coordinate with each requested method.
inline std::vector<MethodOutcome> ci_replication(const ExperimentConfig& cfg, const CellSpec& cell,
                                                 std::uint64_t seed) {
  std::vector<std::string> methods = cfg.effective_methods();
  std::vector<MethodOutcome> out(methods.size());
  ModelParams params;
  VarPath path;
  double truth = 0.0;
  try {
    SpectrumGamma sg = construct_gamma_from_spectrum(cell.d, cell.n, rng::derive_seed(seed, "dgp"));
    params.gamma = sg.gamma;
    params.sigma = ones_sigma(cell.d);
    truth = params.gamma(0, 0);
    path = simulate_var(params, cell.n, ErrorSpec::gaussian_errors(), rng::derive_seed(seed, "path"));
  } catch (const Error& e) {
    for (auto& m : out) m.error = e.what();
    return out;
  }
  for (std::size_t k = 0; k < methods.size(); ++k) {
    MethodOutcome& mo = out[k];
    try {
      double lo = 0.0, hi = 0.0;
      if (methods[k] == "ci_la") {
        CoordInterval ci = ci_la(lag_augmented_estimate(path), 0, 0, cfg.alpha);
        lo = ci.lower;
        hi = ci.upper;
      } else {
        RegionSpec rs;
        rs.method = methods[k] == "ci_b" ? RegionMethod::cr_b : RegionMethod::cr_iv;
        rs.alpha = cfg.alpha;
        rs.B = cfg.quantile_replications;
        rs.ivx_beta = cfg.ivx_beta;
        rs.seed = rng::derive_seed(seed, methods[k]);
        EamOptions opts;
        opts.max_iterations = cfg.eam_max_iterations;
        IntervalResult r = project_ci(path, 0, 0, rs, opts);
        lo = r.lower;
        hi = r.upper;
      }
      mo.ok = true;
      mo.hit = lo <= truth && truth <= hi;
      mo.length = hi - lo;
    } catch (const Error& e) {
      mo.error = e.what();
    }
  }
  return out;
}

// One predictive-regression replication under gamma = delta * ones.
inline std::vector<MethodOutcome> pr_replication(const ExperimentConfig& cfg, const CellSpec& cell,
                                                 std::uint64_t seed) {
  std::vector<std::string> methods = cfg.effective_methods();
  std::vector<MethodOutcome> out(methods.size());
  const int d = cell.d;
  const int q = d - 1;
  VarPath path;
  try {
    MatrixXd gamma_tilde;
    if (cell.regime == "mixed") {
      gamma_tilde = construct_gamma_from_spectrum(q, cell.n, rng::derive_seed(seed, "dgp")).gamma;
    } else {
      gamma_tilde = MatrixXd::Identity(q, q);
    }
    ModelParams params;
    params.gamma = MatrixXd::Zero(d, d);
    params.gamma.block(1, 1, q, q) = gamma_tilde;
    params.gamma.block(0, 1, 1, q).setConstant(cell.delta);
    params.sigma = ones_sigma(d);
    path = simulate_var(params, cell.n, ErrorSpec::gaussian_errors(), rng::derive_seed(seed, "path"));
  } catch (const Error& e) {
    for (auto& m : out) m.error = e.what();
    return out;
  }
  for (std::size_t k = 0; k < methods.size(); ++k) {
    MethodOutcome& mo = out[k];
    try {
      PrMethod pm = methods[k] == "phi_b"    ? PrMethod::phi_b
                    : methods[k] == "phi_iv" ? PrMethod::phi_iv
                                             : PrMethod::phi_la;
      EamOptions opts;
      opts.max_iterations = cfg.eam_max_iterations;
      PrConfig pc;
      pc.B = cfg.quantile_replications;
      pc.ivx_beta = cfg.ivx_beta;
      pc.seed = rng::derive_seed(seed, methods[k]);
      PrTestResult r = pr_test(path, cfg.alpha1, cfg.alpha2, pm, opts, pc);
      mo.ok = true;
      mo.hit = r.reject;
    } catch (const Error& e) {
      mo.error = e.what();
    }
  }
  return out;
}

template <typename Fn>
inline std::vector<TaskResult> run_pool(int total, int threads, const std::atomic<bool>* stop,
                                        Fn&& fn) {
  std::vector<TaskResult> out(static_cast<std::size_t>(total));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int idx = next.fetch_add(1);
      if (idx >= total) return;
      if (stop != nullptr && stop->load()) continue;
      TaskResult& slot = out[static_cast<std::size_t>(idx)];
      auto t0 = std::chrono::steady_clock::now();
      try {
        slot.methods = fn(idx);
      } catch (...) {
        slot.methods.clear();  // counted as an all-method failure below
      }
      slot.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      slot.attempted = true;
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads) - 1);
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
  }
  return out;
}

}  // namespace mc_detail

// threads_override > 0 wins over the config; stop, when set, requests a
// cooperative early exit with partial aggregates.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads_override = 0,
                                       const std::atomic<bool>* stop = nullptr) {
  cfg.validate();
  auto start = std::chrono::steady_clock::now();
  std::vector<mc_detail::CellSpec> cells = mc_detail::enumerate_cells(cfg);
  std::vector<std::string> methods = cfg.effective_methods();
  const int R = cfg.replications;
  const int total = static_cast<int>(cells.size()) * R;

  int threads = threads_override > 0 ? threads_override : cfg.threads;
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;

  std::uint64_t exp_seed = rng::derive_seed(cfg.seed, cfg.seed_namespace());
  std::vector<std::uint64_t> cell_seeds(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    cell_seeds[c] = rng::derive_seed(exp_seed, cells[c].key);
  }

  auto task = [&](int idx) {
    const int cell_idx = idx / R;
    const int rep = idx % R;
    const mc_detail::CellSpec& cell = cells[static_cast<std::size_t>(cell_idx)];
    std::uint64_t rep_seed = rng::derive_seed(cell_seeds[static_cast<std::size_t>(cell_idx)], "rep", rep);
    return cfg.kind == "ci_table" ? mc_detail::ci_replication(cfg, cell, rep_seed)
                                  : mc_detail::pr_replication(cfg, cell, rep_seed);
  };
  std::vector<mc_detail::TaskResult> tasks = mc_detail::run_pool(total, threads, stop, task);

  ExperimentResult result;
  result.config = cfg;
  result.digest = config_digest(cfg);
  result.partial = stop != nullptr && stop->load();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const mc_detail::CellSpec& cell = cells[c];
    for (std::size_t k = 0; k < methods.size(); ++k) {
      CellResult cr;
      cr.kind = cfg.kind;
      cr.d = cell.d;
      cr.n = cell.n;
      cr.delta = cell.delta;
      cr.regime = cell.regime;
      cr.method = methods[k];
      std::vector<double> lengths;
      int hits = 0;
      for (int rep = 0; rep < R; ++rep) {
        const mc_detail::TaskResult& tr = tasks[c * static_cast<std::size_t>(R) + static_cast<std::size_t>(rep)];
        if (!tr.attempted) continue;
        ++cr.replications;
        cr.seconds += tr.seconds / static_cast<double>(methods.size());
        if (k < tr.methods.size() && tr.methods[k].ok) {
          ++cr.successes;
          if (tr.methods[k].hit) ++hits;
          lengths.push_back(tr.methods[k].length);
        } else {
          ++cr.failures;
        }
      }
      if (cr.successes > 0) {
        cr.value = static_cast<double>(hits) / cr.successes;
        if (cfg.kind == "ci_table") cr.median_length = stats::median(lengths);
      }
      cr.invalid = cr.replications == 0 ||
                   cr.failures * 20 > cr.replications;  // > 5% failed
      result.cells.push_back(cr);
    }
  }
  result.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

inline std::string result_csv(const ExperimentResult& r) {
  std::string out;
  out += "# config_digest=" + r.digest + " seed=" + std::to_string(r.config.seed) + "\n";
  if (r.partial) out += "# partial\n";
  out += "kind,d,n,delta,regime,method,replications,successes,failures,value,median_length,invalid\n";
  for (const CellResult& c : r.cells) {
    out += c.kind + "," + std::to_string(c.d) + "," + std::to_string(c.n) + "," +
           io::format_double(c.delta) + "," + c.regime + "," + c.method + "," +
           std::to_string(c.replications) + "," + std::to_string(c.successes) + "," +
           std::to_string(c.failures) + "," + io::format_double(c.value) + "," +
           io::format_double(c.median_length) + "," + (c.invalid ? "1" : "0") + "\n";
  }
  return out;
}

inline json result_json(const ExperimentResult& r) {
  json cells = json::array();
  for (const CellResult& c : r.cells) {
    cells.push_back(json{{"kind", c.kind},
                         {"d", c.d},
                         {"n", c.n},
                         {"delta", c.delta},
                         {"regime", c.regime},
                         {"method", c.method},
                         {"replications", c.replications},
                         {"successes", c.successes},
                         {"failures", c.failures},
                         {"value", c.value},
                         {"median_length", c.median_length},
                         {"invalid", c.invalid},
                         {"seconds", c.seconds}});
  }
  return json{{"digest", r.digest},
              {"seed", r.config.seed},
              {"partial", r.partial},
              {"total_seconds", r.total_seconds},
              {"config", r.config},
              {"cells", cells}};
}

}  // namespace uvi
