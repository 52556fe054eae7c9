#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "uvi/montecarlo.hpp"

using uvi::ExperimentConfig;
using uvi::ExperimentResult;

namespace {

ExperimentConfig small_ci_config() {
  ExperimentConfig cfg;
  cfg.kind = "ci_table";
  cfg.dims = {2};
  cfg.sample_sizes = {40};
  cfg.replications = 10;
  cfg.methods = {"ci_la", "ci_b", "ci_iv"};
  cfg.quantile_replications = 99;
  cfg.eam_max_iterations = 8;
  cfg.seed = 42;
  cfg.threads = 1;
  return cfg;
}

}  // namespace

TEST_CASE("ci table smoke run accounts for every replication") {
  ExperimentConfig cfg = small_ci_config();
  ExperimentResult res = uvi::run_experiment(cfg);
  REQUIRE(res.cells.size() == 3);  // one cell, three methods
  for (const auto& cell : res.cells) {
    CHECK(cell.kind == "ci_table");
    CHECK(cell.d == 2);
    CHECK(cell.n == 40);
    CHECK(cell.replications == 10);
    CHECK(cell.successes + cell.failures == 10);
    CHECK(cell.value >= 0.0);
    CHECK(cell.value <= 1.0);
    if (cell.successes > 0) CHECK(cell.median_length > 0.0);
  }
  const auto& la = res.cells[0];
  CHECK(la.method == "ci_la");
  CHECK(la.failures == 0);
  CHECK_FALSE(la.invalid);
  CHECK_FALSE(res.partial);
  CHECK(res.digest == uvi::config_digest(cfg));
}

TEST_CASE("rerunning a config reproduces the csv byte for byte") {
  ExperimentConfig cfg = small_ci_config();
  cfg.replications = 5;
  std::string a = uvi::result_csv(uvi::run_experiment(cfg));
  std::string b = uvi::result_csv(uvi::run_experiment(cfg));
  CHECK(a == b);
}

TEST_CASE("worker count does not leak into the results") {
  ExperimentConfig cfg = small_ci_config();
  cfg.replications = 6;
  std::string one = uvi::result_csv(uvi::run_experiment(cfg, 1));
  std::string two = uvi::result_csv(uvi::run_experiment(cfg, 2));
  CHECK(one == two);
}

TEST_CASE("a single pr_level replication gives a degenerate rate") {
  ExperimentConfig cfg;
  cfg.kind = "pr_level";
  cfg.dims = {2};
  cfg.sample_sizes = {40};
  cfg.regimes = {"mixed"};
  cfg.replications = 1;
  cfg.quantile_replications = 99;
  cfg.eam_max_iterations = 5;
  cfg.seed = 7;
  cfg.threads = 1;
  ExperimentResult res = uvi::run_experiment(cfg);
  REQUIRE(res.cells.size() == 3);  // default pr methods
  for (const auto& cell : res.cells) {
    CHECK(cell.replications == 1);
    if (cell.successes == 1) {
      CHECK((cell.value == 0.0 || cell.value == 1.0));
    }
  }
}

TEST_CASE("cells enumerate the cross product of the axes") {
  ExperimentConfig cfg;
  cfg.kind = "ci_table";
  cfg.dims = {2, 3};
  cfg.sample_sizes = {40, 60};
  cfg.methods = {"ci_la"};
  cfg.replications = 2;
  cfg.seed = 1;
  cfg.threads = 1;
  ExperimentResult res = uvi::run_experiment(cfg);
  REQUIRE(res.cells.size() == 4);
  std::vector<std::pair<int, int>> seen;
  for (const auto& cell : res.cells) seen.emplace_back(cell.d, cell.n);
  std::vector<std::pair<int, int>> want{{2, 40}, {2, 60}, {3, 40}, {3, 60}};
  CHECK(seen == want);
}

TEST_CASE("pr_power cells carry their deltas") {
  ExperimentConfig cfg;
  cfg.kind = "pr_power";
  cfg.dims = {2};
  cfg.deltas = {0.0, 0.1};
  cfg.regimes = {"mixed"};
  cfg.methods = {"phi_la"};
  cfg.n = 40;
  cfg.replications = 2;
  cfg.seed = 3;
  cfg.threads = 1;
  ExperimentResult res = uvi::run_experiment(cfg);
  REQUIRE(res.cells.size() == 2);
  CHECK(res.cells[0].delta == 0.0);
  CHECK(res.cells[1].delta == 0.1);
  for (const auto& cell : res.cells) {
    CHECK(cell.n == 40);
    CHECK(cell.regime == "mixed");
    CHECK(cell.successes + cell.failures == 2);
  }
}

TEST_CASE("config validation rejects malformed experiments") {
  ExperimentConfig cfg = small_ci_config();
  CHECK_NOTHROW(cfg.validate());
  CHECK_NOTHROW(cfg.validate(true));

  ExperimentConfig bad = cfg;
  bad.kind = "bogus";
  CHECK_THROWS_AS(bad.validate(), uvi::InvalidArgument);

  bad = cfg;
  bad.replications = 9;
  CHECK_NOTHROW(bad.validate());
  CHECK_THROWS_AS(bad.validate(true), uvi::InvalidArgument);

  bad = cfg;
  bad.dims = {};
  CHECK_THROWS_AS(bad.validate(), uvi::InvalidArgument);

  bad = cfg;
  bad.sample_sizes = {};
  CHECK_THROWS_AS(bad.validate(), uvi::InvalidArgument);

  bad = cfg;
  bad.methods = {"phi_b"};  // pr method on a ci kind
  CHECK_THROWS_AS(bad.validate(), uvi::InvalidArgument);

  bad = cfg;
  bad.kind = "pr_level";
  bad.methods = {};
  bad.dims = {1};  // pr needs d >= 2
  CHECK_THROWS_AS(bad.validate(), uvi::InvalidArgument);

  bad = cfg;
  bad.kind = "pr_level";
  bad.methods = {};
  bad.regimes = {"sideways"};
  CHECK_THROWS_AS(bad.validate(), uvi::InvalidArgument);

  bad = cfg;
  bad.kind = "pr_level";
  bad.methods = {};
  bad.alpha1 = 0.6;
  bad.alpha2 = 0.5;
  CHECK_THROWS_AS(bad.validate(), uvi::InvalidArgument);

  bad = cfg;
  bad.kind = "pr_power";
  bad.methods = {};
  bad.deltas = {};
  CHECK_THROWS_AS(bad.validate(), uvi::InvalidArgument);

  bad = cfg;
  bad.quantile_replications = 98;
  CHECK_THROWS_AS(bad.validate(), uvi::InvalidArgument);

  bad = cfg;
  bad.eam_max_iterations = 4;
  CHECK_THROWS_AS(bad.validate(), uvi::InvalidArgument);

  bad = cfg;
  bad.threads = -1;
  CHECK_THROWS_AS(bad.validate(), uvi::InvalidArgument);

  bad = cfg;
  bad.ivx_beta = 0.0;
  CHECK_THROWS_AS(bad.validate(), uvi::InvalidArgument);

  bad = cfg;
  bad.alpha = 1.0;
  CHECK_THROWS_AS(bad.validate(), uvi::InvalidArgument);
}

TEST_CASE("config digest is stable and input sensitive") {
  ExperimentConfig cfg = small_ci_config();
  std::string d1 = uvi::config_digest(cfg);
  std::string d2 = uvi::config_digest(cfg);
  CHECK(d1 == d2);
  CHECK(d1.size() == 16);

  ExperimentConfig other = cfg;
  other.seed = 43;
  CHECK(uvi::config_digest(other) != d1);
  other = cfg;
  other.replications = 11;
  CHECK(uvi::config_digest(other) != d1);
}

TEST_CASE("configs survive a json round trip") {
  ExperimentConfig cfg = small_ci_config();
  cfg.id = "smoke";
  uvi::json j = cfg;
  ExperimentConfig back = j.get<ExperimentConfig>();
  uvi::json j2 = back;
  CHECK(j.dump() == j2.dump());
  CHECK(back.seed_namespace() == "smoke");
}

TEST_CASE("unknown config keys are rejected, not ignored") {
  uvi::json j{{"kind", "ci_table"},
              {"dims", {2}},
              {"sample_sizes", {40}},
              {"replication", 10}};  // typo for replications
  ExperimentConfig cfg;
  CHECK_THROWS_AS(j.get_to(cfg), uvi::InvalidArgument);
}

TEST_CASE("minimal config parses with defaults") {
  uvi::json j{{"kind", "pr_level"}, {"dims", {2, 4}}, {"sample_sizes", {100}}};
  ExperimentConfig cfg = j.get<ExperimentConfig>();
  CHECK(cfg.replications == 200);
  CHECK(cfg.alpha1 == 0.05);
  CHECK(cfg.seed_namespace() == "pr_level");
  CHECK(cfg.effective_methods() == std::vector<std::string>{"phi_b", "phi_iv", "phi_la"});
  CHECK(cfg.effective_regimes() == std::vector<std::string>{"mixed", "nonstationary"});
  CHECK_NOTHROW(cfg.validate(true));
}
