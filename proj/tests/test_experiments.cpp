#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "pdeopt/experiments.hpp"
#include "test_helpers.hpp"

using namespace pdeopt;

namespace {

ExperimentConfig small_sweep() {
  ExperimentConfig cfg = ExperimentConfig::defaults_for(ExperimentKind::PhiSweep);
  cfg.n = 16;
  cfg.s_x = cfg.s_y = 2;
  cfg.phi = {2e-4, 2e-6};
  return cfg;
}

}  // namespace

TEST_CASE("experiment config json round-trip keeps the hash stable") {
  const auto cfg = small_sweep();
  const auto back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.hash() == cfg.hash());
  CHECK(back.n == cfg.n);
  CHECK(back.phi == cfg.phi);
  CHECK(back.kind == ExperimentKind::PhiSweep);
}

TEST_CASE("experiment config rejects bad phi lists") {
  auto cfg = small_sweep();
  cfg.phi = {1e-6, 1e-4};  // ascending
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg.phi = {1e-4, -1e-6};
  CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("csv and json round-trips reproduce the rows exactly") {
  const auto rows = run_phi_sweep(small_sweep());
  REQUIRE(rows.size() == 4);
  const auto csv_back = parse_rows_csv(rows_to_csv(rows));
  REQUIRE(csv_back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows_equal_ignoring_wall_time(rows[i], csv_back[i]));
    CHECK(rows[i].total_seconds == csv_back[i].total_seconds);  // %.17g is exact
  }
  const auto json_back = parse_rows_json(rows_to_json(rows));
  REQUIRE(json_back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    CHECK(rows_equal_ignoring_wall_time(rows[i], json_back[i]));
}

TEST_CASE("emitting an empty row set requires the explicit flag") {
  const std::string path = "/tmp/pdeopt_empty.csv";
  CHECK_THROWS_AS(emit_rows({}, "csv", path), ContractError);
  emit_rows({}, "csv", path, /*allow_empty=*/true);
  CHECK(parse_rows_file(path).empty());
}

TEST_CASE("empty phi list yields an empty sweep") {
  auto cfg = small_sweep();
  cfg.phi.clear();
  CHECK(run_phi_sweep(cfg).empty());
}

TEST_CASE("deterministic reruns match row for row") {
  const auto cfg = small_sweep();
  const auto a = run_phi_sweep(cfg);
  const auto b = run_phi_sweep(cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(rows_equal_ignoring_wall_time(a[i], b[i]));
}

TEST_CASE("a single-phi run reproduces the corresponding multi-phi row") {
  auto cfg = small_sweep();
  const auto multi = run_phi_sweep(cfg);
  cfg.phi = {2e-6};
  const auto single = run_phi_sweep(cfg);
  REQUIRE(single.size() == 2);
  // same phi rows in the multi sweep are its last two (phi descending)
  for (int k = 0; k < 2; ++k) {
    const auto& a = single[k];
    const auto& b = multi[2 + k];
    CHECK(a.phi == b.phi);
    CHECK(a.iters_minus == b.iters_minus);
    CHECK(a.iters_plus == b.iters_plus);
    CHECK(a.relative_residual == b.relative_residual);
    CHECK(a.constraint_violation == b.constraint_violation);
    CHECK(a.target_mismatch == b.target_mismatch);
    CHECK(a.control_norm == b.control_norm);
  }
}

TEST_CASE("rerunning against an existing output reuses cached rows") {
  const auto cfg = small_sweep();
  const std::string path = "/tmp/pdeopt_resume.csv";
  std::filesystem::remove(path);
  const auto first = run_experiment(cfg, path);
  emit_rows(first, "csv", path);
  const auto second = run_experiment(cfg, path);
  REQUIRE(second.size() == first.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    // cache hits preserve even the wall-time columns of the first run
    CHECK(first[i].total_seconds == second[i].total_seconds);
    CHECK(rows_equal_ignoring_wall_time(first[i], second[i]));
  }
  // a different config hash ignores the cache
  auto cfg2 = cfg;
  cfg2.feti_tol = 1e-9;
  const auto third = run_experiment(cfg2, path);
  CHECK(third.front().config_hash != first.front().config_hash);
  std::filesystem::remove(path);
}

TEST_CASE("row keys identify the sweep coordinates") {
  const auto rows = run_phi_sweep(small_sweep());
  std::set<std::string> keys;
  for (const auto& r : rows) keys.insert(r.key());
  CHECK(keys.size() == rows.size());
}

TEST_CASE("scalability rows carry the geometry columns") {
  ExperimentConfig cfg = ExperimentConfig::defaults_for(ExperimentKind::Scalability);
  cfg.mesh_sizes = {16, 32};
  cfg.ratio = 8;
  const auto rows = run_scalability(cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].dofs == 15 * 15);
  CHECK(rows[0].elements == 256);
  CHECK(rows[0].H == doctest::Approx(8.0 / 16));
  CHECK(rows[1].h == doctest::Approx(1.0 / 32));
  CHECK(rows[0].converged);
  CHECK(rows[1].converged);
}
