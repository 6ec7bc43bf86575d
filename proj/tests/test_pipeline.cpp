#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "smdp/pipeline.hpp"

using namespace smdp;
namespace fs = std::filesystem;

namespace {

const fs::path kRepo = SMDP_REPO_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  REQUIRE(is);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/* a desk-scale copy of the bundled traffic project */
ProjectConfig small_traffic(const fs::path& out) {
  auto cfg = ProjectConfig::load(kRepo / "configs" / "traffic.json");
  cfg.grid.delta = 0.5;
  cfg.simulation.runs = 200;
  cfg.simulation.horizon = 8;
  cfg.bound.horizon = 8;
  cfg.synthesis.horizon = 8;
  cfg.certificates.validation_tuples = 50;
  cfg.certificates.validation_inner = 100;
  cfg.output_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("traffic pipeline runs end to end and is deterministic") {
  const auto out = fs::temp_directory_path() / "smdp_traffic_a";
  fs::remove_all(out);
  auto ctx = StageContext::from_config(small_traffic(out));
  cmd_run(ctx);

  for (const char* name : {"abstraction.fmdp", "certificates.json", "composition.json",
                           "bound.json", "closeness.csv", "memory.csv", "policy.bin",
                           "value_0.csv", "simulation.json", "trajectories.csv", "report.json"})
    CHECK(fs::exists(out / name));

  /* identical config and seed give byte-identical text artifacts */
  const auto out2 = fs::temp_directory_path() / "smdp_traffic_b";
  fs::remove_all(out2);
  auto ctx2 = StageContext::from_config(small_traffic(out2));
  cmd_run(ctx2);
  for (const char* name : {"closeness.csv", "memory.csv", "trajectories.csv", "simulation.json",
                           "bound.json", "certificates.json", "composition.json"})
    CHECK(slurp(out / name) == slurp(out2 / name));

  /* certify reports hold for the bundled constants */
  auto certs = nlohmann::json::parse(slurp(out / "certificates.json"));
  for (const auto& rep : certs.at("reports"))
    for (const auto& lmi : rep.at("lmi")) CHECK(lmi.at("holds").get<bool>());

  /* empirical validation passes at the bundled sample counts */
  CHECK(certs.at("reports").at(0).at("validation").at("pass_fraction").get<double>() >= 0.99);

  fs::remove_all(out2);
  fs::remove_all(out);
}

TEST_CASE("bound stage runs from persisted artifacts alone") {
  const auto out = fs::temp_directory_path() / "smdp_traffic_iso";
  fs::remove_all(out);
  auto cfg = small_traffic(out);
  cfg.certificates.validation_tuples = 0;
  auto ctx = StageContext::from_config(cfg);
  cmd_certify(ctx);
  cmd_compose(ctx);
  /* no abstraction artifact exists; the bound stage must not need one */
  CHECK_FALSE(fs::exists(out / "abstraction.fmdp"));
  cmd_bound(ctx);
  CHECK(fs::exists(out / "bound.json"));
  auto j = nlohmann::json::parse(slurp(out / "bound.json"));
  CHECK(j.at("kappa").get<double>() == doctest::Approx(0.99));
  fs::remove_all(out);
}

TEST_CASE("stages refuse to run without their upstream artifacts") {
  const auto out = fs::temp_directory_path() / "smdp_missing";
  fs::remove_all(out);
  auto ctx = StageContext::from_config(small_traffic(out));
  CHECK_THROWS_AS(cmd_compose(ctx), StageError);
  CHECK_THROWS_AS(cmd_bound(ctx), StageError);
  CHECK_THROWS_AS(cmd_synthesize(ctx), StageError);
  CHECK_THROWS_AS(cmd_simulate(ctx), StageError);
  fs::remove_all(out);
}

TEST_CASE("malformed configs name the offending key") {
  const auto dir = fs::temp_directory_path() / "smdp_bad_cfg";
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "bad.json");
    os << R"({"network": {"kind": "traffic-ring", "cells": 5}, "certificates": {"source": "paper"}})";
  }
  try {
    ProjectConfig::load(dir / "bad.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("network.entry_per_mode") != std::string::npos);
  }
  {
    std::ofstream os(dir / "worse.json");
    os << R"({"network": {"kind": "hexagonal"}})";
  }
  try {
    ProjectConfig::load(dir / "worse.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("network.kind") != std::string::npos);
  }
  {
    std::ofstream os(dir / "syntax.json");
    os << "{ not json";
  }
  CHECK_THROWS_AS(ProjectConfig::load(dir / "syntax.json"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("nonlinear network pipeline exercises the dwell-time path") {
  const auto out = fs::temp_directory_path() / "smdp_nonlinear";
  fs::remove_all(out);
  auto cfg = ProjectConfig::load(kRepo / "configs" / "nonlinear500.json");
  cfg.simulation.runs = 100;
  cfg.certificates.validation_tuples = 50;
  cfg.certificates.validation_inner = 100;
  cfg.output_dir = out;
  auto ctx = StageContext::from_config(cfg);
  cmd_run(ctx);

  auto certs = nlohmann::json::parse(slurp(out / "certificates.json"));
  CHECK(certs.at("subsystems").at(0).at("mu").get<double>() == doctest::Approx(3.27));
  CHECK(certs.at("subsystems").at(0).at("dwell_time").get<int>() == 7);
  for (const auto& rep : certs.at("reports"))
    for (const auto& lmi : rep.at("lmi")) CHECK(lmi.at("holds").get<bool>());

  auto comp = nlohmann::json::parse(slurp(out / "composition.json"));
  CHECK(comp.at("feasible").get<bool>());
  CHECK(comp.at("kappa").get<double>() == doctest::Approx(0.99));

  auto sim = nlohmann::json::parse(slurp(out / "simulation.json"));
  CHECK(sim.at("runs").get<int>() == 100);
  fs::remove_all(out);
}

TEST_CASE("per-subsystem discretization and debug row export") {
  const auto out = fs::temp_directory_path() / "smdp_perdelta";
  fs::remove_all(out);
  const auto dir = fs::temp_directory_path() / "smdp_perdelta_cfg";
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "cfg.json");
    os << R"({
      "network": {"kind": "traffic-ring", "cells": 3, "flow_ratio": 0.36,
                  "exit_ratio": 0.25, "entry_per_mode": [0.0, 8.0],
                  "noise_sigma": 0.83, "state_lb": 0.0, "state_ub": 20.0,
                  "dwell_time": 1},
      "grid": {"delta": [0.5, 1.0, 2.0], "export_rows": 2},
      "certificates": {"source": "derive",
        "modes": [{"M": [[1.0]], "kappa_bar": 0.4107, "pi": 0.85},
                  {"M": [[1.0]], "kappa_bar": 0.4107, "pi": 0.85}],
        "epsilon": 2.0, "common_lyapunov": true},
      "output_dir": ")" << (out / "x").parent_path().string() << R"("
    })";
  }
  auto cfg = ProjectConfig::load(dir / "cfg.json");
  cfg.homogeneous = false;  /* distinct grids force per-subsystem artifacts */
  cfg.output_dir = out;
  CHECK(cfg.grid.delta_for(0) == doctest::Approx(0.5));
  CHECK(cfg.grid.delta_for(2) == doctest::Approx(2.0));
  auto ctx = StageContext::from_config(cfg);
  cmd_abstract(ctx);
  CHECK(fs::exists(out / "abstraction_0.fmdp"));
  CHECK(fs::exists(out / "abstraction_2.fmdp"));
  CHECK(fs::exists(out / "rows_1.csv"));
  auto meta = nlohmann::json::parse(slurp(out / "abstraction_meta.json"));
  CHECK(meta.at("subsystems").at(0).at("state_cells").get<int>() == 40);
  CHECK(meta.at("subsystems").at(2).at("state_cells").get<int>() == 10);
  fs::remove_all(out);
  fs::remove_all(dir);
}

TEST_CASE("network files load explicit matrices") {
  const auto dir = fs::temp_directory_path() / "smdp_netfile";
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "net.json");
    os << R"({
      "subsystems": [
        {"n": 1, "p_bar": 1, "C": [[1.0]],
         "state_box": {"lb": [0.0], "ub": [10.0]},
         "input_box": {"lb": [0.0], "ub": [10.0]},
         "dwell_time": 1,
         "noise": {"kind": "scaled", "sigma": [0.5]},
         "modes": [{"A": [[0.5]], "B": [1.0], "D": [[0.2]], "R": [[1.0]]}]},
        {"n": 1, "p_bar": 1, "C": [[1.0]],
         "state_box": {"lb": [0.0], "ub": [10.0]},
         "input_box": {"lb": [0.0], "ub": [10.0]},
         "dwell_time": 1,
         "noise": {"kind": "scaled", "sigma": [0.5]},
         "modes": [{"A": [[0.5]], "B": [1.0], "D": [[0.2]], "R": [[1.0]]}]}
      ],
      "connections": [
        {"src": 0, "dst": 1, "select": [[1.0]]},
        {"src": 1, "dst": 0, "select": [[1.0]]}
      ]
    })";
  }
  auto net = load_network_json(dir / "net.json");
  CHECK(net.size() == 2);
  CHECK(net.subsystems[0].modes[0].A(0, 0) == doctest::Approx(0.5));
  CHECK(net.connections.size() == 2);
  fs::remove_all(dir);
}
