#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "qfriction/cli/commands.hpp"

using namespace qfriction;
using namespace qfriction::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(testing::TempDir()) / ("qfriction_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(QF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_path(const std::string& name) { return std::string(QF_CONFIG_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json(const fs::path& p) { return Json::parse(slurp(p)); }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

Json small_oscillator() {
  return Json::parse(R"({
    "model": {"type": "oscillator", "omega1": 1.0, "omega2": 2.2, "theta": 0.5235987755982988, "truncation": 4},
    "dissipator": {"channels": [{"variant": "osc-zero-T", "kappa_width_fraction": 0.2, "g": 0.1}]},
    "run": {"t_span": [0.0, 1.0], "intervals": 10, "method": "rk4", "dt": 0.01,
            "observables": ["x1", "n1", "gs_fidelity"],
            "initial_state": {"type": "displaced", "mode": 1, "amount": 0.5}},
    "seed": 3
  })");
}

int run_in_process(const std::string& cmd, const Json& doc, const fs::path& out, std::string* err_text = nullptr) {
  std::ostringstream log, err;
  const int code = run_command(cmd, parse_config(doc), out, parse_config(doc).seed, log, err);
  if (err_text) *err_text = err.str();
  return code;
}

}  // namespace

TEST(CliBinary, ZeroTemperatureCheckPasses) {
  const fs::path out = scratch("zero_t");
  EXPECT_EQ(run_binary("check --config " + config_path("zero_t_oscillator.json") + " --out " + out.string()), 0);
  const Json report = read_json(out / "check.json");
  EXPECT_TRUE(report["all_passed"].get<bool>());
  EXPECT_GE(report["checks"].size(), 5u);
}

TEST(CliBinary, SigmaMinusControlFailsThermalization) {
  const fs::path out = scratch("sigma_minus");
  EXPECT_EQ(run_binary("check --config " + config_path("sigma_minus_control.json") + " --out " + out.string()), 1);
  const Json report = read_json(out / "check.json");
  EXPECT_FALSE(report["all_passed"].get<bool>());
  bool found = false;
  for (const auto& c : report["checks"]) {
    if (c["name"].get<std::string>().rfind("thermalization", 0) == 0) {
      found = true;
      EXPECT_FALSE(c["passed"].get<bool>());
    }
  }
  EXPECT_TRUE(found);
}

TEST(CliBinary, ClosedSystemTraceColumn) {
  const fs::path out = scratch("closed");
  ASSERT_EQ(run_binary("evolve --config " + config_path("closed_system.json") + " --out " + out.string()), 0);
  const auto rows = read_csv(out / "trajectory.csv");
  ASSERT_GT(rows.size(), 2u);
  ASSERT_EQ(rows[0][0], "t");
  ASSERT_EQ(rows[0][1], "trace");
  ASSERT_EQ(rows[0][2], "herm_defect");
  ASSERT_EQ(rows[0][3], "min_eig");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_NEAR(std::stod(rows[i][1]), 1.0, 1e-9);
    EXPECT_GE(std::stod(rows[i][3]), -1e-8);
  }
}

TEST(CliBinary, GridCheckPasses) {
  const fs::path out = scratch("grid");
  EXPECT_EQ(run_binary("check --config " + config_path("grid_two_level.json") + " --out " + out.string()), 0);
}

TEST(CliBinary, UsageErrorsExitTwo) {
  EXPECT_EQ(run_binary("check"), 2);
  EXPECT_EQ(run_binary("--config x.json"), 2);
  EXPECT_EQ(run_binary("check --config /nonexistent/qfriction.json"), 2);
  EXPECT_EQ(run_binary("check --config " + config_path("zero_t_oscillator.json") + " --seed notanumber"), 2);
  const fs::path dir = scratch("bad_config");
  std::ofstream(dir / "bad.json") << R"({"model": {"omega1": 1}})";
  EXPECT_EQ(run_binary("model --config " + (dir / "bad.json").string() + " --out " + dir.string()), 2);
  std::ofstream(dir / "broken.json") << "{not json";
  EXPECT_EQ(run_binary("model --config " + (dir / "broken.json").string()), 2);
}

TEST(CliBinary, SweepProducesIndexedDirectories) {
  const fs::path out = scratch("sweep");
  const std::string cmd = "QFRICTION_THREADS=2 " + std::string(QF_CLI_PATH) + " sweep --config " +
                          config_path("sweep_theta.json") + " --out " + out.string() + " >/dev/null 2>&1";
  ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
  const Json manifest = read_json(out / "sweep.json");
  ASSERT_EQ(manifest["points"].size(), 6u);
  for (int i = 0; i < 6; ++i) {
    const std::string dir = "point_000" + std::to_string(i);
    EXPECT_EQ(manifest["points"][static_cast<std::size_t>(i)]["dir"], dir);
    EXPECT_TRUE(fs::exists(out / dir / "check.json"));
    EXPECT_TRUE(fs::exists(out / dir / "point.json"));
  }
  // first grid key varies slowest
  EXPECT_EQ(manifest["points"][1]["parameters"]["/model/theta"].get<double>(), 0.0);
  EXPECT_EQ(manifest["points"][1]["parameters"]["/dissipator/channels/0/g"].get<double>(), 0.1);
  const std::string bad = "QFRICTION_THREADS=zero " + std::string(QF_CLI_PATH) + " sweep --config " +
                          config_path("sweep_theta.json") + " --out " + out.string() + " >/dev/null 2>&1";
  EXPECT_EQ(WEXITSTATUS(std::system(bad.c_str())), 2);
}

TEST(Config, ListsEveryOffendingKey) {
  const Json doc = Json::parse(R"({
    "model": {"type": "oscillator", "omega1": -1, "omega2": 2.2, "thetaa": 0.1},
    "dissipator": {"channels": [{"variant": "osc-zero-T", "g": -0.1}, {"variant": "nope"}]},
    "run": {"observables": ["x1", "bogus"], "initial_state": {"type": "gibbs"}},
    "extra": 1
  })");
  try {
    parse_config(doc);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    std::string all;
    for (const auto& p : e.problems()) all += p + "\n";
    for (const char* loc : {"extra:", "model.thetaa:", "model.theta:", "model.omega1:", "dissipator.channels[0]:",
                            "dissipator.channels[0].g:", "dissipator.channels[1].variant:", "run.observables[1]:",
                            "run.initial_state.T:"}) {
      EXPECT_NE(all.find(loc), std::string::npos) << loc << " missing from\n" << all;
    }
  }
}

TEST(Config, RejectsModelMismatches) {
  Json doc = small_oscillator();
  doc["dissipator"]["channels"][0] = Json::parse(R"({"variant": "grid-two-level", "kappa": 0.4})");
  EXPECT_THROW(parse_config(doc), ConfigError);
  doc = small_oscillator();
  doc["run"]["observables"] = Json::array({Json::object({{"name", "a"}})});
  EXPECT_THROW(parse_config(doc), ConfigError);
  doc = small_oscillator();
  doc["sweep"] = Json::parse(R"({"command": "check", "grid": {"/model/nothing": [1, 2]}})");
  EXPECT_THROW(parse_config(doc), ConfigError);
}

TEST(Config, PhysicalModelMatchesNormalModeAnalysis) {
  Json doc = small_oscillator();
  doc["model"] = Json::parse(R"({"physical": {"M": 3.0, "mu": 0.7, "m1": 2.0, "omega_trap": 1.0, "k_vib": 4.0},
                                 "truncation": 4})");
  const RunConfig cfg = parse_config(doc);
  const OscillatorModel ref = physical_to_normal({3.0, 0.7, 2.0, 1.0, 4.0});
  EXPECT_EQ(cfg.model.osc.omega1, ref.omega1);
  EXPECT_EQ(cfg.model.osc.theta, ref.theta);
}

TEST(CliInProcess, NumericalFailureExitsThree) {
  Json doc = small_oscillator();
  doc["dissipator"]["channels"][0]["g"] = 1e4;
  doc["run"]["dt"] = 1.0;
  doc["run"]["t_span"] = Json::array({0.0, 100.0});
  const fs::path out = scratch("blowup");
  std::string err;
  EXPECT_EQ(run_in_process("evolve", doc, out, &err), kExitNumerical);
  EXPECT_NE(err.find("non-finite"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "failure_state.json"));
}

TEST(CliInProcess, EngineRejectionIsConfigError) {
  const Json doc = Json::parse(R"({
    "model": {"type": "grid", "grid": {"points": 128, "p_min": -12.8, "dp": 0.2},
              "ground_state": {"gaussians": [{"sigma": 1.0}, {"sigma": 1.6}]}},
    "dissipator": {"channels": [{"variant": "grid-two-level", "kappa": 0.3}]}
  })");
  std::string err;
  EXPECT_EQ(run_in_process("check", doc, scratch("kick"), &err), kExitUsage);
  EXPECT_NE(err.find("dissipator.channels[0]"), std::string::npos);
  EXPECT_NE(err.find("not integral"), std::string::npos);
}

TEST(CliInProcess, ResourceCapIsReported) {
  Json doc = small_oscillator();
  doc["steady"] = Json::parse(R"({"cap": 100})");
  std::string err;
  EXPECT_EQ(run_in_process("steady", doc, scratch("cap"), &err), kExitUsage);
  EXPECT_NE(err.find("cap"), std::string::npos);
}

TEST(CliInProcess, OutputsAreDeterministic) {
  const Json doc = small_oscillator();
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(run_in_process("evolve", doc, a), 0);
  ASSERT_EQ(run_in_process("evolve", doc, b), 0);
  EXPECT_EQ(slurp(a / "trajectory.csv"), slurp(b / "trajectory.csv"));
  // truncation 4 is too small for the TI tolerance; only reproducibility matters here
  const int status = run_in_process("check", doc, a);
  EXPECT_EQ(run_in_process("check", doc, b), status);
  EXPECT_EQ(slurp(a / "check.json"), slurp(b / "check.json"));
}

TEST(CliInProcess, CsvColumnsFollowObservables) {
  const fs::path out = scratch("columns");
  ASSERT_EQ(run_in_process("evolve", small_oscillator(), out), 0);
  const auto rows = read_csv(out / "trajectory.csv");
  const std::vector<std::string> header{"t", "trace", "herm_defect", "min_eig", "x1", "n1", "gs_fidelity"};
  EXPECT_EQ(rows[0], header);
  EXPECT_EQ(rows.size(), 12u);
  // 17 significant digits
  EXPECT_EQ(rows[2][0], "0.10000000000000001");
}

TEST(CliInProcess, ForcesAlongSuppliedTrajectoryMatchDirectRun) {
  Json doc = small_oscillator();
  doc["output"] = Json::parse(R"({"states": true})");
  const fs::path ev = scratch("forces_ev");
  ASSERT_EQ(run_in_process("evolve", doc, ev), 0);
  ASSERT_TRUE(fs::exists(ev / "states.json"));
  const fs::path direct = scratch("forces_direct"), supplied = scratch("forces_supplied");
  ASSERT_EQ(run_in_process("forces", doc, direct), 0);
  doc["forces"] = Json::object({{"trajectory", (ev / "states.json").string()}});
  ASSERT_EQ(run_in_process("forces", doc, supplied), 0);
  const auto r1 = read_csv(direct / "forces.csv");
  const auto r2 = read_csv(supplied / "forces.csv");
  ASSERT_EQ(r1.size(), r2.size());
  EXPECT_EQ(r1[0], r2[0]);
  for (std::size_t i = 1; i < r1.size(); ++i)
    for (std::size_t k = 4; k < r1[i].size(); ++k) EXPECT_NEAR(std::stod(r1[i][k]), std::stod(r2[i][k]), 1e-12);
  const Matrix f = load_operator((direct / "F_x1.json").string(), 16);
  EXPECT_LT(hermiticity_defect(f), 1e-12);
  // mode-lowering channels have no kick factorization
  doc["dissipator"]["channels"][0] = Json::parse(R"({"variant": "mode-lowering", "mode": 1, "g": 0.1})");
  EXPECT_EQ(run_in_process("forces", doc, scratch("forces_bad")), kExitUsage);
}

TEST(CliInProcess, SteadyKernelAndModelSummary) {
  const fs::path out = scratch("steady");
  ASSERT_EQ(run_in_process("steady", small_oscillator(), out), 0);
  const Json s = read_json(out / "steady.json");
  EXPECT_EQ(s["kernel_dim"].get<int>(), 1);
  EXPECT_GT(s["kernel"][0]["ground_fidelity"].get<double>(), 1.0 - 1e-6);
  EXPECT_GT(s["spectral_gap"].get<double>(), 0.0);
  ASSERT_EQ(run_in_process("model", small_oscillator(), out), 0);
  const Json m = read_json(out / "model.json");
  EXPECT_EQ(m["spectrum"]["ground_energy"].get<double>(), 0.0);
  EXPECT_NEAR(m["spectrum"]["gap"].get<double>(), 1.0, 1e-12);
}

TEST(CliInProcess, InitialStateVariants) {
  Json doc = small_oscillator();
  doc["run"]["initial_state"] = Json::parse(R"({"type": "gibbs", "T": 0.7})");
  EXPECT_EQ(run_in_process("evolve", doc, scratch("gibbs")), 0);
  const fs::path dir = scratch("custom_state");
  Matrix rho = Matrix::Zero(16, 16);
  rho(0, 0) = 0.5;
  rho(1, 1) = 0.5;
  save_json((dir / "rho.json").string(), operator_to_json(rho, {4, 4}));
  doc["run"]["initial_state"] = Json::object({{"type", "custom"}, {"path", (dir / "rho.json").string()}});
  EXPECT_EQ(run_in_process("evolve", doc, dir), 0);
  rho(1, 1) = 0.7;  // trace 1.2
  save_json((dir / "rho.json").string(), operator_to_json(rho, {4, 4}));
  EXPECT_EQ(run_in_process("evolve", doc, dir), kExitUsage);
}
