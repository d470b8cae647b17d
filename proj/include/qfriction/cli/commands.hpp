#pragma once

// Subcommands of the qfriction tool. Each takes a validated config, writes its
// artifacts under an output directory and returns the process exit status:
// 0 ok, 1 check failure, 2 usage or config error, 3 numerical failure.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qfriction/cli/config.hpp"

namespace qfriction::cli {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitNumerical = 3 };

inline constexpr const char* kThreadsEnv = "QFRICTION_THREADS";

struct Context {
  const RunConfig& cfg;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::ostream& log;
};

namespace detail {

inline std::string path_in(const Context& ctx, const std::string& name) { return (ctx.out / name).string(); }

inline Json complex_json(Complex z) { return Json::array({z.real(), z.imag()}); }

inline Json channels_json(const DissipatorSpec& spec) {
  Json list = Json::array();
  for (const auto& c : spec.channels) {
    Json j;
    j["label"] = c.label;
    j["variant"] = variant_name(c.variant);
    j["kappa"] = c.kappa;
    j["alpha"] = complex_json(c.alpha);
    if (c.variant == ChannelVariant::osc_finite_T_RT) j["T"] = c.temperature;
    j["factorized"] = c.factorized();
    list.push_back(std::move(j));
  }
  return list;
}

inline IntegrateOptions integrate_options(const RunConfig& cfg) {
  IntegrateOptions opt;
  opt.method = cfg.run.method;
  opt.dt = cfg.run.dt;
  opt.tol = cfg.run.tol;
  opt.max_steps = cfg.run.max_steps;
  return opt;
}

inline Json states_json(const Trajectory& traj) {
  Json j;
  j["times"] = traj.times;
  Json states = Json::array();
  for (const auto& s : traj.states) states.push_back(operator_to_json(s, traj.space.dims()));
  j["states"] = std::move(states);
  return j;
}

/// Reads a states file written by `evolve` (output.states = true).
inline std::pair<std::vector<double>, std::vector<Matrix>> load_states(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"forces.trajectory: cannot open '" + path + "'"});
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError({"forces.trajectory: " + std::string(e.what())});
  }
  std::vector<std::string> problems;
  if (!j.is_object() || !j.contains("times") || !j.contains("states") || !j["times"].is_array() ||
      !j["states"].is_array() || j["times"].size() != j["states"].size() || j["times"].empty()) {
    throw ConfigError({"forces.trajectory: expected {times: [...], states: [...]} of equal non-zero length"});
  }
  std::vector<double> times;
  std::vector<Matrix> states;
  for (std::size_t i = 0; i < j["times"].size(); ++i) {
    const std::string loc = "forces.trajectory.states[" + std::to_string(i) + "]";
    if (!j["times"][i].is_number()) {
      problems.push_back("forces.trajectory.times[" + std::to_string(i) + "]: expected a number");
      continue;
    }
    try {
      states.push_back(operator_from_json(j["states"][i], dim));
      times.push_back(j["times"][i].get<double>());
    } catch (const InvalidArgument& e) {
      problems.push_back(loc + ": " + e.what());
    }
  }
  if (!problems.empty()) throw ConfigError(problems);
  return {times, states};
}

inline double min_positive_gap(const RealVector& energies) {
  for (Eigen::Index i = 1; i < energies.size(); ++i) {
    const double g = energies(i) - energies(0);
    if (g > 1e-9 * std::max(1.0, std::abs(energies(i)))) return g;
  }
  return 1.0;
}

}  // namespace detail

/// Spectrum summary of the built Hamiltonian.
inline int cmd_model(const Context& ctx, const System& sys) {
  const ThermalState ts = thermal_state(sys.h, 0.0, sys.kB);
  const Eigen::Index shown = std::min<Eigen::Index>(ts.energies.size(), 20);
  Json j;
  j["kind"] = sys.kind == ModelKind::oscillator ? "oscillator" : "grid";
  j["units"] = {{"hbar", sys.hbar}, {"kB", sys.kB}};
  j["space"] = sys.space.describe();
  j["dims"] = sys.space.dims();
  if (sys.osc) {
    const OscillatorModel& m = *sys.osc;
    j["parameters"] = {{"omega1", m.omega1}, {"omega2", m.omega2}, {"theta", m.theta},
                       {"m1", m.m1},         {"m2", m.m2},         {"ground_momentum_width", ground_momentum_width(m)}};
    if (ctx.cfg.model.physical) {
      const auto& p = *ctx.cfg.model.physical;
      j["physical"] = {{"M", p.M}, {"mu", p.mu}, {"m1", p.m1}, {"omega_trap", p.omega_trap}, {"k_vib", p.k_vib}};
    }
  } else {
    j["parameters"] = {{"grid_points", sys.gs->grid.points},
                       {"p_min", sys.gs->grid.p_min},
                       {"dp", sys.gs->grid.dp},
                       {"spectrum_gaps", ctx.cfg.model.gaps}};
  }
  std::vector<double> lowest(ts.energies.data(), ts.energies.data() + shown);
  j["spectrum"] = {{"ground_energy", ts.energies(0)},
                   {"gap", detail::min_positive_gap(ts.energies)},
                   {"degenerate_ground", ts.degenerate_ground},
                   {"lowest", lowest}};
  j["channels"] = detail::channels_json(sys.spec);
  save_json(detail::path_in(ctx, "model.json"), j);
  ctx.log << "space        " << sys.space.describe() << " (dim " << sys.space.dim() << ")\n";
  ctx.log << "ground E0    " << format_number(ts.energies(0)) << (ts.degenerate_ground ? "  (degenerate)" : "") << "\n";
  ctx.log << "gap          " << format_number(detail::min_positive_gap(ts.energies)) << "\n";
  ctx.log << "lowest       ";
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(shown, 8); ++i) ctx.log << format_number(ts.energies(i)) << " ";
  ctx.log << "\nchannels     " << sys.spec.channels.size() << "\n";
  return kExitOk;
}

inline int cmd_evolve(const Context& ctx, const System& sys) {
  const DensityMatrix rho0 = build_initial_state(ctx.cfg, sys);
  IntegrateOptions opt = detail::integrate_options(ctx.cfg);
  opt.observables = build_observables(ctx.cfg, sys);
  opt.keep_states = ctx.cfg.output.states;
  const auto times = uniform_times(ctx.cfg.run.t0, ctx.cfg.run.t1, ctx.cfg.run.intervals);
  try {
    const Trajectory traj = integrate(rho0, sys.h, sys.spec, times, opt);
    write_trajectory_csv(detail::path_in(ctx, "trajectory.csv"), traj);
    if (opt.keep_states) save_json(detail::path_in(ctx, "states.json"), detail::states_json(traj));
    double drift = 0.0, lmin = 1.0;
    for (std::size_t i = 0; i < traj.size(); ++i) {
      drift = std::max(drift, std::abs(traj.trace[i] - 1.0));
      lmin = std::min(lmin, traj.min_eig[i]);
    }
    ctx.log << "snapshots    " << traj.size() << "\nsteps        " << traj.steps << " (" << traj.rejected
            << " rejected)\ntrace drift  " << format_number(drift) << "\nmin eig      " << format_number(lmin) << "\n";
    return kExitOk;
  } catch (const IntegrationFailure& e) {
    save_json(detail::path_in(ctx, "failure_state.json"), operator_to_json(e.last_good_state(), sys.space.dims()));
    throw;
  }
}

inline int cmd_check(const Context& ctx, const System& sys) {
  const CheckSection& c = ctx.cfg.check;
  const bool grid = sys.kind == ModelKind::grid;
  CriteriaReport report;
  report.add_structural("markovian lindblad form", true,
                        "time-independent generator assembled from H and the jump operators");
  const ThermalState ts = thermal_state(sys.h, c.T, sys.kB);
  report.add("thermalization ||L_rel[rho_T]||_F", therm_residual(sys.spec, ts.rho.matrix()),
             c.therm_tol.value_or(grid ? 1e-12 : 1e-8), 1, "T = " + format_number(c.T));
  std::vector<double> probes = c.probe_temperatures;
  if (probes.empty()) {
    if (c.T > 0.0) {
      probes = {0.5 * c.T, c.T, 2.0 * c.T};
    } else {
      const double scale = detail::min_positive_gap(ts.energies) / sys.kB;
      probes = {0.25 * scale, 0.5 * scale, scale};
    }
  }
  const auto rt = rt_residual(sys.spec, sys.h, c.T, probes, sys.kB);
  report.add("relaxed thermalization max |Tr[rho_T' L_rel[rho_T]]|", *std::max_element(rt.begin(), rt.end()),
             c.rt_tol.value_or(1e-6), static_cast<int>(rt.size()));
  TiOptions ti;
  ti.samples = c.ti_samples;
  ti.seed = ctx.seed;
  std::string ti_note = "full space";
  if (!grid) {
    const int level = c.support_level >= 0 ? c.support_level
                                           : std::min(sys.truncation[0], sys.truncation[1]) / 2 - 1;
    ti.support = fock_support(sys.space, level);
    ti_note = "support levels <= " + std::to_string(level);
  }
  for (const auto& axis : sys.spec.axes) {
    report.add("translation invariance along " + axis.name, ti_residual(sys.spec, axis.momentum, ti),
               c.ti_tol.value_or(grid ? 1e-12 : 1e-6), ti.samples, ti_note);
  }
  if (c.T == 0.0) {
    for (std::size_t k = 0; k < sys.spec.channels.size(); ++k) {
      const auto& ch = sys.spec.channels[k];
      report.add("J functional |J| channel " + std::to_string(k) + " (" + ch.label + ")",
                 std::abs(jk_value(ch.A.matrix(), sys.ground)), c.jk_tol.value_or(grid ? 1e-10 : 1e-8));
    }
  }
  Json j = report.to_json();
  j["seed"] = ctx.seed;
  j["temperature"] = c.T;
  j["probe_temperatures"] = probes;
  save_json(detail::path_in(ctx, "check.json"), j);
  const std::string table = report.table();
  std::ofstream(detail::path_in(ctx, "check.txt")) << table;
  ctx.log << table;
  return report.all_passed() ? kExitOk : kExitCheckFailed;
}

inline int cmd_steady(const Context& ctx, const System& sys) {
  const LiouvillianMatrix lm = assemble_liouvillian(sys.h, sys.spec, ctx.cfg.steady.cap);
  const SteadyStateResult res = steady_state_analysis(lm, ctx.cfg.steady.kernel_tol);
  std::vector<Complex> ev(res.eigenvalues.data(), res.eigenvalues.data() + res.eigenvalues.size());
  std::sort(ev.begin(), ev.end(), [](Complex a, Complex b) {
    return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
  });
  Json eigen = Json::array();
  for (std::size_t i = 0; i < std::min<std::size_t>(ev.size(), static_cast<std::size_t>(ctx.cfg.steady.eigenvalues)); ++i)
    eigen.push_back(detail::complex_json(ev[i]));
  Json kernel = Json::array();
  for (const auto& k : res.kernel) {
    Json e;
    e["trace"] = detail::complex_json(k.trace());
    e["ground_fidelity"] = state_fidelity(sys.ground, k);
    e["state"] = operator_to_json(k, sys.space.dims());
    kernel.push_back(std::move(e));
  }
  Json j;
  j["dim"] = sys.space.dim();
  j["kernel_dim"] = res.kernel_dim();
  j["spectral_gap"] = res.spectral_gap;
  j["kernel_tol"] = ctx.cfg.steady.kernel_tol;
  j["leading_eigenvalues"] = std::move(eigen);
  j["kernel"] = std::move(kernel);
  save_json(detail::path_in(ctx, "steady.json"), j);
  ctx.log << "liouvillian  " << lm.matrix.rows() << " x " << lm.matrix.cols() << "\nkernel dim   " << res.kernel_dim()
          << "\nspectral gap " << format_number(res.spectral_gap) << "\n";
  for (std::size_t i = 0; i < res.kernel.size(); ++i)
    ctx.log << "kernel[" << i << "] ground fidelity " << format_number(state_fidelity(sys.ground, res.kernel[i])) << "\n";
  return kExitOk;
}

inline int cmd_forces(const Context& ctx, const System& sys) {
  const auto F = friction_force_op(sys.spec);
  const auto X = position_force_op(sys.spec);
  std::vector<Observable> obs;
  for (std::size_t n = 0; n < sys.spec.axes.size(); ++n) {
    const std::string& name = sys.spec.axes[n].name;
    save_json(detail::path_in(ctx, "F_" + name + ".json"), operator_to_json(F[n]));
    save_json(detail::path_in(ctx, "X_" + name + ".json"), operator_to_json(X[n]));
    obs.push_back({"F_" + name, F[n].matrix()});
    obs.push_back({"X_" + name, X[n].matrix()});
  }
  Trajectory traj;
  if (!ctx.cfg.forces.trajectory.empty()) {
    auto [times, states] = detail::load_states(resolve(ctx.cfg, ctx.cfg.forces.trajectory), sys.space.dim());
    traj.space = sys.space;
    traj.times = times;
    traj.observables.resize(obs.size());
    for (const auto& o : obs) traj.observable_names.push_back(o.name);
    for (const auto& rho : states) {
      traj.trace.push_back(rho.trace().real());
      traj.herm_defect.push_back(hermiticity_defect(rho));
      traj.min_eig.push_back(min_eigenvalue(rho));
      for (std::size_t k = 0; k < obs.size(); ++k) traj.observables[k].push_back(trace_product(obs[k].op, rho));
    }
  } else {
    IntegrateOptions opt = detail::integrate_options(ctx.cfg);
    opt.observables = obs;
    traj = integrate(build_initial_state(ctx.cfg, sys), sys.h, sys.spec,
                     uniform_times(ctx.cfg.run.t0, ctx.cfg.run.t1, ctx.cfg.run.intervals), opt);
  }
  write_trajectory_csv(detail::path_in(ctx, "forces.csv"), traj);
  for (std::size_t n = 0; n < sys.spec.axes.size(); ++n) {
    ctx.log << "axis " << sys.spec.axes[n].name << "  max|F| " << format_number(max_abs(F[n].matrix()))
            << "  max|X| " << format_number(max_abs(X[n].matrix())) << "\n";
  }
  ctx.log << "expectations along " << traj.size() << " snapshots written to forces.csv\n";
  return kExitOk;
}

inline int run_command(const std::string& command, const RunConfig& cfg, const std::filesystem::path& out,
                       std::uint64_t seed, std::ostream& log, std::ostream& err);

/// Worker count for sweeps: QFRICTION_THREADS if set, else the hardware count.
inline int thread_count() {
  if (const char* env = std::getenv(kThreadsEnv)) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1 || v > 4096) {
      throw ConfigError({std::string(kThreadsEnv) + ": expected a positive integer, got '" + env + "'"});
    }
    return static_cast<int>(v);
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Cartesian product of the declared grid (first key varies slowest); point i
/// runs in <out>/point_<i> with zero-padded i.
inline int cmd_sweep(const Context& ctx) {
  if (!ctx.cfg.sweep) throw ConfigError({"sweep: section required for the sweep subcommand"});
  const SweepSection& sw = *ctx.cfg.sweep;
  std::size_t total = 1;
  for (const auto& [key, values] : sw.grid) total *= values.size();
  const int width = std::max<int>(4, static_cast<int>(std::to_string(total - 1).size()));
  struct Point {
    std::string dir;
    Json parameters;
    int status = kExitOk;
    std::string message;
  };
  std::vector<Point> points(total);
  std::vector<Json> docs(total);
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < total; ++i) {
    Json doc = ctx.cfg.raw;
    doc.erase("sweep");
    Json params = Json::object();
    std::size_t rem = i;
    for (std::size_t k = sw.grid.size(); k-- > 0;) {
      const auto& [key, values] = sw.grid[k];
      const Json& v = values[rem % values.size()];
      rem /= values.size();
      doc[Json::json_pointer(key)] = v;
      params[key] = v;
    }
    Json ordered = Json::object();
    for (const auto& [key, values] : sw.grid) ordered[key] = params[key];
    std::ostringstream name;
    name << "point_" << std::setw(width) << std::setfill('0') << i;
    points[i].dir = name.str();
    points[i].parameters = std::move(ordered);
    docs[i] = std::move(doc);
    try {
      (void)parse_config(docs[i], ctx.cfg.base_dir);
    } catch (const ConfigError& e) {
      for (const auto& p : e.problems()) problems.push_back(points[i].dir + " " + points[i].parameters.dump() + ": " + p);
    }
  }
  if (!problems.empty()) throw ConfigError(problems);
  const int threads = std::min<int>(thread_count(), static_cast<int>(total));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      Point& p = points[i];
      const std::filesystem::path dir = ctx.out / p.dir;
      try {
        std::filesystem::create_directories(dir);
        save_json((dir / "point.json").string(), p.parameters);
        std::ofstream log((dir / "log.txt").string());
        std::ostringstream err;
        const RunConfig cfg = parse_config(docs[i], ctx.cfg.base_dir);
        p.status = run_command(sw.command, cfg, dir, ctx.seed, log, err);
        p.message = err.str();
        log << p.message;
      } catch (const std::exception& e) {
        p.status = kExitUsage;
        p.message = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  Json manifest;
  manifest["command"] = sw.command;
  manifest["seed"] = ctx.seed;
  Json grid = Json::object();
  for (const auto& [key, values] : sw.grid) grid[key] = values;
  manifest["grid"] = std::move(grid);
  Json list = Json::array();
  int status = kExitOk;
  for (const auto& p : points) {
    list.push_back({{"dir", p.dir}, {"parameters", p.parameters}, {"exit_code", p.status}, {"message", p.message}});
    status = std::max(status, p.status);  // severity order 3 > 2 > 1 > 0
    ctx.log << p.dir << " " << p.parameters.dump() << " -> exit " << p.status << "\n";
  }
  manifest["points"] = std::move(list);
  save_json(detail::path_in(ctx, "sweep.json"), manifest);
  return status;
}

/// Builds the system and dispatches; maps engine exceptions to exit codes and
/// writes their text to err.
inline int run_command(const std::string& command, const RunConfig& cfg, const std::filesystem::path& out,
                       std::uint64_t seed, std::ostream& log, std::ostream& err) {
  try {
    std::filesystem::create_directories(out);
    const Context ctx{cfg, out, seed, log};
    if (command == "sweep") return cmd_sweep(ctx);
    const System sys = build_system(cfg);
    if (command == "model") return cmd_model(ctx, sys);
    if (command == "evolve") return cmd_evolve(ctx, sys);
    if (command == "check") return cmd_check(ctx, sys);
    if (command == "steady") return cmd_steady(ctx, sys);
    if (command == "forces") return cmd_forces(ctx, sys);
    err << "error: unknown subcommand '" << command << "'\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ResourceLimit& e) {
    err << "error: " << e.what() << " (raise steady.cap or lower the truncation)\n";
    return kExitUsage;
  } catch (const IntegrationFailure& e) {
    err << "numerical failure at t = " << format_number(e.time()) << ": " << e.what() << "\n";
    return kExitNumerical;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace qfriction::cli
