#pragma once

// JSON run configuration: schema validation that reports every offending key
// with its location, then construction of the model, dissipator, initial state
// and observables it describes. Units default to hbar = kB = 1.

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qfriction/criteria.hpp"
#include "qfriction/dissipator.hpp"
#include "qfriction/hilbert.hpp"
#include "qfriction/io.hpp"
#include "qfriction/liouville.hpp"
#include "qfriction/model.hpp"

namespace qfriction::cli {

using Json = nlohmann::ordered_json;

/// Every schema violation found in one config, one "location: message" per entry.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s = "invalid configuration:";
    for (const auto& e : p) s += "\n  " + e;
    return s;
  }
  std::vector<std::string> problems_;
};

enum class ModelKind { oscillator, grid };

struct ModelConfig {
  ModelKind kind = ModelKind::oscillator;
  OscillatorModel osc;
  std::optional<PhysicalOscillator> physical;
  int n1 = 10;
  int n2 = 10;
  GroundStateSpec gs;
  std::vector<double> gaps{1.0};
};

struct ChannelConfig {
  std::string variant;
  std::optional<double> kappa;
  std::optional<double> kappa_width_fraction;
  Complex alpha{0.0, 0.0};
  double g = 1.0;
  double T = 0.0;
  int mode = 1;
  std::string path;
  Vector G0;  // empty = "one"
  Vector G1;
};

struct ObservableConfig {
  std::string name;
  std::string path;  // empty for built-in observables
};

struct InitialStateConfig {
  std::string kind = "ground";  // ground | gibbs | displaced | custom
  double T = 0.0;
  int mode = 1;
  double amount = 0.0;
  std::string path;
};

struct RunSection {
  double t0 = 0.0;
  double t1 = 1.0;
  int intervals = 100;
  Method method = Method::rk4;
  double dt = 0.01;
  double tol = 1e-8;
  long max_steps = 50'000'000;
  std::vector<ObservableConfig> observables;
  InitialStateConfig initial;
};

struct CheckSection {
  double T = 0.0;
  std::vector<double> probe_temperatures;  // empty = {T/2, T, 2T} (or defaults at T = 0)
  int ti_samples = 20;
  int support_level = -1;  // -1 = truncation / 2 - 1 per mode
  std::optional<double> therm_tol, ti_tol, rt_tol, jk_tol;
};

struct SteadySection {
  double kernel_tol = 1e-9;
  long long cap = kDefaultLiouvillianCap;
  int eigenvalues = 20;
};

struct ForcesSection {
  std::string trajectory;  // states file written by evolve; empty = evolve from the run section
};

struct SweepSection {
  std::string command;
  std::vector<std::pair<std::string, std::vector<Json>>> grid;  // config pointer -> values
};

struct OutputSection {
  std::string dir = "out";
  bool states = false;
};

struct RunConfig {
  std::filesystem::path base_dir;  // relative paths resolve against the config's directory
  Json raw;
  ModelConfig model;
  std::vector<ChannelConfig> channels;
  RunSection run;
  CheckSection check;
  SteadySection steady;
  ForcesSection forces;
  std::optional<SweepSection> sweep;
  OutputSection output;
  std::uint64_t seed = 0;
};

namespace detail {

/// Collects schema problems while walking the document.
class Reader {
 public:
  std::vector<std::string> problems;

  void fail(const std::string& loc, const std::string& msg) { problems.push_back(loc + ": " + msg); }

  bool object(const Json& j, const std::string& loc) {
    if (!j.is_object()) {
      fail(loc, "expected an object");
      return false;
    }
    return true;
  }

  void allowed(const Json& j, const std::string& loc, std::initializer_list<const char*> keys) {
    if (!j.is_object()) return;
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!ok.count(it.key())) fail(join(loc, it.key()), "unknown key");
  }

  static std::string join(const std::string& loc, const std::string& key) { return loc.empty() ? key : loc + "." + key; }

  std::optional<double> number(const Json& j, const std::string& loc, const std::string& key) {
    if (!j.contains(key)) return std::nullopt;
    const Json& v = j.at(key);
    if (!v.is_number()) {
      fail(join(loc, key), "expected a number");
      return std::nullopt;
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
      fail(join(loc, key), "must be finite");
      return std::nullopt;
    }
    return d;
  }

  double number_or(const Json& j, const std::string& loc, const std::string& key, double def) {
    return number(j, loc, key).value_or(def);
  }

  double positive(const Json& j, const std::string& loc, const std::string& key, double def) {
    const auto v = number(j, loc, key);
    if (v && !(*v > 0.0)) fail(join(loc, key), "must be > 0");
    return v.value_or(def);
  }

  double non_negative(const Json& j, const std::string& loc, const std::string& key, double def) {
    const auto v = number(j, loc, key);
    if (v && *v < 0.0) fail(join(loc, key), "must be >= 0");
    return v.value_or(def);
  }

  std::optional<long long> integer(const Json& j, const std::string& loc, const std::string& key) {
    if (!j.contains(key)) return std::nullopt;
    const Json& v = j.at(key);
    if (!v.is_number_integer()) {
      fail(join(loc, key), "expected an integer");
      return std::nullopt;
    }
    return v.get<long long>();
  }

  int int_at_least(const Json& j, const std::string& loc, const std::string& key, int def, int lo) {
    const auto v = integer(j, loc, key);
    if (!v) return def;
    if (*v < lo || *v > 1'000'000'000) {
      fail(join(loc, key), "must be an integer >= " + std::to_string(lo));
      return def;
    }
    return static_cast<int>(*v);
  }

  std::optional<std::string> string(const Json& j, const std::string& loc, const std::string& key) {
    if (!j.contains(key)) return std::nullopt;
    if (!j.at(key).is_string()) {
      fail(join(loc, key), "expected a string");
      return std::nullopt;
    }
    return j.at(key).get<std::string>();
  }

  bool boolean(const Json& j, const std::string& loc, const std::string& key, bool def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_boolean()) {
      fail(join(loc, key), "expected true or false");
      return def;
    }
    return j.at(key).get<bool>();
  }

  std::vector<double> numbers(const Json& v, const std::string& loc) {
    std::vector<double> out;
    if (!v.is_array()) {
      fail(loc, "expected an array of numbers");
      return out;
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
        fail(loc + "[" + std::to_string(i) + "]", "expected a finite number");
        continue;
      }
      out.push_back(v[i].get<double>());
    }
    return out;
  }
};

inline Vector to_vector(const std::vector<double>& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

inline void parse_grid_model(Reader& r, const Json& m, ModelConfig& out) {
  r.allowed(m, "model", {"type", "hbar", "kB", "grid", "ground_state", "spectrum_gaps"});
  MomentumGrid grid{128, -12.8, 0.2};
  if (!m.contains("grid")) {
    r.fail("model.grid", "required for a grid model");
  } else if (r.object(m.at("grid"), "model.grid")) {
    const Json& g = m.at("grid");
    r.allowed(g, "model.grid", {"points", "p_min", "dp"});
    if (!g.contains("points")) r.fail("model.grid.points", "required");
    if (!g.contains("p_min")) r.fail("model.grid.p_min", "required");
    if (!g.contains("dp")) r.fail("model.grid.dp", "required");
    grid.points = r.int_at_least(g, "model.grid", "points", grid.points, 2);
    grid.p_min = r.number_or(g, "model.grid", "p_min", grid.p_min);
    grid.dp = r.positive(g, "model.grid", "dp", grid.dp);
  }
  out.gs.grid = grid;
  if (!m.contains("ground_state")) {
    r.fail("model.ground_state", "required for a grid model");
  } else if (r.object(m.at("ground_state"), "model.ground_state")) {
    const Json& g = m.at("ground_state");
    r.allowed(g, "model.ground_state", {"gaussians", "samples"});
    if (g.contains("gaussians") == g.contains("samples")) {
      r.fail("model.ground_state", "give exactly one of 'gaussians' or 'samples'");
    } else if (g.contains("gaussians")) {
      const Json& list = g.at("gaussians");
      if (!list.is_array() || list.size() != 2) {
        r.fail("model.ground_state.gaussians", "expected a list of two {weight, sigma, center} objects");
      } else {
        std::vector<GaussianChannel> chans;
        for (std::size_t i = 0; i < list.size(); ++i) {
          const std::string loc = "model.ground_state.gaussians[" + std::to_string(i) + "]";
          if (!r.object(list[i], loc)) continue;
          r.allowed(list[i], loc, {"weight", "sigma", "center"});
          GaussianChannel c;
          c.weight = r.positive(list[i], loc, "weight", 1.0);
          c.sigma = r.positive(list[i], loc, "sigma", 1.0);
          c.center = r.number_or(list[i], loc, "center", 0.0);
          chans.push_back(c);
        }
        if (r.problems.empty()) out.gs = gaussian_ground_state(grid, chans);
      }
    } else {
      const Json& list = g.at("samples");
      if (!list.is_array() || list.size() != 2) {
        r.fail("model.ground_state.samples", "expected two arrays sampled on the grid");
      } else {
        for (std::size_t i = 0; i < list.size(); ++i) {
          const std::string loc = "model.ground_state.samples[" + std::to_string(i) + "]";
          const auto v = r.numbers(list[i], loc);
          if (static_cast<int>(v.size()) != grid.points) {
            r.fail(loc, "has " + std::to_string(v.size()) + " samples, grid has " + std::to_string(grid.points));
          }
          out.gs.channels.push_back(to_vector(v));
        }
      }
    }
  }
  if (m.contains("spectrum_gaps")) {
    out.gaps = r.numbers(m.at("spectrum_gaps"), "model.spectrum_gaps");
    if (out.gaps.empty()) r.fail("model.spectrum_gaps", "must not be empty");
    for (double g : out.gaps)
      if (!(g > 0.0)) r.fail("model.spectrum_gaps", "entries must be > 0");
  }
}

inline void parse_model(Reader& r, const Json& root, ModelConfig& out) {
  if (!root.contains("model")) {
    r.fail("model", "required section missing");
    return;
  }
  const Json& m = root.at("model");
  if (!r.object(m, "model")) return;
  const std::string type = r.string(m, "model", "type").value_or("oscillator");
  const double hbar = r.positive(m, "model", "hbar", 1.0);
  const double kB = r.positive(m, "model", "kB", 1.0);
  out.osc.hbar = hbar;
  out.osc.kB = kB;
  if (type == "grid") {
    out.kind = ModelKind::grid;
    parse_grid_model(r, m, out);
    return;
  }
  if (type != "oscillator") {
    r.fail("model.type", "must be 'oscillator' or 'grid', got '" + type + "'");
    return;
  }
  r.allowed(m, "model", {"type", "omega1", "omega2", "theta", "m1", "m2", "hbar", "kB", "truncation", "physical"});
  if (m.contains("truncation")) {
    const Json& t = m.at("truncation");
    if (t.is_number_integer()) {
      out.n1 = out.n2 = t.get<int>();
    } else if (t.is_array() && t.size() == 2 && t[0].is_number_integer() && t[1].is_number_integer()) {
      out.n1 = t[0].get<int>();
      out.n2 = t[1].get<int>();
    } else {
      r.fail("model.truncation", "expected an integer or [N1, N2]");
    }
    if (out.n1 < 2 || out.n2 < 2) r.fail("model.truncation", "each truncation must be >= 2");
  }
  if (m.contains("physical")) {
    for (const char* k : {"omega1", "omega2", "theta", "m1", "m2"})
      if (m.contains(k)) r.fail(std::string("model.") + k, "cannot be combined with model.physical");
    const Json& p = m.at("physical");
    if (!r.object(p, "model.physical")) return;
    r.allowed(p, "model.physical", {"M", "mu", "m1", "omega_trap", "k_vib"});
    PhysicalOscillator phys;
    for (const char* k : {"M", "mu", "m1", "omega_trap", "k_vib"})
      if (!p.contains(k)) r.fail(std::string("model.physical.") + k, "required");
    phys.M = r.positive(p, "model.physical", "M", 1.0);
    phys.mu = r.positive(p, "model.physical", "mu", 1.0);
    phys.m1 = r.positive(p, "model.physical", "m1", 1.0);
    phys.omega_trap = r.positive(p, "model.physical", "omega_trap", 1.0);
    phys.k_vib = r.positive(p, "model.physical", "k_vib", 1.0);
    out.physical = phys;
    if (r.problems.empty()) {
      try {
        out.osc = physical_to_normal(phys, hbar, kB);
      } catch (const InvalidArgument& e) {
        r.fail("model.physical", e.what());
      }
    }
    return;
  }
  for (const char* k : {"omega1", "omega2", "theta"})
    if (!m.contains(k)) r.fail(std::string("model.") + k, "required (or give model.physical)");
  out.osc.omega1 = r.positive(m, "model", "omega1", 1.0);
  out.osc.omega2 = r.positive(m, "model", "omega2", 1.0);
  out.osc.theta = wrap_angle(r.number_or(m, "model", "theta", 0.0));
  out.osc.m1 = r.positive(m, "model", "m1", 1.0);
  out.osc.m2 = r.positive(m, "model", "m2", 1.0);
}

inline const std::set<std::string>& channel_variants() {
  static const std::set<std::string> v{"osc-zero-T", "osc-alpha", "osc-finite-T-RT", "grid-two-level",
                                       "mode-lowering", "custom"};
  return v;
}

inline void parse_channels(Reader& r, const Json& root, const ModelConfig& model, std::vector<ChannelConfig>& out) {
  if (!root.contains("dissipator")) {
    r.fail("dissipator", "required section missing");
    return;
  }
  const Json& d = root.at("dissipator");
  if (!r.object(d, "dissipator")) return;
  r.allowed(d, "dissipator", {"channels"});
  if (!d.contains("channels") || !d.at("channels").is_array() || d.at("channels").empty()) {
    r.fail("dissipator.channels", "expected a non-empty list of channels");
    return;
  }
  const Json& list = d.at("channels");
  const bool grid = model.kind == ModelKind::grid;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string loc = "dissipator.channels[" + std::to_string(i) + "]";
    const Json& c = list[i];
    if (!r.object(c, loc)) continue;
    r.allowed(c, loc, {"variant", "kappa", "kappa_width_fraction", "alpha_re", "alpha_im", "g", "T", "G0", "G1",
                       "mode", "path"});
    ChannelConfig ch;
    const auto variant = r.string(c, loc, "variant");
    if (!variant) {
      r.fail(loc + ".variant", "required");
      continue;
    }
    ch.variant = *variant;
    if (!channel_variants().count(ch.variant)) {
      r.fail(loc + ".variant", "unknown variant '" + ch.variant + "'");
      continue;
    }
    const bool grid_variant = ch.variant == "grid-two-level";
    const bool osc_variant = ch.variant.rfind("osc-", 0) == 0 || ch.variant == "mode-lowering";
    if (grid && osc_variant) r.fail(loc + ".variant", "'" + ch.variant + "' needs an oscillator model");
    if (!grid && grid_variant) r.fail(loc + ".variant", "'" + ch.variant + "' needs a grid model");
    ch.kappa = r.number(c, loc, "kappa");
    ch.kappa_width_fraction = r.number(c, loc, "kappa_width_fraction");
    ch.alpha = Complex(r.number_or(c, loc, "alpha_re", 0.0), r.number_or(c, loc, "alpha_im", 0.0));
    ch.g = r.non_negative(c, loc, "g", 1.0);
    ch.T = r.non_negative(c, loc, "T", 0.0);
    ch.mode = r.int_at_least(c, loc, "mode", 1, 1);
    ch.path = r.string(c, loc, "path").value_or("");
    const bool needs_kappa = ch.variant != "mode-lowering" && ch.variant != "custom";
    if (needs_kappa && ch.kappa.has_value() == ch.kappa_width_fraction.has_value()) {
      r.fail(loc, "give exactly one of 'kappa' or 'kappa_width_fraction'");
    }
    if (!needs_kappa) {
      for (const char* k : {"kappa", "kappa_width_fraction", "alpha_re", "alpha_im"})
        if (c.contains(k)) r.fail(loc + "." + k, "not used by variant '" + ch.variant + "'");
    }
    if (grid && ch.kappa_width_fraction) r.fail(loc + ".kappa_width_fraction", "only defined for oscillator models");
    if (ch.variant == "osc-zero-T" && ch.alpha != Complex(0.0)) {
      r.fail(loc, "variant 'osc-zero-T' requires alpha = 0 (use 'osc-alpha')");
    }
    if (ch.variant == "osc-finite-T-RT") {
      if (!(ch.T > 0.0)) r.fail(loc + ".T", "variant 'osc-finite-T-RT' requires T > 0");
      if (c.contains("alpha_re") || c.contains("alpha_im")) r.fail(loc, "variant 'osc-finite-T-RT' takes no alpha");
    } else if (c.contains("T")) {
      r.fail(loc + ".T", "only used by variant 'osc-finite-T-RT'");
    }
    if (ch.variant == "mode-lowering" && ch.mode > 2) r.fail(loc + ".mode", "must be 1 or 2");
    if (ch.variant != "mode-lowering" && c.contains("mode")) r.fail(loc + ".mode", "only used by 'mode-lowering'");
    if (ch.variant == "custom" && ch.path.empty()) r.fail(loc + ".path", "required for variant 'custom'");
    if (ch.variant != "custom" && c.contains("path")) r.fail(loc + ".path", "only used by variant 'custom'");
    for (const char* k : {"G0", "G1"}) {
      if (!c.contains(k)) continue;
      if (!grid_variant) {
        r.fail(loc + "." + k, "only used by variant 'grid-two-level'");
        continue;
      }
      const Json& v = c.at(k);
      if (v.is_string() && v.get<std::string>() == "one") continue;
      const auto samples = r.numbers(v, loc + "." + k);
      if (static_cast<int>(samples.size()) != model.gs.grid.points) {
        r.fail(loc + "." + k, "expected \"one\" or " + std::to_string(model.gs.grid.points) + " grid samples");
      }
      (std::string(k) == "G0" ? ch.G0 : ch.G1) = to_vector(samples);
    }
    out.push_back(std::move(ch));
  }
}

inline const std::set<std::string>& builtin_observables() {
  static const std::set<std::string> v{"x1", "p1", "x2", "p2", "n1", "n2", "energy", "gs_fidelity"};
  return v;
}

inline void parse_initial(Reader& r, const Json& j, const std::string& loc, const ModelConfig& model,
                          InitialStateConfig& out) {
  if (!r.object(j, loc)) return;
  r.allowed(j, loc, {"type", "T", "mode", "amount", "path"});
  out.kind = r.string(j, loc, "type").value_or("");
  if (out.kind == "ground") {
    r.allowed(j, loc, {"type"});
  } else if (out.kind == "gibbs") {
    r.allowed(j, loc, {"type", "T"});
    if (!j.contains("T")) r.fail(loc + ".T", "required for a Gibbs state");
    out.T = r.non_negative(j, loc, "T", 0.0);
  } else if (out.kind == "displaced") {
    r.allowed(j, loc, {"type", "mode", "amount"});
    if (!j.contains("amount")) r.fail(loc + ".amount", "required for a displaced state");
    out.mode = r.int_at_least(j, loc, "mode", 1, 1);
    if (out.mode > 2) r.fail(loc + ".mode", "must be 1 or 2");
    if (model.kind == ModelKind::grid && out.mode != 1) r.fail(loc + ".mode", "a grid model has one momentum axis");
    out.amount = r.number_or(j, loc, "amount", 0.0);
  } else if (out.kind == "custom") {
    r.allowed(j, loc, {"type", "path"});
    out.path = r.string(j, loc, "path").value_or("");
    if (out.path.empty()) r.fail(loc + ".path", "required for a custom state");
  } else {
    r.fail(loc + ".type", "must be one of ground, gibbs, displaced, custom");
  }
}

inline void parse_run(Reader& r, const Json& root, const ModelConfig& model, RunSection& out) {
  if (!root.contains("run")) return;
  const Json& j = root.at("run");
  if (!r.object(j, "run")) return;
  r.allowed(j, "run", {"t_span", "intervals", "method", "dt", "tol", "max_steps", "observables", "initial_state"});
  if (j.contains("t_span")) {
    const auto span = r.numbers(j.at("t_span"), "run.t_span");
    if (span.size() != 2 || !(span[1] > span[0])) {
      r.fail("run.t_span", "expected [t0, t1] with t1 > t0");
    } else {
      out.t0 = span[0];
      out.t1 = span[1];
    }
  }
  out.intervals = r.int_at_least(j, "run", "intervals", out.intervals, 1);
  const std::string method = r.string(j, "run", "method").value_or("rk4");
  if (method == "rk4") {
    out.method = Method::rk4;
  } else if (method == "rk45") {
    out.method = Method::rk45;
  } else {
    r.fail("run.method", "must be 'rk4' or 'rk45'");
  }
  out.dt = r.positive(j, "run", "dt", out.dt);
  out.tol = r.positive(j, "run", "tol", out.tol);
  if (out.tol > 1e-2) r.fail("run.tol", "must be <= 1e-2");
  out.max_steps = r.int_at_least(j, "run", "max_steps", static_cast<int>(out.max_steps), 1);
  if (j.contains("observables")) {
    const Json& obs = j.at("observables");
    if (!obs.is_array()) {
      r.fail("run.observables", "expected a list");
    } else {
      std::set<std::string> seen;
      for (std::size_t i = 0; i < obs.size(); ++i) {
        const std::string loc = "run.observables[" + std::to_string(i) + "]";
        ObservableConfig o;
        if (obs[i].is_string()) {
          o.name = obs[i].get<std::string>();
          if (!builtin_observables().count(o.name)) {
            r.fail(loc, "unknown observable '" + o.name + "' (built-ins: x1 p1 x2 p2 n1 n2 energy gs_fidelity)");
            continue;
          }
          const bool osc_only = o.name != "p1" && o.name != "energy" && o.name != "gs_fidelity";
          if (model.kind == ModelKind::grid && osc_only) {
            r.fail(loc, "observable '" + o.name + "' needs an oscillator model");
          }
        } else if (r.object(obs[i], loc)) {
          r.allowed(obs[i], loc, {"name", "path"});
          o.name = r.string(obs[i], loc, "name").value_or("");
          o.path = r.string(obs[i], loc, "path").value_or("");
          if (o.name.empty()) r.fail(loc + ".name", "required");
          if (o.path.empty()) r.fail(loc + ".path", "required");
          if (o.name.find_first_of(",\"\n") != std::string::npos) r.fail(loc + ".name", "must not contain , \" or newlines");
        } else {
          continue;
        }
        if (!seen.insert(o.name).second) r.fail(loc, "duplicate observable '" + o.name + "'");
        out.observables.push_back(o);
      }
    }
  }
  if (j.contains("initial_state")) parse_initial(r, j.at("initial_state"), "run.initial_state", model, out.initial);
}

inline void parse_check(Reader& r, const Json& root, CheckSection& out) {
  if (!root.contains("check")) return;
  const Json& j = root.at("check");
  if (!r.object(j, "check")) return;
  r.allowed(j, "check", {"T", "probe_temperatures", "ti_samples", "support_level", "therm_tol", "ti_tol", "rt_tol",
                         "jk_tol"});
  out.T = r.non_negative(j, "check", "T", 0.0);
  if (j.contains("probe_temperatures")) {
    out.probe_temperatures = r.numbers(j.at("probe_temperatures"), "check.probe_temperatures");
    for (double t : out.probe_temperatures)
      if (t < 0.0) r.fail("check.probe_temperatures", "entries must be >= 0");
  }
  out.ti_samples = r.int_at_least(j, "check", "ti_samples", out.ti_samples, 1);
  out.support_level = r.int_at_least(j, "check", "support_level", -1, 0);
  auto tol = [&](const char* k) -> std::optional<double> {
    if (!j.contains(k)) return std::nullopt;
    return r.positive(j, "check", k, 1.0);
  };
  out.therm_tol = tol("therm_tol");
  out.ti_tol = tol("ti_tol");
  out.rt_tol = tol("rt_tol");
  out.jk_tol = tol("jk_tol");
}

inline void parse_misc(Reader& r, const Json& root, RunConfig& cfg) {
  if (root.contains("steady") && r.object(root.at("steady"), "steady")) {
    const Json& j = root.at("steady");
    r.allowed(j, "steady", {"kernel_tol", "cap", "eigenvalues"});
    cfg.steady.kernel_tol = r.positive(j, "steady", "kernel_tol", cfg.steady.kernel_tol);
    if (const auto cap = r.integer(j, "steady", "cap")) {
      if (*cap < 1) r.fail("steady.cap", "must be >= 1");
      cfg.steady.cap = *cap;
    }
    cfg.steady.eigenvalues = r.int_at_least(j, "steady", "eigenvalues", cfg.steady.eigenvalues, 0);
  }
  if (root.contains("forces") && r.object(root.at("forces"), "forces")) {
    const Json& j = root.at("forces");
    r.allowed(j, "forces", {"trajectory"});
    cfg.forces.trajectory = r.string(j, "forces", "trajectory").value_or("");
  }
  if (root.contains("output") && r.object(root.at("output"), "output")) {
    const Json& j = root.at("output");
    r.allowed(j, "output", {"dir", "states"});
    cfg.output.dir = r.string(j, "output", "dir").value_or(cfg.output.dir);
    cfg.output.states = r.boolean(j, "output", "states", false);
  }
  if (root.contains("seed")) {
    if (!root.at("seed").is_number_unsigned()) {
      r.fail("seed", "expected a non-negative integer");
    } else {
      cfg.seed = root.at("seed").get<std::uint64_t>();
    }
  }
  if (root.contains("sweep") && r.object(root.at("sweep"), "sweep")) {
    const Json& j = root.at("sweep");
    r.allowed(j, "sweep", {"command", "grid"});
    SweepSection s;
    s.command = r.string(j, "sweep", "command").value_or("");
    static const std::set<std::string> cmds{"model", "evolve", "check", "steady", "forces"};
    if (!cmds.count(s.command)) r.fail("sweep.command", "must be one of model, evolve, check, steady, forces");
    if (!j.contains("grid") || !j.at("grid").is_object() || j.at("grid").empty()) {
      r.fail("sweep.grid", "expected a non-empty object mapping config pointers to value lists");
    } else {
      for (auto it = j.at("grid").begin(); it != j.at("grid").end(); ++it) {
        const std::string loc = "sweep.grid." + it.key();
        if (it.key().empty() || it.key()[0] != '/') {
          r.fail(loc, "keys are JSON pointers such as /model/theta");
          continue;
        }
        if (it.key().rfind("/sweep", 0) == 0 || it.key().rfind("/output", 0) == 0) {
          r.fail(loc, "sweeping the sweep or output sections is not allowed");
          continue;
        }
        if (!it.value().is_array() || it.value().empty()) {
          r.fail(loc, "expected a non-empty list of values");
          continue;
        }
        try {
          (void)root.at(Json::json_pointer(it.key()));
        } catch (const std::exception&) {
          r.fail(loc, "pointer does not name an existing config entry");
          continue;
        }
        s.grid.emplace_back(it.key(), std::vector<Json>(it.value().begin(), it.value().end()));
      }
    }
    cfg.sweep = std::move(s);
  }
}

}  // namespace detail

/// Validates a parsed document. Throws ConfigError listing every problem.
inline RunConfig parse_config(const Json& root, const std::filesystem::path& base_dir = {}) {
  detail::Reader r;
  RunConfig cfg;
  cfg.base_dir = base_dir;
  cfg.raw = root;
  if (!root.is_object()) throw ConfigError({"<root>: expected a JSON object"});
  r.allowed(root, "", {"model", "dissipator", "run", "check", "steady", "forces", "sweep", "output", "seed", "units"});
  try {
    detail::parse_model(r, root, cfg.model);
  } catch (const InvalidArgument& e) {
    r.fail("model", e.what());
  }
  detail::parse_channels(r, root, cfg.model, cfg.channels);
  detail::parse_run(r, root, cfg.model, cfg.run);
  detail::parse_check(r, root, cfg.check);
  detail::parse_misc(r, root, cfg);
  if (!r.problems.empty()) throw ConfigError(r.problems);
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path.string() + ": cannot open"});
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
  return parse_config(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// Everything a subcommand needs, built from a validated config.
struct System {
  ModelKind kind = ModelKind::oscillator;
  HilbertSpace space;
  Operator h;
  DissipatorSpec spec;
  Vector ground;
  double hbar = 1.0;
  double kB = 1.0;
  std::optional<OscillatorModel> osc;
  std::optional<GroundStateSpec> gs;
  std::vector<int> truncation;
};

inline std::string resolve(const RunConfig& cfg, const std::string& p) {
  const std::filesystem::path path(p);
  return (path.is_absolute() || cfg.base_dir.empty() ? path : cfg.base_dir / path).string();
}

/// Builds the model and dissipator. Engine rejections (non-integral grid kicks,
/// sub-floor ratio denominators, bad operator files) are reported as
/// ConfigError naming the channel.
inline System build_system(const RunConfig& cfg) {
  System sys;
  sys.kind = cfg.model.kind;
  sys.hbar = cfg.model.osc.hbar;
  sys.kB = cfg.model.osc.kB;
  std::vector<std::string> problems;
  if (sys.kind == ModelKind::oscillator) {
    const OscillatorModel& m = cfg.model.osc;
    sys.osc = m;
    sys.space = make_space({BosonMode{cfg.model.n1}, BosonMode{cfg.model.n2}});
    sys.h = build_hamiltonian(m, sys.space);
    sys.ground = oscillator_vacuum(sys.space);
    sys.truncation = {cfg.model.n1, cfg.model.n2};
    sys.spec.axes.push_back(oscillator_axis(oscillator_operators(m, sys.space)));
  } else {
    try {
      const GridModel gm = grid_two_level_model(cfg.model.gs, cfg.model.gaps);
      sys.gs = gm.gs;
      sys.space = gm.space;
      sys.h = gm.hamiltonian;
      sys.ground = gm.ground;
      sys.spec.axes.push_back(grid_axis(gm.space, 1));
    } catch (const InvalidArgument& e) {
      throw ConfigError({std::string("model.ground_state: ") + e.what()});
    }
  }
  sys.spec.hbar = sys.hbar;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    const ChannelConfig& c = cfg.channels[i];
    const std::string loc = "dissipator.channels[" + std::to_string(i) + "]";
    try {
      double kappa = c.kappa.value_or(0.0);
      if (c.kappa_width_fraction) kappa = *c.kappa_width_fraction * ground_momentum_width(*sys.osc) / sys.hbar;
      if (c.variant == "osc-zero-T" || c.variant == "osc-alpha") {
        sys.spec.channels.push_back(build_osc_channel(*sys.osc, sys.space, kappa, c.alpha, GPrime::rate(c.g)));
      } else if (c.variant == "osc-finite-T-RT") {
        sys.spec.channels.push_back(build_osc_finite_T_channel(*sys.osc, sys.space, kappa, c.T, c.g));
      } else if (c.variant == "mode-lowering") {
        sys.spec.channels.push_back(mode_lowering_channel(*sys.osc, sys.space, c.mode, c.g));
      } else if (c.variant == "grid-two-level") {
        FrictionChannel ch = build_grid_channel(*sys.gs, kappa, c.alpha, c.G0, c.G1, sys.hbar);
        if (c.g != 1.0) {
          ch.A = Complex(std::sqrt(c.g)) * ch.A;
          ch.f = Complex(std::sqrt(c.g)) * *ch.f;
        }
        sys.spec.channels.push_back(std::move(ch));
      } else if (c.variant == "custom") {
        const Matrix a = load_operator(resolve(cfg, c.path), sys.space.dim());
        sys.spec.channels.push_back(custom_channel(Operator(sys.space, Complex(std::sqrt(c.g)) * a), "custom"));
      }
    } catch (const InvalidArgument& e) {
      problems.push_back(loc + ": " + e.what());
    }
  }
  if (!problems.empty()) throw ConfigError(problems);
  return sys;
}

inline std::vector<Observable> build_observables(const RunConfig& cfg, const System& sys) {
  std::vector<Observable> out;
  std::vector<std::string> problems;
  std::optional<OscillatorOperators> ops;
  if (sys.osc) ops = oscillator_operators(*sys.osc, sys.space);
  for (const auto& o : cfg.run.observables) {
    if (!o.path.empty()) {
      try {
        out.push_back({o.name, load_operator(resolve(cfg, o.path), sys.space.dim())});
      } catch (const std::exception& e) {
        problems.push_back("run.observables." + o.name + ": " + e.what());
      }
      continue;
    }
    if (o.name == "energy") {
      out.push_back({o.name, sys.h.matrix()});
    } else if (o.name == "gs_fidelity") {
      out.push_back({o.name, sys.ground * sys.ground.adjoint()});
    } else if (o.name == "p1" && !ops) {
      out.push_back({o.name, sys.spec.axes[0].momentum.matrix()});
    } else if (o.name == "x1") {
      out.push_back({o.name, ops->x1.matrix()});
    } else if (o.name == "p1") {
      out.push_back({o.name, ops->p1.matrix()});
    } else if (o.name == "x2") {
      out.push_back({o.name, ops->x2.matrix()});
    } else if (o.name == "p2") {
      out.push_back({o.name, ops->p2.matrix()});
    } else if (o.name == "n1") {
      out.push_back({o.name, ops->mode1.number.matrix()});
    } else if (o.name == "n2") {
      out.push_back({o.name, ops->mode2.number.matrix()});
    }
  }
  if (!problems.empty()) throw ConfigError(problems);
  return out;
}

inline DensityMatrix build_initial_state(const RunConfig& cfg, const System& sys) {
  const InitialStateConfig& init = cfg.run.initial;
  try {
    if (init.kind == "ground") return DensityMatrix::pure(sys.space, sys.ground);
    if (init.kind == "gibbs") return thermal_state(sys.h, init.T, sys.kB).rho;
    if (init.kind == "displaced") {
      if (sys.osc) return DensityMatrix::pure(sys.space, displaced_state(*sys.osc, sys.space, init.mode, init.amount));
      // grid: shift the ground state by +amount in momentum
      const GridOperators grid(sys.space, 1);
      return DensityMatrix::pure(sys.space, grid.kick(-init.amount, sys.hbar).matrix() * sys.ground);
    }
    const Matrix rho = load_operator(resolve(cfg, init.path), sys.space.dim());
    return DensityMatrix(Operator(sys.space, rho));
  } catch (const InvalidArgument& e) {
    throw ConfigError({std::string("run.initial_state: ") + e.what()});
  }
}

}  // namespace qfriction::cli
