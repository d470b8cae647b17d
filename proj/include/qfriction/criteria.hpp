#pragma once

// Numerical certificates: translation invariance, exact and relaxed
// thermalization, the J functional, the strict-thermalization grid sum, the
// single-channel no-go witnesses and Ehrenfest force balances.

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qfriction/dissipator.hpp"
#include "qfriction/hilbert.hpp"
#include "qfriction/liouville.hpp"
#include "qfriction/model.hpp"

namespace qfriction {

struct CheckResult {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  int samples = 1;
  std::string note;
  // "<=" passes when residual <= tolerance, ">" when residual > tolerance
  // (used for negative controls and strict-positivity witnesses).
  std::string relation = "<=";
};

class CriteriaReport {
 public:
  /// Records a check; pass iff residual <= tolerance and residual is finite.
  CheckResult& add(std::string name, double residual, double tolerance, int samples = 1, std::string note = {}) {
    CheckResult c{std::move(name), residual, tolerance, std::isfinite(residual) && residual <= tolerance, samples,
                  std::move(note), "<="};
    checks_.push_back(std::move(c));
    return checks_.back();
  }

  /// Records a lower-bound check; pass iff residual > threshold.
  CheckResult& add_above(std::string name, double value, double threshold, int samples = 1, std::string note = {}) {
    CheckResult c{std::move(name), value, threshold, std::isfinite(value) && value > threshold, samples,
                  std::move(note), ">"};
    checks_.push_back(std::move(c));
    return checks_.back();
  }

  /// A structural (non-numerical) certificate.
  CheckResult& add_structural(std::string name, bool holds, std::string note) {
    CheckResult c{std::move(name), holds ? 0.0 : 1.0, 0.0, holds, 0, std::move(note), "structural"};
    checks_.push_back(std::move(c));
    return checks_.back();
  }

  const std::vector<CheckResult>& checks() const { return checks_; }
  bool all_passed() const {
    return std::all_of(checks_.begin(), checks_.end(), [](const CheckResult& c) { return c.passed; });
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["all_passed"] = all_passed();
    auto arr = nlohmann::ordered_json::array();
    for (const auto& c : checks_) {
      nlohmann::ordered_json e;
      e["name"] = c.name;
      e["residual"] = c.residual;
      e["relation"] = c.relation;
      e["tolerance"] = c.tolerance;
      e["passed"] = c.passed;
      e["samples"] = c.samples;
      if (!c.note.empty()) e["note"] = c.note;
      arr.push_back(std::move(e));
    }
    j["checks"] = std::move(arr);
    return j;
  }

  std::string table() const {
    std::size_t w = 5;
    for (const auto& c : checks_) w = std::max(w, c.name.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(w)) << "check" << "  " << std::setw(12) << "residual" << "  "
       << std::setw(11) << "rel" << std::setw(12) << "tolerance" << "  result\n";
    os << std::string(w + 50, '-') << "\n";
    for (const auto& c : checks_) {
      std::ostringstream r, t;
      r << std::scientific << std::setprecision(3) << c.residual;
      t << std::scientific << std::setprecision(3) << c.tolerance;
      os << std::left << std::setw(static_cast<int>(w)) << c.name << "  " << std::setw(12) << r.str() << "  "
         << std::setw(11) << c.relation << std::setw(12) << t.str() << "  " << (c.passed ? "PASS" : "FAIL");
      if (!c.note.empty()) os << "  (" << c.note << ")";
      os << "\n";
    }
    os << (all_passed() ? "all checks passed" : "some checks FAILED") << "\n";
    return os.str();
  }

 private:
  std::vector<CheckResult> checks_;
};

// ---------------------------------------------------------------------------
// Random states and operators
// ---------------------------------------------------------------------------

/// Basis indices whose boson-mode occupation is <= max_level on every mode.
inline std::vector<int> fock_support(const HilbertSpace& space, int max_level) {
  std::vector<int> idx;
  for (int i = 0; i < space.dim(); ++i) {
    const auto mi = space.multi_index(i);
    bool ok = true;
    for (std::size_t k = 0; k < mi.size(); ++k)
      if (std::holds_alternative<BosonMode>(space.factor(k)) && mi[k] > max_level) ok = false;
    if (ok) idx.push_back(i);
  }
  return idx;
}

inline Matrix random_complex_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = Complex(n(rng), n(rng));
  return m;
}

/// GUE draw on the chosen support, shifted to be positive semidefinite and
/// normalised to unit trace. An empty support means the whole space.
inline Matrix random_density_matrix(const HilbertSpace& space, std::mt19937_64& rng,
                                    const std::vector<int>& support = {}) {
  std::vector<int> idx = support;
  if (idx.empty()) {
    idx.resize(static_cast<std::size_t>(space.dim()));
    for (int i = 0; i < space.dim(); ++i) idx[static_cast<std::size_t>(i)] = i;
  }
  const int k = static_cast<int>(idx.size());
  const Matrix x = random_complex_matrix(k, k, rng);
  Matrix h = 0.5 * (x + x.adjoint());
  const double lmin = min_eigenvalue(h);
  h -= Matrix::Identity(k, k) * lmin;
  h /= h.trace().real();
  Matrix rho = Matrix::Zero(space.dim(), space.dim());
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) rho(idx[static_cast<std::size_t>(r)], idx[static_cast<std::size_t>(c)]) = h(r, c);
  return rho;
}

// ---------------------------------------------------------------------------
// Residuals
// ---------------------------------------------------------------------------

struct TiOptions {
  int samples = 20;
  std::uint64_t seed = 0;
  std::vector<int> support;  // empty = full space
};

/// max over sampled rho of || [p, L_rel[rho]] - L_rel[[p, rho]] ||_max.
inline double ti_residual(const DissipatorSpec& spec, const Operator& p, const TiOptions& opt) {
  if (opt.samples < 1) throw InvalidArgument("ti_residual: samples must be >= 1");
  const LindbladGenerator gen(nullptr, spec);
  p.check_same(spec.channels.front().A, "ti_residual");
  std::mt19937_64 rng(opt.seed);
  const Matrix& pm = p.matrix();
  double worst = 0.0;
  for (int s = 0; s < opt.samples; ++s) {
    const Matrix rho = random_density_matrix(p.space(), rng, opt.support);
    const Matrix lr = gen.apply_relaxation(rho);
    const Matrix lhs = pm * lr - lr * pm;
    const Matrix rhs = gen.apply_relaxation(pm * rho - rho * pm);
    worst = std::max(worst, max_abs(lhs - rhs));
  }
  return worst;
}

/// || L_rel[rho_T] ||_F.
inline double therm_residual(const DissipatorSpec& spec, const Matrix& rho_t) {
  const LindbladGenerator gen(nullptr, spec);
  return gen.apply_relaxation(rho_t).norm();
}

/// |Tr[rho_{T'} L_rel[rho_T]]| for each T'.
inline std::vector<double> rt_residual(const DissipatorSpec& spec, const Operator& h, double T,
                                       const std::vector<double>& t_primes, double kB = 1.0) {
  const LindbladGenerator gen(nullptr, spec);
  const Matrix l = gen.apply_relaxation(thermal_state(h, T, kB).rho.matrix());
  std::vector<double> out;
  for (double tp : t_primes) out.push_back(std::abs(trace_product(thermal_state(h, tp, kB).rho.matrix(), l)));
  return out;
}

/// J = |<0|A|0>|^2 - ||A|0>||^2; never positive by Cauchy-Schwarz.
inline double jk_value(const Matrix& a, const Vector& vacuum) {
  const double n = vacuum.norm();
  if (std::abs(n - 1.0) > 1e-10) throw InvalidArgument("jk_value: reference state must be normalised");
  const Vector phi = a * vacuum;
  return std::norm(vacuum.dot(phi)) - phi.squaredNorm();
}

struct KickedAmplitude {
  Complex alpha;
  double kappa = 0.0;
};

/// max_p | sum_k |alpha_k|^2 sum_j (|Psi_j(p)|^2 - |Psi_j(p - hbar kappa_k)|^2) |.
/// Samples shifted off the grid count as zero.
inline double strict_thermalization_residual(const GroundStateSpec& gs, const std::vector<KickedAmplitude>& channels,
                            double hbar = 1.0) {
  gs.validate();
  const int np = gs.grid.points;
  RealVector dens = RealVector::Zero(np);
  for (const auto& c : gs.channels) dens += c.cwiseAbs2();
  RealVector acc = RealVector::Zero(np);
  for (const auto& ch : channels) {
    const double w = std::norm(ch.alpha);
    if (w == 0.0) continue;
    const double ratio = hbar * ch.kappa / gs.grid.dp;
    const double s = std::round(ratio);
    if (std::abs(ratio - s) > 1e-9 * std::max(1.0, std::abs(ratio))) {
      throw InvalidArgument("strict_thermalization_residual: hbar*kappa must be an integer number of grid steps");
    }
    for (int j = 0; j < np; ++j) {
      const int src = j - static_cast<int>(s);
      const double shifted = (src >= 0 && src < np) ? dens(src) : 0.0;
      acc(j) += w * (dens(j) - shifted);
    }
  }
  return acc.cwiseAbs().maxCoeff();
}

struct SingleChannelWitness {
  Matrix R;  // sum_m gamma_m <n|phi_m><phi_m|l>, phi_m = A|m>, energy eigenbasis
  Matrix S;  // <phi_n|phi_l> (gamma_n + gamma_l) / 2
  double gap = 0.0;
};

inline SingleChannelWitness single_channel_witnesses(const Operator& a, const Operator& h, double T, double kB = 1.0) {
  a.check_same(h, "single_channel_witnesses");
  const ThermalState th = thermal_state(h, T, kB);
  const Matrix& v = th.eigenvectors;
  const Matrix ae = v.adjoint() * a.matrix() * v;  // columns are phi_m in the eigenbasis
  const RealVector& g = th.weights;
  SingleChannelWitness out;
  out.R = ae * g.cast<Complex>().asDiagonal() * ae.adjoint();
  const Matrix overlap = ae.adjoint() * ae;  // <phi_m|phi_n>
  const int n = static_cast<int>(g.size());
  out.S.resize(n, n);
  double gap = 0.0;
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < n; ++r) {
      out.S(r, c) = overlap(r, c) * (0.5 * (g(r) + g(c)));
      const double dg = 0.5 * (g(r) - g(c));
      gap += std::norm(overlap(r, c)) * dg * dg;
    }
  }
  out.gap = gap;
  return out;
}

// ---------------------------------------------------------------------------
// Ehrenfest balances
// ---------------------------------------------------------------------------

/// Observables whose expectation values feed ehrenfest_check for one axis:
/// <name>:p, <name>:x, <name>:Hp = (i/hbar)[H, p], <name>:Hx, <name>:F and
/// <name>:X. Requires a Fock axis (the position operator is needed for x).
inline std::vector<Observable> ehrenfest_observables(const Operator& h, const DissipatorSpec& spec, std::size_t axis) {
  const auto& ax = spec.axes.at(axis);
  if (!ax.position) throw InvalidArgument("ehrenfest_observables: axis '" + ax.name + "' has no position operator");
  const Complex ih(0.0, 1.0 / spec.hbar);
  const auto forces = friction_force_op(spec);
  const auto xforces = position_force_op(spec);
  const std::string n = ax.name;
  return {{n + ":p", ax.momentum.matrix()},
          {n + ":x", ax.position->matrix()},
          {n + ":Hp", (ih * commutator(h, ax.momentum)).matrix()},
          {n + ":Hx", (ih * commutator(h, *ax.position)).matrix()},
          {n + ":F", forces[axis].matrix()},
          {n + ":X", xforces[axis].matrix()}};
}

struct EhrenfestDefect {
  double dp = 0.0;          // max |d<p>/dt - <Hp> - <F>|
  double dx = 0.0;          // max |d<x>/dt - <Hx> - <X>|
  double peak_dp_dt = 0.0;  // max |d<p>/dt|
  double peak_dx_dt = 0.0;
  std::size_t points = 0;
};

/// Centred time derivatives of the recorded <p> and <x> series (five-point
/// stencil where possible, three-point otherwise) compared against the
/// Hamiltonian and dissipative force expectations on a uniform snapshot grid.
inline EhrenfestDefect ehrenfest_check(const Trajectory& traj, const std::string& axis_name) {
  const std::size_t n = traj.size();
  if (n < 3) throw InvalidArgument("ehrenfest_check: need at least 3 snapshots");
  const double h = traj.times[1] - traj.times[0];
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs((traj.times[i] - traj.times[i - 1]) - h) > 1e-9 * h) {
      throw InvalidArgument("ehrenfest_check: snapshots must be uniformly spaced");
    }
  }
  const auto& p = traj.series(axis_name + ":p");
  const auto& x = traj.series(axis_name + ":x");
  const auto& hp = traj.series(axis_name + ":Hp");
  const auto& hx = traj.series(axis_name + ":Hx");
  const auto& f = traj.series(axis_name + ":F");
  const auto& xf = traj.series(axis_name + ":X");
  auto deriv = [&](const std::vector<Complex>& s, std::size_t i) -> double {
    if (n >= 5 && i >= 2 && i + 2 < n) {
      return ((s[i - 2] - 8.0 * s[i - 1] + 8.0 * s[i + 1] - s[i + 2]) / (12.0 * h)).real();
    }
    return ((s[i + 1] - s[i - 1]) / (2.0 * h)).real();
  };
  EhrenfestDefect out;
  const std::size_t lo = n >= 5 ? 2 : 1;
  for (std::size_t i = lo; i + lo < n; ++i) {
    const double dp = deriv(p, i);
    const double dx = deriv(x, i);
    out.dp = std::max(out.dp, std::abs(dp - hp[i].real() - f[i].real()));
    out.dx = std::max(out.dx, std::abs(dx - hx[i].real() - xf[i].real()));
    out.peak_dp_dt = std::max(out.peak_dp_dt, std::abs(dp));
    out.peak_dx_dt = std::max(out.peak_dx_dt, std::abs(dx));
    ++out.points;
  }
  return out;
}

/// <psi|rho|psi> for normalised psi.
inline double state_fidelity(const Vector& psi, const Matrix& rho) { return psi.dot(rho * psi).real(); }

}  // namespace qfriction
