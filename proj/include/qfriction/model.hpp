#pragma once

// Two-mode trapped-molecule oscillator (external centre-of-mass coordinate x1
// coupled to an internal stretching coordinate x2) and a synthetic
// internal-levels x momentum-grid model with a prescribed ground state.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "qfriction/hilbert.hpp"

namespace qfriction {

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double theta) {
  constexpr double pi = std::numbers::pi;
  double t = std::remainder(theta, 2.0 * pi);
  if (t <= -pi) t += 2.0 * pi;
  return t;
}

/// Normal-mode parameter pack: frequencies, mixing angle and the mass weights
/// of the rotation x'_1 = sqrt(m1) cos(theta) x1 - sqrt(m2) sin(theta) x2,
/// x'_2 = sqrt(m1) sin(theta) x1 + sqrt(m2) cos(theta) x2.
struct OscillatorModel {
  double omega1 = 1.0;
  double omega2 = 1.0;
  double theta = 0.0;
  double m1 = 1.0;
  double m2 = 1.0;
  double hbar = 1.0;
  double kB = 1.0;

  double beta1() const { return 1.0 / (hbar * omega1); }
  double beta2() const { return 1.0 / (hbar * omega2); }
  double omega(int l) const { return l == 1 ? omega1 : omega2; }
  double beta(int l) const { return l == 1 ? beta1() : beta2(); }

  static OscillatorModel make(double omega1, double omega2, double theta, double m1, double m2, double hbar = 1.0,
                              double kB = 1.0) {
    OscillatorModel m{omega1, omega2, wrap_angle(theta), m1, m2, hbar, kB};
    m.validate();
    return m;
  }

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument(std::string("OscillatorModel: ") + name + " must be > 0");
    };
    positive(omega1, "omega1");
    positive(omega2, "omega2");
    positive(m1, "m1");
    positive(m2, "m2");
    positive(hbar, "hbar");
    positive(kB, "kB");
    if (!std::isfinite(theta)) throw InvalidArgument("OscillatorModel: theta must be finite");
  }
};

/// Lab-frame parameters of the trapped diatomic: total mass M, reduced mass mu,
/// trap frequency, vibrational spring constant, and the mass m1 entering the
/// dipole-trap displacement x1 - (mu/m1) x2.
struct PhysicalOscillator {
  double M = 1.0;
  double mu = 1.0;
  double m1 = 1.0;
  double omega_trap = 1.0;
  double k_vib = 1.0;
};

/// H = p^T kinetic p + x^T potential x for coordinates (x1, x2).
struct QuadraticForm {
  Eigen::Matrix2d kinetic;
  Eigen::Matrix2d potential;
};

inline QuadraticForm physical_quadratic_form(const PhysicalOscillator& p) {
  QuadraticForm q;
  q.kinetic << 1.0 / (2.0 * p.M), 0.0, 0.0, 1.0 / (2.0 * p.mu);
  const double c = p.mu / p.m1;
  const double a = 0.5 * p.M * p.omega_trap * p.omega_trap;
  q.potential << a, -a * c, -a * c, a * c * c + 0.5 * p.k_vib;
  return q;
}

/// Quadratic form implied by a normal-mode model, rotated back to (x1, x2).
inline QuadraticForm model_quadratic_form(const OscillatorModel& m) {
  const double c = std::cos(m.theta);
  const double s = std::sin(m.theta);
  Eigen::Matrix2d rot;
  rot << c, -s, s, c;
  const Eigen::Matrix2d to_x = rot * Eigen::Vector2d(std::sqrt(m.m1), std::sqrt(m.m2)).asDiagonal();
  const Eigen::Matrix2d to_p = rot * Eigen::Vector2d(1.0 / std::sqrt(m.m1), 1.0 / std::sqrt(m.m2)).asDiagonal();
  const Eigen::Vector2d w2(m.omega1 * m.omega1, m.omega2 * m.omega2);
  QuadraticForm q;
  q.kinetic = 0.5 * to_p.transpose() * to_p;
  q.potential = 0.5 * to_x.transpose() * w2.asDiagonal() * to_x;
  return q;
}

/// Mass-weighted normal-mode analysis of the trapped diatomic. Frequencies are
/// returned ascending; theta is canonicalised so that cos(theta) >= 0 (and
/// theta = 0 for degenerate frequencies). The model's mass weights are (M, mu).
inline OscillatorModel physical_to_normal(const PhysicalOscillator& p, double hbar = 1.0, double kB = 1.0) {
  for (double v : {p.M, p.mu, p.m1, p.omega_trap, p.k_vib, hbar, kB}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("physical_to_normal: all inputs must be finite and > 0");
  }
  const QuadraticForm q = physical_quadratic_form(p);
  const Eigen::Vector2d inv_sqrt_mass(1.0 / std::sqrt(p.M), 1.0 / std::sqrt(p.mu));
  const Eigen::Matrix2d w = inv_sqrt_mass.asDiagonal() * (2.0 * q.potential) * inv_sqrt_mass.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(w);
  const Eigen::Vector2d w2 = es.eigenvalues();
  if (!(w2(0) > 0.0)) throw InvalidArgument("physical_to_normal: potential is not positive definite");
  double theta = 0.0;
  const double spread = std::abs(w2(1) - w2(0));
  if (spread > 1e-12 * std::abs(w2(1))) {
    Eigen::Vector2d v1 = es.eigenvectors().col(0);
    if (v1(0) < 0.0 || (v1(0) == 0.0 && v1(1) > 0.0)) v1 = -v1;
    theta = std::atan2(-v1(1), v1(0));
  }
  return OscillatorModel::make(std::sqrt(w2(0)), std::sqrt(w2(1)), theta, p.M, p.mu, hbar, kB);
}

inline void require_two_mode_space(const HilbertSpace& space, const char* who) {
  if (space.num_factors() != 2 || !std::holds_alternative<BosonMode>(space.factor(0)) ||
      !std::holds_alternative<BosonMode>(space.factor(1))) {
    throw InvalidArgument(std::string(who) + ": expected a space of exactly two BosonMode factors, got " +
                          space.describe());
  }
}

/// H = hbar omega1 n'_1 + hbar omega2 n'_2 in the normal-mode Fock basis.
inline Operator build_hamiltonian(const OscillatorModel& m, const HilbertSpace& space) {
  require_two_mode_space(space, "build_hamiltonian");
  const int n1 = space.dims()[0];
  const int n2 = space.dims()[1];
  Matrix h = Matrix::Zero(space.dim(), space.dim());
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) h(i * n2 + j, i * n2 + j) = m.hbar * (i * m.omega1 + j * m.omega2);
  return {space, h};
}

/// Normal-mode ladders plus lab-frame quadratures and the two ground-state
/// annihilating combinations frak_1, frak_2, all on the same two-mode space.
struct OscillatorOperators {
  ModeOperators mode1;  // a'_1, x'_1, p'_1
  ModeOperators mode2;  // a'_2, x'_2, p'_2
  Operator x1, p1, x2, p2;
  Operator frak1, frak2;
};

inline OscillatorOperators oscillator_operators(const OscillatorModel& m, const HilbertSpace& space) {
  require_two_mode_space(space, "oscillator_operators");
  ModeOperators n1 = mode_operators(space, 0, m.beta1(), m.hbar);
  ModeOperators n2 = mode_operators(space, 1, m.beta2(), m.hbar);
  const double c = std::cos(m.theta);
  const double s = std::sin(m.theta);
  const double sm1 = std::sqrt(m.m1);
  const double sm2 = std::sqrt(m.m2);
  const double r1 = std::sqrt(m.beta1());
  const double r2 = std::sqrt(m.beta2());
  const double rt2 = std::numbers::sqrt2;
  Operator x1 = Complex(1.0 / sm1) * (Complex(s) * n2.x + Complex(c) * n1.x);
  Operator x2 = Complex(1.0 / sm2) * (Complex(c) * n2.x - Complex(s) * n1.x);
  Operator p1 = Complex(sm1) * (Complex(c) * n1.p + Complex(s) * n2.p);
  Operator p2 = Complex(sm2) * (Complex(c) * n2.p - Complex(s) * n1.p);
  Operator f1 = Complex(rt2) * (Complex(r2 * s) * n2.a + Complex(r1 * c) * n1.a);
  Operator f2 = Complex(rt2) * (Complex(r2 * c) * n2.a - Complex(r1 * s) * n1.a);
  return {std::move(n1), std::move(n2), std::move(x1), std::move(p1), std::move(x2), std::move(p2),
          std::move(f1),  std::move(f2)};
}

struct FrakOperators {
  Operator frak1;
  Operator frak2;
};

inline FrakOperators frak_operators(const OscillatorModel& m, const HilbertSpace& space) {
  auto ops = oscillator_operators(m, space);
  return {std::move(ops.frak1), std::move(ops.frak2)};
}

/// Root-mean-square ground-state spread of the lab-frame momentum p1.
inline double ground_momentum_width(const OscillatorModel& m) {
  const double c = std::cos(m.theta);
  const double s = std::sin(m.theta);
  return std::sqrt(m.m1 * (c * c * m.hbar * m.omega1 + s * s * m.hbar * m.omega2) / 2.0);
}

/// Two-mode vacuum |0,0>.
inline Vector oscillator_vacuum(const HilbertSpace& space) {
  Vector v = Vector::Zero(space.dim());
  v(0) = 1.0;
  return v;
}

/// Truncated coherent state of one boson factor, tensored with the vacuum of
/// the other factors and renormalised.
inline Vector coherent_state(const HilbertSpace& space, std::size_t factor, Complex alpha) {
  if (factor >= space.num_factors() || !std::holds_alternative<BosonMode>(space.factor(factor))) {
    throw InvalidArgument("coherent_state: factor is not a BosonMode");
  }
  const int n = space.dims()[factor];
  Vector local(n);
  Complex amp = 1.0;
  for (int k = 0; k < n; ++k) {
    local(k) = amp;
    amp *= alpha / std::sqrt(static_cast<double>(k + 1));
  }
  Vector out = Vector::Zero(space.dim());
  const int stride = space.dim_after(factor);
  for (int k = 0; k < n; ++k) out(k * stride) = local(k);
  return out / out.norm();
}

/// Vacuum displaced along normal coordinate x'_mode (mode = 1 or 2) so that
/// <x'_mode> = amount in the untruncated limit.
inline Vector displaced_state(const OscillatorModel& m, const HilbertSpace& space, int mode, double amount) {
  require_two_mode_space(space, "displaced_state");
  if (mode != 1 && mode != 2) throw InvalidArgument("displaced_state: mode must be 1 or 2");
  const double alpha = amount / (m.hbar * std::sqrt(2.0 * m.beta(mode)));
  return coherent_state(space, static_cast<std::size_t>(mode - 1), alpha);
}

// ---------------------------------------------------------------------------
// Thermal states
// ---------------------------------------------------------------------------

struct ThermalState {
  DensityMatrix rho;
  RealVector energies;    // ascending
  Matrix eigenvectors;    // columns
  RealVector weights;     // Boltzmann populations gamma_i
  bool degenerate_ground = false;
};

/// Boltzmann weights for a sorted spectrum; T = 0 gives equal weight on the
/// (possibly degenerate) ground level.
inline RealVector boltzmann_weights(const RealVector& energies, double T, double kB, bool* degenerate = nullptr) {
  if (T < 0.0 || !std::isfinite(T)) throw InvalidArgument("thermal state: temperature must be >= 0");
  const Eigen::Index n = energies.size();
  RealVector w(n);
  const double e0 = energies(0);
  const double scale = std::max(1.0, energies.cwiseAbs().maxCoeff());
  int nground = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (energies(i) - e0 <= 1e-9 * scale) ++nground;
  if (degenerate) *degenerate = nground > 1;
  if (T == 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) w(i) = (energies(i) - e0 <= 1e-9 * scale) ? 1.0 / nground : 0.0;
    return w;
  }
  for (Eigen::Index i = 0; i < n; ++i) w(i) = std::exp(-(energies(i) - e0) / (kB * T));
  return w / w.sum();
}

inline ThermalState thermal_state(const Operator& h, double T, double kB = 1.0) {
  if (T < 0.0 || !std::isfinite(T)) throw InvalidArgument("thermal_state: temperature must be >= 0");
  if (hermiticity_defect(h.matrix()) > 1e-10 * std::max(1.0, max_abs(h.matrix()))) {
    throw InvalidArgument("thermal_state: Hamiltonian is not Hermitian");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (h.matrix() + h.matrix().adjoint()));
  ThermalState out;
  out.energies = es.eigenvalues();
  out.eigenvectors = es.eigenvectors();
  out.weights = boltzmann_weights(out.energies, T, kB, &out.degenerate_ground);
  Matrix rho = out.eigenvectors * out.weights.cast<Complex>().asDiagonal() * out.eigenvectors.adjoint();
  rho = 0.5 * (rho + rho.adjoint()).eval();
  out.rho = DensityMatrix(Operator(h.space(), std::move(rho)));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic grid model
// ---------------------------------------------------------------------------

/// Internal-channel momentum wavefunctions Psi_{0,i}(p_j) of a ground state
/// |0> = sum_i |e_i> |Psi_{0,i}>, sampled on a grid.
struct GroundStateSpec {
  MomentumGrid grid;
  std::vector<Vector> channels;

  int levels() const { return static_cast<int>(channels.size()); }

  void validate() const {
    if (grid.points < 2 || !(grid.dp > 0.0)) throw InvalidArgument("GroundStateSpec: invalid grid");
    if (channels.empty()) throw InvalidArgument("GroundStateSpec: no internal channels");
    double total = 0.0;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      const Vector& c = channels[i];
      if (c.size() != grid.points) {
        throw InvalidArgument("GroundStateSpec: channel " + std::to_string(i) + " has " + std::to_string(c.size()) +
                              " samples, grid has " + std::to_string(grid.points));
      }
      if (!c.allFinite()) throw InvalidArgument("GroundStateSpec: channel " + std::to_string(i) + " is not finite");
      if (c.squaredNorm() * grid.dp < 1e-20) {
        throw InvalidArgument("GroundStateSpec: channel " + std::to_string(i) +
                              " vanishes identically; every internal channel must carry ground-state weight");
      }
      const double edge = std::max(std::abs(c(0)), std::abs(c(grid.points - 1)));
      if (edge >= 1e-12) {
        throw InvalidArgument("GroundStateSpec: channel " + std::to_string(i) + " is not negligible at the grid edge (" +
                              std::to_string(edge) + ")");
      }
      total += c.squaredNorm() * grid.dp;
    }
    if (std::abs(total - 1.0) > 1e-10) {
      throw InvalidArgument("GroundStateSpec: sum_i sum_j |Psi_i(p_j)|^2 dp = " + std::to_string(total) + " != 1");
    }
    for (std::size_t i = 0; i < channels.size(); ++i) {
      for (std::size_t j = i + 1; j < channels.size(); ++j) {
        const double ov = std::norm(channels[i].dot(channels[j]));
        const double bound = (1.0 - 1e-6) * channels[i].squaredNorm() * channels[j].squaredNorm();
        if (!(ov < bound)) {
          throw InvalidArgument("GroundStateSpec: channels " + std::to_string(i) + " and " + std::to_string(j) +
                                " are proportional (adiabatic ground state)");
        }
      }
    }
  }

  /// Unit-norm composite state on [InternalLevels, MomentumGrid].
  Vector state_vector() const {
    const int np = grid.points;
    Vector v(levels() * np);
    const double w = std::sqrt(grid.dp);
    for (int i = 0; i < levels(); ++i) v.segment(i * np, np) = channels[static_cast<std::size_t>(i)] * w;
    return v;
  }

  HilbertSpace space() const { return make_space({InternalLevels{levels()}, grid}); }
};

struct GaussianChannel {
  double weight = 1.0;  // relative probability carried by the channel
  double sigma = 1.0;
  double center = 0.0;
};

/// Gaussian channels exp(-(p - c)^2 / (2 sigma^2)) scaled to the requested
/// weights and jointly normalised on the grid.
inline GroundStateSpec gaussian_ground_state(const MomentumGrid& grid, const std::vector<GaussianChannel>& g) {
  GroundStateSpec gs{grid, {}};
  double total_weight = 0.0;
  for (const auto& c : g) total_weight += c.weight;
  if (!(total_weight > 0.0)) throw InvalidArgument("gaussian_ground_state: weights must sum to > 0");
  for (const auto& c : g) {
    if (!(c.sigma > 0.0)) throw InvalidArgument("gaussian_ground_state: sigma must be > 0");
    Vector v(grid.points);
    for (int j = 0; j < grid.points; ++j) {
      const double d = grid.momentum(j) - c.center;
      v(j) = std::exp(-d * d / (2.0 * c.sigma * c.sigma));
    }
    const double n2 = v.squaredNorm() * grid.dp;
    if (n2 > 0.0) v *= std::sqrt(c.weight / total_weight / n2);
    gs.channels.push_back(std::move(v));
  }
  return gs;
}

struct GridModel {
  GroundStateSpec gs;
  HilbertSpace space;
  Operator hamiltonian;
  Vector ground;
  RealVector energies;  // E_0 = 0, E_1, ...
  Matrix basis;         // orthonormal columns v_0 = |0>, v_1, ...
};

/// H = sum_{n>=1} E_n |v_n><v_n| with |v_0> = |0> from gs and {v_n} its
/// Gram-Schmidt completion over the canonical basis. E_n accumulates the
/// gaps list (its last entry repeats), so a single gap g gives E_n = n g.
inline GridModel grid_two_level_model(const GroundStateSpec& gs, const std::vector<double>& gaps) {
  gs.validate();
  if (gaps.empty()) throw InvalidArgument("grid_two_level_model: spectrum gaps list is empty");
  for (double g : gaps)
    if (!(g > 0.0)) throw InvalidArgument("grid_two_level_model: spectrum gaps must be > 0");
  const HilbertSpace space = gs.space();
  const int dim = space.dim();
  const Vector ground = gs.state_vector();
  Matrix q(dim, dim);
  q.col(0) = ground / ground.norm();
  int filled = 1;
  for (int k = 0; k < dim && filled < dim; ++k) {
    Vector v = Vector::Zero(dim);
    v(k) = 1.0;
    for (int pass = 0; pass < 2; ++pass) v -= q.leftCols(filled) * (q.leftCols(filled).adjoint() * v);
    const double n = v.norm();
    if (n > 1e-6) q.col(filled++) = v / n;
  }
  if (filled != dim) throw NumericalError("grid_two_level_model: Gram-Schmidt completion failed");
  RealVector e(dim);
  e(0) = 0.0;
  for (int n = 1; n < dim; ++n) e(n) = e(n - 1) + gaps[std::min<std::size_t>(static_cast<std::size_t>(n - 1), gaps.size() - 1)];
  Matrix h = q * e.cast<Complex>().asDiagonal() * q.adjoint();
  h = 0.5 * (h + h.adjoint()).eval();
  return {gs, space, Operator(space, std::move(h)), ground, std::move(e), std::move(q)};
}

}  // namespace qfriction
