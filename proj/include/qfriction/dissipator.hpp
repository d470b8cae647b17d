#pragma once

// Translation-invariant Lindblad channels A = e^{-i kappa x} f(p) and the
// superoperators built from them.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qfriction/hilbert.hpp"
#include "qfriction/model.hpp"

namespace qfriction {

enum class ChannelVariant {
  osc_zero_T,       // oscillator, alpha = 0 (exactly thermalizing at T = 0)
  osc_alpha,        // oscillator, alpha != 0 (relaxed thermalization only)
  osc_finite_T_RT,  // oscillator, finite-temperature relaxed-thermalization channel
  grid_two_level,   // internal-levels x momentum-grid construction
  custom,           // arbitrary operator, no translation-invariant factorization
};

inline const char* variant_name(ChannelVariant v) {
  switch (v) {
    case ChannelVariant::osc_zero_T: return "osc-zero-T";
    case ChannelVariant::osc_alpha: return "osc-alpha";
    case ChannelVariant::osc_finite_T_RT: return "osc-finite-T-RT";
    case ChannelVariant::grid_two_level: return "grid-two-level";
    case ChannelVariant::custom: return "custom";
  }
  return "?";
}

/// One Lindblad channel. For translation-invariant variants the assembled
/// operator is kept together with its factors, A = kick * f, where kick is
/// e^{-i kappa x} and f commutes with the momenta.
struct FrictionChannel {
  ChannelVariant variant = ChannelVariant::custom;
  std::vector<double> kappa;  // one entry per translational axis
  Complex alpha{0.0, 0.0};
  double temperature = 0.0;
  Operator A;
  std::optional<Operator> kick;
  std::optional<Operator> f;
  std::string label;

  bool factorized() const { return kick.has_value() && f.has_value(); }
};

/// A translational degree of freedom. Fock-represented axes carry the position
/// operator (derivatives via commutators); grid axes name the grid factor
/// (derivatives via finite differences).
struct TranslationalAxis {
  std::string name;
  Operator momentum;
  std::optional<Operator> position;
  std::optional<std::size_t> grid_factor;
};

struct DissipatorSpec {
  std::vector<FrictionChannel> channels;
  std::vector<TranslationalAxis> axes;
  double hbar = 1.0;

  const HilbertSpace& space() const { return channels.front().A.space(); }

  void validate() const {
    if (channels.empty()) throw InvalidArgument("DissipatorSpec: at least one channel is required");
    for (const auto& c : channels) {
      c.A.check_same(channels.front().A, "DissipatorSpec");
      if (c.factorized() && c.kappa.size() != axes.size()) {
        throw InvalidArgument("DissipatorSpec: channel '" + c.label + "' has " + std::to_string(c.kappa.size()) +
                              " kick components for " + std::to_string(axes.size()) + " axes");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Superoperators
// ---------------------------------------------------------------------------

/// A rho A^dag - (A^dag A rho + rho A^dag A) / 2.
inline Operator lindblad_apply(const Operator& a, const Operator& rho) {
  a.check_same(rho, "lindblad_apply");
  const Matrix& am = a.matrix();
  const Matrix ada = am.adjoint() * am;
  Matrix out = am * rho.matrix() * am.adjoint();
  out.noalias() -= 0.5 * (ada * rho.matrix());
  out.noalias() -= 0.5 * (rho.matrix() * ada);
  return {rho.space(), std::move(out)};
}

/// Precomputed generator L = L_vn + L_rel acting on dense matrices:
/// L[rho] = K rho + rho K^dag + sum_k A_k rho A_k^dag with
/// K = -(i/hbar) H - (1/2) sum_k A_k^dag A_k.
class LindbladGenerator {
 public:
  LindbladGenerator(const Operator* h, const DissipatorSpec& spec) {
    spec.validate();
    const int d = spec.space().dim();
    k_ = Matrix::Zero(d, d);
    if (h) {
      h->check_same(spec.channels.front().A, "liouvillian");
      k_ = (-kI / spec.hbar) * h->matrix();
    }
    k_rel_ = Matrix::Zero(d, d);
    for (const auto& c : spec.channels) {
      jumps_.push_back(c.A.matrix());
      jumps_adj_.push_back(c.A.matrix().adjoint());
      k_rel_.noalias() -= 0.5 * (jumps_adj_.back() * jumps_.back());
    }
    k_ += k_rel_;
    k_adj_ = k_.adjoint();
    k_rel_adj_ = k_rel_.adjoint();
  }

  /// Full generator on an arbitrary (not necessarily Hermitian) matrix.
  Matrix apply(const Matrix& rho) const { return apply_with(k_, k_adj_, rho); }

  /// Dissipative part only.
  Matrix apply_relaxation(const Matrix& rho) const { return apply_with(k_rel_, k_rel_adj_, rho); }

  /// Full generator for Hermitian rho; exploits rho K^dag = (K rho)^dag.
  void apply_hermitian(const Matrix& rho, Matrix& out, Matrix& work) const {
    work.noalias() = k_ * rho;
    out = work + work.adjoint();
    for (std::size_t k = 0; k < jumps_.size(); ++k) {
      work.noalias() = jumps_[k] * rho;
      out.noalias() += work * jumps_adj_[k];
    }
  }

  const Matrix& effective() const { return k_; }
  const std::vector<Matrix>& jumps() const { return jumps_; }

 private:
  Matrix apply_with(const Matrix& k, const Matrix& kadj, const Matrix& rho) const {
    Matrix out = k * rho;
    out.noalias() += rho * kadj;
    Matrix work(rho.rows(), rho.cols());
    for (std::size_t i = 0; i < jumps_.size(); ++i) {
      work.noalias() = jumps_[i] * rho;
      out.noalias() += work * jumps_adj_[i];
    }
    return out;
  }

  Matrix k_, k_adj_, k_rel_, k_rel_adj_;
  std::vector<Matrix> jumps_, jumps_adj_;
};

/// Sum_k Lambda_{A_k}[rho].
inline Operator relaxation_apply(const DissipatorSpec& spec, const Operator& rho) {
  spec.validate();
  rho.check_same(spec.channels.front().A, "relaxation_apply");
  Operator out = Operator::zero(rho.space());
  for (const auto& c : spec.channels) out += lindblad_apply(c.A, rho);
  return out;
}

/// (i/hbar)[rho, H] + sum_k Lambda_{A_k}[rho].
inline Operator liouvillian_rhs(const Operator& h, const DissipatorSpec& spec, const Operator& rho) {
  h.check_same(rho, "liouvillian_rhs");
  Operator out = Complex(0.0, 1.0 / spec.hbar) * commutator(rho, h);
  out += relaxation_apply(spec, rho);
  return out;
}

// ---------------------------------------------------------------------------
// Oscillator channels
// ---------------------------------------------------------------------------

/// Lab-frame quadratures allowed inside the free operator G' of an
/// oscillator channel.
enum class Quadrature { x1, p1, x2, p2 };

inline Quadrature parse_quadrature(const std::string& s) {
  if (s == "x1") return Quadrature::x1;
  if (s == "p1") return Quadrature::p1;
  if (s == "x2") return Quadrature::x2;
  if (s == "p2") return Quadrature::p2;
  throw InvalidArgument("unknown quadrature '" + s + "' (expected x1, p1, x2 or p2)");
}

/// G' as a sum of coefficient-weighted products of lab-frame quadratures.
/// It must not involve x1, otherwise the channel breaks translation invariance.
struct GPrime {
  struct Term {
    Complex coefficient{1.0, 0.0};
    std::vector<Quadrature> factors;
  };
  std::vector<Term> terms;

  static GPrime constant(Complex c) { return {{Term{c, {}}}}; }
  /// Scalar rate g: G' = sqrt(g) 1, so the dissipator scales linearly in g.
  static GPrime rate(double g) {
    if (g < 0.0) throw InvalidArgument("GPrime::rate: rate must be >= 0");
    return constant(std::sqrt(g));
  }

  Operator build(const OscillatorOperators& ops) const {
    const HilbertSpace& s = ops.x1.space();
    Operator g = Operator::zero(s);
    for (const auto& t : terms) {
      Operator prod = Operator::identity(s);
      for (Quadrature q : t.factors) {
        switch (q) {
          case Quadrature::x1:
            throw InvalidArgument("G' must be independent of x1 (it would break translation invariance)");
          case Quadrature::p1: prod = prod * ops.p1; break;
          case Quadrature::x2: prod = prod * ops.x2; break;
          case Quadrature::p2: prod = prod * ops.p2; break;
        }
      }
      g += t.coefficient * prod;
    }
    return g;
  }
};

inline TranslationalAxis oscillator_axis(const OscillatorOperators& ops) {
  return {"x1", ops.p1, ops.x1, std::nullopt};
}

/// A = e^{-i kappa x1} G' frak_2 + alpha e^{-i hbar kappa frak_1 / sqrt(m1)}.
/// Both terms map the two-mode vacuum onto alpha |0>.
inline FrictionChannel build_osc_channel(const OscillatorModel& m, const HilbertSpace& space, double kappa,
                                         Complex alpha, const GPrime& gprime) {
  m.validate();
  if (!std::isfinite(kappa)) throw InvalidArgument("build_osc_channel: kappa must be finite");
  const OscillatorOperators ops = oscillator_operators(m, space);
  const Operator g = gprime.build(ops);
  const Operator kick = matrix_exponential(Complex(0.0, -kappa) * ops.x1);
  Operator f = g * ops.frak2;
  if (alpha != Complex(0.0)) {
    const Operator displaced =
        matrix_exponential(Complex(0.0, -m.hbar * kappa / std::sqrt(m.m1)) * ops.frak1);
    f += alpha * (kick.adjoint() * displaced);
  }
  FrictionChannel c;
  c.variant = alpha == Complex(0.0) ? ChannelVariant::osc_zero_T : ChannelVariant::osc_alpha;
  c.kappa = {kappa};
  c.alpha = alpha;
  c.A = kick * f;
  c.kick = kick;
  c.f = std::move(f);
  c.label = variant_name(c.variant);
  return c;
}

/// lambda_l = tanh(hbar omega_l / (4 kB T)).
inline double rt_lambda(const OscillatorModel& m, int mode, double T) {
  if (!(T > 0.0)) throw InvalidArgument("rt_lambda: temperature must be > 0");
  return std::tanh(m.hbar * m.omega(mode) / (4.0 * m.kB * T));
}

/// A = sqrt(rate) e^{-i kappa x1} e^{hbar kappa (beta'_2 lambda_2 p'_2 sin(theta) +
/// beta'_1 lambda_1 p'_1 cos(theta)) / sqrt(m1)}, factors in that order.
inline FrictionChannel build_osc_finite_T_channel(const OscillatorModel& m, const HilbertSpace& space, double kappa,
                                                  double T, double rate = 1.0) {
  m.validate();
  if (!(T > 0.0)) throw InvalidArgument("build_osc_finite_T_channel: temperature must be > 0");
  if (rate < 0.0) throw InvalidArgument("build_osc_finite_T_channel: rate must be >= 0");
  const OscillatorOperators ops = oscillator_operators(m, space);
  const double l1 = rt_lambda(m, 1, T);
  const double l2 = rt_lambda(m, 2, T);
  const double pref = m.hbar * kappa / std::sqrt(m.m1);
  const Operator exponent = Complex(pref * m.beta2() * l2 * std::sin(m.theta)) * ops.mode2.p +
                            Complex(pref * m.beta1() * l1 * std::cos(m.theta)) * ops.mode1.p;
  const Operator kick = matrix_exponential(Complex(0.0, -kappa) * ops.x1);
  Operator f = Complex(std::sqrt(rate)) * matrix_exponential(exponent);
  FrictionChannel c;
  c.variant = ChannelVariant::osc_finite_T_RT;
  c.kappa = {kappa};
  c.temperature = T;
  c.A = kick * f;
  c.kick = kick;
  c.f = std::move(f);
  c.label = variant_name(c.variant);
  return c;
}

/// sqrt(rate) a'_l: plain normal-mode damping, a non-translation-invariant
/// reference channel.
inline FrictionChannel mode_lowering_channel(const OscillatorModel& m, const HilbertSpace& space, int mode,
                                             double rate) {
  if (mode != 1 && mode != 2) throw InvalidArgument("mode_lowering_channel: mode must be 1 or 2");
  if (rate < 0.0) throw InvalidArgument("mode_lowering_channel: rate must be >= 0");
  const OscillatorOperators ops = oscillator_operators(m, space);
  FrictionChannel c;
  c.variant = ChannelVariant::custom;
  c.A = Complex(std::sqrt(rate)) * (mode == 1 ? ops.mode1.a : ops.mode2.a);
  c.label = "mode-lowering";
  return c;
}

/// Wraps an arbitrary operator as a channel without a translation-invariant
/// factorization.
inline FrictionChannel custom_channel(Operator a, std::string label = "custom") {
  FrictionChannel c;
  c.variant = ChannelVariant::custom;
  c.A = std::move(a);
  c.label = std::move(label);
  return c;
}

// ---------------------------------------------------------------------------
// Grid channel
// ---------------------------------------------------------------------------

/// Relative floor below which |Psi_{0,i}(p)| is not used as a divisor.
inline constexpr double kDivisionFloor = 1e-8;

/// Two-level grid channel A = e^{-i kappa x} f(p) with
///   f = f_0 + alpha sum_i Psi_{0,i}(p - hbar kappa) / Psi_{0,i}(p) |e_i><e_i|,
///   f_0 = sum_{i,j} (-1)^{i-j} G_{1-i}(p) Psi*_{0,i}(p) Psi_{0,j}(p) |e_{1-i}><e_{1-j}|.
/// g0/g1 are sampled on the grid (empty means identically one).
inline FrictionChannel build_grid_channel(const GroundStateSpec& gs, double kappa, Complex alpha, Vector g0,
                                          Vector g1, double hbar = 1.0) {
  gs.validate();
  if (gs.levels() != 2) throw InvalidArgument("build_grid_channel: only two internal levels are supported");
  const int np = gs.grid.points;
  if (g0.size() == 0) g0 = Vector::Ones(np);
  if (g1.size() == 0) g1 = Vector::Ones(np);
  if (g0.size() != np || g1.size() != np) throw InvalidArgument("build_grid_channel: G0/G1 must be sampled on the grid");
  const HilbertSpace space = gs.space();
  const GridOperators grid(space, 1);
  const int s = grid.kick_steps(kappa, hbar);
  const std::vector<const Vector*> g = {&g0, &g1};
  const auto& psi = gs.channels;

  Matrix f = Matrix::Zero(space.dim(), space.dim());
  auto at = [np](int level, int j) { return level * np + j; };
  for (int j = 0; j < np; ++j) {
    for (int i = 0; i < 2; ++i) {
      for (int k = 0; k < 2; ++k) {
        const double sign = ((i - k) % 2 == 0) ? 1.0 : -1.0;
        f(at(1 - i, j), at(1 - k, j)) += sign * (*g[static_cast<std::size_t>(1 - i)])(j) *
                                         std::conj(psi[static_cast<std::size_t>(i)](j)) *
                                         psi[static_cast<std::size_t>(k)](j);
      }
    }
  }

  if (alpha != Complex(0.0)) {
    std::vector<std::string> bad;
    for (int i = 0; i < 2; ++i) {
      const Vector& ps = psi[static_cast<std::size_t>(i)];
      const double peak = ps.cwiseAbs().maxCoeff();
      const double floor = kDivisionFloor * peak;
      const double negligible = 1e-12 * peak;
      for (int j = 0; j < np; ++j) {
        const int src = j - s;  // Psi(p_j - hbar kappa), zero outside the grid
        const Complex num = (src >= 0 && src < np) ? ps(src) : Complex(0.0);
        const Complex den = ps(j);
        if (s == 0) {
          f(at(i, j), at(i, j)) += alpha;  // Psi(p) / Psi(p)
        } else if (std::abs(den) >= floor) {
          f(at(i, j), at(i, j)) += alpha * num / den;
        } else if (std::abs(num) > negligible) {
          bad.push_back("level " + std::to_string(i) + " p=" + std::to_string(gs.grid.momentum(j)));
        }
      }
    }
    if (!bad.empty()) {
      std::string msg = "build_grid_channel: |Psi(p)| below the division floor where Psi(p - hbar kappa) is not "
                        "negligible at ";
      for (std::size_t k = 0; k < bad.size() && k < 8; ++k) msg += (k ? ", " : "") + bad[k];
      if (bad.size() > 8) msg += " and " + std::to_string(bad.size() - 8) + " more";
      throw DegenerateInput(msg);
    }
  }

  FrictionChannel c;
  c.variant = ChannelVariant::grid_two_level;
  c.kappa = {kappa};
  c.alpha = alpha;
  c.kick = grid.shift(-s);
  c.f = Operator(space, std::move(f));
  c.A = *c.kick * *c.f;
  c.label = variant_name(c.variant);
  return c;
}

/// A = e^{-i kappa x} f(p) with f a function of the grid momentum alone,
/// acting as the identity on every other factor.
inline FrictionChannel grid_scalar_channel(const HilbertSpace& space, std::size_t factor, double kappa,
                                           const Vector& f_of_p, double hbar = 1.0) {
  const GridOperators grid(space, factor);
  if (f_of_p.size() != grid.grid().points) throw InvalidArgument("grid_scalar_channel: f must be sampled on the grid");
  if (!f_of_p.allFinite()) throw InvalidArgument("grid_scalar_channel: f is not finite");
  FrictionChannel c;
  c.variant = ChannelVariant::custom;
  c.kappa = {kappa};
  c.kick = grid.kick(kappa, hbar);
  c.f = Operator(space, space.embed(factor, f_of_p.asDiagonal().toDenseMatrix()));
  c.A = *c.kick * *c.f;
  c.label = "grid-scalar";
  return c;
}

inline TranslationalAxis grid_axis(const HilbertSpace& space, std::size_t factor = 1) {
  GridOperators g(space, factor);
  return {"p", g.momentum(), std::nullopt, factor};
}

// ---------------------------------------------------------------------------
// Force operators
// ---------------------------------------------------------------------------

namespace detail {
inline const FrictionChannel& require_factorized(const FrictionChannel& c, const char* who) {
  if (!c.factorized()) {
    throw InvalidArgument(std::string(who) + ": channel '" + c.label +
                          "' has no e^{-i kappa x} f(p) factorization");
  }
  return c;
}

/// df/dp along a grid factor by centred differences (one-sided at the ends).
/// f must be diagonal in the grid index.
inline Matrix grid_derivative(const HilbertSpace& space, std::size_t factor, const Matrix& f) {
  const auto grid = std::get<MomentumGrid>(space.factor(factor));
  const int n = grid.points;
  const int stride = space.dim_after(factor);
  const int d = space.dim();
  auto coord = [&](int idx) { return (idx / stride) % n; };
  Matrix out = Matrix::Zero(d, d);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      const int jr = coord(r);
      if (jr != coord(c)) {
        if (std::abs(f(r, c)) > 0.0) throw InvalidArgument("grid derivative: operator is not diagonal in momentum");
        continue;
      }
      if (jr == 0) {
        out(r, c) = (f(r + stride, c + stride) - f(r, c)) / grid.dp;
      } else if (jr == n - 1) {
        out(r, c) = (f(r, c) - f(r - stride, c - stride)) / grid.dp;
      } else {
        out(r, c) = (f(r + stride, c + stride) - f(r - stride, c - stride)) / (2.0 * grid.dp);
      }
    }
  }
  return out;
}
}  // namespace detail

/// F_n = -sum_k hbar kappa_{k,n} f_k^dag f_k, one operator per axis.
inline std::vector<Operator> friction_force_op(const DissipatorSpec& spec) {
  spec.validate();
  std::vector<Operator> out;
  for (std::size_t n = 0; n < spec.axes.size(); ++n) {
    Operator total = Operator::zero(spec.space());
    for (const auto& c : spec.channels) {
      const auto& ch = detail::require_factorized(c, "friction_force_op");
      total += Complex(-spec.hbar * ch.kappa[n]) * (ch.f->adjoint() * *ch.f);
    }
    out.push_back(std::move(total));
  }
  return out;
}

/// df/dp_n for one channel along one axis.
inline Operator momentum_derivative(const DissipatorSpec& spec, std::size_t axis, const Operator& f) {
  const auto& ax = spec.axes.at(axis);
  if (ax.grid_factor) return {f.space(), detail::grid_derivative(f.space(), *ax.grid_factor, f.matrix())};
  if (!ax.position) throw InvalidArgument("momentum_derivative: axis '" + ax.name + "' has no position operator");
  return Complex(0.0, -1.0 / spec.hbar) * commutator(*ax.position, f);
}

/// X_n = (i hbar / 2) sum_k (f_k^dag df_k/dp_n - df_k^dag/dp_n f_k).
inline std::vector<Operator> position_force_op(const DissipatorSpec& spec) {
  spec.validate();
  std::vector<Operator> out;
  for (std::size_t n = 0; n < spec.axes.size(); ++n) {
    Matrix acc = Matrix::Zero(spec.space().dim(), spec.space().dim());
    for (const auto& c : spec.channels) {
      const auto& ch = detail::require_factorized(c, "position_force_op");
      const Operator df = momentum_derivative(spec, n, *ch.f);
      const Matrix prod = ch.f->matrix().adjoint() * df.matrix();
      acc += prod - prod.adjoint();
    }
    out.emplace_back(spec.space(), Complex(0.0, 0.5 * spec.hbar) * acc);
  }
  return out;
}

}  // namespace qfriction
