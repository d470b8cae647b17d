#pragma once

// Shared model builders for the unit and acceptance tests.

#include <numbers>

#include "qfriction/criteria.hpp"
#include "qfriction/dissipator.hpp"
#include "qfriction/hilbert.hpp"
#include "qfriction/liouville.hpp"
#include "qfriction/model.hpp"

namespace fixtures {

using namespace qfriction;

inline OscillatorModel tilted_model(double theta = std::numbers::pi / 6) {
  return OscillatorModel::make(1.0, 2.2, theta, 1.0, 1.0);
}

inline HilbertSpace two_mode_space(int n) { return make_space({BosonMode{n}, BosonMode{n}}); }

/// hbar kappa = 0.2 x ground-state p1 width.
inline double small_kappa(const OscillatorModel& m) { return 0.2 * ground_momentum_width(m) / m.hbar; }

inline DissipatorSpec osc_spec(const OscillatorModel& m, const HilbertSpace& space, double kappa, Complex alpha,
                               const GPrime& g) {
  DissipatorSpec spec;
  spec.hbar = m.hbar;
  spec.channels.push_back(build_osc_channel(m, space, kappa, alpha, g));
  spec.axes.push_back(oscillator_axis(oscillator_operators(m, space)));
  return spec;
}

/// 128-point grid, Gaussians sigma 1 and 1.6 with equal weight.
inline MomentumGrid standard_grid() { return {128, -12.8, 0.2}; }

inline GroundStateSpec standard_ground_state() {
  return gaussian_ground_state(standard_grid(), {{1.0, 1.0, 0.0}, {1.0, 1.6, 0.0}});
}

inline DissipatorSpec grid_spec(const GroundStateSpec& gs, double kappa, Complex alpha) {
  DissipatorSpec spec;
  spec.channels.push_back(build_grid_channel(gs, kappa, alpha, {}, {}));
  spec.axes.push_back(grid_axis(gs.space()));
  return spec;
}

inline Matrix vacuum_projector(const HilbertSpace& s) {
  Matrix r = Matrix::Zero(s.dim(), s.dim());
  r(0, 0) = 1.0;
  return r;
}

}  // namespace fixtures
