#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"

using namespace qfriction;
using namespace fixtures;

TEST(Report, PassFailLogic) {
  CriteriaReport r;
  r.add("a", 1e-9, 1e-8);
  r.add("b", std::nan(""), 1.0);
  r.add_above("c", 0.5, 1e-3);
  EXPECT_TRUE(r.checks()[0].passed);
  EXPECT_FALSE(r.checks()[1].passed);
  EXPECT_TRUE(r.checks()[2].passed);
  EXPECT_FALSE(r.all_passed());
  const auto j = r.to_json();
  EXPECT_EQ(j["checks"].size(), 3u);
  EXPECT_FALSE(j["all_passed"].get<bool>());
  EXPECT_NE(r.table().find("FAIL"), std::string::npos);
}

TEST(RandomState, IsDensityMatrixAndDeterministic) {
  const auto s = two_mode_space(5);
  std::mt19937_64 a(42), b(42);
  const Matrix r1 = random_density_matrix(s, a, fock_support(s, 2));
  const Matrix r2 = random_density_matrix(s, b, fock_support(s, 2));
  EXPECT_EQ(max_abs(r1 - r2), 0.0);
  EXPECT_NO_THROW(DensityMatrix(Operator(s, r1)));
  EXPECT_EQ(fock_support(s, 2).size(), 9u);
  // nothing outside the support
  EXPECT_EQ(std::abs(r1(s.index(std::vector<int>{3, 0}), s.index(std::vector<int>{3, 0}))), 0.0);
}

TEST(TiResidual, GridChannelIsExact) {
  const auto gs = standard_ground_state();
  const auto spec = grid_spec(gs, 2 * gs.grid.dp, 0.0);
  EXPECT_LE(ti_residual(spec, spec.axes[0].momentum, {5, 1, {}}), 1e-12);
}

TEST(TiResidual, PositionChannelIsNotTranslationInvariant) {
  const auto m = tilted_model();
  const auto s = two_mode_space(8);
  const auto ops = oscillator_operators(m, s);
  DissipatorSpec spec;
  spec.channels.push_back(custom_channel(ops.x1 * ops.x1, "x1^2"));
  EXPECT_GT(ti_residual(spec, ops.p1, {5, 2, fock_support(s, 4)}), 1e-2);
  EXPECT_THROW(ti_residual(spec, ops.p1, {0, 2, {}}), InvalidArgument);
  // A = x1 alone is a double commutator with x1 and commutes with translations
  DissipatorSpec linear;
  linear.channels.push_back(custom_channel(ops.x1, "x1"));
  EXPECT_LT(ti_residual(linear, ops.p1, {5, 2, fock_support(s, 4)}), 1e-12);
}

TEST(ThermResidual, IdentityChannelIsZero) {
  const auto m = tilted_model();
  const auto s = two_mode_space(4);
  DissipatorSpec spec;
  spec.channels.push_back(custom_channel(Operator::identity(s), "identity"));
  EXPECT_EQ(therm_residual(spec, thermal_state(build_hamiltonian(m, s), 0.7).rho.matrix()), 0.0);
}

TEST(RtResidual, ExactThermalizationImpliesRt) {
  const auto m = tilted_model();
  const auto s = two_mode_space(8);
  const auto spec = osc_spec(m, s, small_kappa(m), 0.0, GPrime::constant(1.0));
  const Operator h = build_hamiltonian(m, s);
  EXPECT_LE(therm_residual(spec, vacuum_projector(s)), 1e-12);
  for (double r : rt_residual(spec, h, 0.0, {0.0, 0.3, 1.0, 2.0})) EXPECT_LE(r, 1e-10);
}

TEST(RtResidual, LoweringChannelViolatesRtAtFiniteT) {
  const auto m = tilted_model();
  const auto s = two_mode_space(10);
  DissipatorSpec spec;
  spec.channels.push_back(mode_lowering_channel(m, s, 1, 1.0));
  const Operator h = build_hamiltonian(m, s);
  const auto r = rt_residual(spec, h, 0.5, {0.25, 0.5, 1.0});
  for (double v : r) EXPECT_GT(v, 1e-3);
}

TEST(JkValue, KnownValues) {
  const auto s = two_mode_space(4);
  const Vector vac = oscillator_vacuum(s);
  const auto ops = oscillator_operators(tilted_model(), s);
  EXPECT_NEAR(jk_value(ops.mode1.adag.matrix(), vac), -1.0, 1e-14);
  EXPECT_NEAR(jk_value(Complex(0.3, 0.4) * Matrix::Identity(s.dim(), s.dim()), vac), 0.0, 1e-15);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) EXPECT_LE(jk_value(random_complex_matrix(s.dim(), s.dim(), rng), vac), 1e-12);
  EXPECT_THROW(jk_value(ops.x1.matrix(), 2.0 * vac), InvalidArgument);
}

TEST(StrictThermalizationResidual, TrivialAndShiftedCases) {
  const auto gs = standard_ground_state();
  EXPECT_EQ(strict_thermalization_residual(gs, {{0.0, 2 * gs.grid.dp}}), 0.0);
  EXPECT_EQ(strict_thermalization_residual(gs, {{1.0, 0.0}}), 0.0);
  EXPECT_GT(strict_thermalization_residual(gs, {{1.0, 2 * gs.grid.dp}}), 1e-3);
  EXPECT_THROW(strict_thermalization_residual(gs, {{1.0, 0.5 * gs.grid.dp}}), InvalidArgument);
}

TEST(SingleChannelWitness, IdentityAndZeroTemperature) {
  const auto m = tilted_model();
  const auto s = two_mode_space(5);
  const Operator h = build_hamiltonian(m, s);
  const auto id = single_channel_witnesses(Operator::identity(s), h, 0.8);
  EXPECT_LT(max_abs(id.R - id.S), 1e-14);
  EXPECT_LT(id.gap, 1e-14);
  const auto spec = osc_spec(m, s, small_kappa(m), 0.0, GPrime::constant(1.0));
  EXPECT_LT(single_channel_witnesses(spec.channels[0].A, h, 0.0).gap, 1e-14);
}

TEST(Ehrenfest, ClosedSystemDefectIsFiniteDifferenceError) {
  const auto m = tilted_model();
  const auto s = two_mode_space(8);
  const Operator h = build_hamiltonian(m, s);
  DissipatorSpec spec;
  auto zero = build_osc_channel(m, s, 0.0, 0.0, GPrime::constant(0.0));
  spec.channels.push_back(zero);
  spec.axes.push_back(oscillator_axis(oscillator_operators(m, s)));
  IntegrateOptions opt;
  opt.dt = 0.005;
  opt.observables = ehrenfest_observables(h, spec, 0);
  const auto traj =
      integrate(DensityMatrix::pure(s, displaced_state(m, s, 1, 0.5)), h, spec, uniform_times(0.0, 4.0, 400), opt);
  const auto d = ehrenfest_check(traj, "x1");
  EXPECT_LT(d.dp, 1e-7 * std::max(1.0, d.peak_dp_dt));
  EXPECT_LT(d.dx, 1e-7 * std::max(1.0, d.peak_dx_dt));
  Trajectory tiny = traj;
  tiny.times.resize(2);
  EXPECT_THROW(ehrenfest_check(tiny, "x1"), InvalidArgument);
}
