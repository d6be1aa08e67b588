// Copyright 2026 The ionhop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ionhop/crystal.hpp"

#include <cmath>

#include "gtest/gtest.h"

#include "test_fixtures.hpp"

using namespace ionhop;
using constants::two_pi;

namespace {

TrapConfig quadratic_trap(std::size_t n, double axial_hz, double radial_hz = 4e6) {
    TrapConfig t;
    t.n_ions = n;
    t.axial_quadratic = std::pow(two_pi * axial_hz, 2);
    t.radial_com_freq = two_pi * radial_hz;
    return t;
}

// Length scale of a harmonic axial trap.
double harmonic_length(const TrapConfig& t) { return std::cbrt(t.coulomb_rate() / t.axial_quadratic); }

}  // namespace

TEST(Crystal, SingleIonSitsAtCentre) {
    auto chain = equilibrium_positions(quadratic_trap(1, 1e6));
    ASSERT_EQ(chain.positions.size(), 1u);
    EXPECT_EQ(chain.positions[0], 0.0);

    TrapConfig quartic = quadratic_trap(1, 1e6);
    quartic.axial_quadratic = -1e12;
    quartic.axial_quartic = 1e22;
    EXPECT_EQ(equilibrium_positions(quartic).positions[0], 0.0);
}

TEST(Crystal, TwoIonsMatchForceBalance) {
    const TrapConfig t = quadratic_trap(2, 0.5e6);
    const double expected = std::pow(0.5, 2.0 / 3.0) * harmonic_length(t);
    const auto chain = equilibrium_positions(t);
    EXPECT_NEAR(chain.positions[0], -expected, 1e-12 * expected);
    EXPECT_NEAR(chain.positions[1], expected, 1e-12 * expected);
}

TEST(Crystal, ThreeIonsMatchForceBalance) {
    const TrapConfig t = quadratic_trap(3, 0.3e6);
    const double expected = std::cbrt(5.0 / 4.0) * harmonic_length(t);
    const auto chain = equilibrium_positions(t);
    EXPECT_EQ(chain.positions[1], 0.0);
    EXPECT_NEAR(chain.positions[2], expected, 1e-12 * expected);
}

TEST(Crystal, EquilibriumIsDeterministicAndSymmetric) {
    TrapConfig t = quadratic_trap(17, 0.2e6);
    const auto a = equilibrium_positions(t);
    const auto b = equilibrium_positions(t);
    ASSERT_EQ(a.positions.size(), b.positions.size());
    for (std::size_t i = 0; i < a.positions.size(); ++i) {
        EXPECT_EQ(a.positions[i], b.positions[i]);
        EXPECT_EQ(a.positions[i], -a.positions[16 - i]);
        if (i > 0) {
            EXPECT_GT(a.positions[i], a.positions[i - 1]);
        }
    }
    EXPECT_LT(a.force_residual, 1e-12);
}

TEST(Crystal, RejectsUnboundedPotential) {
    TrapConfig t = quadratic_trap(4, 1e6);
    t.axial_quadratic = -1.0;
    EXPECT_THROW(equilibrium_positions(t), ConfigError);
    t.axial_quartic = -1.0;
    EXPECT_THROW(equilibrium_positions(t), ConfigError);
    TrapConfig bad_mass = quadratic_trap(4, 1e6);
    bad_mass.ion_mass = 0.0;
    EXPECT_THROW(equilibrium_positions(bad_mass), ConfigError);
}

TEST(Crystal, TwoIonModesAreComAndRocking) {
    const TrapConfig t = quadratic_trap(2, 0.5e6, 4e6);
    const auto modes = transverse_modes(equilibrium_positions(t));
    const double wz2 = t.axial_quadratic;
    const double wr = t.radial_com_freq;
    EXPECT_NEAR(modes.freqs[1], wr, 1e-9 * wr);
    EXPECT_NEAR(modes.freqs[0], std::sqrt(wr * wr - wz2), 1e-9 * wr);
    EXPECT_NEAR(modes.participation(0, 1), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(modes.participation(1, 1), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(std::abs(modes.participation(0, 0)), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(modes.participation(0, 0), -modes.participation(1, 0), 1e-12);
}

TEST(Crystal, ModeInvariantsOnTunedChain) {
    const auto& fx = ionhop::testing::paper_chain();
    const ModeData& modes = fx.modes;
    const std::size_t n = modes.n_ions();
    const RMat& b = modes.participation;
    const RMat id = RMat::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    EXPECT_LT((b.transpose() * b - id).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((b * b.transpose() - id).cwiseAbs().maxCoeff(), 1e-10);

    // COM mode.
    const Eigen::Index top = static_cast<Eigen::Index>(n) - 1;
    EXPECT_NEAR(modes.freqs[top], fx.trap.radial_com_freq, 1e-9 * fx.trap.radial_com_freq);
    for (Eigen::Index i = 0; i <= top; ++i) EXPECT_NEAR(b(i, top), 1.0 / std::sqrt(double(n)), 1e-10);
    for (Eigen::Index m = 1; m <= top; ++m) EXPECT_GT(modes.freqs[m], modes.freqs[m - 1]);

    // Sum rule.
    const RMat hess = transverse_hessian(fx.chain);
    EXPECT_NEAR(modes.freqs.squaredNorm(), hess.trace(), 1e-9 * hess.trace());

    // Mirror parity of each mode.
    for (Eigen::Index m = 0; m <= top; ++m) {
        const RVec v = b.col(m);
        const RVec r = v.reverse();
        const double even = (v - r).cwiseAbs().maxCoeff();
        const double odd = (v + r).cwiseAbs().maxCoeff();
        EXPECT_LT(std::min(even, odd), 1e-9) << "mode " << m;
    }
}

TEST(Crystal, TunedFortyIonChainIsNearlyEquidistant) {
    const auto& fx = ionhop::testing::paper_chain();
    const auto s = central_spacings(fx.chain.positions, 0.75);
    ASSERT_EQ(s.size(), 29u);
    const SpacingStats st = spacing_stats(s);
    EXPECT_NEAR(st.mean, 3.6e-6, 0.01 * 3.6e-6);
    EXPECT_LT(st.relative_spread, 0.05);
}

TEST(Crystal, CentralModeSpacingIsNearEightPointFiveKilohertz) {
    const auto& fx = ionhop::testing::paper_chain();
    const IndexRange win = central_window(40, 20);
    EXPECT_EQ(win.begin, 10u);
    EXPECT_EQ(win.end, 30u);
    std::vector<double> gaps;
    for (std::size_t m = win.begin + 1; m < win.end; ++m)
        gaps.push_back((fx.modes.freqs[Eigen::Index(m)] - fx.modes.freqs[Eigen::Index(m - 1)]) / two_pi);
    double mean = 0.0;
    for (double g : gaps) mean += g / double(gaps.size());
    EXPECT_NEAR(mean, 8.5e3, 0.2 * 8.5e3);
    for (std::size_t k = 0; k < gaps.size(); ++k) EXPECT_NEAR(gaps[k], mean, 0.2 * mean) << "gap " << k;
}

TEST(Crystal, TuneQuarticFixedPointForThreeIons) {
    TrapConfig t = quadratic_trap(3, 0.3e6);
    const double spacing = std::cbrt(5.0 / 4.0) * harmonic_length(t);
    TuneOptions fixed;
    fixed.fix_quartic = true;
    const TrapConfig out = tune_quartic(t, spacing * 1.004, fixed);
    EXPECT_EQ(out.axial_quadratic, t.axial_quadratic);
    EXPECT_EQ(out.axial_quartic, 0.0);
    const TrapConfig free_out = tune_quartic(t, spacing);
    EXPECT_EQ(free_out.axial_quadratic, t.axial_quadratic);
    EXPECT_EQ(free_out.axial_quartic, t.axial_quartic);

    // Off-target spacing forces a rescale of the quadratic term only.
    const TrapConfig moved = tune_quartic(t, 2.0 * spacing, fixed);
    const auto s = central_spacings(equilibrium_positions(moved).positions);
    EXPECT_NEAR(spacing_stats(s).mean, 2.0 * spacing, 1e-9 * spacing);
}

TEST(Crystal, TuneQuarticBeatsHarmonicBaseline) {
    TrapConfig t = quadratic_trap(10, 0.5e6);
    const TrapConfig tuned = tune_quartic(t, 5e-6);
    const auto tuned_s = spacing_stats(central_spacings(equilibrium_positions(tuned).positions));
    const auto base_s = spacing_stats(central_spacings(equilibrium_positions(t).positions));
    EXPECT_NEAR(tuned_s.mean, 5e-6, 0.01 * 5e-6);
    EXPECT_LT(tuned_s.relative_variance, base_s.relative_variance);
    EXPECT_THROW(tune_quartic(quadratic_trap(2, 1e6), 5e-6), ConfigError);
}

TEST(Crystal, WeakRadialConfinementIsUnstable) {
    TrapConfig t = quadratic_trap(20, 1e6, 0.3e6);
    EXPECT_THROW(transverse_modes(equilibrium_positions(t)), RegimeError);
}

TEST(Crystal, LambDickeOverrideAndScaling) {
    ModeData synthetic;
    synthetic.freqs = RVec(2);
    synthetic.freqs << two_pi * 1e6, two_pi * 4e6;
    synthetic.participation = RMat::Identity(2, 2);
    TrapConfig t = quadratic_trap(2, 1e6);
    const ModeData m = lamb_dicke(synthetic, t, 0.1);
    EXPECT_DOUBLE_EQ(m.eta_scale[1], 0.1);
    EXPECT_NEAR(m.eta_scale[0], 0.2, 1e-15);
    EXPECT_THROW(lamb_dicke(synthetic, t), ConfigError);

    const auto& fx = ionhop::testing::paper_chain();
    EXPECT_DOUBLE_EQ(fx.modes.eta_scale[39], 0.1);
}

TEST(Crystal, LambDickeFromWaveNumberIsInSanityBand) {
    TrapConfig t = quadratic_trap(5, 0.3e6, 4e6);
    t.wave_number = constants::raman_355nm_wave_number;
    const ModeData m = compute_modes(t);
    const double com = m.eta_scale[4];
    EXPECT_GT(com, 0.05);
    EXPECT_LT(com, 0.2);
    const double expected = t.wave_number.value() * std::sqrt(constants::hbar / (2.0 * t.ion_mass * m.freqs[4]));
    EXPECT_NEAR(com, expected, 1e-15);
    EXPECT_NEAR(m.lamb_dicke(2, 4), com * m.participation(2, 4), 1e-15);
}
