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

#include "ionhop/drive.hpp"

#include <cmath>
#include <random>

#include "gtest/gtest.h"

#include "test_fixtures.hpp"

using namespace ionhop;
using constants::two_pi;
using ionhop::testing::paper_chain;
using ionhop::testing::single_mode;
using ionhop::testing::single_tone;

TEST(Drive, HzRoundTripIsBitExactOnGrid) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(1e3, 1e7);
    for (int k = 0; k < 2000; ++k) {
        const double w = snap_angular(two_pi * u(rng));
        EXPECT_EQ(from_hz(to_hz(w)), w);
        EXPECT_EQ(snap_angular(w), w);
    }
    EXPECT_EQ(to_hz(from_hz(4e6)), 4e6);
}

TEST(Drive, ValidateRejectsMalformedPrograms) {
    DriveProgram d = single_tone(two_pi * 3.6e6, two_pi * 250e3, 1e-3);
    EXPECT_NO_THROW(d.validate(1));
    DriveProgram bad = d;
    bad.illuminated = {1};
    EXPECT_THROW(bad.validate(1), ConfigError);
    bad = d;
    bad.duration = 0.0;
    EXPECT_THROW(bad.validate(1), ConfigError);
    bad = d;
    bad.tones = RVec(2);
    bad.tones << 2.0, 1.0;
    bad.amplitudes = CMat::Ones(1, 2);
    EXPECT_THROW(bad.validate(1), ConfigError);
    bad = d;
    bad.illuminated = {0, 0};
    bad.amplitudes = CMat::Ones(2, 1);
    EXPECT_THROW(bad.validate(2), ConfigError);
    bad = d;
    bad.amplitudes = CMat::Ones(2, 1);
    EXPECT_THROW(bad.validate(1), ConfigError);
}

TEST(Drive, ZeroAmplitudeHasZeroEpsilon) {
    const ModeData m = single_mode(two_pi * 4e6, 0.1);
    const auto rep = dispersive_check(single_tone(two_pi * 3.6e6, 0.0, 1e-3), m, 0.1);
    EXPECT_EQ(rep.max_epsilon, 0.0);
    EXPECT_TRUE(rep.ok());
}

TEST(Drive, EpsilonMatchesSingleToneExample) {
    const ModeData m = single_mode(two_pi * 4e6, 0.1);
    const auto drive = single_tone(two_pi * (4e6 - 400e3), two_pi * 250e3, 1e-3);
    const auto rep = dispersive_check(drive, m, 0.1);
    EXPECT_NEAR(rep.max_epsilon, 0.0625, 1e-12);
    EXPECT_NEAR(rep.min_detuning, two_pi * 400e3, 1e-6);
    EXPECT_FALSE(rep.epsilon_violation);
    EXPECT_TRUE(dispersive_check(drive, m, 0.05).epsilon_violation);
}

TEST(Drive, EpsilonIsHomogeneousInAmplitude) {
    const auto& fx = paper_chain();
    DriveProgram d = presets::fig2a(fx.modes);
    const double e1 = dispersive_check(d, fx.modes, 1.0).max_epsilon;
    d.amplitudes *= 2.0;
    EXPECT_DOUBLE_EQ(dispersive_check(d, fx.modes, 1.0).max_epsilon, 2.0 * e1);
}

TEST(Drive, UnresolvedTonesAreFlagged) {
    const ModeData m = single_mode(two_pi * 4e6, 0.1);
    DriveProgram d = single_tone(two_pi * 3.6e6, two_pi * 10e3, 1e-3);
    d.tones = RVec(2);
    d.tones << two_pi * 3.6e6, two_pi * (3.6e6 + 500.0);
    d.amplitudes = CMat::Constant(1, 2, two_pi * 10e3);
    const auto rep = dispersive_check(d, m, 0.1);
    EXPECT_NEAR(rep.spectral_resolution, two_pi * 0.5, 1e-6);
    EXPECT_TRUE(rep.resolution_violation);
    EXPECT_FALSE(rep.ok());
}

TEST(Drive, ExactResonanceIsAHardError) {
    const ModeData m = single_mode(two_pi * 4e6, 0.1);
    EXPECT_THROW(dispersive_check(single_tone(two_pi * 4e6, two_pi * 1e3, 1e-3), m, 0.1), RegimeError);
}

TEST(Drive, CombHasRequestedGeometry) {
    const auto& fx = paper_chain();
    const IndexRange win = central_window(40, 20);
    const double spacing = mean_mode_spacing(fx.modes, win);
    const DriveProgram d = comb_program(fx.modes, {3}, 6, spacing, presets::detuning(), presets::rabi(),
                                        PhasePattern::staggered, 1e-3, win);
    EXPECT_NO_THROW(d.validate(40));
    double centre = 0.0;
    for (std::size_t m = win.begin; m < win.end; ++m) centre += fx.modes.freqs[Eigen::Index(m)] / 20.0;
    EXPECT_NEAR(d.tones.mean(), centre - presets::detuning(), 1e-6);
    for (Eigen::Index p = 1; p < 6; ++p) EXPECT_NEAR(d.tones[p] - d.tones[p - 1], spacing, 1e-6);
    for (Eigen::Index p = 0; p < 6; ++p) EXPECT_EQ(d.amplitudes(0, p), (p % 2 ? -1.0 : 1.0) * presets::rabi());
    for (Eigen::Index p = 0; p < 6; ++p) EXPECT_EQ(snap_angular(d.tones[p]), d.tones[p]);
}

TEST(Drive, PhasePatternOnlyChangesAmplitudes) {
    const auto& fx = paper_chain();
    const double s = two_pi * 8.5e3;
    const auto u = comb_program(fx.modes, {2, 3}, 4, s, presets::detuning(), presets::rabi(), PhasePattern::uniform, 1e-3);
    const auto st = comb_program(fx.modes, {2, 3}, 4, s, presets::detuning(), presets::rabi(), PhasePattern::staggered, 1e-3);
    EXPECT_EQ(u.tones, st.tones);
    EXPECT_EQ(u.amplitudes.cwiseAbs(), st.amplitudes.cwiseAbs());
}

TEST(Drive, CombRejectsBadArguments) {
    const auto& fx = paper_chain();
    EXPECT_THROW(comb_program(fx.modes, {0}, 0, 1.0, 1.0, 1.0, PhasePattern::uniform, 1e-3), ConfigError);
    EXPECT_THROW(comb_program(fx.modes, {0}, 2, 1.0, 0.0, 1.0, PhasePattern::uniform, 1e-3), ConfigError);
    EXPECT_THROW(comb_program(fx.modes, {40}, 2, 1.0, 1.0, 1.0, PhasePattern::uniform, 1e-3), ConfigError);
}

TEST(Drive, PresetsMatchTheirRecipes) {
    const auto& fx = paper_chain();
    const IndexRange win = central_window(40, 20);
    const double gap = mean_mode_spacing(fx.modes, win);

    const auto a = presets::fig2a(fx.modes);
    EXPECT_EQ(a.illuminated, (std::vector<std::size_t>{2, 3, 4, 5}));
    ASSERT_EQ(a.n_tones(), 2u);
    EXPECT_NEAR(a.tones[1] - a.tones[0], gap, 1e-6);
    EXPECT_EQ(a.amplitudes(0, 0), a.amplitudes(0, 1));

    const auto b = presets::fig2b(fx.modes);
    EXPECT_NEAR(b.tones[1] - b.tones[0], 2.0 * gap, 1e-6);

    const auto c = presets::fig2c(fx.modes);
    EXPECT_EQ(c.illuminated, (std::vector<std::size_t>{3}));
    EXPECT_EQ(c.n_tones(), 6u);

    const auto u = presets::uniform(fx.modes);
    EXPECT_EQ(u.n_lit(), 40u);

    for (const auto* d : {&a, &b, &c, &u}) {
        const auto rep = dispersive_check(*d, fx.modes, 0.1);
        EXPECT_TRUE(rep.ok());
        EXPECT_GT(rep.spectral_resolution, two_pi);
    }
}
