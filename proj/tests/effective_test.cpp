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

#include "ionhop/effective.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gtest/gtest.h"

#include "test_fixtures.hpp"

using namespace ionhop;
using constants::pi;
using constants::two_pi;
using ionhop::testing::paper_chain;
using ionhop::testing::single_mode;
using ionhop::testing::single_tone;

namespace {

double wrap(double a) { return std::remainder(a, two_pi); }

double offdiag_norm(const CMat& k) {
    double s = 0.0;
    for (Eigen::Index a = 0; a < k.rows(); ++a)
        for (Eigen::Index b = 0; b < k.cols(); ++b)
            if (a != b) s += std::norm(k(a, b));
    return std::sqrt(s);
}

DriveProgram random_drive(const ModeData& modes, std::size_t tones, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, two_pi * 100e3);
    const IndexRange win = central_window(modes.n_modes());
    DriveProgram d = comb_program(modes, {1, 4, 7}, tones, two_pi * 13.1e3, presets::detuning(), 1.0,
                                  PhasePattern::uniform, 1e-3, win);
    for (Eigen::Index r = 0; r < d.amplitudes.rows(); ++r)
        for (Eigen::Index p = 0; p < d.amplitudes.cols(); ++p) d.amplitudes(r, p) = cplx(g(rng), g(rng));
    return d;
}

}  // namespace

TEST(Kernel, DeltaTildeLimits) {
    EXPECT_EQ(delta_tilde(3.0, 3.0, 1.0), cplx(1.0));
    EXPECT_LT(std::abs(delta_tilde(two_pi * 1e3, 0.0, 1e-3)), 1e-15);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e5, 1e5);
    for (int k = 0; k < 500; ++k) {
        const double a = u(rng), b = u(rng), t = 1e-3;
        const cplx d = delta_tilde(a, b, t);
        EXPECT_LE(std::abs(d), 1.0 + 1e-15);
        EXPECT_LE(std::abs(d), 2.0 / (std::abs(a - b) * t) + 1e-15);
        EXPECT_NEAR(std::abs(d - std::conj(delta_tilde(b, a, t))), 0.0, 1e-15);
    }
}

TEST(Effective, SingleModeStarkShift) {
    const double eta = 0.1, delta = two_pi * 400e3;
    const cplx omega = std::polar(two_pi * 250e3, 0.7);
    const ModeData m = single_mode(two_pi * 4e6, eta);
    const auto em = effective_model(single_tone(two_pi * 4e6 - delta, omega, 1e-3), m);
    const double expected = eta * eta * std::norm(omega) / (4.0 * delta);
    EXPECT_NEAR(em.k_matrix(0, 0).real(), expected, 1e-12 * expected);
    EXPECT_NEAR(em.k_matrix(0, 0).imag(), 0.0, 1e-12 * expected);
    EXPECT_NEAR(em.j_matrix(0, 0).real(), expected / 2.0, 1e-12 * expected);
}

TEST(Effective, TwoIonSpinCouplingByHand) {
    // Two ions: COM and rocking modes with participations +-1/sqrt(2).
    RVec f(2);
    f << two_pi * 3.97e6, two_pi * 4e6;
    RMat e(2, 2);
    const double ec = 0.1, er = 0.1 * std::sqrt(4.0 / 3.97), h = 1.0 / std::sqrt(2.0);
    e << -er * h, ec * h, er * h, ec * h;
    const ModeData m = ionhop::testing::synthetic_modes(f, e);
    DriveProgram d = single_tone(two_pi * 3.6e6, 0.0, 1e-3);
    d.illuminated = {0, 1};
    const cplx a0(two_pi * 200e3, two_pi * 30e3), a1(-two_pi * 50e3, two_pi * 120e3);
    d.amplitudes = CMat(2, 1);
    d.amplitudes << a0, a1;
    const CMat j = j_matrix(d, m);
    const double dr = f[0] - d.tones[0], dc = f[1] - d.tones[0];
    const cplx expected = std::conj(a0) * a1 / 8.0 * (ec * ec / 2.0 / dc - er * er / 2.0 / dr);
    EXPECT_NEAR(std::abs(j(0, 1) - expected), 0.0, 1e-12 * std::abs(expected));
    EXPECT_NEAR(std::abs(j(1, 0) - std::conj(expected)), 0.0, 1e-12 * std::abs(expected));
}

TEST(Effective, SingleIonDriveOnlyCouplesThatIon) {
    const auto& fx = paper_chain();
    const CMat j = j_matrix(presets::fig2c(fx.modes), fx.modes);
    for (Eigen::Index a = 0; a < 40; ++a)
        for (Eigen::Index b = 0; b < 40; ++b)
            if (a != 3 || b != 3) {
                EXPECT_EQ(j(a, b), cplx(0.0));
            }
    EXPECT_GT(std::abs(j(3, 3)), 0.0);
}

TEST(Effective, ZeroDriveGivesZeroModel) {
    const auto& fx = paper_chain();
    DriveProgram d = presets::fig2a(fx.modes);
    d.amplitudes.setZero();
    const auto em = effective_model(d, fx.modes);
    EXPECT_EQ(max_abs(em.j_matrix), 0.0);
    EXPECT_EQ(max_abs(em.k_matrix), 0.0);
}

TEST(Effective, CouplingsAreHermitian) {
    const auto& fx = paper_chain();
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto em = effective_model(random_drive(fx.modes, 4, seed), fx.modes);
        EXPECT_LT(hermiticity_defect(em.j_matrix), 1e-12);
        EXPECT_LT(hermiticity_defect(em.k_matrix), 1e-12);
        for (const CMat& k : em.k_tensor.per_ion) EXPECT_LT(hermiticity_defect(k), 1e-12);
    }
}

TEST(Effective, AmplitudeScalingIsQuadratic) {
    const auto& fx = paper_chain();
    DriveProgram d = random_drive(fx.modes, 3, 11);
    const auto em = effective_model(d, fx.modes);
    d.amplitudes *= 3.0;
    const auto em3 = effective_model(d, fx.modes);
    EXPECT_LT(max_abs(em3.k_matrix - 9.0 * em.k_matrix), 1e-13 * max_abs(em3.k_matrix));
    EXPECT_LT(max_abs(em3.j_matrix - 9.0 * em.j_matrix), 1e-13 * max_abs(em3.j_matrix));
}

TEST(Effective, TonePhaseCovariance) {
    // With tone 0 rotated by phi, K(phi) = K00 + K11 + e^{-i phi} X + e^{i phi} Y.
    const auto& fx = paper_chain();
    DriveProgram d = random_drive(fx.modes, 2, 5);
    auto rotated = [&](double phi) {
        DriveProgram r = d;
        r.amplitudes.col(0) *= std::polar(1.0, phi);
        return effective_model(r, fx.modes);
    };
    DriveProgram only0 = d, only1 = d;
    only0.amplitudes.col(1).setZero();
    only1.amplitudes.col(0).setZero();
    const CMat diag = effective_model(only0, fx.modes).k_matrix + effective_model(only1, fx.modes).k_matrix;
    const CMat a0 = rotated(0.0).k_matrix - diag;
    const CMat a90 = rotated(pi / 2).k_matrix - diag;
    const CMat x = (a0 + kI * a90) / 2.0;
    const CMat y = (a0 - kI * a90) / 2.0;
    const double phi = 1.234;
    const auto em = rotated(phi);
    const CMat predicted = diag + std::polar(1.0, -phi) * x + std::polar(1.0, phi) * y;
    EXPECT_LT(max_abs(em.k_matrix - predicted), 1e-12 * max_abs(em.k_matrix));
    EXPECT_LT(max_abs(em.j_matrix - effective_model(d, fx.modes).j_matrix), 1e-12 * max_abs(em.j_matrix));
}

TEST(Effective, SpinFlipReversesTensorContribution) {
    const auto& fx = paper_chain();
    const auto em = effective_model(presets::fig2a(fx.modes), fx.modes);
    const CMat up = k_matrix(em.k_tensor, std::vector<int>(40, 1));
    EXPECT_EQ(max_abs(up + em.k_matrix), 0.0);
    std::vector<int> mixed(40, -1);
    mixed[3] = 1;
    const CMat m = k_matrix(em.k_tensor, mixed);
    const CMat expected = em.k_matrix - 2.0 * em.k_tensor.per_ion[1];
    EXPECT_LT(max_abs(m - expected), 1e-12 * max_abs(em.k_matrix));
    EXPECT_THROW(k_matrix(em.k_tensor, std::vector<int>(40, 0)), ConfigError);
}

TEST(Effective, UniformIlluminationIsDiagonal) {
    const auto& fx = paper_chain();
    const auto em = effective_model(presets::uniform(fx.modes), fx.modes);
    EXPECT_LT(offdiagonal_ratio(em.k_matrix), 1e-9);
    for (Eigen::Index m = 0; m < 40; ++m) EXPECT_GT(em.k_matrix(m, m).real(), 0.0);
}

TEST(Effective, SingleToneOffDiagonalIsSuppressedByKernel) {
    const auto& fx = paper_chain();
    const DriveProgram d = comb_program(fx.modes, {3}, 1, 0.0, presets::detuning(), presets::rabi(),
                                        PhasePattern::uniform, 1e-3);
    const CMat fin = effective_model(d, fx.modes).k_matrix;
    const CMat one = effective_model(d, fx.modes, {}, KernelMode::unity).k_matrix;
    for (Eigen::Index k = 0; k < 40; ++k) {
        for (Eigen::Index m = 0; m < 40; ++m) {
            if (k == m) continue;
            const double bound = 2.0 / (std::abs(fx.modes.freqs[k] - fx.modes.freqs[m]) * d.duration);
            EXPECT_LE(std::abs(fin(k, m)), bound * std::abs(one(k, m)) * (1 + 1e-12) + 1e-300);
        }
    }
}

TEST(Effective, OffResonantCouplingsDecayWithDuration) {
    // One ion, one tone, 30 modes at incommensurate frequencies: every
    // off-diagonal entry is an off-resonant contribution.
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(3.0e6, 3.4e6);
    RVec f(30);
    for (Eigen::Index m = 0; m < 30; ++m) f[m] = two_pi * u(rng);
    std::sort(f.begin(), f.end());
    const ModeData modes = ionhop::testing::synthetic_modes(f, RMat::Constant(1, 30, 0.05));
    DriveProgram d = single_tone(two_pi * 2.8e6, presets::rabi(), 1e-3);
    const double k1 = offdiag_norm(effective_model(d, modes).k_matrix);
    d.duration = 2e-3;
    const double k2 = offdiag_norm(effective_model(d, modes).k_matrix);
    EXPECT_LE(k2, 0.6 * k1);
    d.duration = 8e-3;
    EXPECT_LE(offdiag_norm(effective_model(d, modes).k_matrix), 0.6 * 0.6 * k2);
}

TEST(Effective, TwoToneResonantPairDominates) {
    const auto& fx = paper_chain();
    const Eigen::Index m = 19;
    const double delta = presets::detuning();
    DriveProgram d = single_tone(0.0, 0.0, 1e-3);
    d.illuminated = {3};
    d.tones = RVec(2);
    d.tones << fx.modes.freqs[m] - delta, fx.modes.freqs[m + 1] - delta;
    d.amplitudes = CMat::Constant(1, 2, presets::rabi());
    const CMat k = effective_model(d, fx.modes).k_matrix;
    const double eta = fx.modes.lamb_dicke(3, m) * fx.modes.lamb_dicke(3, m + 1);
    const double pair = eta * std::norm(presets::rabi()) * (2.0 * delta) / (8.0 * delta * delta);
    EXPECT_NEAR(std::abs(k(m, m + 1)), std::abs(pair), 0.1 * std::abs(pair));
}

TEST(Effective, BandPresetsDominate) {
    const auto& fx = paper_chain();
    const IndexRange win = central_window(40, 20);
    EXPECT_GT(band_dominance(effective_model(presets::fig2a(fx.modes), fx.modes).k_matrix, win, 1), 0.8);
    EXPECT_GT(band_dominance(effective_model(presets::fig2b(fx.modes), fx.modes).k_matrix, win, 2), 0.8);
}

TEST(Effective, StaggeredCombAlternatesBandSign) {
    const auto& fx = paper_chain();
    const IndexRange win = central_window(40, 20);
    const DriveProgram st = presets::fig2c(fx.modes);
    DriveProgram in_phase = st;
    in_phase.amplitudes = st.amplitudes.cwiseAbs().cast<cplx>();
    const CMat ks = effective_model(st, fx.modes).k_matrix;
    const CMat ku = effective_model(in_phase, fx.modes).k_matrix;
    for (std::size_t band = 1; band <= 5; ++band) {
        const double phase = band_relative_phase(ks, ku, win, band);
        const double expected = band % 2 ? pi : 0.0;
        EXPECT_LT(std::abs(wrap(phase - expected)), 0.25) << "band " << band;
    }
}

TEST(Compensation, ZeroesDiagonalOnly) {
    const auto& fx = paper_chain();
    const DriveProgram d = presets::fig2a(fx.modes);
    const auto em = effective_model(d, fx.modes);
    const auto [out, drive] = diagonal_compensation(em, d, fx.modes);
    EXPECT_TRUE(out.diagonal_compensated);
    for (Eigen::Index a = 0; a < 40; ++a)
        for (Eigen::Index b = 0; b < 40; ++b)
            if (a == b) {
                EXPECT_EQ(out.k_matrix(a, b), cplx(0.0));
            } else {
                EXPECT_EQ(out.k_matrix(a, b), em.k_matrix(a, b));
            }
    ASSERT_TRUE(drive.blue.has_value());
    EXPECT_GT(drive.blue->amplitude, 0.0);
    EXPECT_EQ(drive.blue->ions, d.illuminated);
    EXPECT_EQ(drive.tones, d.tones);
    EXPECT_EQ(drive.amplitudes, d.amplitudes);
}

TEST(Compensation, AlreadyOffDiagonalIsIdentity) {
    const auto& fx = paper_chain();
    const DriveProgram d = presets::fig2a(fx.modes);
    auto em = effective_model(d, fx.modes);
    em.k_matrix.diagonal().setZero();
    const auto [out, drive] = diagonal_compensation(em, d, fx.modes);
    EXPECT_EQ(out.k_matrix, em.k_matrix);
    EXPECT_FALSE(drive.blue.has_value());
}

TEST(ErrorBudget, RedSidebandLeakage) {
    const ModeData m = single_mode(two_pi * 4e6, 0.1);
    const auto d = single_tone(two_pi * 3.6e6, two_pi * 250e3, 1e-3);
    EXPECT_EQ(error_diagnostics(d, m, {0.0}).spin_flip_red[0], 0.0);
    const auto b = error_diagnostics(d, m, {1.0});
    EXPECT_NEAR(b.spin_flip_red[0], 0.5 * 0.0625 * 0.0625, 1e-15);
    EXPECT_NEAR(b.spin_flip_red[0], 1.95e-3, 0.01e-3);
    EXPECT_NEAR(b.spin_flip_carrier[0], 2.41e-3, 0.01e-3);
    EXPECT_NEAR(error_diagnostics(d, m, {3.0}).spin_flip_red[0], 3.0 * b.spin_flip_red[0], 1e-15);
    EXPECT_THROW(error_diagnostics(d, m, {500.0}), RegimeError);
    EXPECT_THROW(error_diagnostics(d, m, {-1.0}), ConfigError);
}
