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

#include "ionhop/oracle.hpp"

#include <cmath>
#include <random>

#include "gtest/gtest.h"

#include "ionhop/evolve.hpp"
#include "test_fixtures.hpp"

using namespace ionhop;
using constants::pi;
using constants::two_pi;
using ionhop::testing::single_mode;
using ionhop::testing::single_tone;
using ionhop::testing::synthetic_modes;

namespace {

// Two ions on two modes 50 kHz apart; COM-like and stretch-like participation.
ModeData two_modes() {
    RVec f(2);
    f << two_pi * 1.0e6, two_pi * 1.05e6;
    RMat eta(2, 2);
    eta << 0.07, 0.07, 0.07, -0.07;
    return synthetic_modes(f, eta);
}

// Tones 100 kHz below each red sideband, on ion 0 only, T off the commensurate grid.
DriveProgram two_tone_drive(cplx second = 1.0) {
    DriveProgram d;
    d.tones.resize(2);
    d.tones << two_pi * 0.9e6, two_pi * 0.95e6;
    d.amplitudes.resize(1, 2);
    d.amplitudes << two_pi * 20e3, two_pi * 20e3 * second;
    d.illuminated = {0};
    d.duration = 0.513e-3;
    return d;
}

HilbertSpec spec_for(const ModeData& m, unsigned cutoff) { return {m.n_ions(), m.n_modes(), cutoff}; }

}  // namespace

TEST(HilbertSpec, BasisRoundTripAndOrdering) {
    const HilbertSpec s{3, 2, 3};
    ASSERT_EQ(s.dimension(), 8u * 16u);
    for (std::size_t i = 0; i < s.dimension(); ++i) EXPECT_EQ(s.encode(s.decode(i)), i);
    // Spin index major, little-endian modes.
    EXPECT_EQ(s.encode({{0, 0, 0}, {1, 0}}), 1u);
    EXPECT_EQ(s.encode({{0, 0, 0}, {0, 1}}), 4u);
    EXPECT_EQ(s.encode({{1, 0, 0}, {0, 0}}), 16u);
    EXPECT_EQ(s.encode({{0, 0, 1}, {2, 3}}), 4u * 16u + 2u + 12u);
    EXPECT_THROW(s.encode({{0, 0, 0}, {4, 0}}), ConfigError);
}

TEST(HilbertSpec, DimensionGuard) {
    EXPECT_THROW((HilbertSpec{21, 1, 1}.validate()), SizeError);
    EXPECT_THROW((HilbertSpec{10, 3, 15}.validate()), SizeError);
    EXPECT_NO_THROW((HilbertSpec{4, 4, 7}.validate()));
    EXPECT_THROW((HilbertSpec{1, 1, 0}.validate()), ConfigError);
}

TEST(Hamiltonian, ZeroDriveIsZero) {
    const ModeData m = two_modes();
    DriveProgram d = two_tone_drive();
    d.amplitudes.setZero();
    EXPECT_EQ(hamiltonian_at(1e-6, d, m, spec_for(m, 2), true).nonZeros(), 0);
}

TEST(Hamiltonian, ResonantSingleIonMatchesHandWrittenMatrix) {
    const double eta = 0.1, omega = two_pi * 1e6;
    const cplx rabi = std::polar(two_pi * 50e3, 0.3);
    const ModeData m = single_mode(omega, eta);
    const auto h = CMat(hamiltonian_at(0.37e-6, single_tone(omega, rabi, 1e-3), m, {1, 1, 1}));
    // Basis |dn,0>, |dn,1>, |up,0>, |up,1>.
    CMat expected = CMat::Zero(4, 4);
    expected(2, 1) = 0.5 * kI * eta * std::conj(rabi);
    expected(1, 2) = std::conj(expected(2, 1));
    EXPECT_LT(max_abs(h - expected), 1e-9);
    EXPECT_NEAR(std::abs(h(2, 1)), eta * std::abs(rabi) / 2.0, 1e-9);
}

TEST(Hamiltonian, HermitianAtRandomTimes) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const ModeData m = two_modes();
    DriveProgram d = two_tone_drive();
    d.illuminated = {0, 1};
    d.amplitudes.resize(2, 2);
    for (Eigen::Index i = 0; i < d.amplitudes.size(); ++i) d.amplitudes(i) = two_pi * 30e3 * cplx(u(rng), u(rng));
    for (int k = 0; k < 5; ++k) {
        const CMat h(hamiltonian_at(1e-3 * (0.5 + 0.5 * u(rng)), d, m, spec_for(m, 3), true));
        EXPECT_LT(max_abs(h - h.adjoint()), 1e-14 * max_abs(h));
        EXPECT_GT(max_abs(h), 0.0);
    }
}

TEST(Hamiltonian, RejectsSpecMismatch) {
    const ModeData m = two_modes();
    EXPECT_THROW(hamiltonian_at(0.0, two_tone_drive(), m, {3, 2, 2}), ConfigError);
    EXPECT_THROW(hamiltonian_at(0.0, two_tone_drive(), m, {2, 1, 2}), ConfigError);
}

TEST(Propagate, ZeroDriveLeavesStateUnchanged) {
    const ModeData m = two_modes();
    DriveProgram d = two_tone_drive();
    d.amplitudes.setZero();
    const HilbertSpec s = spec_for(m, 2);
    QuantumState psi = fock_state(s, {1, 1});
    psi.amplitudes[3] = cplx(0.0, 1.0);
    psi.amplitudes.normalize();
    const QuantumState out = propagate(psi, d, m, 0.1e-3, 0);
    EXPECT_EQ(max_abs(out.amplitudes - psi.amplitudes), 0.0);
}

TEST(Propagate, ResonantRabiFlopReturns) {
    const double eta = 0.1, omega = two_pi * 1e6, rabi = two_pi * 100e3;
    const ModeData m = single_mode(omega, eta);
    const HilbertSpec s{1, 1, 3};
    const double period = two_pi / (eta * rabi);
    const DriveProgram d = single_tone(omega, rabi, period);
    const QuantumState start = fock_state(s, {1});
    const std::size_t steps = std::max<std::size_t>(400, minimum_steps(d, period));

    const QuantumState back = propagate(start, d, m, period, steps);
    EXPECT_GT(std::norm(back.amplitudes[1]), 0.999);
    EXPECT_NEAR(std::norm(back.amplitudes[1]), 1.0, 1e-9);

    // Halfway the phonon is fully absorbed into |up,0>.
    const QuantumState half = propagate(start, d, m, period / 2.0, steps / 2);
    EXPECT_NEAR(std::norm(half.amplitudes[Eigen::Index(s.encode({{1}, {0}}))]), 1.0, 1e-9);
    // P(|dn,1>) = cos^2(g t), g = eta Omega / 2.
    const double t = 0.13 * period;
    const QuantumState mid = propagate(start, d, m, t, 0);
    EXPECT_NEAR(std::norm(mid.amplitudes[1]), std::pow(std::cos(0.5 * eta * rabi * t), 2), 1e-9);
}

TEST(Propagate, DispersiveStarkPhase) {
    const double eta = 0.1, omega = two_pi * 1e6, delta = two_pi * 100e3;
    const double rabi = 0.05 * delta / eta;
    const ModeData m = single_mode(omega, eta);
    const HilbertSpec s{1, 1, 3};
    const DriveProgram d = single_tone(omega - delta, rabi, 3e-3);
    QuantumState psi = fock_state(s, {0});
    psi.amplitudes[1] = 1.0;
    psi.amplitudes /= std::sqrt(2.0);
    const QuantumState out = propagate(psi, d, m, d.duration, 0);
    const double stark = std::pow(eta * rabi, 2) / (4.0 * delta);
    // |dn,0> is stationary, so the relative phase is -stark * T.
    const double measured = -std::arg(out.amplitudes[1] / out.amplitudes[0]);
    ASSERT_GT(stark * d.duration, 1.0);
    ASSERT_LT(stark * d.duration, pi);
    EXPECT_NEAR(measured / (stark * d.duration), 1.0, 0.05);
}

TEST(Propagate, ReportsNonConvergence) {
    const ModeData m = two_modes();
    PropagateOptions opt;
    opt.doubling_tolerance = 1e-30;
    opt.max_refinements = 0;
    const HilbertSpec s = spec_for(m, 2);
    EXPECT_THROW(propagate(fock_state(s, {1, 0}), two_tone_drive(), m, 0.05e-3, 0, opt), ConvergenceError);
}

TEST(Propagate, StepCapIsEnforced) {
    const ModeData m = two_modes();
    const DriveProgram d = two_tone_drive();
    const HilbertSpec s = spec_for(m, 2);
    PropagateOptions opt;
    opt.check_doubling = false;
    const auto run = propagate_columns(fock_state(s, {1, 0}).amplitudes, d, m, s, 0.05e-3, 3, opt);
    EXPECT_EQ(run.steps, minimum_steps(d, 0.05e-3));
    EXPECT_GE(double(run.steps), 0.05e-3 * 20.0 * 0.95e6);
}

TEST(Effective, ZeroDriveIsIdentity) {
    const ModeData m = two_modes();
    DriveProgram d = two_tone_drive();
    d.amplitudes.setZero();
    const HilbertSpec s = spec_for(m, 3);
    const CMat u = effective_propagator(effective_model(d, m, IndexRange{0, 2}), s, d.duration);
    EXPECT_LT(max_abs(u - CMat::Identity(u.rows(), u.cols())), 1e-14);
}

TEST(Effective, AllDownSectorMatchesModeUnitary) {
    const ModeData m = two_modes();
    const DriveProgram d = scale_to_epsilon(two_tone_drive(std::polar(1.0, 0.8)), m, 0.08);
    const HilbertSpec s = spec_for(m, 3);
    const EffectiveModel model = effective_model(d, m, IndexRange{0, 2});
    const CMat u = effective_propagator(model, s, d.duration);
    const ModeUnitary w = mode_unitary(model.k_matrix, d.duration);
    ASSERT_GT(std::abs(w.matrix(0, 1)), 0.05);
    const cplx vac = u(0, 0);
    EXPECT_NEAR(std::abs(vac), 1.0, 1e-12);
    for (unsigned k = 0; k < 2; ++k)
        for (unsigned j = 0; j < 2; ++j) {
            FockPattern in(2, 0), out(2, 0);
            in[j] = 1;
            out[k] = 1;
            const cplx amp = u(Eigen::Index(s.encode({{0, 0}, out})), Eigen::Index(s.encode({{0, 0}, in}))) / vac;
            EXPECT_LT(std::abs(amp - w.matrix(k, j)), 1e-12);
        }
    // Two-phonon probabilities agree with the permanent formula.
    const auto in_idx = Eigen::Index(s.encode({{0, 0}, {1, 1}}));
    for (const auto& [pat, p] : output_distribution(w, {1, 1}))
        EXPECT_NEAR(std::norm(u(Eigen::Index(s.encode({{0, 0}, pat})), in_idx)), p, 1e-12);
}

TEST(Effective, SpinHoppingAnnihilatesAllDown) {
    const HilbertSpec s{3, 2, 2};
    EffectiveModel model;
    model.j_matrix = CMat::Zero(3, 3);
    model.j_matrix(0, 1) = cplx(2e3, 1e3);
    model.j_matrix(1, 0) = std::conj(model.j_matrix(0, 1));
    model.j_matrix(1, 2) = model.j_matrix(2, 1) = 4e3;
    model.k_matrix = CMat::Zero(2, 2);
    const CMat u = effective_propagator(model, s, 1e-3);
    const Eigen::Index pd = Eigen::Index(s.phonon_dimension());
    EXPECT_LT(max_abs(u.topLeftCorner(pd, pd) - CMat::Identity(pd, pd)), 1e-13);
    // Outside the all-down sector the hopping acts.
    const Eigen::Index up0 = Eigen::Index(s.encode({{1, 0, 0}, {0, 0}}));
    EXPECT_LT(std::norm(u(up0, up0)), 0.999);
    EXPECT_LT(unitarity_defect(u), 1e-12);
}

TEST(Compare, IdenticalInputs) {
    const ModeData m = two_modes();
    const DriveProgram d = two_tone_drive();
    const HilbertSpec s = spec_for(m, 3);
    const CMat u = effective_propagator(effective_model(d, m, IndexRange{0, 2}), s, d.duration);
    for (bool down : {true, false}) {
        const SectorSelector sel{down, 2};
        const auto in = sector_inputs(s, sel);
        EXPECT_EQ(in.size(), down ? 6u : 24u);
        const CMat exact = u * sector_columns(s, in);
        const CompareReport r = compare(exact, u, s, sel, 0.01);
        EXPECT_NEAR(r.fidelity, 1.0, 1e-12);
        EXPECT_NEAR(r.postselected_fidelity, 1.0, 1e-12);
        EXPECT_LT(r.trace_distance, 1e-6);
        EXPECT_LT(r.max_deviation, 1e-12);
        EXPECT_EQ(r.epsilon_used, 0.01);
    }
}

TEST(Compare, EpsilonSweepScalesQuadratically) {
    const ModeData m = two_modes();
    const HilbertSpec s = spec_for(m, 3);
    const std::vector<double> eps{0.02, 0.04, 0.08};
    SweepOptions opt;
    opt.window_samples = 8;
    const auto pts = epsilon_sweep(two_tone_drive(), m, s, eps, opt);
    std::vector<double> infid, window;
    for (const auto& p : pts) {
        infid.push_back(1.0 - p.report.fidelity);
        window.push_back(p.window_infidelity);
        EXPECT_LT(p.run.leakage, 1e-6);
        EXPECT_LT(p.run.doubling_error, 1e-8);
        EXPECT_LT(1.0 - p.report.postselected_fidelity, infid.back());
        EXPECT_LT(p.window_postselected_infidelity, p.window_infidelity);
    }
    for (const auto* v : {&infid, &window}) {
        EXPECT_LT((*v)[0], (*v)[1]);
        EXPECT_LT((*v)[1], (*v)[2]);
        const double slope = log_log_slope(eps, *v);
        EXPECT_GE(slope, 1.5);
        EXPECT_LE(slope, 2.5);
        EXPECT_LT((*v)[1], 1e-2);
    }
}

TEST(Compare, WindowOfOneSampleIsThePointValue) {
    const ModeData m = two_modes();
    const auto pts = epsilon_sweep(two_tone_drive(), m, spec_for(m, 2), {0.03});
    EXPECT_EQ(pts[0].window_infidelity, 1.0 - pts[0].report.fidelity);
    EXPECT_GT(pts[0].window_infidelity, 0.0);
}

TEST(Compare, ComplexAmplitudesAgree) {
    // A phase on one tone rotates the inter-mode hopping; the exact run must follow.
    const ModeData m = two_modes();
    const HilbertSpec s = spec_for(m, 3);
    const auto real = epsilon_sweep(two_tone_drive(), m, s, {0.04});
    const auto cpx = epsilon_sweep(two_tone_drive(std::polar(1.0, 1.9)), m, s, {0.04});
    EXPECT_LT(1.0 - cpx[0].report.fidelity, 1e-2);
    EXPECT_LT(1.0 - cpx[0].report.fidelity, 3.0 * (1.0 - real[0].report.fidelity));
    EXPECT_LT(cpx[0].report.max_deviation, 0.1);
}

TEST(Compare, SpinFlipMatchesErrorBudget) {
    const double eta = 0.1, omega = two_pi * 1e6, delta = two_pi * 100e3;
    const ModeData m = single_mode(omega, eta);
    const HilbertSpec s{1, 1, 3};
    for (unsigned n : {1u, 2u}) {
        const DriveProgram d = single_tone(omega - delta, 0.05 * delta / eta, 0.2e-3);
        const double predicted = error_diagnostics(d, m, {double(n)}).spin_flip_red[0];
        PropagateOptions opt;
        const auto run = propagate_columns(fock_state(s, {n}).amplitudes, d, m, s, d.duration, 0, opt);
        EXPECT_GT(run.mean_flip[0], predicted / 3.0);
        EXPECT_LT(run.mean_flip[0], predicted * 3.0);
        EXPECT_NEAR(run.mean_flip[0] / predicted, 1.0, 0.1);
    }
    // The carrier term alone flips the vacuum.
    const DriveProgram d = single_tone(omega - delta, two_pi * 40e3, 0.2e-3);
    const auto b = error_diagnostics(d, m, {0.0});
    PropagateOptions opt;
    opt.carrier = true;
    const auto run = propagate_columns(fock_state(s, {0}).amplitudes, d, m, s, d.duration, 0, opt);
    EXPECT_NEAR(run.mean_flip[0] / b.spin_flip_carrier[0], 1.0, 0.1);
}
