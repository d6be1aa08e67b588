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

#ifndef IONHOP_PRESETS_HPP
#define IONHOP_PRESETS_HPP

// Reference operating point: 40 171Yb+ ions, 4 MHz radial COM frequency,
// quartic axial trap tuned for 3.6 um spacing, eta_COM = 0.1, tones 400 kHz
// below the central red sidebands, 250 kHz Rabi frequency, T = 1 ms.

#include "ionhop/constants.hpp"
#include "ionhop/crystal.hpp"
#include "ionhop/drive.hpp"

namespace ionhop::presets {

inline constexpr std::size_t n_ions = 40;
inline constexpr double radial_com_hz = 4e6;
inline constexpr double target_spacing_m = 3.6e-6;
inline constexpr double eta_com = 0.1;
inline constexpr double detuning_hz = 400e3;
inline constexpr double rabi_hz = 250e3;
inline constexpr double duration_s = 1e-3;
inline constexpr std::size_t window_modes = 20;

/// Untuned starting trap; tune_quartic replaces both axial coefficients.
inline TrapConfig base_trap() {
    TrapConfig t;
    t.n_ions = n_ions;
    t.axial_quadratic = (constants::two_pi * 0.2e6) * (constants::two_pi * 0.2e6);
    t.axial_quartic = 0.0;
    t.radial_com_freq = constants::two_pi * radial_com_hz;
    t.ion_mass = constants::yb171_mass;
    return t;
}

inline TrapConfig paper_trap() { return tune_quartic(base_trap(), target_spacing_m); }

inline ModeData paper_modes(const TrapConfig& trap) {
    return lamb_dicke(transverse_modes(equilibrium_positions(trap)), trap, eta_com);
}

inline cplx rabi() { return {constants::two_pi * rabi_hz, 0.0}; }
inline double detuning() { return constants::two_pi * detuning_hz; }

/// Two in-phase tones on ions 2..5 spaced by `band` mean mode gaps.
inline DriveProgram two_tone_band(const ModeData& modes, std::size_t band) {
    const IndexRange win = central_window(modes.n_modes(), window_modes);
    const double spacing = static_cast<double>(band) * mean_mode_spacing(modes, win);
    return comb_program(modes, {2, 3, 4, 5}, 2, spacing, detuning(), rabi(), PhasePattern::uniform, duration_s, win);
}

inline DriveProgram fig2a(const ModeData& modes) { return two_tone_band(modes, 1); }
inline DriveProgram fig2b(const ModeData& modes) { return two_tone_band(modes, 2); }

/// Six staggered tones on ion 3 spaced by the mean mode gap.
inline DriveProgram fig2c(const ModeData& modes) {
    const IndexRange win = central_window(modes.n_modes(), window_modes);
    return comb_program(modes, {3}, 6, mean_mode_spacing(modes, win), detuning(), rabi(), PhasePattern::staggered,
                        duration_s, win);
}

/// Identical two-tone drive on every ion.
inline DriveProgram uniform(const ModeData& modes) {
    const IndexRange win = central_window(modes.n_modes(), window_modes);
    return comb_program(modes, all_ions(modes.n_ions()), 2, mean_mode_spacing(modes, win), detuning(), rabi(),
                        PhasePattern::uniform, duration_s, win);
}

// Two-ion, two-mode system small enough for the exact oracle. T sits a quarter
// detuning period off the 400 kHz grid so residual spin flips do not vanish at T.
inline constexpr double oracle_axial_hz = 1e6;
inline constexpr double oracle_duration_s = 1.000625e-3;

inline TrapConfig oracle_trap() {
    TrapConfig t;
    t.n_ions = 2;
    t.axial_quadratic = (constants::two_pi * oracle_axial_hz) * (constants::two_pi * oracle_axial_hz);
    t.radial_com_freq = constants::two_pi * radial_com_hz;
    t.ion_mass = constants::yb171_mass;
    return t;
}

inline ModeData oracle_modes() { return paper_modes(oracle_trap()); }

/// Two tones on ion 0 spaced by the mode gap, so the modes exchange phonons.
inline DriveProgram oracle_drive(const ModeData& modes) {
    const IndexRange all{0, modes.n_modes()};
    return comb_program(modes, {0}, 2, mean_mode_spacing(modes, all), detuning(), rabi(), PhasePattern::uniform,
                        oracle_duration_s, all);
}

}  // namespace ionhop::presets

#endif  // IONHOP_PRESETS_HPP
