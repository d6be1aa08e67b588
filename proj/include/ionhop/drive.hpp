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

#ifndef IONHOP_DRIVE_HPP
#define IONHOP_DRIVE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <vector>

#include "ionhop/constants.hpp"
#include "ionhop/crystal.hpp"
#include "ionhop/types.hpp"

namespace ionhop {

// Angular <-> ordinary frequency conversion on a grid that round-trips.
//
// Multiplication by 2 pi is not a bijection on doubles, so angular values
// produced by the library are snapped onto the image of the Hz grid. For a
// snapped value `to_hz` returns an h with from_hz(h) == value bit for bit.
inline double from_hz(double hz) { return hz * constants::two_pi; }

inline double to_hz(double angular) {
    const double guess = angular / constants::two_pi;
    if (from_hz(guess) == angular || !std::isfinite(guess)) return guess;
    double down = guess, up = guess;
    for (int k = 0; k < 8; ++k) {
        down = std::nextafter(down, -std::numeric_limits<double>::infinity());
        up = std::nextafter(up, std::numeric_limits<double>::infinity());
        if (from_hz(down) == angular) return down;
        if (from_hz(up) == angular) return up;
    }
    return guess;
}

inline double snap_angular(double angular) { return from_hz(to_hz(angular)); }

inline cplx snap_angular(cplx angular) { return {snap_angular(angular.real()), snap_angular(angular.imag())}; }

/// Single blue-sideband tone recorded when on-site terms are cancelled.
/// The cancellation itself is applied analytically to the model; these
/// parameters are the single-tone Stark-shift match for the annotation.
struct BlueCompensation {
    std::vector<std::size_t> ions;
    double detuning = 0.0;   // rad/s, from the blue sideband of each mode
    double amplitude = 0.0;  // rad/s, common to all listed ions
    double residual_rms = 0.0;  // rms of diag(K) left by the single-tone model, rad/s
    bool modeled = true;
};

struct DriveProgram {
    RVec tones;                          // nu_p, rad/s, strictly increasing
    CMat amplitudes;                     // Omega(ion row, tone), rad/s
    std::vector<std::size_t> illuminated;  // ion index per amplitude row
    double duration = 0.0;               // s
    std::optional<BlueCompensation> blue;

    std::size_t n_tones() const { return static_cast<std::size_t>(tones.size()); }
    std::size_t n_lit() const { return illuminated.size(); }

    void validate(std::size_t n_ions) const {
        if (tones.size() < 1) throw ConfigError("drive: at least one tone required");
        if (illuminated.empty()) throw ConfigError("drive: at least one illuminated ion required");
        if (!(duration > 0.0)) throw ConfigError("drive: duration must be > 0");
        if (amplitudes.rows() != static_cast<Eigen::Index>(illuminated.size()) || amplitudes.cols() != tones.size())
            throw ConfigError("drive: amplitude matrix must be (illuminated ions) x (tones)");
        for (Eigen::Index p = 0; p < tones.size(); ++p) {
            if (!(tones[p] > 0.0) || !std::isfinite(tones[p])) throw ConfigError("drive: tone frequencies must be > 0");
            if (p > 0 && !(tones[p] > tones[p - 1]))
                throw ConfigError("drive: tone frequencies must be strictly increasing");
        }
        std::set<std::size_t> seen;
        for (std::size_t i : illuminated) {
            if (i >= n_ions) throw ConfigError("drive: illuminated ion index out of range");
            if (!seen.insert(i).second) throw ConfigError("drive: duplicate illuminated ion index");
        }
        if (!amplitudes.allFinite()) throw ConfigError("drive: amplitudes must be finite");
    }

    /// Snap every frequency onto the exactly serialisable grid.
    DriveProgram& canonicalize() {
        for (Eigen::Index p = 0; p < tones.size(); ++p) tones[p] = snap_angular(tones[p]);
        for (Eigen::Index r = 0; r < amplitudes.rows(); ++r)
            for (Eigen::Index c = 0; c < amplitudes.cols(); ++c) amplitudes(r, c) = snap_angular(amplitudes(r, c));
        return *this;
    }

    double power() const { return amplitudes.squaredNorm(); }
};

inline std::vector<std::size_t> all_ions(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

/// Detuning of tone p from the red sideband of mode m.
inline double sideband_detuning(const ModeData& modes, const DriveProgram& drive, Eigen::Index p, Eigen::Index m) {
    return modes.freqs[m] - drive.tones[p];
}

inline void require_no_resonance(const DriveProgram& drive, const ModeData& modes, const char* where) {
    for (Eigen::Index p = 0; p < drive.tones.size(); ++p) {
        for (Eigen::Index m = 0; m < modes.freqs.size(); ++m) {
            if (sideband_detuning(modes, drive, p, m) == 0.0) {
                std::ostringstream msg;
                msg << where << ": tone " << p << " is exactly resonant with the red sideband of mode " << m;
                throw RegimeError(msg.str());
            }
        }
    }
}

struct DispersiveReport {
    std::vector<RMat> epsilon;  // [lit ion] (mode x tone) of |eta_im Omega_ip / Delta_pm|
    double max_epsilon = 0.0;
    double min_detuning = std::numeric_limits<double>::infinity();  // rad/s
    double spectral_resolution = std::numeric_limits<double>::infinity();  // min |nu_p - nu_q| T
    double threshold = 0.0;
    bool epsilon_violation = false;
    bool resolution_violation = false;

    bool ok() const { return !epsilon_violation && !resolution_violation; }
};

inline DispersiveReport dispersive_check(const DriveProgram& drive, const ModeData& modes, double threshold) {
    drive.validate(modes.n_ions());
    require_no_resonance(drive, modes, "dispersive_check");
    DispersiveReport rep;
    rep.threshold = threshold;
    const Eigen::Index n = modes.freqs.size();
    const Eigen::Index np = drive.tones.size();
    for (Eigen::Index p = 0; p < np; ++p)
        for (Eigen::Index m = 0; m < n; ++m)
            rep.min_detuning = std::min(rep.min_detuning, std::abs(sideband_detuning(modes, drive, p, m)));
    for (std::size_t r = 0; r < drive.n_lit(); ++r) {
        const Eigen::Index ion = static_cast<Eigen::Index>(drive.illuminated[r]);
        RMat eps(n, np);
        for (Eigen::Index m = 0; m < n; ++m)
            for (Eigen::Index p = 0; p < np; ++p)
                eps(m, p) = std::abs(modes.lamb_dicke(ion, m) * drive.amplitudes(Eigen::Index(r), p) /
                                     sideband_detuning(modes, drive, p, m));
        rep.max_epsilon = std::max(rep.max_epsilon, eps.maxCoeff());
        rep.epsilon.push_back(std::move(eps));
    }
    for (Eigen::Index p = 1; p < np; ++p)
        rep.spectral_resolution =
            std::min(rep.spectral_resolution, std::abs(drive.tones[p] - drive.tones[p - 1]) * drive.duration);
    rep.epsilon_violation = rep.max_epsilon > threshold;
    rep.resolution_violation = rep.spectral_resolution < constants::two_pi;
    return rep;
}

enum class PhasePattern { uniform, staggered };

/// Arithmetic tone comb centred `base_detuning` below the mean red-sideband
/// frequency of the modes in `window`. Staggered combs flip the sign of every
/// odd tone (0-based).
inline DriveProgram comb_program(const ModeData& modes, const std::vector<std::size_t>& ions, std::size_t n_tones,
                                 double tone_spacing, double base_detuning, cplx amplitude, PhasePattern pattern,
                                 double duration, std::optional<IndexRange> window = {}) {
    if (n_tones < 1) throw ConfigError("comb_program: n_tones must be >= 1");
    if (base_detuning == 0.0) throw ConfigError("comb_program: base_detuning must be nonzero");
    if (n_tones > 1 && !(tone_spacing > 0.0)) throw ConfigError("comb_program: tone spacing must be > 0");
    const IndexRange win = window.value_or(central_window(modes.n_modes()));
    if (win.size() == 0 || win.end > modes.n_modes()) throw ConfigError("comb_program: bad mode window");

    double centre = 0.0;
    for (std::size_t m = win.begin; m < win.end; ++m) centre += modes.freqs[Eigen::Index(m)];
    centre = centre / static_cast<double>(win.size()) - base_detuning;

    DriveProgram d;
    d.duration = duration;
    d.illuminated = ions;
    d.tones.resize(Eigen::Index(n_tones));
    d.amplitudes.resize(Eigen::Index(ions.size()), Eigen::Index(n_tones));
    for (std::size_t p = 0; p < n_tones; ++p) {
        const double offset = (static_cast<double>(p) - 0.5 * static_cast<double>(n_tones - 1)) * tone_spacing;
        d.tones[Eigen::Index(p)] = centre + offset;
        const double sign = (pattern == PhasePattern::staggered && p % 2 == 1) ? -1.0 : 1.0;
        for (std::size_t r = 0; r < ions.size(); ++r) d.amplitudes(Eigen::Index(r), Eigen::Index(p)) = sign * amplitude;
    }
    d.canonicalize();
    d.validate(modes.n_ions());
    require_no_resonance(d, modes, "comb_program");
    return d;
}

/// Mean gap between consecutive mode frequencies in a window, rad/s.
inline double mean_mode_spacing(const ModeData& modes, IndexRange window) {
    if (window.size() < 2) return 0.0;
    return (modes.freqs[Eigen::Index(window.end - 1)] - modes.freqs[Eigen::Index(window.begin)]) /
           static_cast<double>(window.size() - 1);
}

}  // namespace ionhop

#endif  // IONHOP_DRIVE_HPP
