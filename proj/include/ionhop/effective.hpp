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

#ifndef IONHOP_EFFECTIVE_HPP
#define IONHOP_EFFECTIVE_HPP

// Second-order effective couplings generated by a dispersive multi-tone
// red-sideband drive:
//
//   J_ij      = 1/8 sum_{m,p} eta_im eta_jm Omega*_ip Omega_jp / D_pm
//   K^(i)_km  = sum_{p,q} eta_ik eta_im Omega_iq Omega*_ip (D_qm + D_pk)
//                         / (8 D_pk D_qm) * dt(D_qm, D_pk)
//   K_km      = -sum_i <sz_i> K^(i)_km
//
// with D_pm = w_m - nu_p and the finite-time kernel
// dt(a, b) = exp(i (a - b) T / 2) sinc((a - b) T / 2).
//
// All couplings are angular rates (H / hbar, rad/s).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "ionhop/crystal.hpp"
#include "ionhop/drive.hpp"
#include "ionhop/types.hpp"

namespace ionhop {

inline double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

inline cplx delta_tilde(double delta_qm, double delta_pk, double duration) {
    const double x = 0.5 * (delta_qm - delta_pk) * duration;
    return std::polar(sinc(x), x);
}

enum class KernelMode {
    finite_time,  // exact sinc kernel at the drive duration
    unity,        // kernel replaced by 1 (no energy selection), diagnostic only
};

/// Ion-independent tone kernel G_km(p, q) such that
/// K^(i)_km = eta_ik eta_im sum_{p,q} Omega*_ip G_km(p, q) Omega_iq.
class ToneKernel {
public:
    ToneKernel(const RVec& tones, const RVec& freqs, double duration, KernelMode mode = KernelMode::finite_time)
        : n_(freqs.size()), p_(tones.size()), data_(static_cast<std::size_t>(n_ * n_ * p_ * p_)) {
        for (Eigen::Index k = 0; k < n_; ++k) {
            for (Eigen::Index m = 0; m < n_; ++m) {
                for (Eigen::Index p = 0; p < p_; ++p) {
                    const double dpk = freqs[k] - tones[p];
                    for (Eigen::Index q = 0; q < p_; ++q) {
                        const double dqm = freqs[m] - tones[q];
                        const cplx kern = mode == KernelMode::finite_time ? delta_tilde(dqm, dpk, duration) : cplx(1.0);
                        at(k, m, p, q) = (dqm + dpk) / (8.0 * dpk * dqm) * kern;
                    }
                }
            }
        }
    }

    Eigen::Index n_modes() const { return n_; }
    Eigen::Index n_tones() const { return p_; }

    cplx& at(Eigen::Index k, Eigen::Index m, Eigen::Index p, Eigen::Index q) {
        return data_[static_cast<std::size_t>(((k * n_ + m) * p_ + p) * p_ + q)];
    }
    const cplx& at(Eigen::Index k, Eigen::Index m, Eigen::Index p, Eigen::Index q) const {
        return data_[static_cast<std::size_t>(((k * n_ + m) * p_ + p) * p_ + q)];
    }

    /// sum_{p,q} conj(a_p) G_km(p,q) a_q for one ion's amplitude row.
    template <class Row>
    cplx contract(Eigen::Index k, Eigen::Index m, const Row& amp) const {
        cplx acc = 0.0;
        for (Eigen::Index p = 0; p < p_; ++p) {
            cplx inner = 0.0;
            for (Eigen::Index q = 0; q < p_; ++q) inner += at(k, m, p, q) * amp(q);
            acc += std::conj(amp(p)) * inner;
        }
        return acc;
    }

private:
    Eigen::Index n_;
    Eigen::Index p_;
    std::vector<cplx> data_;
};

/// Per-ion phonon hopping tensors, one N x N matrix per illuminated ion.
struct KTensor {
    std::vector<std::size_t> ions;
    std::vector<CMat> per_ion;
};

inline CMat j_matrix(const DriveProgram& drive, const ModeData& modes) {
    drive.validate(modes.n_ions());
    require_no_resonance(drive, modes, "j_matrix");
    const Eigen::Index n = static_cast<Eigen::Index>(modes.n_ions());
    const Eigen::Index nm = modes.freqs.size();
    CMat j = CMat::Zero(n, n);
    for (std::size_t r = 0; r < drive.n_lit(); ++r) {
        const Eigen::Index ion_i = Eigen::Index(drive.illuminated[r]);
        for (std::size_t s = 0; s < drive.n_lit(); ++s) {
            const Eigen::Index ion_j = Eigen::Index(drive.illuminated[s]);
            cplx acc = 0.0;
            for (Eigen::Index m = 0; m < nm; ++m) {
                const double etas = modes.lamb_dicke(ion_i, m) * modes.lamb_dicke(ion_j, m);
                for (Eigen::Index p = 0; p < drive.tones.size(); ++p)
                    acc += etas * std::conj(drive.amplitudes(Eigen::Index(r), p)) * drive.amplitudes(Eigen::Index(s), p) /
                           sideband_detuning(modes, drive, p, m);
            }
            j(ion_i, ion_j) = acc / 8.0;
        }
    }
    return j;
}

inline KTensor k_tensor(const DriveProgram& drive, const ModeData& modes, const ToneKernel& kernel) {
    drive.validate(modes.n_ions());
    require_no_resonance(drive, modes, "k_tensor");
    const Eigen::Index nm = modes.freqs.size();
    KTensor t;
    t.ions = drive.illuminated;
    t.per_ion.reserve(drive.n_lit());
    for (std::size_t r = 0; r < drive.n_lit(); ++r) {
        const Eigen::Index ion = Eigen::Index(drive.illuminated[r]);
        const auto amp = drive.amplitudes.row(Eigen::Index(r));
        CMat k(nm, nm);
        for (Eigen::Index a = 0; a < nm; ++a)
            for (Eigen::Index b = 0; b < nm; ++b)
                k(a, b) = modes.lamb_dicke(ion, a) * modes.lamb_dicke(ion, b) * kernel.contract(a, b, amp);
        t.per_ion.push_back(std::move(k));
    }
    return t;
}

inline KTensor k_tensor(const DriveProgram& drive, const ModeData& modes, KernelMode mode = KernelMode::finite_time) {
    return k_tensor(drive, modes, ToneKernel(drive.tones, modes.freqs, drive.duration, mode));
}

/// K = -sum_i spin[i] K^(i); `spins` is indexed by ion and defaults to all down.
inline CMat k_matrix(const KTensor& t, const std::vector<int>& spins = {}) {
    if (t.per_ion.empty()) return CMat();
    CMat k = CMat::Zero(t.per_ion.front().rows(), t.per_ion.front().cols());
    for (std::size_t r = 0; r < t.per_ion.size(); ++r) {
        int s = -1;
        if (!spins.empty()) {
            if (t.ions[r] >= spins.size()) throw ConfigError("k_matrix: spin configuration too short");
            s = spins[t.ions[r]];
            if (s != 1 && s != -1) throw ConfigError("k_matrix: spin entries must be +1 or -1");
        }
        k -= static_cast<double>(s) * t.per_ion[r];
    }
    return k;
}

struct EffectiveModel {
    CMat j_matrix;
    KTensor k_tensor;
    CMat k_matrix;
    double duration = 0.0;
    IndexRange mode_window;
    bool diagonal_compensated = false;
};

inline EffectiveModel effective_model(const DriveProgram& drive, const ModeData& modes,
                                      std::optional<IndexRange> window = {},
                                      KernelMode mode = KernelMode::finite_time) {
    EffectiveModel em;
    em.j_matrix = j_matrix(drive, modes);
    em.k_tensor = k_tensor(drive, modes, mode);
    em.k_matrix = k_matrix(em.k_tensor);
    em.duration = drive.duration;
    em.mode_window = window.value_or(central_window(modes.n_modes()));
    return em;
}

/// Cancel the on-site terms of K. The model's diagonal is zeroed exactly;
/// the returned drive carries a single blue-sideband tone whose Stark shift
/// best matches diag(K) over the mode window in least squares.
///
/// The tone sits below every blue sideband by d_m = Dbar + w_m - wbar
/// (Dbar: mean red detuning, wbar: mean window frequency), shifting the
/// all-down phonon energies by -eta_im^2 Omega_b^2 / (4 d_m).
inline std::pair<EffectiveModel, DriveProgram> diagonal_compensation(const EffectiveModel& model,
                                                                    const DriveProgram& drive,
                                                                    const ModeData& modes) {
    EffectiveModel out = model;
    DriveProgram d = drive;
    const IndexRange win = model.mode_window;
    bool any = false;
    for (Eigen::Index m = 0; m < out.k_matrix.rows(); ++m) {
        if (out.k_matrix(m, m) != cplx(0.0)) any = true;
        out.k_matrix(m, m) = 0.0;
    }
    out.diagonal_compensated = true;
    if (!any || win.size() == 0) return {out, d};

    double wbar = 0.0, dbar = 0.0;
    for (std::size_t m = win.begin; m < win.end; ++m) wbar += modes.freqs[Eigen::Index(m)];
    wbar /= static_cast<double>(win.size());
    for (Eigen::Index p = 0; p < drive.tones.size(); ++p)
        for (std::size_t m = win.begin; m < win.end; ++m) dbar += sideband_detuning(modes, drive, p, Eigen::Index(m));
    dbar /= static_cast<double>(win.size() * drive.n_tones());

    // Shift per unit Omega_b^2 and the least-squares amplitude.
    double num = 0.0, den = 0.0;
    std::vector<double> unit(win.size());
    for (std::size_t m = win.begin; m < win.end; ++m) {
        const double dm = std::abs(dbar + modes.freqs[Eigen::Index(m)] - wbar);
        double s = 0.0;
        for (std::size_t ion : drive.illuminated) {
            const double eta = modes.lamb_dicke(Eigen::Index(ion), Eigen::Index(m));
            s -= eta * eta / (4.0 * dm);
        }
        unit[m - win.begin] = s;
        num -= model.k_matrix(Eigen::Index(m), Eigen::Index(m)).real() * s;
        den += s * s;
    }
    BlueCompensation blue;
    blue.ions = drive.illuminated;
    double omega2 = den > 0.0 ? num / den : 0.0;
    // A negative solution means the tone belongs above the blue sidebands.
    blue.detuning = omega2 >= 0.0 ? dbar : -dbar;
    omega2 = std::abs(omega2);
    blue.amplitude = snap_angular(std::sqrt(omega2));
    blue.detuning = snap_angular(blue.detuning);
    double rss = 0.0;
    for (std::size_t m = win.begin; m < win.end; ++m) {
        const double shift = (blue.detuning >= 0.0 ? 1.0 : -1.0) * omega2 * unit[m - win.begin];
        const double left = model.k_matrix(Eigen::Index(m), Eigen::Index(m)).real() + shift;
        rss += left * left;
    }
    blue.residual_rms = std::sqrt(rss / static_cast<double>(win.size()));
    d.blue = blue;
    return {out, d};
}

struct ErrorBudget {
    std::vector<double> spin_flip_red;      // per lit ion: 1/2 sum_{m,p} n_m |eps|^2
    std::vector<double> spin_flip_carrier;  // per lit ion: sum_p |Omega_ip|^2 / (2 nu_p^2)
    double epsilon_bound = 0.0;
};

inline ErrorBudget error_diagnostics(const DriveProgram& drive, const ModeData& modes, const std::vector<double>& occupations) {
    if (occupations.size() != modes.n_modes()) throw ConfigError("error_diagnostics: one occupation per mode required");
    for (double n : occupations)
        if (!(n >= 0.0)) throw ConfigError("error_diagnostics: occupations must be >= 0");
    const DispersiveReport rep = dispersive_check(drive, modes, 1.0);
    ErrorBudget b;
    b.epsilon_bound = rep.max_epsilon;
    for (std::size_t r = 0; r < drive.n_lit(); ++r) {
        double red = 0.0, carrier = 0.0;
        for (Eigen::Index m = 0; m < rep.epsilon[r].rows(); ++m)
            for (Eigen::Index p = 0; p < rep.epsilon[r].cols(); ++p)
                red += 0.5 * occupations[std::size_t(m)] * rep.epsilon[r](m, p) * rep.epsilon[r](m, p);
        for (Eigen::Index p = 0; p < drive.tones.size(); ++p)
            carrier += std::norm(drive.amplitudes(Eigen::Index(r), p)) / (2.0 * drive.tones[p] * drive.tones[p]);
        if (red > 0.5 || carrier > 0.5) {
            std::ostringstream msg;
            msg << "error_diagnostics: spin-flip probability of ion " << drive.illuminated[r]
                << " exceeds 0.5 (red " << red << ", carrier " << carrier << "); dispersive regime broken";
            throw RegimeError(msg.str());
        }
        b.spin_flip_red.push_back(red);
        b.spin_flip_carrier.push_back(carrier);
    }
    return b;
}

// Structure metrics over a mode window.

/// sum_{|k-m|=d} |K_km|^2 / sum_{k!=m} |K_km|^2, both restricted to the window.
inline double band_dominance(const CMat& k, IndexRange win, std::size_t band) {
    double on = 0.0, off = 0.0;
    for (std::size_t a = win.begin; a < win.end; ++a) {
        for (std::size_t b = win.begin; b < win.end; ++b) {
            if (a == b) continue;
            const double w = std::norm(k(Eigen::Index(a), Eigen::Index(b)));
            off += w;
            if ((a > b ? a - b : b - a) == band) on += w;
        }
    }
    return off > 0.0 ? on / off : 0.0;
}

/// arg sum_k K_{k,k+d} conj(R_{k,k+d}) over the window: phase of band d of K
/// relative to the same band of a reference matrix.
inline double band_relative_phase(const CMat& k, const CMat& reference, IndexRange win, std::size_t band) {
    cplx acc = 0.0;
    for (std::size_t a = win.begin; a + band < win.end; ++a)
        acc += k(Eigen::Index(a), Eigen::Index(a + band)) *
               std::conj(reference(Eigen::Index(a), Eigen::Index(a + band)));
    return std::arg(acc);
}

/// ||offdiag(K)||_F / ||diag(K)||_F.
inline double offdiagonal_ratio(const CMat& k) {
    const double diag = k.diagonal().norm();
    double off2 = 0.0;
    for (Eigen::Index a = 0; a < k.rows(); ++a)
        for (Eigen::Index b = 0; b < k.cols(); ++b)
            if (a != b) off2 += std::norm(k(a, b));
    const double off = std::sqrt(off2);
    return diag > 0.0 ? off / diag : (off > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
}

}  // namespace ionhop

#endif  // IONHOP_EFFECTIVE_HPP
