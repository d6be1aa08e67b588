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

// Exact propagation of the multimode red-sideband Hamiltonian on a truncated
// spin x Fock space, and comparison against the effective propagator.
//
// Basis: index = spin_index * (c+1)^M + sum_m n_m (c+1)^m with
// spin_index = sum_i up_i 2^i. Index 0 is the all-down vacuum and the first
// (c+1)^M indices span the all-down sector.
//
// Drive convention: the sigma+ a_m coefficient is (i/2) eta_im conj(Omega_ip)
// e^{-i Delta_pm t}, which makes the exact dynamics agree with K and
// W = exp(-i K^T T) for complex amplitudes. A blue compensation tone is not
// simulated.

#ifndef IONHOP_ORACLE_HPP
#define IONHOP_ORACLE_HPP

#include <cmath>
#include <cstdint>
#include <future>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include "ionhop/crystal.hpp"
#include "ionhop/drive.hpp"
#include "ionhop/effective.hpp"
#include "ionhop/evolve.hpp"
#include "ionhop/types.hpp"

namespace ionhop {

struct BasisState {
    std::vector<std::uint8_t> up;  // per ion, 1 = spin up
    FockPattern occupations;       // per mode
};

struct HilbertSpec {
    static constexpr std::size_t max_dimension = std::size_t{1} << 20;

    std::size_t n_ions = 1;
    std::size_t n_modes = 1;
    unsigned fock_cutoff = 3;  // highest retained occupation per mode

    std::size_t levels() const { return std::size_t{fock_cutoff} + 1; }

    std::size_t phonon_dimension() const {
        std::size_t d = 1;
        for (std::size_t m = 0; m < n_modes; ++m) {
            if (d > max_dimension / levels()) return max_dimension + 1;
            d *= levels();
        }
        return d;
    }

    std::size_t dimension() const {
        const std::size_t p = phonon_dimension();
        if (n_ions >= 21 || p > (max_dimension >> n_ions)) return max_dimension + 1;
        return p << n_ions;
    }

    void validate() const {
        if (n_ions < 1 || n_modes < 1) throw ConfigError("hilbert: at least one ion and one mode required");
        if (fock_cutoff < 1) throw ConfigError("hilbert: fock_cutoff must be >= 1");
        if (dimension() > max_dimension) {
            std::ostringstream msg;
            msg << "hilbert: dimension exceeds guard " << max_dimension;
            throw SizeError(msg.str());
        }
    }

    BasisState decode(std::size_t index) const {
        BasisState b;
        const std::size_t p = phonon_dimension();
        std::size_t spin = index / p, ph = index % p;
        b.up.resize(n_ions);
        for (std::size_t i = 0; i < n_ions; ++i) b.up[i] = static_cast<std::uint8_t>((spin >> i) & 1u);
        b.occupations.resize(n_modes);
        for (std::size_t m = 0; m < n_modes; ++m) {
            b.occupations[m] = static_cast<unsigned>(ph % levels());
            ph /= levels();
        }
        return b;
    }

    std::size_t encode(const BasisState& b) const {
        if (b.up.size() != n_ions || b.occupations.size() != n_modes) throw ConfigError("hilbert: basis state shape mismatch");
        std::size_t spin = 0, ph = 0, stride = 1;
        for (std::size_t i = 0; i < n_ions; ++i)
            if (b.up[i]) spin |= std::size_t{1} << i;
        for (std::size_t m = 0; m < n_modes; ++m) {
            if (b.occupations[m] > fock_cutoff) throw ConfigError("hilbert: occupation above cutoff");
            ph += b.occupations[m] * stride;
            stride *= levels();
        }
        return spin * phonon_dimension() + ph;
    }
};

struct QuantumState {
    CVec amplitudes;
    HilbertSpec spec;
};

inline QuantumState basis_state(const HilbertSpec& spec, const BasisState& b) {
    spec.validate();
    QuantumState s{CVec::Zero(Eigen::Index(spec.dimension())), spec};
    s.amplitudes[Eigen::Index(spec.encode(b))] = 1.0;
    return s;
}

/// All-down spins with the given phonon occupations.
inline QuantumState fock_state(const HilbertSpec& spec, const FockPattern& occupations) {
    return basis_state(spec, {std::vector<std::uint8_t>(spec.n_ions, 0), occupations});
}

inline void require_compatible(const DriveProgram& drive, const ModeData& modes, const HilbertSpec& spec) {
    spec.validate();
    if (spec.n_ions != modes.n_ions() || spec.n_modes != modes.n_modes())
        throw ConfigError("oracle: Hilbert space must match the ions and modes of the mode data");
    drive.validate(modes.n_ions());
}

/// Keeps the modes in `range` (e.g. a few modes of a small chain).
inline ModeData restrict_modes(const ModeData& modes, IndexRange range) {
    if (range.begin > range.end || range.end > modes.n_modes()) throw ConfigError("restrict_modes: range out of bounds");
    const auto b = Eigen::Index(range.begin), n = Eigen::Index(range.size());
    ModeData out;
    out.freqs = modes.freqs.segment(b, n);
    out.participation = modes.participation.middleCols(b, n);
    out.lamb_dicke = modes.lamb_dicke.middleCols(b, n);
    out.eta_scale = modes.eta_scale.segment(b, n);
    return out;
}

/// Returns a copy of `drive` with amplitudes scaled so that max eps equals `epsilon`.
inline DriveProgram scale_to_epsilon(const DriveProgram& drive, const ModeData& modes, double epsilon) {
    const double now = dispersive_check(drive, modes, 1.0).max_epsilon;
    if (!(now > 0.0)) throw ConfigError("scale_to_epsilon: drive has zero coupling");
    DriveProgram d = drive;
    d.amplitudes *= epsilon / now;
    return d;
}

namespace detail {

// <dst| op |src> = amp, with op multiplying coefficient `coef`; h.c. implied.
struct Coupling {
    Eigen::Index src, dst;
    double amp;
    std::size_t coef;
};

class Generator {
  public:
    Generator(const DriveProgram& drive, const ModeData& modes, const HilbertSpec& spec, bool carrier)
        : drive_(drive), modes_(modes), carrier_(carrier) {
        const std::size_t nl = drive.n_lit(), nm = spec.n_modes;
        n_side_ = nl * nm;
        n_coef_ = n_side_ + (carrier ? nl : 0);
        const std::size_t dim = spec.dimension(), pdim = spec.phonon_dimension();
        std::vector<std::size_t> stride(nm, 1);
        for (std::size_t m = 1; m < nm; ++m) stride[m] = stride[m - 1] * spec.levels();
        for (std::size_t src = 0; src < dim; ++src) {
            const BasisState b = spec.decode(src);
            for (std::size_t r = 0; r < nl; ++r) {
                const std::size_t ion = drive.illuminated[r];
                if (b.up[ion]) continue;
                const std::size_t flipped = src + (std::size_t{1} << ion) * pdim;
                for (std::size_t m = 0; m < nm; ++m) {
                    const unsigned n = b.occupations[m];
                    if (n == 0 || modes.lamb_dicke(Eigen::Index(ion), Eigen::Index(m)) == 0.0) continue;
                    couplings_.push_back({Eigen::Index(src), Eigen::Index(flipped - stride[m]), std::sqrt(double(n)),
                                          r * nm + m});
                }
                if (carrier) couplings_.push_back({Eigen::Index(src), Eigen::Index(flipped), 1.0, n_side_ + r});
            }
        }
        for (Eigen::Index p = 0; p < drive.tones.size(); ++p) fastest_ = std::max(fastest_, drive.tones[p]);
    }

    std::size_t n_coefficients() const { return n_coef_; }
    double fastest_tone() const { return fastest_; }

    CVec coefficients(double t) const {
        CVec c = CVec::Zero(Eigen::Index(n_coef_));
        const Eigen::Index np = drive_.tones.size();
        const std::size_t nm = modes_.n_modes();
        for (std::size_t r = 0; r < drive_.n_lit(); ++r) {
            const Eigen::Index ion = Eigen::Index(drive_.illuminated[r]);
            for (std::size_t m = 0; m < nm; ++m) {
                cplx s = 0.0;
                for (Eigen::Index p = 0; p < np; ++p)
                    s += std::conj(drive_.amplitudes(Eigen::Index(r), p)) *
                         std::polar(1.0, -sideband_detuning(modes_, drive_, p, Eigen::Index(m)) * t);
                c[Eigen::Index(r * nm + m)] = 0.5 * kI * modes_.lamb_dicke(ion, Eigen::Index(m)) * s;
            }
            if (carrier_) {
                cplx s = 0.0;
                for (Eigen::Index p = 0; p < np; ++p)
                    s += std::conj(drive_.amplitudes(Eigen::Index(r), p)) * std::polar(1.0, drive_.tones[p] * t);
                c[Eigen::Index(n_side_ + r)] = 0.5 * s;
            }
        }
        return c;
    }

    /// y = H(c) x.
    void apply(const CVec& c, const CMat& x, CMat& y) const {
        y.setZero(x.rows(), x.cols());
        const Eigen::Index cols = x.cols();
        for (const Coupling& k : couplings_) {
            const cplx a = c[Eigen::Index(k.coef)] * k.amp;
            if (a == cplx(0.0)) continue;
            const cplx b = std::conj(a);
            for (Eigen::Index j = 0; j < cols; ++j) {
                y(k.dst, j) += a * x(k.src, j);
                y(k.src, j) += b * x(k.dst, j);
            }
        }
    }

    Eigen::SparseMatrix<cplx> assemble(const CVec& c, Eigen::Index dim) const {
        std::vector<Eigen::Triplet<cplx>> trip;
        trip.reserve(2 * couplings_.size());
        for (const Coupling& k : couplings_) {
            const cplx a = c[Eigen::Index(k.coef)] * k.amp;
            if (a == cplx(0.0)) continue;
            trip.emplace_back(k.dst, k.src, a);
            trip.emplace_back(k.src, k.dst, std::conj(a));
        }
        Eigen::SparseMatrix<cplx> h(dim, dim);
        h.setFromTriplets(trip.begin(), trip.end());
        return h;
    }

    /// exp(-i h H(c)) x by a Taylor series; h ||H|| is small for capped steps.
    CMat exp_apply(const CVec& c, double h, const CMat& x) const {
        CMat sum = x, term = x, next;
        const double scale = std::max(1.0, sum.squaredNorm());
        for (int k = 1; k <= 60; ++k) {
            apply(c, term, next);
            term = (-kI * h / double(k)) * next;
            sum += term;
            if (term.squaredNorm() <= 1e-34 * scale) return sum;
        }
        throw ConvergenceError("oracle: Taylor exponential did not converge (step too large)", term.norm());
    }

  private:
    const DriveProgram& drive_;
    const ModeData& modes_;
    bool carrier_;
    std::size_t n_side_ = 0, n_coef_ = 0;
    double fastest_ = 0.0;
    std::vector<Coupling> couplings_;
};

struct RunResult {
    CMat states;
    RVec mean_flip;
    double leakage = 0.0;
};

inline RunResult run_cf4(const Generator& gen, const HilbertSpec& spec, const CMat& initial, double start,
                         double duration, std::size_t steps) {
    static const double r3 = std::sqrt(3.0);
    const double a1 = (3.0 - 2.0 * r3) / 12.0, a2 = (3.0 + 2.0 * r3) / 12.0;
    const double c1 = 0.5 - r3 / 6.0, c2 = 0.5 + r3 / 6.0;
    const double h = duration / double(steps);
    const Eigen::Index pdim = Eigen::Index(spec.phonon_dimension());
    const Eigen::Index dim = initial.rows();

    std::vector<Eigen::Index> edge;  // states holding a mode at the cutoff
    for (std::size_t s = 0; s < spec.dimension(); ++s) {
        const BasisState b = spec.decode(s);
        for (unsigned n : b.occupations)
            if (n == spec.fock_cutoff) {
                edge.push_back(Eigen::Index(s));
                break;
            }
    }
    RunResult out;
    out.mean_flip = RVec::Zero(initial.cols());
    auto sample = [&](const CMat& psi, double weight) {
        for (Eigen::Index j = 0; j < psi.cols(); ++j) {
            out.mean_flip[j] += weight * psi.col(j).tail(dim - pdim).squaredNorm();
            double e = 0.0;
            for (Eigen::Index s : edge) e += std::norm(psi(s, j));
            out.leakage = std::max(out.leakage, e);
        }
    };
    CMat psi = initial;
    sample(psi, 0.5);
    for (std::size_t n = 0; n < steps; ++n) {
        const double t = start + h * double(n);
        const CVec h1 = gen.coefficients(t + c1 * h), h2 = gen.coefficients(t + c2 * h);
        psi = gen.exp_apply(a2 * h1 + a1 * h2, h, psi);
        psi = gen.exp_apply(a1 * h1 + a2 * h2, h, psi);
        sample(psi, n + 1 == steps ? 0.5 : 1.0);
    }
    out.mean_flip /= double(steps);
    out.states = std::move(psi);
    return out;
}

}  // namespace detail

/// H(t) in the documented basis, rad/s.
inline Eigen::SparseMatrix<cplx> hamiltonian_at(double t, const DriveProgram& drive, const ModeData& modes,
                                                const HilbertSpec& spec, bool carrier = false) {
    require_compatible(drive, modes, spec);
    const detail::Generator gen(drive, modes, spec, carrier);
    return gen.assemble(gen.coefficients(t), Eigen::Index(spec.dimension()));
}

/// Smallest step count meeting dt <= 1 / (20 max nu_p / 2pi).
inline std::size_t minimum_steps(const DriveProgram& drive, double duration) {
    double fastest = 0.0;
    for (Eigen::Index p = 0; p < drive.tones.size(); ++p) fastest = std::max(fastest, drive.tones[p]);
    return std::max<std::size_t>(1, std::size_t(std::ceil(duration * 20.0 * fastest / constants::two_pi)));
}

struct PropagateOptions {
    double start_time = 0.0;  // the run covers [start_time, start_time + duration]
    bool carrier = false;
    bool check_doubling = true;
    double doubling_tolerance = 1e-8;
    double norm_tolerance = 1e-9;
    unsigned max_refinements = 4;
};

struct Propagation {
    CMat states;     // one column per initial state, at T
    RVec mean_flip;  // time-averaged probability of leaving the all-down sector
    std::size_t steps = 0;
    double doubling_error = 0.0;  // max column 2-norm change under step doubling
    double norm_drift = 0.0;
    double leakage = 0.0;  // max population on a cutoff level over sampled times
};

/// Propagates the columns of `initial` to `duration`. `steps` is raised to
/// the cap if smaller. With doubling checks the finer run is returned.
inline Propagation propagate_columns(const CMat& initial, const DriveProgram& drive, const ModeData& modes,
                                     const HilbertSpec& spec, double duration, std::size_t steps,
                                     const PropagateOptions& opt = {}) {
    require_compatible(drive, modes, spec);
    if (!(duration >= 0.0) || !std::isfinite(duration)) throw ConfigError("propagate: duration must be >= 0");
    if (initial.rows() != Eigen::Index(spec.dimension())) throw ConfigError("propagate: state dimension mismatch");
    Propagation out;
    if (duration == 0.0) {
        out.states = initial;
        out.mean_flip = RVec::Zero(initial.cols());
        for (Eigen::Index j = 0; j < initial.cols(); ++j)
            out.mean_flip[j] = initial.col(j).tail(initial.rows() - Eigen::Index(spec.phonon_dimension())).squaredNorm();
        return out;
    }
    const detail::Generator gen(drive, modes, spec, opt.carrier);
    std::size_t n = std::max(steps, minimum_steps(drive, duration));
    detail::RunResult fine = detail::run_cf4(gen, spec, initial, opt.start_time, duration, n);
    if (opt.check_doubling) {
        for (unsigned attempt = 0;; ++attempt) {
            detail::RunResult finer = detail::run_cf4(gen, spec, initial, opt.start_time, duration, 2 * n);
            double err = 0.0;
            for (Eigen::Index j = 0; j < initial.cols(); ++j)
                err = std::max(err, (finer.states.col(j) - fine.states.col(j)).norm());
            n *= 2;
            fine = std::move(finer);
            out.doubling_error = err;
            if (err < opt.doubling_tolerance) break;
            if (attempt >= opt.max_refinements) {
                std::ostringstream msg;
                msg << "propagate: step doubling changed the state by " << err << " at " << n << " steps";
                throw ConvergenceError(msg.str(), err);
            }
        }
    }
    for (Eigen::Index j = 0; j < initial.cols(); ++j)
        out.norm_drift = std::max(out.norm_drift, std::abs(fine.states.col(j).norm() - initial.col(j).norm()));
    if (out.norm_drift > opt.norm_tolerance) {
        std::ostringstream msg;
        msg << "propagate: norm drift " << out.norm_drift;
        throw ConvergenceError(msg.str(), out.norm_drift);
    }
    out.states = std::move(fine.states);
    out.mean_flip = std::move(fine.mean_flip);
    out.leakage = fine.leakage;
    out.steps = n;
    return out;
}

inline QuantumState propagate(const QuantumState& state, const DriveProgram& drive, const ModeData& modes,
                              double duration, std::size_t steps, const PropagateOptions& opt = {}) {
    const Propagation p = propagate_columns(state.amplitudes, drive, modes, state.spec, duration, steps, opt);
    return {p.states.col(0), state.spec};
}

/// exp(-i (H_s + H_p) T). H_s keeps the i != j hopping terms (the i = j part
/// is the identity); H_p = -sum_i sum_km K^(i)_km a_k a_m^dag sigma_z^(i) plus
/// the spin-independent difference between the model's K and sum_i K^(i).
inline CMat effective_propagator(const EffectiveModel& model, const HilbertSpec& spec, double duration) {
    spec.validate();
    constexpr std::size_t dense_guard = 4096;
    const std::size_t dim = spec.dimension();
    if (dim > dense_guard) throw SizeError("effective_propagator: dimension exceeds the dense guard 4096");
    const Eigen::Index nm = Eigen::Index(spec.n_modes);
    if (model.j_matrix.rows() != Eigen::Index(spec.n_ions) || model.k_matrix.rows() != nm)
        throw ConfigError("effective_propagator: model does not match the Hilbert space");

    CMat ksum = CMat::Zero(nm, nm);
    for (const CMat& k : model.k_tensor.per_ion) ksum += k;
    const CMat offset = model.k_matrix - ksum;

    const std::size_t pdim = spec.phonon_dimension();
    std::vector<std::size_t> stride(spec.n_modes, 1);
    for (std::size_t m = 1; m < spec.n_modes; ++m) stride[m] = stride[m - 1] * spec.levels();

    CMat h = CMat::Zero(Eigen::Index(dim), Eigen::Index(dim));
    for (std::size_t src = 0; src < dim; ++src) {
        const BasisState b = spec.decode(src);
        CMat g = offset;
        for (std::size_t r = 0; r < model.k_tensor.ions.size(); ++r)
            g -= (b.up[model.k_tensor.ions[r]] ? 1.0 : -1.0) * model.k_tensor.per_ion[r];
        // a_k a_m^dag = a_m^dag a_k + delta_km
        for (Eigen::Index k = 0; k < nm; ++k) {
            h(Eigen::Index(src), Eigen::Index(src)) += g(k, k) * (1.0 + b.occupations[std::size_t(k)]);
            const unsigned nk = b.occupations[std::size_t(k)];
            if (nk == 0) continue;
            for (Eigen::Index m = 0; m < nm; ++m) {
                const unsigned n_m = b.occupations[std::size_t(m)];
                if (m == k || n_m == spec.fock_cutoff) continue;
                const std::size_t dst = src - stride[std::size_t(k)] + stride[std::size_t(m)];
                h(Eigen::Index(dst), Eigen::Index(src)) += g(k, m) * std::sqrt(double(nk) * double(n_m + 1));
            }
        }
        // -J_ij sigma+^i sigma-^j for i != j; the h.c. half arrives from the (j, i) pair.
        for (std::size_t i = 0; i < spec.n_ions; ++i)
            for (std::size_t j = 0; j < spec.n_ions; ++j) {
                if (i == j || b.up[i] || !b.up[j]) continue;
                const std::size_t dst = src + ((std::size_t{1} << i) - (std::size_t{1} << j)) * pdim;
                h(Eigen::Index(dst), Eigen::Index(src)) -=
                    model.j_matrix(Eigen::Index(i), Eigen::Index(j)) + model.j_matrix(Eigen::Index(j), Eigen::Index(i));
            }
    }
    const CMat herm = 0.5 * (h + h.adjoint());
    Eigen::SelfAdjointEigenSolver<CMat> es(herm);
    if (es.info() != Eigen::Success) throw ConvergenceError("effective_propagator: eigensolver failed", 0.0);
    CVec phase(herm.rows());
    for (Eigen::Index j = 0; j < herm.rows(); ++j) phase[j] = std::polar(1.0, -es.eigenvalues()[j] * duration);
    return es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint();
}

struct SectorSelector {
    bool all_down = true;      // project outputs on the all-down sector
    unsigned max_phonons = 2;  // inputs carry at most this many phonons in total
};

/// Sector inputs in ascending basis order; index 0 (the vacuum) is always first.
inline std::vector<Eigen::Index> sector_inputs(const HilbertSpec& spec, const SectorSelector& sel) {
    spec.validate();
    std::vector<Eigen::Index> out;
    const std::size_t limit = sel.all_down ? spec.phonon_dimension() : spec.dimension();
    for (std::size_t s = 0; s < limit; ++s)
        if (total_number(spec.decode(s).occupations) <= sel.max_phonons) out.push_back(Eigen::Index(s));
    return out;
}

inline CMat sector_columns(const HilbertSpec& spec, const std::vector<Eigen::Index>& inputs) {
    CMat x = CMat::Zero(Eigen::Index(spec.dimension()), Eigen::Index(inputs.size()));
    for (std::size_t j = 0; j < inputs.size(); ++j) x(inputs[j], Eigen::Index(j)) = 1.0;
    return x;
}

struct CompareReport {
    double fidelity = 1.0;               // |Tr(B^dag A)|^2 / d^2 on the projected block
    double postselected_fidelity = 1.0;  // same with each exact column renormalised in the sector
    double trace_distance = 0.0;         // max over inputs, full output states
    double max_deviation = 0.0;          // max |A e^{-i phi} - B| after vacuum alignment
    double vacuum_phase = 0.0;           // phi
    double epsilon_used = 0.0;
    std::size_t inputs = 0;
};

/// `exact` holds one column per sector input (as from propagate_columns on
/// sector_columns); `effective` is the full propagator.
inline CompareReport compare(const CMat& exact, const CMat& effective, const HilbertSpec& spec,
                             const SectorSelector& sel = {}, double epsilon_used = 0.0) {
    const auto inputs = sector_inputs(spec, sel);
    const Eigen::Index dim = Eigen::Index(spec.dimension()), d = Eigen::Index(inputs.size());
    if (exact.rows() != dim || exact.cols() != d || effective.rows() != dim || effective.cols() != dim)
        throw ConfigError("compare: propagator shapes do not match the sector");
    const Eigen::Index rows = sel.all_down ? Eigen::Index(spec.phonon_dimension()) : dim;
    CMat b(dim, d);
    for (Eigen::Index j = 0; j < d; ++j) b.col(j) = effective.col(inputs[std::size_t(j)]);

    CompareReport rep;
    rep.inputs = std::size_t(d);
    rep.epsilon_used = epsilon_used;
    const cplx va = exact(0, 0), vb = b(0, 0);
    if (std::abs(va) > 0.0 && std::abs(vb) > 0.0) rep.vacuum_phase = std::arg(va) - std::arg(vb);
    const cplx align = std::polar(1.0, -rep.vacuum_phase);

    cplx tr = 0.0, tr_ps = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
        const auto a_p = exact.col(j).head(rows);
        const auto b_p = b.col(j).head(rows);
        const cplx overlap = b_p.dot(a_p);  // conjugates b
        tr += overlap;
        const double na = a_p.norm(), nb = b_p.norm();
        if (na > 0.0 && nb > 0.0) tr_ps += overlap / (na * nb);
        const double full = exact.col(j).norm() * b.col(j).norm();
        const double f = full > 0.0 ? std::norm(b.col(j).dot(exact.col(j))) / (full * full) : 0.0;
        rep.trace_distance = std::max(rep.trace_distance, std::sqrt(std::max(0.0, 1.0 - f)));
        rep.max_deviation = std::max(rep.max_deviation, (align * exact.col(j) - b.col(j)).cwiseAbs().maxCoeff());
    }
    rep.fidelity = std::norm(tr) / double(d * d);
    rep.postselected_fidelity = std::norm(tr_ps) / double(d * d);
    return rep;
}

struct SweepOptions {
    SectorSelector sector;
    PropagateOptions propagate;
    // With window_samples > 1 the infidelity is also averaged over final times
    // spread across one period of the smallest detuning ending at T.
    unsigned window_samples = 0;
};

struct SweepPoint {
    double epsilon = 0.0;
    CompareReport report;  // at T
    Propagation run;       // at T
    double window_infidelity = 0.0;
    double window_postselected_infidelity = 0.0;
};

/// Rescales `drive` to each epsilon and compares exact against effective
/// propagation on the sector; points run concurrently.
inline std::vector<SweepPoint> epsilon_sweep(const DriveProgram& drive, const ModeData& modes, const HilbertSpec& spec,
                                             const std::vector<double>& epsilons, const SweepOptions& opt = {}) {
    require_compatible(drive, modes, spec);
    const auto inputs = sector_inputs(spec, opt.sector);
    const CMat x = sector_columns(spec, inputs);
    auto compare_at = [&](const DriveProgram& d, const CMat& states, double t, double eps) {
        DriveProgram dt = d;
        dt.duration = t;
        const EffectiveModel model = effective_model(dt, modes, IndexRange{0, modes.n_modes()});
        return compare(states, effective_propagator(model, spec, t), spec, opt.sector, eps);
    };
    auto one = [&](double eps) {
        if (!(eps > 0.0)) throw ConfigError("epsilon_sweep: epsilons must be > 0");
        SweepPoint pt;
        pt.epsilon = eps;
        const DriveProgram d = scale_to_epsilon(drive, modes, eps);
        const double total = d.duration;
        const unsigned k = opt.window_samples > 1 ? opt.window_samples : 0;
        const double window = k ? std::min(total, constants::two_pi / dispersive_check(d, modes, 1.0).min_detuning) : 0.0;
        PropagateOptions po = opt.propagate;
        po.start_time = 0.0;
        pt.run = propagate_columns(x, d, modes, spec, total - window, 0, po);
        if (k) {
            RVec flip = pt.run.mean_flip * (total - window);
            const double seg = window / double(k);
            for (unsigned j = 0; j < k; ++j) {
                po.start_time = total - window + seg * double(j);
                Propagation next = propagate_columns(pt.run.states, d, modes, spec, seg, 0, po);
                flip += next.mean_flip * seg;
                next.steps += pt.run.steps;
                next.doubling_error = std::max(next.doubling_error, pt.run.doubling_error);
                next.norm_drift = std::max(next.norm_drift, pt.run.norm_drift);
                next.leakage = std::max(next.leakage, pt.run.leakage);
                pt.run = std::move(next);
                const CompareReport r = compare_at(d, pt.run.states, po.start_time + seg, eps);
                pt.window_infidelity += (1.0 - r.fidelity) / double(k);
                pt.window_postselected_infidelity += (1.0 - r.postselected_fidelity) / double(k);
            }
            pt.run.mean_flip = flip / total;
        }
        pt.report = compare_at(d, pt.run.states, total, eps);
        if (!k) {
            pt.window_infidelity = 1.0 - pt.report.fidelity;
            pt.window_postselected_infidelity = 1.0 - pt.report.postselected_fidelity;
        }
        return pt;
    };
    std::vector<std::future<SweepPoint>> jobs;
    for (double e : epsilons) jobs.push_back(std::async(std::launch::async, one, e));
    std::vector<SweepPoint> out;
    for (auto& j : jobs) out.push_back(j.get());
    return out;
}

/// Least-squares slope of log(y) against log(x).
inline double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("log_log_slope: need at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = double(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ConfigError("log_log_slope: values must be > 0");
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace ionhop

#endif  // IONHOP_ORACLE_HPP
