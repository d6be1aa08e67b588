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

#ifndef IONHOP_CRYSTAL_HPP
#define IONHOP_CRYSTAL_HPP

// Linear ion crystal in a quadratic + quartic axial potential and its
// transverse normal modes along a single principal axis.
//
// The axial potential per ion is V(z) = M/2 (a2 z^2 + a4 z^4) with a2 allowed
// to be negative when a4 > 0. Internally positions are solved in natural units
// where the Coulomb term has unit strength.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>

#include "ionhop/constants.hpp"
#include "ionhop/types.hpp"

namespace ionhop {

struct TrapConfig {
    std::size_t n_ions = 1;
    double axial_quadratic = 0.0;  // rad^2/s^2
    double axial_quartic = 0.0;    // rad^2/(s^2 m^2)
    double radial_com_freq = 0.0;  // rad/s
    double ion_mass = constants::yb171_mass;  // kg
    std::optional<double> wave_number;        // 1/m

    /// e^2/(4 pi eps0 M), m^3/s^2.
    double coulomb_rate() const { return constants::coulomb_constant_e2 / ion_mass; }

    void validate() const {
        if (n_ions < 1) throw ConfigError("trap: n_ions must be >= 1");
        if (!(radial_com_freq > 0.0)) throw ConfigError("trap: radial_com_freq must be > 0");
        if (!(ion_mass > 0.0)) throw ConfigError("trap: ion_mass must be > 0");
        if (!std::isfinite(axial_quadratic) || !std::isfinite(axial_quartic))
            throw ConfigError("trap: axial coefficients must be finite");
        if (axial_quartic < 0.0) throw ConfigError("trap: axial_quartic < 0 gives an unbounded potential");
        if (axial_quartic == 0.0 && !(axial_quadratic > 0.0))
            throw ConfigError("trap: axial potential is not confining (quartic = 0 requires quadratic > 0)");
        if (wave_number && !(*wave_number > 0.0)) throw ConfigError("trap: wave_number must be > 0");
    }
};

struct IonChain {
    std::vector<double> positions;  // m, ascending
    TrapConfig trap;
    double force_residual = 0.0;  // max |force| / characteristic Coulomb force
};

struct ModeData {
    RVec freqs;          // rad/s, ascending
    RMat participation;  // b(ion, mode)
    RMat lamb_dicke;     // eta(ion, mode) = eta_scale(mode) * b(ion, mode)
    RVec eta_scale;      // eta_m

    std::size_t n_ions() const { return static_cast<std::size_t>(participation.rows()); }
    std::size_t n_modes() const { return static_cast<std::size_t>(freqs.size()); }
    double com_freq() const { return freqs.maxCoeff(); }
};

namespace detail {

// Natural units: length L, energy per mass c/L, so that the pair interaction
// is 1/|du| and the trap energy is a2 u^2/2 + a4 u^4/2.
struct ChainUnits {
    double length = 1.0;
    double a2 = 0.0;
    double a4 = 0.0;
};

inline ChainUnits natural_units(const TrapConfig& trap) {
    const double c = trap.coulomb_rate();
    ChainUnits u;
    if (trap.axial_quartic > 0.0) {
        u.length = std::pow(c / trap.axial_quartic, 0.2);
        u.a4 = 1.0;
        u.a2 = trap.axial_quadratic * u.length * u.length * u.length / c;
    } else {
        u.length = std::cbrt(c / trap.axial_quadratic);
        u.a2 = 1.0;
        u.a4 = 0.0;
    }
    return u;
}

inline double chain_energy(const RVec& u, double a2, double a4) {
    const Eigen::Index n = u.size();
    double e = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x2 = u[i] * u[i];
        e += 0.5 * a2 * x2 + 0.5 * a4 * x2 * x2;
        for (Eigen::Index j = i + 1; j < n; ++j) e += 1.0 / std::abs(u[j] - u[i]);
    }
    return e;
}

inline RVec chain_gradient(const RVec& u, double a2, double a4) {
    const Eigen::Index n = u.size();
    RVec g(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double gi = a2 * u[i] + 2.0 * a4 * u[i] * u[i] * u[i];
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = u[i] - u[j];
            gi -= (d > 0 ? 1.0 : -1.0) / (d * d);
        }
        g[i] = gi;
    }
    return g;
}

inline RMat chain_hessian(const RVec& u, double a2, double a4) {
    const Eigen::Index n = u.size();
    RMat h = RMat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        h(i, i) = a2 + 6.0 * a4 * u[i] * u[i];
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = std::abs(u[i] - u[j]);
            const double k = 2.0 / (d * d * d);
            h(i, i) += k;
            h(i, j) = -k;
        }
    }
    return h;
}

inline void symmetrize(RVec& u) {
    const Eigen::Index n = u.size();
    for (Eigen::Index i = 0; i < n / 2; ++i) {
        const double s = 0.5 * (u[n - 1 - i] - u[i]);
        u[i] = -s;
        u[n - 1 - i] = s;
    }
    if (n % 2 == 1) u[n / 2] = 0.0;
}

// Half-length R from balancing the outer ion against the summed push of an
// evenly spaced chain; only used as a starting point.
inline double initial_half_length(std::size_t n, double a2, double a4) {
    const double push = 0.25 * 1.6449 * static_cast<double>((n - 1) * (n - 1));
    auto f = [&](double r) { return a2 * r + 2.0 * a4 * r * r * r - push / (r * r); };
    double lo = 1e-6, hi = 1.0;
    while (f(hi) < 0.0) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < 0.0 ? lo : hi) = mid;
    }
    return hi;
}

inline double min_spacing(const RVec& u) {
    double m = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 1; i < u.size(); ++i) m = std::min(m, u[i] - u[i - 1]);
    return m;
}

struct DimensionlessChain {
    RVec u;
    double residual = 0.0;  // max|grad| * min_spacing^2
};

inline DimensionlessChain solve_dimensionless(std::size_t n, double a2, double a4) {
    DimensionlessChain out;
    out.u = RVec::Zero(static_cast<Eigen::Index>(n));
    if (n == 1) return out;

    const double half = initial_half_length(n, a2, a4);
    for (std::size_t i = 0; i < n; ++i)
        out.u[static_cast<Eigen::Index>(i)] =
            -half + 2.0 * half * static_cast<double>(i) / static_cast<double>(n - 1);

    constexpr int max_iter = 500;
    constexpr double tol = 1e-12;
    RVec& u = out.u;
    auto scaled_residual = [](const RVec& g, const RVec& x) {
        const double d = min_spacing(x);
        return g.cwiseAbs().maxCoeff() * d * d;
    };
    RVec g = chain_gradient(u, a2, a4);
    double e = chain_energy(u, a2, a4);
    for (int it = 0; it < max_iter; ++it) {
        out.residual = scaled_residual(g, u);
        if (out.residual < tol) return out;

        const RMat h = chain_hessian(u, a2, a4);
        RVec step;
        for (double shift = 0.0;; shift = shift == 0.0 ? 1e-8 * h.diagonal().cwiseAbs().maxCoeff() : shift * 10.0) {
            Eigen::LDLT<RMat> ldlt(h + shift * RMat::Identity(h.rows(), h.cols()));
            if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0.0).all()) {
                step = -ldlt.solve(g);
                break;
            }
            if (shift > 1e12) {
                step = -g;
                break;
            }
        }

        // Keep the ordering: never let a gap close within one step.
        double alpha = 1.0;
        for (Eigen::Index i = 1; i < u.size(); ++i) {
            const double gap = u[i] - u[i - 1];
            const double dgap = step[i] - step[i - 1];
            if (dgap < 0.0) alpha = std::min(alpha, 0.5 * gap / -dgap);
        }

        const double slope = g.dot(step);
        const double gnorm = g.cwiseAbs().maxCoeff();
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            RVec trial = u + alpha * step;
            symmetrize(trial);
            const double et = chain_energy(trial, a2, a4);
            const RVec gt = chain_gradient(trial, a2, a4);
            if (et <= e + 1e-4 * alpha * slope || gt.cwiseAbs().maxCoeff() < (1.0 - 1e-4 * alpha) * gnorm) {
                u = std::move(trial);
                e = et;
                g = gt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;
    }
    out.residual = scaled_residual(g, u);
    if (out.residual < tol) return out;
    std::ostringstream msg;
    msg << "equilibrium_positions: Newton iteration did not converge (residual " << out.residual << ")";
    throw ConvergenceError(msg.str(), out.residual);
}

}  // namespace detail

/// Equilibrium positions by damped Newton iteration on the chain energy,
/// started from an evenly spaced, mirror-symmetric guess.
inline IonChain equilibrium_positions(const TrapConfig& trap) {
    trap.validate();
    const detail::ChainUnits units = detail::natural_units(trap);
    const detail::DimensionlessChain sol = detail::solve_dimensionless(trap.n_ions, units.a2, units.a4);
    IonChain chain;
    chain.trap = trap;
    chain.force_residual = sol.residual;
    chain.positions.resize(trap.n_ions);
    for (std::size_t i = 0; i < trap.n_ions; ++i)
        chain.positions[i] = sol.u[static_cast<Eigen::Index>(i)] * units.length;
    return chain;
}

/// Nearest-neighbour spacings of the central `fraction` of the chain
/// (at least two spacings whenever N >= 3).
inline std::vector<double> central_spacings(const std::vector<double>& positions, double fraction = 0.75) {
    const std::size_t n = positions.size();
    if (n < 2) return {};
    std::size_t ions = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
    ions = std::clamp<std::size_t>(ions, std::min<std::size_t>(n, 3), n);
    const std::size_t first = (n - ions) / 2;
    std::vector<double> s;
    for (std::size_t i = first + 1; i < first + ions; ++i) s.push_back(positions[i] - positions[i - 1]);
    return s;
}

struct SpacingStats {
    double mean = 0.0;
    double relative_variance = 0.0;  // var / mean^2
    double relative_spread = 0.0;    // (max - min) / mean
};

inline SpacingStats spacing_stats(const std::vector<double>& s) {
    SpacingStats st;
    if (s.empty()) return st;
    double sum = 0.0;
    for (double x : s) sum += x;
    st.mean = sum / static_cast<double>(s.size());
    double var = 0.0;
    for (double x : s) var += (x - st.mean) * (x - st.mean);
    var /= static_cast<double>(s.size());
    st.relative_variance = var / (st.mean * st.mean);
    const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    st.relative_spread = (*hi - *lo) / st.mean;
    return st;
}

struct TuneOptions {
    bool fix_quartic = false;       // only rescale the quadratic term
    double central_fraction = 0.75;  // spacings entering the objective and the mean
    double search_min = -10.0;       // dimensionless a2 search interval (a4 = 1)
    double search_max = 10.0;
};

/// Choose (a2, a4) so the central spacings are as uniform as possible with
/// their mean equal to `target_spacing`.
///
/// Positions scale exactly under z -> s z, a2 -> a2 / s^3, a4 -> a4 / s^5, so
/// the shape is optimised over a single dimensionless parameter and the mean
/// spacing is fixed afterwards by rescaling.
inline TrapConfig tune_quartic(const TrapConfig& trap, double target_spacing, const TuneOptions& opt = {}) {
    trap.validate();
    if (trap.n_ions < 3) throw ConfigError("tune_quartic: requires at least 3 ions");
    if (!(target_spacing > 0.0)) throw ConfigError("tune_quartic: target spacing must be > 0");

    const IonChain current = equilibrium_positions(trap);
    const SpacingStats now = spacing_stats(central_spacings(current.positions, opt.central_fraction));
    const bool mean_ok = std::abs(now.mean - target_spacing) <= 0.01 * target_spacing;
    const double c = trap.coulomb_rate();

    if (opt.fix_quartic) {
        if (mean_ok) return trap;
        if (trap.axial_quartic != 0.0)
            throw ConfigError("tune_quartic: fix_quartic with nonzero quartic is not supported");
        TrapConfig out = trap;
        const double r = now.mean / target_spacing;
        out.axial_quadratic = trap.axial_quadratic * r * r * r;
        return out;
    }

    auto objective = [&](double a2, double* mean_u) {
        const auto sol = detail::solve_dimensionless(trap.n_ions, a2, 1.0);
        std::vector<double> pos(sol.u.data(), sol.u.data() + sol.u.size());
        const SpacingStats st = spacing_stats(central_spacings(pos, opt.central_fraction));
        if (mean_u) *mean_u = st.mean;
        return st.relative_variance;
    };

    // Coarse scan, then golden-section refinement around the best grid point.
    constexpr int grid = 41;
    double best_a2 = opt.search_min;
    double best_f = std::numeric_limits<double>::infinity();
    const double h = (opt.search_max - opt.search_min) / (grid - 1);
    for (int k = 0; k < grid; ++k) {
        const double a2 = opt.search_min + h * k;
        double f;
        try {
            f = objective(a2, nullptr);
        } catch (const ConvergenceError&) {
            continue;
        }
        if (f < best_f) {
            best_f = f;
            best_a2 = a2;
        }
    }
    if (!std::isfinite(best_f)) throw ConvergenceError("tune_quartic: no admissible trap shape found", best_f);

    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = std::max(opt.search_min, best_a2 - h), hi = std::min(opt.search_max, best_a2 + h);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = objective(x1, nullptr), f2 = objective(x2, nullptr);
    for (int it = 0; it < 80 && hi - lo > 1e-10; ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = objective(x1, nullptr);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = objective(x2, nullptr);
        }
    }
    double mean_u = 0.0;
    const double a2 = 0.5 * (lo + hi);
    const double f_opt = objective(a2, &mean_u);

    if (mean_ok && now.relative_variance <= f_opt + 1e-12) return trap;

    const double length = target_spacing / mean_u;
    TrapConfig out = trap;
    out.axial_quartic = c / std::pow(length, 5);
    out.axial_quadratic = a2 * c / (length * length * length);

    const SpacingStats check = spacing_stats(central_spacings(equilibrium_positions(out).positions, opt.central_fraction));
    if (std::abs(check.mean - target_spacing) > 0.01 * target_spacing)
        throw ConvergenceError("tune_quartic: rescaled trap misses the target spacing",
                               std::abs(check.mean - target_spacing) / target_spacing);
    return out;
}

/// Transverse Hessian (per mass) of a solved chain, exposed for sum-rule checks.
inline RMat transverse_hessian(const IonChain& chain) {
    const std::size_t n = chain.positions.size();
    const double c = chain.trap.coulomb_rate();
    const Eigen::Index ni = static_cast<Eigen::Index>(n);
    RMat a = RMat::Zero(ni, ni);
    for (Eigen::Index i = 0; i < ni; ++i) {
        a(i, i) = chain.trap.radial_com_freq * chain.trap.radial_com_freq;
        for (Eigen::Index j = 0; j < ni; ++j) {
            if (j == i) continue;
            const double d = std::abs(chain.positions[static_cast<std::size_t>(i)] - chain.positions[static_cast<std::size_t>(j)]);
            a(i, j) = c / (d * d * d);
            a(i, i) -= c / (d * d * d);
        }
    }
    return a;
}

/// Transverse normal modes from the Hessian of trap plus Coulomb energy.
/// Column m of the participation matrix is mode m; each column's first
/// significant entry is made positive.
inline ModeData transverse_modes(const IonChain& chain) {
    const std::size_t n = chain.positions.size();
    if (n != chain.trap.n_ions) throw ConfigError("transverse_modes: chain size does not match trap");
    const Eigen::Index ni = static_cast<Eigen::Index>(n);
    const RMat a = transverse_hessian(chain);

    Eigen::SelfAdjointEigenSolver<RMat> es(a);
    if (es.info() != Eigen::Success) throw ConvergenceError("transverse_modes: eigen-decomposition failed", 0.0);
    const RVec& lambda = es.eigenvalues();
    for (Eigen::Index m = 0; m < ni; ++m) {
        if (!(lambda[m] > 0.0)) {
            std::ostringstream msg;
            msg << "transverse_modes: mode " << m << " has non-positive squared frequency " << lambda[m]
                << " (transverse confinement too weak)";
            throw RegimeError(msg.str());
        }
    }

    ModeData modes;
    modes.freqs = lambda.cwiseSqrt();
    modes.participation = es.eigenvectors();
    for (Eigen::Index m = 0; m < ni; ++m) {
        for (Eigen::Index i = 0; i < ni; ++i) {
            if (std::abs(modes.participation(i, m)) > 1e-8) {
                if (modes.participation(i, m) < 0.0) modes.participation.col(m) *= -1.0;
                break;
            }
        }
    }
    modes.eta_scale = RVec::Zero(ni);
    modes.lamb_dicke = RMat::Zero(ni, ni);
    return modes;
}

/// Fills eta_m = k sqrt(hbar / (2 M w_m)); an override pins the COM value
/// and keeps the 1/sqrt(w_m) law.
inline ModeData lamb_dicke(ModeData modes, const TrapConfig& trap, std::optional<double> eta_com_override = {}) {
    const Eigen::Index n = modes.freqs.size();
    modes.eta_scale.resize(n);
    if (eta_com_override) {
        const double wcom = modes.com_freq();
        for (Eigen::Index m = 0; m < n; ++m) modes.eta_scale[m] = *eta_com_override * std::sqrt(wcom / modes.freqs[m]);
    } else if (trap.wave_number) {
        for (Eigen::Index m = 0; m < n; ++m)
            modes.eta_scale[m] = *trap.wave_number * std::sqrt(constants::hbar / (2.0 * trap.ion_mass * modes.freqs[m]));
    } else {
        throw ConfigError("lamb_dicke: need either trap.wave_number or an eta_com override");
    }
    modes.lamb_dicke = modes.participation * modes.eta_scale.asDiagonal();
    return modes;
}

/// Positions, modes and Lamb-Dicke couplings in one call.
inline ModeData compute_modes(const TrapConfig& trap, std::optional<double> eta_com_override = {}) {
    return lamb_dicke(transverse_modes(equilibrium_positions(trap)), trap, eta_com_override);
}

}  // namespace ionhop

#endif  // IONHOP_CRYSTAL_HPP
