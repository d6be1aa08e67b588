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

// Inverse problem: amplitudes (and optionally tones) realising a target K.
//
// The tone grid is held fixed while the complex amplitudes are optimised by
// projected Levenberg-Marquardt in variables z_ip = Omega_ip / b_ip, where
// b_ip is the largest amplitude keeping every eps_imp below the cap. The
// unit disk |z_ip| <= 1 is therefore exactly the dispersive constraint.

#ifndef IONHOP_COMPILER_HPP
#define IONHOP_COMPILER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

#include "ionhop/constants.hpp"
#include "ionhop/crystal.hpp"
#include "ionhop/drive.hpp"
#include "ionhop/effective.hpp"
#include "ionhop/types.hpp"

namespace ionhop {

struct CompileTask {
    CMat target;                                  // rad/s, Hermitian, modes x modes
    IndexRange mode_window;
    std::optional<RVec> fixed_tones;              // rad/s
    std::optional<std::vector<std::size_t>> ions; // overrides the ion choice
    std::size_t ion_budget = 4;
    std::size_t tone_budget = 2;
    double epsilon_cap = 0.1;
    RMat weight;                                  // empty: 1 on the window block
    double duration = 1e-3;                       // s
    double base_detuning = constants::two_pi * 400e3;  // comb offset for seeds, rad/s
    double tolerance = 0.05;
    std::size_t restarts = 8;
    std::uint64_t seed = 0;
    std::size_t max_iterations = 400;
    bool refine_tones = false;

    void validate(std::size_t n_modes, std::size_t n_ions) const {
        const auto n = static_cast<Eigen::Index>(n_modes);
        if (target.rows() != n || target.cols() != n) throw ConfigError("compile: target must be modes x modes");
        if (!target.allFinite()) throw ConfigError("compile: target must be finite");
        if (max_abs(target - target.adjoint()) > 1e-10 * std::max(1.0, max_abs(target)))
            throw ConfigError("compile: target must be Hermitian");
        if (mode_window.size() == 0 || mode_window.end > n_modes) throw ConfigError("compile: bad mode window");
        if (ion_budget < 1 || tone_budget < 1) throw ConfigError("compile: budgets must be >= 1");
        if (ion_budget > n_ions) throw ConfigError("compile: ion budget exceeds chain length");
        if (!(epsilon_cap > 0.0 && epsilon_cap <= 0.3)) throw ConfigError("compile: epsilon_cap must be in (0, 0.3]");
        if (!(duration > 0.0)) throw ConfigError("compile: duration must be > 0");
        if (!(tolerance > 0.0)) throw ConfigError("compile: tolerance must be > 0");
        if (restarts < 1) throw ConfigError("compile: at least one restart required");
        if (weight.size() != 0) {
            if (weight.rows() != n || weight.cols() != n) throw ConfigError("compile: weight must be modes x modes");
            if ((weight.array() < 0.0).any() || !weight.allFinite())
                throw ConfigError("compile: weights must be finite and >= 0");
        }
        if (fixed_tones) {
            if (fixed_tones->size() < 1) throw ConfigError("compile: fixed_tones must not be empty");
            if (static_cast<std::size_t>(fixed_tones->size()) > tone_budget)
                throw ConfigError("compile: fixed_tones exceed the tone budget");
        }
        if (ions) {
            if (ions->empty() || ions->size() > ion_budget) throw ConfigError("compile: ion list must fit the ion budget");
            for (std::size_t i : *ions)
                if (i >= n_ions) throw ConfigError("compile: ion index out of range");
        }
    }

    RMat effective_weight() const {
        if (weight.size() != 0) return weight;
        RMat w = RMat::Zero(target.rows(), target.cols());
        const auto b = static_cast<Eigen::Index>(mode_window.begin);
        const auto s = static_cast<Eigen::Index>(mode_window.size());
        w.block(b, b, s, s).setOnes();
        return w;
    }
};

/// Weighted Frobenius error of `achieved`, relative to the target's weighted norm.
inline double weighted_residual(const CMat& target, const CMat& achieved, const RMat& weight) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index k = 0; k < target.rows(); ++k)
        for (Eigen::Index m = 0; m < target.cols(); ++m) {
            num += weight(k, m) * std::norm(achieved(k, m) - target(k, m));
            den += weight(k, m) * std::norm(target(k, m));
        }
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(num / den);
}

struct SeedResult {
    DriveProgram drive;
    std::size_t band = 0;        // dominant off-diagonal band, 0 for a diagonal target
    bool long_range = false;     // no band holds half the off-diagonal weight
    bool non_equidistant = false;
    double spacing_spread = 0.0; // (max gap - min gap) / mean gap over the window
    std::vector<std::size_t> ion_order;  // selected ions, best first, up to the ion budget
};

struct CompileResult {
    DriveProgram drive;
    CMat achieved;  // recomputed from drive through `effective`
    double residual = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::uint64_t seed = 0;
    std::size_t restart = 0;  // index of the winning restart
    std::vector<std::uint64_t> restart_seeds;
    std::vector<double> restart_residuals;
    double max_epsilon = 0.0;
    bool non_equidistant = false;
};

namespace detail {

inline std::uint64_t restart_seed(std::uint64_t seed, std::size_t r) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(r)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// bound(r, p) = cap / max_m |eta_im / Delta_pm|.
inline RMat amplitude_bounds(const ModeData& modes, const std::vector<std::size_t>& ions, const RVec& tones,
                             double cap) {
    RMat b(static_cast<Eigen::Index>(ions.size()), tones.size());
    for (std::size_t r = 0; r < ions.size(); ++r) {
        for (Eigen::Index p = 0; p < tones.size(); ++p) {
            double worst = 0.0;
            for (Eigen::Index m = 0; m < modes.freqs.size(); ++m) {
                const double d = modes.freqs[m] - tones[p];
                if (d == 0.0) throw RegimeError("compile: tone exactly resonant with a red sideband");
                worst = std::max(worst, std::abs(modes.lamb_dicke(Eigen::Index(ions[r]), m) / d));
            }
            // Margin absorbs the grid snap applied to the final amplitudes.
            b(Eigen::Index(r), p) = worst > 0.0 ? cap / worst * (1.0 - 1e-9) : std::numeric_limits<double>::max();
        }
    }
    return b;
}

struct Entry {
    Eigen::Index k, m;
    double sqrt_w;
    cplx target;
};

/// Weighted least-squares problem on a fixed tone grid and ion set.
class Problem {
public:
    Problem(const CompileTask& task, const ModeData& modes, std::vector<std::size_t> ions, const RVec& tones)
        : ions_(std::move(ions)),
          tones_(tones),
          kernel_(tones, modes.freqs, task.duration),
          bound_(amplitude_bounds(modes, ions_, tones, task.epsilon_cap)) {
        const RMat w = task.effective_weight();
        double norm2 = 0.0;
        for (Eigen::Index k = 0; k < w.rows(); ++k)
            for (Eigen::Index m = 0; m < w.cols(); ++m)
                if (w(k, m) > 0.0) {
                    entries_.push_back({k, m, std::sqrt(w(k, m)), task.target(k, m)});
                    norm2 += w(k, m) * std::norm(task.target(k, m));
                }
        target_norm_ = std::sqrt(norm2);
        eta_.resize(Eigen::Index(ions_.size()), modes.freqs.size());
        for (std::size_t r = 0; r < ions_.size(); ++r) eta_.row(Eigen::Index(r)) = modes.lamb_dicke.row(Eigen::Index(ions_[r]));
    }

    Eigen::Index n_ions() const { return Eigen::Index(ions_.size()); }
    Eigen::Index n_tones() const { return tones_.size(); }
    Eigen::Index n_vars() const { return 2 * n_ions() * n_tones(); }
    const std::vector<std::size_t>& ions() const { return ions_; }
    const RVec& tones() const { return tones_; }
    const RMat& bound() const { return bound_; }
    const std::vector<Entry>& entries() const { return entries_; }
    double target_norm() const { return target_norm_; }

    CMat amplitudes(const RVec& x) const {
        CMat a(n_ions(), n_tones());
        for (Eigen::Index r = 0; r < n_ions(); ++r)
            for (Eigen::Index p = 0; p < n_tones(); ++p) {
                const Eigen::Index v = 2 * (r * n_tones() + p);
                a(r, p) = bound_(r, p) * cplx(x[v], x[v + 1]);
            }
        return a;
    }

    RVec variables(const CMat& a) const {
        RVec x(n_vars());
        for (Eigen::Index r = 0; r < n_ions(); ++r)
            for (Eigen::Index p = 0; p < n_tones(); ++p) {
                const Eigen::Index v = 2 * (r * n_tones() + p);
                const cplx z = a(r, p) / bound_(r, p);
                x[v] = z.real();
                x[v + 1] = z.imag();
            }
        return x;
    }

    /// Residuals: weighted entry errors (Re, Im) relative to the target norm,
    /// then one barrier term per amplitude. Fills the Jacobian if requested.
    RVec residuals(const RVec& x, RMat* jac) const {
        const Eigen::Index ne = Eigen::Index(entries_.size());
        const Eigen::Index nv = n_vars();
        const Eigen::Index np = n_tones();
        RVec res(2 * ne + nv / 2);
        if (jac) jac->setZero(res.size(), nv);
        const CMat a = amplitudes(x);
        const double scale = 1.0 / target_norm_;
        CVec fwd(np), back(np);
        for (Eigen::Index e = 0; e < ne; ++e) {
            const Entry& en = entries_[std::size_t(e)];
            cplx k = 0.0;
            for (Eigen::Index r = 0; r < n_ions(); ++r) {
                const double ee = eta_(r, en.k) * eta_(r, en.m);
                if (ee == 0.0) continue;
                for (Eigen::Index p = 0; p < np; ++p) {
                    cplx f = 0.0, b = 0.0;
                    for (Eigen::Index q = 0; q < np; ++q) {
                        f += kernel_.at(en.k, en.m, p, q) * a(r, q);
                        b += std::conj(a(r, q)) * kernel_.at(en.k, en.m, q, p);
                    }
                    fwd[p] = f;
                    back[p] = b;
                    k += ee * std::conj(a(r, p)) * f;
                }
                if (!jac) continue;
                const double c = ee * en.sqrt_w * scale;
                for (Eigen::Index p = 0; p < np; ++p) {
                    const Eigen::Index v = 2 * (r * np + p);
                    const double bd = bound_(r, p);
                    const cplx du = c * bd * (fwd[p] + back[p]);
                    const cplx dv = c * bd * kI * (back[p] - fwd[p]);
                    (*jac)(2 * e, v) = du.real();
                    (*jac)(2 * e + 1, v) = du.imag();
                    (*jac)(2 * e, v + 1) = dv.real();
                    (*jac)(2 * e + 1, v + 1) = dv.imag();
                }
            }
            const cplx err = en.sqrt_w * scale * (k - en.target);
            res[2 * e] = err.real();
            res[2 * e + 1] = err.imag();
        }
        for (Eigen::Index j = 0; j < nv / 2; ++j) {
            const double u = x[2 * j], v = x[2 * j + 1];
            const double rad = std::hypot(u, v);
            const double over = rad - kBarrierStart;
            res[2 * ne + j] = over > 0.0 ? kBarrierWeight * over : 0.0;
            if (jac && over > 0.0) {
                (*jac)(2 * ne + j, 2 * j) = kBarrierWeight * u / rad;
                (*jac)(2 * ne + j, 2 * j + 1) = kBarrierWeight * v / rad;
            }
        }
        return res;
    }

    /// Projects every z_ip onto the unit disk.
    static void project(RVec& x) {
        for (Eigen::Index j = 0; j + 1 < x.size(); j += 2) {
            const double rad = std::hypot(x[j], x[j + 1]);
            if (rad > 1.0) {
                x[j] /= rad;
                x[j + 1] /= rad;
            }
        }
    }

    /// Upper bound on |K_km| over the unit disk, per weighted entry.
    double coupling_bound(const Entry& en) const {
        double u = 0.0;
        for (Eigen::Index r = 0; r < n_ions(); ++r) {
            const double ee = std::abs(eta_(r, en.k) * eta_(r, en.m));
            for (Eigen::Index p = 0; p < n_tones(); ++p)
                for (Eigen::Index q = 0; q < n_tones(); ++q)
                    u += ee * bound_(r, p) * bound_(r, q) * std::abs(kernel_.at(en.k, en.m, p, q));
        }
        return u;
    }

    static constexpr double kBarrierStart = 0.95;
    static constexpr double kBarrierWeight = 0.1;

private:
    std::vector<std::size_t> ions_;
    RVec tones_;
    ToneKernel kernel_;
    RMat bound_;
    RMat eta_;
    std::vector<Entry> entries_;
    double target_norm_ = 0.0;
};

struct LmOutcome {
    RVec x;
    double cost = 0.0;
    std::size_t iterations = 0;
};

inline LmOutcome levenberg_marquardt(const Problem& prob, RVec x, std::size_t max_iterations) {
    Problem::project(x);
    const Eigen::Index nv = prob.n_vars();
    RMat jac;
    RVec r = prob.residuals(x, &jac);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    std::size_t it = 0;
    for (; it < max_iterations; ++it) {
        const RMat h = jac.transpose() * jac;
        const RVec g = jac.transpose() * r;
        if (g.norm() < 1e-15) break;
        bool accepted = false;
        double next_cost = cost;
        RVec next_x;
        while (lambda < 1e12) {
            RMat a = h;
            for (Eigen::Index j = 0; j < nv; ++j) a(j, j) += lambda * std::max(h(j, j), 1e-12);
            const RVec step = a.ldlt().solve(-g);
            next_x = x + step;
            Problem::project(next_x);
            next_cost = prob.residuals(next_x, nullptr).squaredNorm();
            if (next_cost < cost) {
                accepted = true;
                lambda = std::max(lambda / 3.0, 1e-12);
                break;
            }
            lambda *= 4.0;
        }
        if (!accepted) break;
        const double gain = cost - next_cost;
        x = next_x;
        cost = next_cost;
        r = prob.residuals(x, &jac);
        if (gain <= 1e-13 * cost || cost < 1e-26) {
            ++it;
            break;
        }
    }
    return {x, cost, it};
}

inline std::vector<double> spacing_gaps(const ModeData& modes, IndexRange win) {
    std::vector<double> g;
    for (std::size_t m = win.begin + 1; m < win.end; ++m)
        g.push_back(modes.freqs[Eigen::Index(m)] - modes.freqs[Eigen::Index(m - 1)]);
    return g;
}

/// Weighted real inner product Re sum_km w conj(A_km) B_km.
inline double inner(const CMat& a, const CMat& b, const RMat& w) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < w.rows(); ++k)
        for (Eigen::Index m = 0; m < w.cols(); ++m)
            if (w(k, m) != 0.0) s += w(k, m) * (std::conj(a(k, m)) * b(k, m)).real();
    return s;
}

struct IonFit {
    std::vector<std::size_t> ions;  // in selection order
    std::vector<double> weights;    // c_i >= 0, K ~ sum_i c_i K^(i)
    double cost = 0.0;              // weighted squared error of the fit
};

/// Nonnegative least squares of the target on the per-ion tensors of a set, by
/// active-set elimination of negative coefficients.
inline IonFit fit_set(const std::vector<std::size_t>& set, const std::vector<CMat>& per_ion, const CMat& target,
                      const RMat& w, double tt) {
    std::vector<std::size_t> active = set;
    IonFit fit;
    while (true) {
        const Eigen::Index n = Eigen::Index(active.size());
        RMat g(n, n);
        RVec b(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            b[i] = inner(per_ion[active[std::size_t(i)]], target, w);
            for (Eigen::Index j = 0; j <= i; ++j)
                g(i, j) = g(j, i) = inner(per_ion[active[std::size_t(i)]], per_ion[active[std::size_t(j)]], w);
        }
        const RVec c = n > 0 ? RVec(g.ldlt().solve(b)) : RVec();
        Eigen::Index worst = -1;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!(c[i] > 0.0) && (worst < 0 || c[i] < c[worst])) worst = i;
        if (worst >= 0) {
            active.erase(active.begin() + worst);
            continue;
        }
        fit.cost = tt - (n > 0 ? 2.0 * c.dot(b) - c.dot(g * c) : 0.0);
        for (std::size_t i : set) {
            const auto it = std::find(active.begin(), active.end(), i);
            fit.ions.push_back(i);
            fit.weights.push_back(it == active.end() ? 0.0 : c[it - active.begin()]);
        }
        return fit;
    }
}

/// Greedy forward selection of up to `budget` ions for a unit-amplitude drive pattern.
inline IonFit select_ions(const DriveProgram& pattern_all, const ModeData& modes, const CMat& target, const RMat& w,
                          std::size_t budget, const std::optional<std::vector<std::size_t>>& fixed) {
    const KTensor t = k_tensor(pattern_all, modes);
    std::vector<CMat> per_ion(modes.n_ions());
    for (std::size_t r = 0; r < t.ions.size(); ++r) per_ion[t.ions[r]] = t.per_ion[r];
    const double tt = inner(target, target, w);
    if (fixed) return fit_set(*fixed, per_ion, target, w, tt);
    IonFit best = fit_set({}, per_ion, target, w, tt);
    while (best.ions.size() < budget) {
        IonFit step;
        bool found = false;
        for (std::size_t i = 0; i < modes.n_ions(); ++i) {
            if (std::find(best.ions.begin(), best.ions.end(), i) != best.ions.end()) continue;
            auto set = best.ions;
            set.push_back(i);
            IonFit f = fit_set(set, per_ion, target, w, tt);
            if (!found || f.cost < step.cost) {
                step = std::move(f);
                found = true;
            }
        }
        if (!found) break;
        best = std::move(step);
    }
    return best;
}

}  // namespace detail

/// Comb seed chosen from the target's band structure, on ions picked by greedy
/// nonnegative least squares of the target on the per-ion hopping tensors.
inline SeedResult heuristic_seed(const CompileTask& task, const ModeData& modes) {
    task.validate(modes.n_modes(), modes.n_ions());
    SeedResult out;
    const IndexRange win = task.mode_window;
    const RMat w = task.effective_weight();

    const auto gaps = detail::spacing_gaps(modes, win);
    const double gap = mean_mode_spacing(modes, win);
    if (!gaps.empty() && gap > 0.0) {
        const auto [lo, hi] = std::minmax_element(gaps.begin(), gaps.end());
        out.spacing_spread = (*hi - *lo) / gap;
        out.non_equidistant = out.spacing_spread > 0.3;
    }

    std::vector<double> band(win.size(), 0.0);
    double off = 0.0;
    for (std::size_t k = win.begin; k < win.end; ++k)
        for (std::size_t m = win.begin; m < win.end; ++m) {
            if (k == m) continue;
            const double v = w(Eigen::Index(k), Eigen::Index(m)) * std::norm(task.target(Eigen::Index(k), Eigen::Index(m)));
            band[k > m ? k - m : m - k] += v;
            off += v;
        }
    if (off > 0.0) {
        out.band = std::size_t(std::max_element(band.begin() + 1, band.end()) - band.begin());
        out.long_range = band[out.band] < 0.5 * off;
    }

    const std::vector<std::size_t> everyone = all_ions(modes.n_ions());
    auto unit_comb = [&](std::size_t n_tones, double spacing, PhasePattern pattern) {
        if (task.fixed_tones) {
            DriveProgram d;
            d.tones = *task.fixed_tones;
            d.illuminated = everyone;
            d.duration = task.duration;
            d.amplitudes = CMat::Ones(Eigen::Index(everyone.size()), d.tones.size());
            if (pattern == PhasePattern::staggered)
                for (Eigen::Index p = 1; p < d.tones.size(); p += 2) d.amplitudes.col(p) *= -1.0;
            d.validate(modes.n_ions());
            return d;
        }
        return comb_program(modes, everyone, n_tones, spacing, task.base_detuning, 1.0, pattern, task.duration, win);
    };

    std::vector<std::pair<DriveProgram, detail::IonFit>> options;
    if (out.long_range) {
        const std::size_t nt = std::min<std::size_t>(6, task.tone_budget);
        // The phase pattern is chosen on the single-ion fit the seed will light.
        for (PhasePattern pat : {PhasePattern::staggered, PhasePattern::uniform}) {
            DriveProgram all = unit_comb(nt, gap, pat);
            std::optional<std::vector<std::size_t>> first;
            if (task.ions) first = std::vector<std::size_t>{task.ions->front()};
            auto fit = detail::select_ions(all, modes, task.target, w, 1, first);
            options.emplace_back(std::move(all), std::move(fit));
        }
    } else {
        const std::size_t d = std::max<std::size_t>(out.band, 1);
        DriveProgram all = unit_comb(std::min<std::size_t>(2, task.tone_budget), double(d) * gap, PhasePattern::uniform);
        auto fit = detail::select_ions(all, modes, task.target, w, task.ion_budget, task.ions);
        options.emplace_back(std::move(all), std::move(fit));
    }
    std::size_t pick = 0;
    for (std::size_t o = 1; o < options.size(); ++o)
        if (options[o].second.cost < options[pick].second.cost) pick = o;
    const DriveProgram& all = options[pick].first;
    const detail::IonFit& fit = options[pick].second;
    out.ion_order =
        out.long_range ? detail::select_ions(all, modes, task.target, w, task.ion_budget, task.ions).ions : fit.ions;

    // A long-range seed lights only the first selected ion.
    std::vector<std::size_t> lit = fit.ions;
    std::vector<double> c = fit.weights;
    if (out.long_range && lit.size() > 1) {
        lit.resize(1);
        c.resize(1);
    }
    std::vector<std::size_t> order(lit.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lit[a] < lit[b]; });

    DriveProgram d;
    d.tones = all.tones;
    d.duration = task.duration;
    for (std::size_t o : order) d.illuminated.push_back(lit[o]);
    d.amplitudes.resize(Eigen::Index(lit.size()), all.tones.size());
    const RMat bnd = detail::amplitude_bounds(modes, d.illuminated, d.tones, task.epsilon_cap);
    for (std::size_t r = 0; r < order.size(); ++r) {
        const double scale = std::sqrt(std::max(c[order[r]], 0.0));
        for (Eigen::Index p = 0; p < d.tones.size(); ++p) {
            const cplx unit = all.amplitudes(Eigen::Index(lit[order[r]]), p);
            const double lim = 0.9 * bnd(Eigen::Index(r), p);
            d.amplitudes(Eigen::Index(r), p) = unit * (scale > 0.0 ? std::min(scale, lim) : 0.5 * lim);
        }
    }
    d.canonicalize();
    d.validate(modes.n_ions());
    out.drive = std::move(d);
    return out;
}

/// g_ip = df/dRe(Omega_ip) + i df/dIm(Omega_ip) for f = sum_km w_km |K_km - T_km|^2.
inline CMat gradient(const CompileTask& task, const DriveProgram& drive, const ModeData& modes) {
    drive.validate(modes.n_ions());
    require_no_resonance(drive, modes, "gradient");
    const RMat w = task.effective_weight();
    const ToneKernel kernel(drive.tones, modes.freqs, drive.duration);
    const CMat k = k_matrix(k_tensor(drive, modes, kernel));
    const Eigen::Index np = drive.tones.size();
    CMat g = CMat::Zero(Eigen::Index(drive.n_lit()), np);
    for (Eigen::Index a = 0; a < w.rows(); ++a) {
        for (Eigen::Index b = 0; b < w.cols(); ++b) {
            if (w(a, b) == 0.0) continue;
            const cplx err = k(a, b) - task.target(a, b);
            for (std::size_t r = 0; r < drive.n_lit(); ++r) {
                const Eigen::Index ion = Eigen::Index(drive.illuminated[r]);
                const double ee = modes.lamb_dicke(ion, a) * modes.lamb_dicke(ion, b);
                if (ee == 0.0) continue;
                const auto amp = drive.amplitudes.row(Eigen::Index(r));
                for (Eigen::Index p = 0; p < np; ++p) {
                    cplx f = 0.0, bk = 0.0;
                    for (Eigen::Index q = 0; q < np; ++q) {
                        f += kernel.at(a, b, p, q) * amp(q);
                        bk += std::conj(amp(q)) * kernel.at(a, b, q, p);
                    }
                    const cplx du = ee * (f + bk);
                    const cplx dv = ee * kI * (bk - f);
                    const double gu = 2.0 * w(a, b) * (std::conj(err) * du).real();
                    const double gv = 2.0 * w(a, b) * (std::conj(err) * dv).real();
                    g(Eigen::Index(r), p) += cplx(gu, gv);
                }
            }
        }
    }
    return g;
}

namespace detail {

struct Candidate {
    DriveProgram drive;
    CMat achieved;
    double residual = std::numeric_limits<double>::infinity();
    double power = 0.0;
    std::size_t iterations = 0;
    RVec x;
};

inline Candidate finish(const Problem& prob, const LmOutcome& lm, const CompileTask& task, const ModeData& modes,
                        const RMat& w) {
    Candidate c;
    c.x = lm.x;
    c.iterations = lm.iterations;
    c.drive.tones = prob.tones();
    c.drive.illuminated = prob.ions();
    c.drive.duration = task.duration;
    c.drive.amplitudes = prob.amplitudes(lm.x);
    c.drive.canonicalize();
    c.achieved = k_matrix(k_tensor(c.drive, modes));
    c.residual = weighted_residual(task.target, c.achieved, w);
    c.power = c.drive.power();
    return c;
}

inline bool better(const Candidate& a, const Candidate& b) {
    if (a.residual != b.residual) return a.residual < b.residual;
    return a.power < b.power;
}

}  // namespace detail

inline CompileResult compile(const CompileTask& task, const ModeData& modes) {
    task.validate(modes.n_modes(), modes.n_ions());
    const RMat w = task.effective_weight();
    const SeedResult seed = heuristic_seed(task, modes);

    CompileResult out;
    out.seed = task.seed;
    out.non_equidistant = seed.non_equidistant;

    // Optimise over the full ion budget; rows absent from the seed start at zero.
    std::vector<std::size_t> ions = task.ions ? *task.ions : seed.ion_order;
    for (std::size_t i : seed.drive.illuminated)
        if (std::find(ions.begin(), ions.end(), i) == ions.end()) ions.push_back(i);
    std::sort(ions.begin(), ions.end());
    CMat seed_amp = CMat::Zero(Eigen::Index(ions.size()), seed.drive.tones.size());
    for (std::size_t r = 0; r < seed.drive.n_lit(); ++r) {
        const auto pos = std::find(ions.begin(), ions.end(), seed.drive.illuminated[r]) - ions.begin();
        seed_amp.row(pos) = seed.drive.amplitudes.row(Eigen::Index(r));
    }

    double tnorm = 0.0;
    for (Eigen::Index a = 0; a < w.rows(); ++a)
        for (Eigen::Index b = 0; b < w.cols(); ++b) tnorm += w(a, b) * std::norm(task.target(a, b));

    const detail::Problem prob(task, modes, ions, seed.drive.tones);
    if (tnorm == 0.0) {
        detail::LmOutcome zero{RVec::Zero(prob.n_vars()), 0.0, 0};
        const auto c = detail::finish(prob, zero, task, modes, w);
        out.drive = c.drive;
        out.achieved = c.achieved;
        out.residual = c.residual;
        out.converged = true;
        out.restart_seeds = {task.seed};
        out.restart_residuals = {c.residual};
        return out;
    }

    for (const auto& en : prob.entries()) {
        const double need = std::abs(en.target);
        const double have = prob.coupling_bound(en);
        if (need > have) {
            std::ostringstream msg;
            msg << "compile: target |K(" << en.k << "," << en.m << ")| = " << need / constants::two_pi
                << " Hz exceeds the largest coupling reachable at epsilon_cap " << task.epsilon_cap << " ("
                << have / constants::two_pi << " Hz)";
            throw InfeasibleError(msg.str(), have, need);
        }
    }

    const RVec x_seed = prob.variables(seed_amp);
    std::vector<std::future<detail::Candidate>> jobs;
    for (std::size_t r = 0; r < task.restarts; ++r) {
        const std::uint64_t rs = detail::restart_seed(task.seed, r);
        out.restart_seeds.push_back(rs);
        jobs.push_back(std::async(std::launch::async, [&, r, rs] {
            RVec x = x_seed;
            if (r > 0) {
                std::mt19937_64 rng(rs);
                std::normal_distribution<double> g(0.0, 1.0);
                std::uniform_real_distribution<double> ph(0.0, constants::two_pi);
                for (Eigen::Index j = 0; j + 1 < x.size(); j += 2) {
                    const cplx z = cplx(x[j], x[j + 1]) * std::exp(0.5 * g(rng)) * std::polar(1.0, 0.5 * g(rng)) +
                                   std::polar(0.3 * std::abs(g(rng)), ph(rng));
                    x[j] = z.real();
                    x[j + 1] = z.imag();
                }
            }
            return detail::finish(prob, detail::levenberg_marquardt(prob, x, task.max_iterations), task, modes, w);
        }));
    }
    detail::Candidate best;
    std::size_t total_iterations = 0;
    for (std::size_t r = 0; r < jobs.size(); ++r) {
        detail::Candidate c = jobs[r].get();
        total_iterations += c.iterations;
        out.restart_residuals.push_back(c.residual);
        if (r == 0 || detail::better(c, best)) {
            best = std::move(c);
            out.restart = r;
        }
    }

    if (task.refine_tones && best.drive.n_tones() > 0) {
        const double gap = std::max(mean_mode_spacing(modes, task.mode_window), 1.0 / task.duration);
        for (double h : {gap / 8.0, gap / 16.0, gap / 32.0}) {
            for (Eigen::Index p = 0; p < best.drive.tones.size(); ++p) {
                for (double sgn : {-1.0, 1.0}) {
                    RVec tones = best.drive.tones;
                    tones[p] = snap_angular(tones[p] + sgn * h);
                    bool ok = true;
                    for (Eigen::Index q = 1; q < tones.size(); ++q) ok = ok && tones[q] > tones[q - 1];
                    for (Eigen::Index m = 0; ok && m < modes.freqs.size(); ++m) ok = modes.freqs[m] != tones[p];
                    if (!ok) continue;
                    const detail::Problem trial(task, modes, ions, tones);
                    const RVec x0 = trial.variables(best.drive.amplitudes);
                    auto c = detail::finish(trial, detail::levenberg_marquardt(trial, x0, task.max_iterations), task,
                                            modes, w);
                    total_iterations += c.iterations;
                    if (detail::better(c, best)) best = std::move(c);
                }
            }
        }
    }

    out.drive = best.drive;
    out.achieved = best.achieved;
    out.residual = best.residual;
    out.iterations = total_iterations;
    out.converged = out.residual < task.tolerance;
    const DispersiveReport rep = dispersive_check(out.drive, modes, task.epsilon_cap);
    out.max_epsilon = rep.max_epsilon;
    if (rep.epsilon_violation) throw RegimeError("compile: optimised drive exceeds epsilon_cap");
    return out;
}

}  // namespace ionhop

#endif  // IONHOP_COMPILER_HPP
