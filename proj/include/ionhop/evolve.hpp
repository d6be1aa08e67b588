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

// Passive linear evolution of the phonon modes.
//
// H = sum_km K_km a_k a_m^dag gives da_j/dt = -i sum_k K_kj a_k, so the
// Heisenberg transfer matrix is W = exp(-i K^T T) with a_k(T) = sum_m W_km a_m.
// A phonon created in mode m at t=0 leaves as sum_k W_km a_k^dag.

#ifndef IONHOP_EVOLVE_HPP
#define IONHOP_EVOLVE_HPP

#include <cmath>
#include <cstdint>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "ionhop/types.hpp"

namespace ionhop {

struct ModeUnitary {
    CMat matrix;  // W
    double duration = 0.0;
    CMat source_k;
};

using FockPattern = std::vector<unsigned>;

inline ModeUnitary mode_unitary(const CMat& k, double duration) {
    if (k.rows() != k.cols()) throw ConfigError("mode_unitary: K must be square");
    if (hermiticity_defect(k) > 1e-8) throw ConfigError("mode_unitary: K must be Hermitian");
    ModeUnitary u;
    u.duration = duration;
    u.source_k = k;
    if (k.size() == 0) return u;
    const CMat kt = k.transpose();
    const CMat h = 0.5 * (kt + kt.adjoint());
    Eigen::SelfAdjointEigenSolver<CMat> es(h);
    if (es.info() != Eigen::Success) throw ConvergenceError("mode_unitary: eigensolver failed", 0.0);
    CVec phase(k.rows());
    for (Eigen::Index j = 0; j < k.rows(); ++j) phase[j] = std::polar(1.0, -es.eigenvalues()[j] * duration);
    u.matrix = es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint();
    return u;
}

inline double unitarity_defect(const CMat& w) {
    return max_abs(w * w.adjoint() - CMat::Identity(w.rows(), w.cols()));
}

/// Ryser's formula with Gray-code column updates.
inline cplx permanent(const CMat& a, std::size_t max_n = 20) {
    const std::size_t n = static_cast<std::size_t>(a.rows());
    if (a.cols() != a.rows()) throw ConfigError("permanent: matrix must be square");
    if (n > max_n) {
        std::ostringstream msg;
        msg << "permanent: size " << n << " exceeds guard " << max_n;
        throw SizeError(msg.str());
    }
    if (n == 0) return 1.0;
    CVec rowsum = CVec::Zero(Eigen::Index(n));
    cplx total = 0.0;
    std::uint64_t gray = 0;
    const std::uint64_t subsets = std::uint64_t{1} << n;
    for (std::uint64_t s = 1; s < subsets; ++s) {
        const std::uint64_t next = s ^ (s >> 1);
        const std::uint64_t flip = next ^ gray;
        const int col = __builtin_ctzll(flip);
        if (next & flip)
            rowsum += a.col(col);
        else
            rowsum -= a.col(col);
        gray = next;
        cplx prod = rowsum.prod();
        total += (__builtin_popcountll(gray) % 2 == 1) ? -prod : prod;
    }
    return (n % 2 == 1) ? -total : total;
}

inline unsigned total_number(const FockPattern& p) {
    unsigned t = 0;
    for (unsigned n : p) t += n;
    return t;
}

inline double factorial(unsigned n) {
    double f = 1.0;
    for (unsigned k = 2; k <= n; ++k) f *= k;
    return f;
}

struct EvolveGuards {
    unsigned max_total = 10;
    std::size_t max_permanent = 20;
};

/// |Perm(W[out, in])|^2 / (prod in! prod out!) with rows and columns repeated by occupation.
inline double output_probability(const ModeUnitary& w, const FockPattern& input, const FockPattern& output,
                                 const EvolveGuards& guard = {}) {
    const std::size_t n = static_cast<std::size_t>(w.matrix.rows());
    if (input.size() != n || output.size() != n) throw ConfigError("output_probability: pattern length must match modes");
    const unsigned total = total_number(input);
    if (total != total_number(output)) throw ConfigError("output_probability: phonon number mismatch");
    if (total > guard.max_total) {
        std::ostringstream msg;
        msg << "output_probability: " << total << " phonons exceed guard " << guard.max_total;
        throw SizeError(msg.str());
    }
    std::vector<Eigen::Index> rows, cols;
    double norm = 1.0;
    for (std::size_t m = 0; m < n; ++m) {
        for (unsigned c = 0; c < input[m]; ++c) cols.push_back(Eigen::Index(m));
        for (unsigned c = 0; c < output[m]; ++c) rows.push_back(Eigen::Index(m));
        norm *= factorial(input[m]) * factorial(output[m]);
    }
    const auto dim = static_cast<Eigen::Index>(total);
    CMat sub(dim, dim);
    for (unsigned r = 0; r < total; ++r)
        for (unsigned c = 0; c < total; ++c) sub(r, c) = w.matrix(rows[r], cols[c]);
    return std::norm(permanent(sub, guard.max_permanent)) / norm;
}

/// All occupation patterns of `n_modes` modes holding `total` phonons, in lexicographic order.
inline std::vector<FockPattern> fock_sector(std::size_t n_modes, unsigned total) {
    std::vector<FockPattern> out;
    if (n_modes == 0) {
        if (total == 0) out.emplace_back();
        return out;
    }
    FockPattern cur(n_modes, 0);
    auto rec = [&](auto&& self, std::size_t m, unsigned left) -> void {
        if (m + 1 == n_modes) {
            cur[m] = left;
            out.push_back(cur);
            return;
        }
        for (unsigned k = left + 1; k-- > 0;) {
            cur[m] = k;
            self(self, m + 1, left - k);
        }
    };
    rec(rec, 0, total);
    return out;
}

inline std::vector<std::pair<FockPattern, double>> output_distribution(const ModeUnitary& w, const FockPattern& input,
                                                                       const EvolveGuards& guard = {}) {
    std::vector<std::pair<FockPattern, double>> dist;
    for (auto& pat : fock_sector(static_cast<std::size_t>(w.matrix.rows()), total_number(input))) {
        const double p = output_probability(w, input, pat, guard);
        dist.emplace_back(std::move(pat), p);
    }
    return dist;
}

// Gaussian states in the complex ordering xi = (a_1..a_N, a_1^dag..a_N^dag).
// V_ij = <{d xi_i, d xi_j^dag}> / 2; the vacuum is I/2.

struct GaussianState {
    CVec means;       // <a_m>
    CMat covariance;  // 2N x 2N
};

inline GaussianState vacuum_state(std::size_t n) {
    const auto m = Eigen::Index(n);
    return {CVec::Zero(m), 0.5 * CMat::Identity(2 * m, 2 * m)};
}

/// Rejects covariances violating V + Z/2 >= 0, Z = diag(I, -I).
inline void require_physical(const CMat& v, double tol = 1e-10) {
    const Eigen::Index n2 = v.rows();
    if (v.cols() != n2 || n2 % 2 != 0) throw ConfigError("covariance: must be 2N x 2N");
    if (max_abs(v - v.adjoint()) > tol) throw ConfigError("covariance: must be Hermitian");
    CMat test = v;
    for (Eigen::Index j = 0; j < n2; ++j) test(j, j) += (j < n2 / 2) ? 0.5 : -0.5;
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (test + test.adjoint()), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol) throw ConfigError("covariance: violates the uncertainty relation");
}

inline GaussianState covariance_evolve(const ModeUnitary& w, const GaussianState& in) {
    const Eigen::Index n = w.matrix.rows();
    if (in.means.size() != n || in.covariance.rows() != 2 * n) throw ConfigError("covariance_evolve: size mismatch");
    require_physical(in.covariance);
    CMat s = CMat::Zero(2 * n, 2 * n);
    s.topLeftCorner(n, n) = w.matrix;
    s.bottomRightCorner(n, n) = w.matrix.conjugate();
    return {w.matrix * in.means, s * in.covariance * s.adjoint()};
}

/// <n_m> = V_mm - 1/2 + |<a_m>|^2.
inline RVec mean_occupations(const GaussianState& g) {
    const Eigen::Index n = g.means.size();
    RVec out(n);
    for (Eigen::Index m = 0; m < n; ++m) out[m] = g.covariance(m, m).real() - 0.5 + std::norm(g.means[m]);
    return out;
}

}  // namespace ionhop

#endif  // IONHOP_EVOLVE_HPP
