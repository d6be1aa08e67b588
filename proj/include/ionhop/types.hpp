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

#ifndef IONHOP_TYPES_HPP
#define IONHOP_TYPES_HPP

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ionhop {

using cplx = std::complex<double>;
using RVec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;

inline constexpr cplx kI{0.0, 1.0};

/// Failure categories; the CLI maps these onto process exit codes.
enum class ErrorKind {
    config,      // malformed or inconsistent input
    regime,      // physics-regime violation (resonance, dispersive breakdown)
    convergence, // numerical non-convergence
    size,        // guard on problem size exceeded
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class RegimeError : public Error {
public:
    explicit RegimeError(const std::string& what) : Error(ErrorKind::regime, what) {}
};

/// Carries the best residual reached before giving up.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(ErrorKind::convergence, what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// The target needs more coupling than the amplitude bounds allow.
/// `bound` is the largest achievable |K_km| at the limiting entry.
class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& what, double bound, double required)
        : Error(ErrorKind::convergence, what), bound_(bound), required_(required) {}
    double bound() const noexcept { return bound_; }
    double required() const noexcept { return required_; }

private:
    double bound_;
    double required_;
};

class SizeError : public Error {
public:
    explicit SizeError(const std::string& what) : Error(ErrorKind::size, what) {}
};

/// Half-open index range [begin, end).
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end > begin ? end - begin : 0; }
    bool contains(std::size_t i) const { return i >= begin && i < end; }
    friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// The `count` modes centred in a sorted spectrum of `n` modes (all of them if n < count).
inline IndexRange central_window(std::size_t n, std::size_t count = 20) {
    if (count >= n) return {0, n};
    const std::size_t begin = (n - count) / 2;
    return {begin, begin + count};
}

inline double max_abs(const CMat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// max |A - A^H| relative to max |A| (0 for the zero matrix).
inline double hermiticity_defect(const CMat& a) {
    const double scale = max_abs(a);
    if (scale == 0.0) return 0.0;
    return max_abs(a - a.adjoint()) / scale;
}

}  // namespace ionhop

#endif  // IONHOP_TYPES_HPP
