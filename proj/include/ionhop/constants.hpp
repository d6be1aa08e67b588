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

#ifndef IONHOP_CONSTANTS_HPP
#define IONHOP_CONSTANTS_HPP

#include <numbers>

namespace ionhop::constants {

// CODATA 2018.
inline constexpr double hbar = 1.054571817e-34;          // J s
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double epsilon0 = 8.8541878128e-12;     // F / m
inline constexpr double amu = 1.66053906660e-27;         // kg

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// e^2 / (4 pi eps0), J m.
inline constexpr double coulomb_constant_e2 =
    elementary_charge * elementary_charge / (4.0 * pi * epsilon0);

inline constexpr double yb171_mass = 170.9363258 * amu;

/// Counter-propagating Raman beams at 355 nm: k = 2 * (2 pi / lambda).
inline constexpr double raman_355nm_wave_number = 2.0 * two_pi / 355e-9;

}  // namespace ionhop::constants

#endif  // IONHOP_CONSTANTS_HPP
