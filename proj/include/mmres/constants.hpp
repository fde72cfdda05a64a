#pragma once

#include <numbers>

namespace mmres::constants {

// CODATA 2018 exact values.
inline constexpr double planck = 6.62607015e-34;              // J s
inline constexpr double hbar = planck / (2.0 * std::numbers::pi); // J s
inline constexpr double boltzmann = 1.380649e-23;             // J / K

/// hbar * omega / k_B in kelvin for a frequency in GHz.
constexpr double photon_temperature_k(double f_ghz) {
    return planck * f_ghz * 1e9 / boltzmann;
}

inline constexpr double bcs_gap_ratio = 1.764;

} // namespace mmres::constants
