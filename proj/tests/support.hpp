#pragma once

// Shared generators and independent reference computations for the test
// binaries.

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mmres/mmres.hpp"

namespace mmres::support {

inline double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

inline double uniform(Rng& r, double lo, double hi) { return lo + (hi - lo) * r.uniform(); }

inline double log_uniform(Rng& r, double lo, double hi) {
    return std::exp(uniform(r, std::log(lo), std::log(hi)));
}

inline cplx random_phase(Rng& r, double mag) { return std::polar(mag, uniform(r, -std::numbers::pi, std::numbers::pi)); }

inline std::vector<double> linear_grid(double lo, double hi, std::size_t n) {
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) f[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return f;
}

/// Error adapters with |e11| <= 0.3, directivities <= 0.1 and cable-like
/// frequency-dependent phase on the path terms.
inline ErrorTerms random_error_terms(Rng& r, const std::vector<double>& freqs) {
    ErrorTerms t;
    t.freqs_ghz = freqs;
    const double a10 = uniform(r, 0.2, 0.9), a23 = uniform(r, 0.2, 0.9), a32 = uniform(r, 0.05, 0.6);
    const double tau10 = uniform(r, 0.5, 3.0), tau23 = uniform(r, 0.5, 3.0), tau32 = uniform(r, 0.5, 3.0);
    const cplx d30 = random_phase(r, uniform(r, 0.0, 0.1)), d33 = random_phase(r, uniform(r, 0.0, 0.1));
    const cplx m11 = random_phase(r, uniform(r, 0.0, 0.3));
    const double f_mid = 0.5 * (freqs.front() + freqs.back());
    for (double f : freqs) {
        const double k = 2.0 * std::numbers::pi * f;
        ErrorTermPoint e;
        e.e10 = std::polar(a10, -k * tau10);
        e.e23 = std::polar(a23, -k * tau23);
        e.e32 = std::polar(a32, -k * tau32);
        e.e30 = d30 * std::polar(1.0, 0.3 * (f - f_mid));
        e.e33 = d33 * std::polar(1.0, -0.2 * (f - f_mid));
        e.e11 = m11 * std::polar(1.0, 0.1 * (f - f_mid));
        t.points.push_back(e);
    }
    return t;
}

/// Symmetric DUT with |S21|^2 + |S22|^2 <= 1 at every point.
inline SymmetricDut random_passive_dut(Rng& r, const std::vector<double>& freqs) {
    SymmetricDut d;
    d.freqs_ghz = freqs;
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        const double m21 = std::sqrt(r.uniform()), m22 = std::sqrt(r.uniform() * (1.0 - m21 * m21));
        d.s21.push_back(random_phase(r, m21));
        d.s22.push_back(random_phase(r, m22));
    }
    return d;
}

inline SymmetricDut ideal_standard(const std::vector<double>& freqs, cplx s21, cplx s22) {
    SymmetricDut d;
    d.freqs_ghz = freqs;
    d.s21.assign(freqs.size(), s21);
    d.s22.assign(freqs.size(), s22);
    return d;
}

/// A matched line whose electrical length keeps t^2 away from 1 across the grid.
inline SymmetricDut line_standard(const std::vector<double>& freqs, double delay_ns) {
    SymmetricDut d;
    d.freqs_ghz = freqs;
    for (double f : freqs) {
        d.s21.push_back(std::polar(1.0, -2.0 * std::numbers::pi * f * delay_ns));
        d.s22.push_back(0.0);
    }
    return d;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("mmres_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// ---------------------------------------------------------------------------
// Brute-force Mattis-Bardeen reference: composite trapezoid with square-root
// substitutions at each integrable endpoint. Energies in kelvin.

namespace mb_ref {

inline double fermi(double e, double t) { return 1.0 / (std::exp(e / t) + 1.0); }

template <class F>
double trapezoid(F&& g, double a, double b, std::size_t n) {
    const double h = (b - a) / static_cast<double>(n);
    double s = 0.5 * (g(a) + g(b));
    for (std::size_t i = 1; i < n; ++i) s += g(a + h * static_cast<double>(i));
    return s * h;
}

/// Integral over [a, b] of g with inverse-square-root endpoints, split at the
/// midpoint with E = a + s^2 and E = b - s^2. The callers pass
/// ra(E) = g(E) sqrt(E - a) and rb(E) = g(E) sqrt(b - E) in closed form.
template <class Ra, class Rb>
double two_sided(Ra&& ra, Rb&& rb, double a, double b, std::size_t n) {
    const double s_max = std::sqrt(0.5 * (b - a));
    return trapezoid([&](double s) { return 2.0 * ra(a + s * s); }, 0.0, s_max, n / 2) +
           trapezoid([&](double s) { return 2.0 * rb(b - s * s); }, 0.0, s_max, n / 2);
}

inline Conductivity sigma(double t, double f_ghz, double tc, std::size_t n = 1000000) {
    const double w = constants::planck * f_ghz * 1e9 / constants::boltzmann;
    const double d = constants::bcs_gap_ratio * tc * std::tanh(1.74 * std::sqrt(tc / t - 1.0));
    Conductivity out;

    // Thermal: E = D + s^2, sqrt(E^2 - D^2) = s sqrt(2D + s^2).
    out.sigma1 = 2.0 / w * trapezoid(
                               [&](double s) {
                                   const double e = d + s * s;
                                   const double occ = fermi(e, t) - fermi(e + w, t);
                                   return 2.0 * occ * (e * e + d * d + w * e) /
                                          (std::sqrt(2.0 * d + s * s) * std::sqrt((e + w) * (e + w) - d * d));
                               },
                               0.0, std::sqrt(60.0 * t), n);

    if (w > 2.0 * d) {
        // E in [D - w, -D]; the coherence factor is negative there.
        auto core = [&](double e) { return -(1.0 - 2.0 * fermi(e + w, t)) * (e * e + d * d + w * e); };
        out.sigma1 += 1.0 / w * two_sided(
                                    [&](double e) {
                                        return core(e) / (std::sqrt(e * e - d * d) * std::sqrt(e + w + d));
                                    },
                                    [&](double e) {
                                        return core(e) / (std::sqrt(d - e) * std::sqrt((e + w) * (e + w) - d * d));
                                    },
                                    d - w, -d, n);
    }

    // E in [max(D - w, -D), D].
    auto core = [&](double e) { return (1.0 - 2.0 * fermi(e + w, t)) * (e * e + d * d + w * e); };
    const bool subgap = w < 2.0 * d;
    out.sigma2 = 1.0 / w * two_sided(
                               [&](double e) {
                                   return subgap ? core(e) / (std::sqrt(d * d - e * e) * std::sqrt(e + w + d))
                                                 : core(e) / (std::sqrt(d - e) * std::sqrt((e + w) * (e + w) - d * d));
                               },
                               [&](double e) {
                                   return core(e) / (std::sqrt(d + e) * std::sqrt((e + w) * (e + w) - d * d));
                               },
                               subgap ? d - w : -d, d, n);
    return out;
}

} // namespace mb_ref

} // namespace mmres::support
