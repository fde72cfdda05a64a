#pragma once

// Forward-model data generators. Outputs depend only on the inputs and the
// seed; sub-streams use derive_seed(seed, k).

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mmres/calib.hpp"
#include "mmres/lossfit.hpp"
#include "mmres/resonance.hpp"
#include "mmres/rng.hpp"

namespace mmres {

enum class NoiseKind { none, complex_gaussian, multiplicative };

/// complex_gaussian: sigma is the standard deviation of each quadrature.
/// multiplicative: values are scaled by (1 + sigma N(0,1)).
struct NoiseSpec {
    NoiseKind kind = NoiseKind::none;
    double sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("noise sigma must be >= 0");
    }
    bool active() const { return kind != NoiseKind::none && sigma > 0.0; }
};

namespace detail {

inline void add_complex_noise(std::vector<cplx>& v, const NoiseSpec& n, std::uint64_t stream) {
    if (!n.active()) return;
    Rng rng(derive_seed(n.seed, stream));
    for (auto& z : v) {
        if (n.kind == NoiseKind::complex_gaussian) {
            const double re = rng.normal();
            const double im = rng.normal();
            z += n.sigma * cplx(re, im);
        } else {
            z *= 1.0 + n.sigma * rng.normal();
        }
    }
}

inline void scale_noise(std::vector<QiPoint>& pts, const NoiseSpec& n) {
    if (!n.active()) return;
    if (n.kind != NoiseKind::multiplicative)
        throw std::invalid_argument("Qi sweeps take multiplicative noise only");
    Rng rng(derive_seed(n.seed, 0));
    for (auto& p : pts) {
        p.qi *= 1.0 + n.sigma * rng.normal();
        if (!(p.qi > 0.0)) throw std::invalid_argument("noise drove Qi non-positive; reduce sigma");
    }
}

} // namespace detail

inline ComplexSweep synth_resonance(const ResonanceParams& p, std::span<const double> freqs_ghz,
                                    const NoiseSpec& noise = {}) {
    p.validate();
    noise.validate();
    std::vector<cplx> v;
    v.reserve(freqs_ghz.size());
    for (double f : freqs_ghz) v.push_back(s21_model(f, p));
    detail::add_complex_noise(v, noise, 0);
    return ComplexSweep(std::vector<double>(freqs_ghz.begin(), freqs_ghz.end()), std::move(v));
}

/// `n` points spanning f0 +/- `half_widths` linewidths (f0/Q).
inline std::vector<double> resonance_grid(const ResonanceParams& p, std::size_t n, double half_widths = 6.0) {
    if (n < 2) throw std::invalid_argument("grid needs at least 2 points");
    const double lw = p.f0_ghz / p.q_total;
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i)
        f[i] = p.f0_ghz + lw * half_widths * (2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0);
    return f;
}

inline std::vector<double> logspace(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0 && hi > 0.0) || n == 0) throw std::invalid_argument("logspace needs positive bounds");
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = n == 1 ? lo
                      : std::pow(10.0, std::log10(lo) + (std::log10(hi) - std::log10(lo)) *
                                                            static_cast<double>(i) / static_cast<double>(n - 1));
    return v;
}

inline std::vector<QiPoint> synth_power_sweep(const LossBudget& b, std::span<const double> nbars, double t_k,
                                              double f_ghz, const NoiseSpec& noise = {}) {
    b.validate();
    noise.validate();
    std::vector<QiPoint> pts;
    for (double n : nbars) pts.push_back({n, qi_total(t_k, n, f_ghz, b), 0.0});
    detail::scale_noise(pts, noise);
    return pts;
}

inline std::vector<QiPoint> synth_temperature_sweep(const LossBudget& b, std::span<const double> temps_k,
                                                    double nbar, double f_ghz, const NoiseSpec& noise = {}) {
    b.validate();
    noise.validate();
    std::vector<QiPoint> pts;
    for (double t : temps_k) pts.push_back({t, qi_total(t, nbar, f_ghz, b), 0.0});
    detail::scale_noise(pts, noise);
    return pts;
}

/// Symmetric two-port of a shunt notch resonator: S21 from the resonance
/// model, S11 = S22 = S21 - baseline.
inline SymmetricDut notch_dut(const ResonanceParams& p, std::span<const double> freqs_ghz) {
    p.validate();
    SymmetricDut d;
    d.freqs_ghz.assign(freqs_ghz.begin(), freqs_ghz.end());
    for (double f : freqs_ghz) {
        const cplx b = baseline(f, p);
        const cplx s = b * notch_response(f, p);
        d.s21.push_back(s);
        d.s22.push_back(s - b);
    }
    return d;
}

inline TwoPortSet synth_embedded(const SymmetricDut& dut, const ErrorTerms& terms, const NoiseSpec& noise = {}) {
    noise.validate();
    TwoPortSet m = embed(dut, terms);
    detail::add_complex_noise(m.s21m, noise, 0);
    detail::add_complex_noise(m.s22m, noise, 1);
    m.provenance = "synthetic";
    return m;
}

} // namespace mmres
