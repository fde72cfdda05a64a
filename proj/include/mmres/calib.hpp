#pragma once

// Simplified cryogenic TRL error network.
//
//   s21m = e30 + e10 e32 S21 / (1 - e11 S22)
//   s22m = e33 + (S22 + e11 S21^2 / (1 - e11 S22)) e23 e32
//
// for a symmetric device (S11 = S22, S12 = S21) with the load match e22
// neglected. Only the products e10*e32 and e23*e32 are observable from the
// standards; e32 is normalized to 1 unless the input lines are measured
// separately.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmres/error.hpp"
#include "mmres/netdata.hpp"

namespace mmres {

struct ErrorTermPoint {
    cplx e10{1.0}; // input attenuation, path a0
    cplx e23{1.0}; // input attenuation, path a1
    cplx e32{1.0}; // output gain
    cplx e30{0.0}; // transmission-path directivity
    cplx e33{0.0}; // reflection-path directivity
    cplx e11{0.0}; // source match

    cplx transmission_product() const { return e10 * e32; }
    cplx reflection_product() const { return e23 * e32; }

    friend bool operator==(const ErrorTermPoint&, const ErrorTermPoint&) = default;
};

struct ErrorTerms {
    std::vector<double> freqs_ghz;
    std::vector<ErrorTermPoint> points;

    std::size_t size() const noexcept { return freqs_ghz.size(); }

    static ErrorTerms identity(std::vector<double> freqs) {
        ErrorTerms t;
        t.points.assign(freqs.size(), ErrorTermPoint{});
        t.freqs_ghz = std::move(freqs);
        return t;
    }

    void validate() const {
        detail::check_grid(freqs_ghz, 1);
        if (points.size() != freqs_ghz.size())
            throw std::invalid_argument("error terms not aligned with frequency grid");
    }

    /// Indices where an input path shows gain (|e10| or |e23| > 1). Reported,
    /// not rejected.
    std::vector<std::size_t> gain_warnings() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < points.size(); ++i)
            if (std::abs(points[i].e10) > 1.0 || std::abs(points[i].e23) > 1.0) out.push_back(i);
        return out;
    }
};

struct SymmetricDut {
    std::vector<double> freqs_ghz;
    std::vector<cplx> s21;
    std::vector<cplx> s22;

    std::size_t size() const noexcept { return freqs_ghz.size(); }

    void validate() const {
        detail::check_grid(freqs_ghz, 1);
        detail::check_values(s21, freqs_ghz.size(), "s21");
        detail::check_values(s22, freqs_ghz.size(), "s22");
    }

    /// Indices where |S21|^2 + |S22|^2 > 1 + tol. Calibrated data is not forced
    /// to be passive; this only reports.
    std::vector<std::size_t> passivity_violations(double tol = 1e-9) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < size(); ++i)
            if (std::norm(s21[i]) + std::norm(s22[i]) > 1.0 + tol) out.push_back(i);
        return out;
    }
};

struct CalStandards {
    TwoPortSet thru;
    TwoPortSet reflect;
    TwoPortSet line;
    cplx reflect_gamma{-1.0}; // on-chip short
    std::optional<std::vector<cplx>> line_s21; // on the line standard's grid; extracted when absent
};

/// Separately measured input lines, used to split the observable products.
struct InputPathTerms {
    std::vector<cplx> e10;
    std::vector<cplx> e23;
};

namespace detail {

inline void require_same_grid(std::span<const double> a, std::span<const double> b,
                              const char* what) {
    if (!same_grid(a, b)) throw std::invalid_argument(std::string("frequency grid mismatch: ") + what);
}

inline TwoPortSet resample(const TwoPortSet& s, std::span<const double> grid) {
    if (same_grid(s.freqs_ghz, grid)) return s;
    TwoPortSet out;
    out.freqs_ghz.assign(grid.begin(), grid.end());
    out.s21m = interpolate(s.freqs_ghz, s.s21m, grid);
    out.s22m = interpolate(s.freqs_ghz, s.s22m, grid);
    out.provenance = s.provenance;
    out.reference_ohms = s.reference_ohms;
    return out;
}

} // namespace detail

/// Puts all three standards on the coarsest of their grids (fewest points),
/// restricted to the common frequency span, by linear complex interpolation.
inline CalStandards align_standards(const CalStandards& in) {
    in.thru.validate();
    in.reflect.validate();
    in.line.validate();
    if (in.line_s21 && in.line_s21->size() != in.line.size())
        throw std::invalid_argument("line_s21 must be aligned with the line standard");
    if (same_grid(in.thru.freqs_ghz, in.reflect.freqs_ghz) &&
        same_grid(in.thru.freqs_ghz, in.line.freqs_ghz))
        return in;

    const std::array<const TwoPortSet*, 3> sets{&in.thru, &in.reflect, &in.line};
    const TwoPortSet* coarsest = sets[0];
    double lo = 0.0, hi = 1e300;
    for (const auto* s : sets) {
        if (s->size() < coarsest->size()) coarsest = s;
        lo = std::max(lo, s->freqs_ghz.front());
        hi = std::min(hi, s->freqs_ghz.back());
    }
    std::vector<double> grid;
    for (double f : coarsest->freqs_ghz)
        if (f >= lo && f <= hi) grid.push_back(f);
    if (grid.empty()) throw std::invalid_argument("calibration standards share no frequency span");

    CalStandards out = in;
    out.thru = detail::resample(in.thru, grid);
    out.reflect = detail::resample(in.reflect, grid);
    out.line = detail::resample(in.line, grid);
    if (in.line_s21) out.line_s21 = interpolate(in.line.freqs_ghz, *in.line_s21, grid);
    return out;
}

inline TwoPortSet embed(const SymmetricDut& dut, const ErrorTerms& terms) {
    dut.validate();
    terms.validate();
    detail::require_same_grid(dut.freqs_ghz, terms.freqs_ghz, "device vs error terms");
    TwoPortSet m;
    m.freqs_ghz = dut.freqs_ghz;
    m.s21m.resize(dut.size());
    m.s22m.resize(dut.size());
    for (std::size_t i = 0; i < dut.size(); ++i) {
        const auto& e = terms.points[i];
        const cplx s21 = dut.s21[i], s22 = dut.s22[i];
        const cplx den = 1.0 - e.e11 * s22;
        if (std::abs(den) <= 1e-12)
            throw NumericalError("singular source-match denominator at index " + std::to_string(i));
        m.s21m[i] = e.e30 + e.e10 * e.e32 * s21 / den;
        m.s22m[i] = e.e33 + (s22 + e.e11 * s21 * s21 / den) * e.e23 * e.e32;
    }
    m.provenance = "embedded";
    return m;
}

/// Line transmission per point, either as supplied or extracted from the
/// line measurement as (s21m_line - e30) / (e10 e32).
inline std::vector<cplx> line_transmission(const CalStandards& aligned) {
    if (aligned.line_s21) return *aligned.line_s21;
    std::vector<cplx> t(aligned.line.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const cplx e30 = aligned.reflect.s21m[i];
        const cplx p = aligned.thru.s21m[i] - e30;
        if (std::abs(p) < 1e-12)
            throw NumericalError("transmission product below dynamic range at index " + std::to_string(i));
        t[i] = (aligned.line.s21m[i] - e30) / p;
    }
    return t;
}

/// Ideal standards: thru {S21=1, S22=0}, reflect {S21=0, S22=Gamma},
/// line {S21=t, S22=0}. The three reflection-path equations are linear in
/// (e33, e11*e23e32, e23e32) with determinant Gamma*(t^2 - 1).
inline ErrorTerms solve_error_terms(const CalStandards& standards,
                                    const std::optional<InputPathTerms>& input_paths = std::nullopt) {
    const CalStandards s = align_standards(standards);
    const std::size_t n = s.thru.size();
    if (input_paths && (input_paths->e10.size() != n || input_paths->e23.size() != n))
        throw std::invalid_argument("input path terms not aligned with the calibration grid");
    const auto t = line_transmission(s);
    const cplx gamma = s.reflect_gamma;

    ErrorTerms out;
    out.freqs_ghz = s.thru.freqs_ghz;
    out.points.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const cplx e30 = s.reflect.s21m[i];
        const cplx p = s.thru.s21m[i] - e30;
        if (std::abs(p) < 1e-12)
            throw NumericalError("transmission product below dynamic range at index " + std::to_string(i));
        const cplx t2 = t[i] * t[i];
        if (std::abs(1.0 - t2) < 1e-9 || std::abs(gamma) < 1e-12)
            throw NumericalError("degenerate standards at index " + std::to_string(i) +
                                 ": need line t^2 != 1 and reflect Gamma != 0");
        const cplx a = (s.thru.s22m[i] - s.line.s22m[i]) / (1.0 - t2); // e11 * e23e32
        const cplx e33 = s.thru.s22m[i] - a;
        const cplx r = (s.reflect.s22m[i] - e33) / gamma;
        if (std::abs(r) < 1e-12)
            throw NumericalError("reflection product below dynamic range at index " + std::to_string(i));

        auto& e = out.points[i];
        e.e30 = e30;
        e.e33 = e33;
        e.e11 = a / r;
        if (input_paths) {
            const cplx e32 = 0.5 * (p / input_paths->e10[i] + r / input_paths->e23[i]);
            e.e32 = e32;
            e.e10 = p / e32;
            e.e23 = r / e32;
        } else {
            e.e32 = 1.0;
            e.e10 = p;
            e.e23 = r;
        }
    }
    return out;
}

namespace detail {

struct CorrectedPoint {
    cplx s21, s22;
};

inline CorrectedPoint correct_point(cplx m21, cplx m22, const ErrorTermPoint& e, std::size_t i) {
    const cplx p = e.transmission_product();
    const cplx r = e.reflection_product();
    if (std::abs(p) < 1e-300 || std::abs(r) < 1e-300)
        throw NumericalError("zero error-term product at index " + std::to_string(i));
    const cplx u = m21 - e.e30;
    const cplx v = (m22 - e.e33) / r;
    const cplx k = e.e11 * u * u / (p * p);
    const cplx den = 1.0 - k * e.e11;
    if (std::abs(den) <= 1e-12)
        throw NumericalError("singular correction at index " + std::to_string(i));
    const cplx s22 = (v - k) / den;
    const cplx s21 = u * (1.0 - e.e11 * s22) / p;
    if (!std::isfinite(s21.real()) || !std::isfinite(s21.imag()) || !std::isfinite(s22.real()) ||
        !std::isfinite(s22.imag()))
        throw NumericalError("non-finite corrected S-parameters at index " + std::to_string(i));
    return {s21, s22};
}

} // namespace detail

/// De-embeds a measurement. Substituting S21 from the transmission equation
/// into the reflection equation leaves a relation linear in S22, so the
/// solution is unique per point.
inline SymmetricDut correct(const TwoPortSet& measured, const ErrorTerms& terms) {
    measured.validate();
    terms.validate();
    detail::require_same_grid(measured.freqs_ghz, terms.freqs_ghz, "measurement vs error terms");
    SymmetricDut d;
    d.freqs_ghz = measured.freqs_ghz;
    d.s21.resize(measured.size());
    d.s22.resize(measured.size());
    for (std::size_t i = 0; i < measured.size(); ++i) {
        const auto c = detail::correct_point(measured.s21m[i], measured.s22m[i], terms.points[i], i);
        d.s21[i] = c.s21;
        d.s22[i] = c.s22;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Uncertainty propagation
//
// Each calibration term is perturbed in normalized form: the directivities
// relative to their path products (e30/P, e33/R), the source match e11
// absolutely, and the products P = e10 e32, R = e23 e32 relatively. A vector
// error of magnitude m in any of these five coordinates moves a result by at
// most |d result / d coordinate| * m (worst-case phase); contributions are
// combined root-sum-square.

inline constexpr std::size_t kTermCoordinates = 5;

inline ErrorTermPoint perturb_term(ErrorTermPoint e, std::size_t coordinate, cplx dz) {
    switch (coordinate) {
    case 0: e.e30 += dz * e.transmission_product(); break;
    case 1: e.e33 += dz * e.reflection_product(); break;
    case 2: e.e11 += dz; break;
    case 3: e.e10 *= 1.0 + dz; break;
    case 4: e.e23 *= 1.0 + dz; break;
    default: throw std::out_of_range("term coordinate");
    }
    return e;
}

inline ErrorTerms perturb_terms(const ErrorTerms& terms, std::size_t coordinate, cplx dz) {
    ErrorTerms out = terms;
    for (auto& p : out.points) p = perturb_term(p, coordinate, dz);
    return out;
}

struct SParamUncertainty {
    double s21 = 0.0; // bound on the deviation of |S21|
    double s22 = 0.0;
};

inline std::vector<SParamUncertainty> propagate_uncertainty(const TwoPortSet& measured,
                                                            const ErrorTerms& terms,
                                                            double term_error_magnitude) {
    if (!(term_error_magnitude >= 0.0))
        throw std::invalid_argument("term_error_magnitude must be non-negative");
    measured.validate();
    terms.validate();
    detail::require_same_grid(measured.freqs_ghz, terms.freqs_ghz, "measurement vs error terms");
    constexpr double h = 1e-6;
    std::vector<SParamUncertainty> out(measured.size());
    for (std::size_t i = 0; i < measured.size(); ++i) {
        double ss21 = 0.0, ss22 = 0.0;
        for (std::size_t k = 0; k < kTermCoordinates; ++k) {
            const auto up = detail::correct_point(measured.s21m[i], measured.s22m[i],
                                                  perturb_term(terms.points[i], k, h), i);
            const auto dn = detail::correct_point(measured.s21m[i], measured.s22m[i],
                                                  perturb_term(terms.points[i], k, -h), i);
            // The corrected values are holomorphic in each coordinate, so the
            // worst-case phase gain equals |complex derivative|.
            ss21 += std::norm((up.s21 - dn.s21) / (2.0 * h));
            ss22 += std::norm((up.s22 - dn.s22) / (2.0 * h));
        }
        out[i] = {std::sqrt(ss21) * term_error_magnitude, std::sqrt(ss22) * term_error_magnitude};
    }
    return out;
}

/// First-order worst-case-phase bound on a scalar derived from the corrected
/// device (e.g. a fitted quality factor) under calibration-term errors of the
/// given magnitude, applied coherently across the band. `observable` maps a
/// SymmetricDut to a double.
template <class Observable>
double propagate_to_scalar(const TwoPortSet& measured, const ErrorTerms& terms,
                           double term_error_magnitude, Observable&& observable, double h = 1e-5) {
    if (!(term_error_magnitude >= 0.0))
        throw std::invalid_argument("term_error_magnitude must be non-negative");
    double ss = 0.0;
    for (std::size_t k = 0; k < kTermCoordinates; ++k) {
        double grad2 = 0.0;
        for (const cplx dir : {cplx(1.0, 0.0), cplx(0.0, 1.0)}) {
            const double up = observable(correct(measured, perturb_terms(terms, k, h * dir)));
            const double dn = observable(correct(measured, perturb_terms(terms, k, -h * dir)));
            const double g = (up - dn) / (2.0 * h);
            grad2 += g * g;
        }
        ss += grad2;
    }
    return std::sqrt(ss) * term_error_magnitude;
}

} // namespace mmres
