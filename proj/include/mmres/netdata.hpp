#pragma once

// Frequency-swept complex scattering data.
//
// Canonical units: frequency in GHz, values as cartesian complex numbers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mmres {

using cplx = std::complex<double>;

struct DriveLevel {
    enum class Kind { photon_number, power_dbm };

    Kind kind = Kind::photon_number;
    double value = 0.0;

    static DriveLevel photons(double nbar) {
        if (!(nbar > 0.0) || !std::isfinite(nbar))
            throw std::invalid_argument("photon number must be positive and finite");
        return {Kind::photon_number, nbar};
    }
    static DriveLevel dbm(double p) {
        if (!std::isfinite(p)) throw std::invalid_argument("power_dbm must be finite");
        return {Kind::power_dbm, p};
    }

    friend bool operator==(const DriveLevel&, const DriveLevel&) = default;
};

namespace detail {

inline void check_grid(std::span<const double> f, std::size_t min_points = 2) {
    if (f.size() < min_points)
        throw std::invalid_argument("frequency grid needs at least " + std::to_string(min_points) +
                                    " points");
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!std::isfinite(f[i]) || f[i] <= 0.0)
            throw std::invalid_argument("frequencies must be finite and positive");
        if (i && !(f[i] > f[i - 1]))
            throw std::invalid_argument("frequencies must be strictly increasing");
    }
}

inline void check_values(std::span<const cplx> v, std::size_t n, const char* name) {
    if (v.size() != n)
        throw std::invalid_argument(std::string(name) + " length does not match frequency grid");
    for (const auto& z : v)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            throw std::invalid_argument(std::string(name) + " contains non-finite values");
}

} // namespace detail

/// Immutable frequency-indexed complex response plus environment metadata.
class ComplexSweep {
public:
    ComplexSweep(std::vector<double> freqs_ghz, std::vector<cplx> values, std::string label = "S21",
                 std::optional<double> temperature_k = std::nullopt,
                 std::optional<DriveLevel> drive = std::nullopt)
        : freqs_(std::move(freqs_ghz)), values_(std::move(values)), label_(std::move(label)),
          temperature_(temperature_k), drive_(drive) {
        detail::check_grid(freqs_);
        detail::check_values(values_, freqs_.size(), "values");
        if (temperature_ && !(*temperature_ > 0.0 && std::isfinite(*temperature_)))
            throw std::invalid_argument("temperature_k must be positive");
        if (drive_ && drive_->kind == DriveLevel::Kind::photon_number && !(drive_->value > 0.0))
            throw std::invalid_argument("photon number must be positive");
    }

    const std::vector<double>& freqs_ghz() const noexcept { return freqs_; }
    const std::vector<cplx>& values() const noexcept { return values_; }
    const std::string& label() const noexcept { return label_; }
    const std::optional<double>& temperature_k() const noexcept { return temperature_; }
    const std::optional<DriveLevel>& drive() const noexcept { return drive_; }
    std::size_t size() const noexcept { return freqs_.size(); }

    ComplexSweep with_values(std::vector<cplx> v) const {
        return ComplexSweep(freqs_, std::move(v), label_, temperature_, drive_);
    }

    friend bool operator==(const ComplexSweep&, const ComplexSweep&) = default;

private:
    std::vector<double> freqs_;
    std::vector<cplx> values_;
    std::string label_;
    std::optional<double> temperature_;
    std::optional<DriveLevel> drive_;
};

/// The two measured paths of the simplified cryogenic network:
/// s21m = b2/a0 (transmission) and s22m = b2/a1 (reflection).
struct TwoPortSet {
    std::vector<double> freqs_ghz;
    std::vector<cplx> s21m;
    std::vector<cplx> s22m;
    std::string provenance;
    double reference_ohms = 50.0; // parsed and kept, never used in the physics

    std::size_t size() const noexcept { return freqs_ghz.size(); }

    void validate() const {
        detail::check_grid(freqs_ghz, 1);
        detail::check_values(s21m, freqs_ghz.size(), "s21m");
        detail::check_values(s22m, freqs_ghz.size(), "s22m");
    }

    ComplexSweep s21_sweep() const { return ComplexSweep(freqs_ghz, s21m, "S21"); }
    ComplexSweep s22_sweep() const { return ComplexSweep(freqs_ghz, s22m, "S22"); }
};

/// Points with f_lo <= f <= f_hi. Throws std::invalid_argument for an inverted
/// window or when fewer than 2 points remain.
inline ComplexSweep crop(const ComplexSweep& sweep, double f_lo, double f_hi) {
    if (!(f_lo < f_hi)) throw std::invalid_argument("crop window requires f_lo < f_hi");
    const auto& f = sweep.freqs_ghz();
    const auto first = std::lower_bound(f.begin(), f.end(), f_lo);
    const auto last = std::upper_bound(f.begin(), f.end(), f_hi);
    const auto n = std::distance(first, last);
    if (n < 2)
        throw std::invalid_argument("crop window [" + std::to_string(f_lo) + ", " +
                                    std::to_string(f_hi) + "] GHz leaves fewer than 2 points");
    const auto off = std::distance(f.begin(), first);
    std::vector<double> nf(first, last);
    std::vector<cplx> nv(sweep.values().begin() + off, sweep.values().begin() + off + n);
    return ComplexSweep(std::move(nf), std::move(nv), sweep.label(), sweep.temperature_k(),
                        sweep.drive());
}

/// Linear interpolation of complex samples onto `target` (which must lie within
/// the source grid's span).
inline std::vector<cplx> interpolate(std::span<const double> src_f, std::span<const cplx> src_v,
                                     std::span<const double> target) {
    std::vector<cplx> out;
    out.reserve(target.size());
    for (double t : target) {
        if (t < src_f.front() - 1e-12 * std::abs(t) || t > src_f.back() + 1e-12 * std::abs(t))
            throw std::invalid_argument("interpolation target outside source grid");
        auto it = std::lower_bound(src_f.begin(), src_f.end(), t);
        if (it == src_f.end()) it = std::prev(it);
        std::size_t j = static_cast<std::size_t>(std::distance(src_f.begin(), it));
        if (src_f[j] == t) {
            out.push_back(src_v[j]);
            continue;
        }
        if (j == 0) j = 1;
        const double w = (t - src_f[j - 1]) / (src_f[j] - src_f[j - 1]);
        out.push_back(src_v[j - 1] + w * (src_v[j] - src_v[j - 1]));
    }
    return out;
}

/// True when two grids coincide to 1e-12 relative per point.
inline bool same_grid(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i] - b[i]) > 1e-12 * std::max(std::abs(a[i]), std::abs(b[i]))) return false;
    return true;
}

} // namespace mmres
