#pragma once

// Internal-loss channels: TLS saturation, Mattis-Bardeen quasiparticle loss,
// and a constant residual. Temperatures and energies in kelvin.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <stdexcept>
#include <utility>

#include "mmres/constants.hpp"
#include "mmres/error.hpp"
#include "mmres/quadrature.hpp"

namespace mmres {

struct TlsParams {
    double q_tls0 = 1e6;
    double n_c = 1.0;
    double beta = 0.5;

    void validate() const {
        if (!(q_tls0 > 0.0) || !(n_c > 0.0) || !std::isfinite(n_c))
            throw std::invalid_argument("q_tls0 and n_c must be positive");
        if (!(beta > 0.0 && beta <= 2.0)) throw std::invalid_argument("beta must lie in (0, 2]");
    }
};

struct QpParams {
    double q_sigma0 = 1.0;
    double tc_k = 9.2;
    /// Zero-temperature gap over k_B; 0 selects the BCS value 1.764 Tc.
    double gap0_k = 0.0;

    double gap0() const { return gap0_k > 0.0 ? gap0_k : constants::bcs_gap_ratio * tc_k; }

    void validate() const {
        if (!(q_sigma0 > 0.0) || !(tc_k > 0.0) || !std::isfinite(tc_k))
            throw std::invalid_argument("q_sigma0 and tc_k must be positive");
        const double r = gap0() / tc_k;
        if (!(r >= 1.0 && r <= 3.0)) throw std::invalid_argument("gap0_k/tc_k must lie in [1, 3]");
    }
};

struct LossBudget {
    TlsParams tls;
    QpParams qp;
    double q_other = 1e6;

    void validate() const {
        tls.validate();
        qp.validate();
        if (!(q_other > 0.0)) throw std::invalid_argument("q_other must be positive");
    }
};

/// tanh(hbar w / k T) as it enters the TLS model.
inline double tls_thermal_factor(double t_k, double f_ghz) {
    if (!(t_k > 0.0) || !(f_ghz > 0.0)) throw std::invalid_argument("T and f must be positive");
    return std::tanh(constants::photon_temperature_k(f_ghz) / t_k);
}

inline double q_tls(double nbar, double t_k, double f_ghz, const TlsParams& p) {
    if (!(nbar >= 0.0)) throw std::invalid_argument("nbar must be non-negative");
    const double th = tls_thermal_factor(t_k, f_ghz);
    return p.q_tls0 * std::sqrt(1.0 + std::pow(nbar / p.n_c, p.beta) * th) / th;
}

/// Delta(T)/k_B = Delta0 tanh(1.74 sqrt(Tc/T - 1)); zero at and above Tc.
inline double gap_k(double t_k, const QpParams& qp) {
    if (!(t_k > 0.0)) throw std::invalid_argument("temperature must be positive");
    if (t_k >= qp.tc_k) return 0.0;
    return qp.gap0() * std::tanh(1.74 * std::sqrt(qp.tc_k / t_k - 1.0));
}

struct Conductivity {
    double sigma1 = 0.0; // sigma1 / sigma_n
    double sigma2 = 0.0; // sigma2 / sigma_n
};

namespace detail {

/// f(E) - f(E + w) for E > 0, all in units of kT, without cancellation.
inline double fermi_difference(double e, double w) {
    const double a = std::exp(-e);
    return a * (1.0 / (1.0 + a) - std::exp(-w) / (1.0 + a * std::exp(-w)));
}

inline void check_quad(const quad::Result& r, const char* what) {
    if (!r.converged || !std::isfinite(r.value))
        throw NumericalError(std::string("quadrature did not converge for ") + what);
}

} // namespace detail

/// Mattis-Bardeen sigma1/sigma_n and sigma2/sigma_n. Includes the
/// pair-breaking branch when hbar w > 2 Delta.
inline Conductivity mb_sigma(double t_k, double f_ghz, const QpParams& qp, double rel_tol = 1e-10) {
    qp.validate();
    if (!(t_k > 0.0) || !(f_ghz > 0.0)) throw std::invalid_argument("T and f must be positive");
    if (t_k >= qp.tc_k) throw std::invalid_argument("mb_sigma requires T < Tc");
    const double kt = t_k;
    const double w = constants::photon_temperature_k(f_ghz);
    const double d = gap_k(t_k, qp);
    Conductivity out;

    // Thermal quasiparticle term, E = Delta cosh(u).
    {
        const double e_max = d + 45.0 * kt;
        const double u_max = std::acosh(e_max / d);
        auto g = [&](double u) {
            const double e = d * std::cosh(u);
            const double ew = e + w;
            return detail::fermi_difference(e / kt, w / kt) * (e * e + d * d + w * e) /
                   std::sqrt((ew - d) * (ew + d));
        };
        const auto r = quad::integrate(g, 0.0, u_max, rel_tol);
        detail::check_quad(r, "sigma1");
        out.sigma1 = 2.0 / w * r.value;
    }
    // Pair breaking, E = w/2 + (w/2 - Delta) sin(theta).
    if (w > 2.0 * d) {
        const double mid = 0.5 * w, half = 0.5 * w - d;
        auto g = [&](double th) {
            const double e = mid + half * std::sin(th);
            return std::tanh((w - e) / (2.0 * kt)) * (e * (w - e) - d * d) /
                   std::sqrt((e + d) * (w - e + d));
        };
        const auto r = quad::integrate(g, -std::numbers::pi / 2, std::numbers::pi / 2, rel_tol);
        detail::check_quad(r, "sigma1 pair breaking");
        out.sigma1 += r.value / w;
    }
    // Reactive term over [max(Delta - w, -Delta), Delta], sine substitution.
    {
        const double lo = std::max(d - w, -d), hi = d;
        const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        const bool subgap = w < 2.0 * d;
        auto g = [&](double th) {
            const double e = mid + half * std::sin(th);
            const double num = std::tanh((e + w) / (2.0 * kt)) * (e * e + d * d + w * e);
            // Divide out the vanishing endpoint factors (hi - E)(E - lo).
            const double rest = subgap ? (d + e) * (e + w + d)
                                       : (e + w - d) * (e + w + d);
            return num / std::sqrt(rest);
        };
        const auto r = quad::integrate(g, -std::numbers::pi / 2, std::numbers::pi / 2, rel_tol);
        detail::check_quad(r, "sigma2");
        out.sigma2 = r.value / w;
    }
    return out;
}

/// Q_sigma = Q_sigma0 sigma2/sigma1; +infinity when sigma1 underflows.
inline double q_sigma(double t_k, double f_ghz, const QpParams& qp) {
    const auto s = mb_sigma(t_k, f_ghz, qp);
    if (s.sigma1 <= 0.0) return std::numeric_limits<double>::infinity();
    return qp.q_sigma0 * s.sigma2 / s.sigma1;
}

struct ChannelQ {
    double tls = 0.0;
    double sigma = 0.0;
    double other = 0.0;
    double total = 0.0;
};

inline ChannelQ qi_channels(double t_k, double nbar, double f_ghz, const LossBudget& b) {
    ChannelQ c;
    c.tls = q_tls(nbar, t_k, f_ghz, b.tls);
    c.sigma = q_sigma(t_k, f_ghz, b.qp);
    c.other = b.q_other;
    c.total = 1.0 / (1.0 / c.tls + 1.0 / c.sigma + 1.0 / c.other);
    return c;
}

inline double qi_total(double t_k, double nbar, double f_ghz, const LossBudget& b) {
    return qi_channels(t_k, nbar, f_ghz, b).total;
}

} // namespace mmres
