#pragma once

// Asymmetric notch resonance
//
//   S21(f) = a e^{i(theta + 2 pi f tau)} [1 - (Q/|Qe|) e^{i phi} / (1 + 2iQ (f - f0)/f0)]
//
// with 1/Q = 1/Qi + cos(phi)/|Qe|. f in GHz, tau in ns.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmres/constants.hpp"
#include "mmres/error.hpp"
#include "mmres/lm.hpp"
#include "mmres/netdata.hpp"

namespace mmres {

struct ResonanceParams {
    double f0_ghz = 0.0;
    double q_total = 0.0;
    double qe_mag = 0.0;
    double phi_rad = 0.0;
    double baseline_amp = 1.0;
    double baseline_phase_rad = 0.0;
    double electrical_delay_ns = 0.0;

    /// Internal quality factor implied by Q, |Qe| and phi (infinite when the
    /// coupling accounts for all of 1/Q).
    double qi() const { return 1.0 / (1.0 / q_total - std::cos(phi_rad) / qe_mag); }

    static ResonanceParams from_qi(double f0_ghz, double qi, double qe_mag, double phi_rad,
                                   double baseline_amp = 1.0, double baseline_phase_rad = 0.0,
                                   double electrical_delay_ns = 0.0) {
        ResonanceParams p{f0_ghz, 1.0 / (1.0 / qi + std::cos(phi_rad) / qe_mag), qe_mag, phi_rad,
                          baseline_amp, baseline_phase_rad, electrical_delay_ns};
        p.validate();
        return p;
    }

    void validate() const {
        if (!(f0_ghz > 0.0 && q_total > 0.0 && qe_mag > 0.0 && baseline_amp > 0.0))
            throw std::invalid_argument("f0, Q, |Qe| and baseline amplitude must be positive");
        if (!(std::abs(phi_rad) < std::numbers::pi / 2))
            throw std::invalid_argument("phi must lie in (-pi/2, pi/2)");
        if (!std::isfinite(baseline_phase_rad) || !std::isfinite(electrical_delay_ns))
            throw std::invalid_argument("baseline phase and delay must be finite");
        if (1.0 / q_total < std::cos(phi_rad) / qe_mag * (1.0 - 1e-12))
            throw std::invalid_argument("1/Q < cos(phi)/|Qe| implies negative Qi");
    }
};

/// Resonant factor without baseline: 1 - (Q/|Qe|) e^{i phi} / (1 + 2iQ (f - f0)/f0).
inline cplx notch_response(double f_ghz, const ResonanceParams& p) {
    const cplx a = (p.q_total / p.qe_mag) * std::polar(1.0, p.phi_rad);
    return 1.0 - a / cplx(1.0, 2.0 * p.q_total * (f_ghz - p.f0_ghz) / p.f0_ghz);
}

inline cplx baseline(double f_ghz, const ResonanceParams& p) {
    return std::polar(p.baseline_amp,
                      p.baseline_phase_rad + 2.0 * std::numbers::pi * f_ghz * p.electrical_delay_ns);
}

inline cplx s21_model(double f_ghz, const ResonanceParams& p) {
    return baseline(f_ghz, p) * notch_response(f_ghz, p);
}

inline const std::array<const char*, 7>& resonance_param_names() {
    static const std::array<const char*, 7> names = {"f0_ghz",        "qi",
                                                     "qe_mag",        "phi_rad",
                                                     "baseline_amp",  "baseline_phase_rad",
                                                     "electrical_delay_ns"};
    return names;
}

struct ResonanceFit {
    ResonanceParams params;
    double qi = 0.0;
    cplx qe_complex; // |Qe| e^{-i phi}
    /// Covariance over (f0, Qi, |Qe|, phi, a, theta, tau) in that order; rows
    /// of held parameters are zero.
    Eigen::Matrix<double, 7, 7> covariance = Eigen::Matrix<double, 7, 7>::Zero();
    double sigma_q_total = 0.0;
    double residual_rms = 0.0;
    std::size_t n_points = 0;
    int iterations = 0;
    bool converged = false;

    double sigma(std::size_t i) const { return std::sqrt(std::max(0.0, covariance(i, i))); }
};

struct ResonanceFitOptions {
    /// Per-point standard deviation of each quadrature (inverse-variance
    /// weights). When absent, weights are uniform and the covariance is
    /// scaled by the residual variance.
    std::optional<std::vector<double>> sigma;
    /// Hold phi at `phi_value` (e.g. 0 for a symmetric-coupling model).
    bool fix_phi = false;
    double phi_value = 0.0;
    bool fit_delay = true;
    int max_iterations = 200;
};

namespace detail {

struct Circle {
    cplx center;
    double radius = 0.0;
    double rms = 0.0; // RMS radial residual / radius
};

/// Algebraic (Kasa) circle fit on coordinates normalized to unit spread.
inline Circle fit_circle(std::span<const cplx> z) {
    const std::size_t n = z.size();
    cplx mean = 0.0;
    for (auto v : z) mean += v;
    mean /= static_cast<double>(n);
    double spread = 0.0;
    for (auto v : z) spread += std::norm(v - mean);
    spread = std::sqrt(spread / static_cast<double>(n));
    if (!(spread > 0.0)) return {mean, 0.0, 0.0};
    Eigen::MatrixXd A(n, 3);
    Eigen::VectorXd b(n);
    for (std::size_t i = 0; i < n; ++i) {
        const cplx w = (z[i] - mean) / spread;
        A(i, 0) = w.real();
        A(i, 1) = w.imag();
        A(i, 2) = 1.0;
        b[i] = -std::norm(w);
    }
    const Eigen::Vector3d s = A.colPivHouseholderQr().solve(b);
    const cplx c(-s[0] / 2.0, -s[1] / 2.0);
    const double r2 = std::norm(c) - s[2];
    Circle out;
    out.center = mean + spread * c;
    out.radius = r2 > 0.0 ? spread * std::sqrt(r2) : 0.0;
    double ss = 0.0;
    for (auto v : z) {
        const double d = std::abs(v - out.center) - out.radius;
        ss += d * d;
    }
    out.rms = out.radius > 0.0 ? std::sqrt(ss / static_cast<double>(n)) / out.radius
                               : std::numeric_limits<double>::infinity();
    return out;
}

inline std::vector<double> unwrap(std::vector<double> a) {
    for (std::size_t i = 1; i < a.size(); ++i) {
        double d = a[i] - a[i - 1];
        while (d > std::numbers::pi) {
            a[i] -= 2.0 * std::numbers::pi;
            d -= 2.0 * std::numbers::pi;
        }
        while (d < -std::numbers::pi) {
            a[i] += 2.0 * std::numbers::pi;
            d += 2.0 * std::numbers::pi;
        }
    }
    return a;
}

inline std::vector<cplx> remove_delay(std::span<const double> f, std::span<const cplx> z, double fc,
                                      double tau) {
    std::vector<cplx> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        out[i] = z[i] * std::polar(1.0, -2.0 * std::numbers::pi * (f[i] - fc) * tau);
    return out;
}

/// Common phase slope of the two off-resonant wings, separate intercepts.
inline double wing_delay(std::span<const double> f, std::span<const cplx> z) {
    const std::size_t n = f.size();
    const std::size_t w = std::max<std::size_t>(2, n / 10);
    double sxx = 0.0, sxy = 0.0;
    for (int side = 0; side < 2; ++side) {
        const std::size_t start = side == 0 ? 0 : n - w;
        std::vector<double> ph(w), ff(w);
        for (std::size_t i = 0; i < w; ++i) {
            ph[i] = std::arg(z[start + i]);
            ff[i] = f[start + i];
        }
        ph = unwrap(std::move(ph));
        double mf = 0.0, mp = 0.0;
        for (std::size_t i = 0; i < w; ++i) {
            mf += ff[i];
            mp += ph[i];
        }
        mf /= static_cast<double>(w);
        mp /= static_cast<double>(w);
        for (std::size_t i = 0; i < w; ++i) {
            sxx += (ff[i] - mf) * (ff[i] - mf);
            sxy += (ff[i] - mf) * (ph[i] - mp);
        }
    }
    return sxx > 0.0 ? sxy / sxx / (2.0 * std::numbers::pi) : 0.0;
}

/// Delay that makes the trace most circular, searched around `tau0`.
inline double refine_delay(std::span<const double> f, std::span<const cplx> z, double fc, double tau0) {
    const double span = f.back() - f.front();
    const double step = 0.005 / span;
    auto score = [&](double tau) {
        const auto c = fit_circle(remove_delay(f, z, fc, tau));
        return std::isfinite(c.rms) ? c.rms * c.radius : 1e300;
    };
    double best = tau0, best_s = score(tau0);
    for (int k = -20; k <= 20; ++k) {
        const double t = tau0 + k * step;
        const double s = score(t);
        if (s < best_s) {
            best_s = s;
            best = t;
        }
    }
    // Golden-section refinement on [best - step, best + step].
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = best - step, hi = best + step;
    double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
    double s1 = score(x1), s2 = score(x2);
    for (int it = 0; it < 100 && (hi - lo) > 1e-15 * (std::abs(best) + step); ++it) {
        if (s1 < s2) {
            hi = x2;
            x2 = x1;
            s2 = s1;
            x1 = hi - g * (hi - lo);
            s1 = score(x1);
        } else {
            lo = x1;
            x1 = x2;
            s1 = s2;
            x2 = lo + g * (hi - lo);
            s2 = score(x2);
        }
    }
    const double t = 0.5 * (lo + hi);
    return score(t) <= best_s ? t : best;
}

/// Angle around the circle centre: alpha(f) = alpha0 - 2 atan(2Q (f - f0)/f0).
struct PhaseSweepProblem {
    std::span<const double> f;
    std::span<const double> alpha;
    bool residuals(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
        const double q = std::exp(x[1]), f0 = x[2];
        if (!(f0 > 0.0) || !std::isfinite(q)) return false;
        r.resize(static_cast<Eigen::Index>(f.size()));
        for (std::size_t i = 0; i < f.size(); ++i)
            r[static_cast<Eigen::Index>(i)] =
                x[0] - 2.0 * std::atan(2.0 * q * (f[i] - f0) / f0) - alpha[i];
        return true;
    }
};

/// Free-parameter layout of the full complex fit. Internal coordinates:
/// f0, ln Qi, ln |Qe|, phi, ln a, theta_c, tau, where theta_c is the baseline
/// phase at the sweep centre fc.
struct NotchProblem {
    std::span<const double> f;
    std::span<const cplx> z;
    std::vector<double> weight;
    double fc = 0.0;
    std::array<bool, 7> free{};
    std::array<double, 7> fixed{};

    Eigen::Index n_free() const {
        return static_cast<Eigen::Index>(std::count(free.begin(), free.end(), true));
    }

    std::array<double, 7> expand(const Eigen::VectorXd& x) const {
        std::array<double, 7> p = fixed;
        Eigen::Index k = 0;
        for (std::size_t j = 0; j < 7; ++j)
            if (free[j]) p[j] = x[k++];
        return p;
    }

    Eigen::VectorXd compress(const std::array<double, 7>& p) const {
        Eigen::VectorXd x(n_free());
        Eigen::Index k = 0;
        for (std::size_t j = 0; j < 7; ++j)
            if (free[j]) x[k++] = p[j];
        return x;
    }

    static bool feasible(const std::array<double, 7>& p) {
        for (double v : p)
            if (!std::isfinite(v)) return false;
        return p[0] > 0.0 && std::abs(p[3]) < std::numbers::pi / 2 && p[1] < std::log(1e13) &&
               p[2] < std::log(1e13) && p[1] > -50.0 && p[2] > -50.0;
    }

    bool residuals(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
        const auto p = expand(x);
        if (!feasible(p)) return false;
        r.resize(2 * static_cast<Eigen::Index>(f.size()));
        const double qi = std::exp(p[1]), qe = std::exp(p[2]), phi = p[3];
        const double q = 1.0 / (1.0 / qi + std::cos(phi) / qe);
        const cplx a = (q / qe) * std::polar(1.0, phi);
        const double amp = std::exp(p[4]);
        for (std::size_t i = 0; i < f.size(); ++i) {
            const cplx d(1.0, 2.0 * q * (f[i] - p[0]) / p[0]);
            const cplx s = std::polar(amp, p[5] + 2.0 * std::numbers::pi * (f[i] - fc) * p[6]) *
                           (1.0 - a / d);
            const cplx e = weight[i] * (s - z[i]);
            r[2 * static_cast<Eigen::Index>(i)] = e.real();
            r[2 * static_cast<Eigen::Index>(i) + 1] = e.imag();
        }
        return r.allFinite();
    }

    void jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& J) const {
        const auto p = expand(x);
        const double qi = std::exp(p[1]), qe = std::exp(p[2]), phi = p[3], f0 = p[0];
        const double q = 1.0 / (1.0 / qi + std::cos(phi) / qe);
        const cplx a = (q / qe) * std::polar(1.0, phi);
        const double amp = std::exp(p[4]);
        const cplx I(0.0, 1.0);
        J.resize(2 * static_cast<Eigen::Index>(f.size()), n_free());
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double y = 2.0 * q * (f[i] - f0) / f0;
            const cplx d(1.0, y);
            const cplx core = 1.0 - a / d;
            const cplx base = std::polar(amp, p[5] + 2.0 * std::numbers::pi * (f[i] - fc) * p[6]);
            const cplx dcore_dq = -a / (q * d * d);
            std::array<cplx, 7> g;
            g[0] = base * (-2.0 * I * q * f[i] * a / (f0 * f0 * d * d));
            g[1] = base * dcore_dq * q * q / qi;
            g[2] = base * (a / d + dcore_dq * q * q * std::cos(phi) / qe);
            g[3] = base * (-I * a / d + dcore_dq * q * q * std::sin(phi) / qe);
            g[4] = base * core;
            g[5] = I * base * core;
            g[6] = I * 2.0 * std::numbers::pi * (f[i] - fc) * base * core;
            Eigen::Index k = 0;
            for (std::size_t j = 0; j < 7; ++j) {
                if (!free[j]) continue;
                const cplx e = weight[i] * g[j];
                J(2 * static_cast<Eigen::Index>(i), k) = e.real();
                J(2 * static_cast<Eigen::Index>(i) + 1, k) = e.imag();
                ++k;
            }
        }
    }
};

inline std::array<double, 7> to_internal(const ResonanceParams& p, double fc) {
    return {p.f0_ghz,
            std::log(p.qi()),
            std::log(p.qe_mag),
            p.phi_rad,
            std::log(p.baseline_amp),
            p.baseline_phase_rad + 2.0 * std::numbers::pi * fc * p.electrical_delay_ns,
            p.electrical_delay_ns};
}

inline ResonanceParams from_internal(const std::array<double, 7>& x, double fc) {
    const double qi = std::exp(x[1]), qe = std::exp(x[2]);
    ResonanceParams p;
    p.f0_ghz = x[0];
    p.q_total = 1.0 / (1.0 / qi + std::cos(x[3]) / qe);
    p.qe_mag = qe;
    p.phi_rad = x[3];
    p.baseline_amp = std::exp(x[4]);
    p.baseline_phase_rad = std::remainder(x[5] - 2.0 * std::numbers::pi * fc * x[6],
                                          2.0 * std::numbers::pi);
    p.electrical_delay_ns = x[6];
    return p;
}

/// Stages 1 and 2: delay estimate, circle fit, phase-sweep fit.
inline ResonanceParams initial_estimate(std::span<const double> f, std::span<const cplx> z, double fc,
                                        const ResonanceFitOptions& opt) {
    const std::size_t n = f.size();
    double tau = opt.fit_delay ? wing_delay(f, z) : 0.0;

    {
        const auto zc = remove_delay(f, z, fc, tau);
        cplx mean = 0.0;
        for (auto v : zc) mean += v;
        mean /= static_cast<double>(n);
        double spread = 0.0;
        for (auto v : zc) spread = std::max(spread, std::abs(v - mean));
        if (!(std::abs(mean) > 0.0) || spread <= 1e-7 * std::abs(mean))
            throw FitError(FitFailure::no_dip, "trace shows no resonant feature");
    }
    if (opt.fit_delay) tau = refine_delay(f, z, fc, tau);
    const auto zc = remove_delay(f, z, fc, tau);
    const Circle circle = fit_circle(zc);
    if (!(circle.radius > 0.0) || !std::isfinite(circle.radius))
        throw FitError(FitFailure::no_dip, "circle fit degenerate");

    std::vector<double> alpha(n);
    for (std::size_t i = 0; i < n; ++i) alpha[i] = std::arg(zc[i] - circle.center);
    alpha = unwrap(std::move(alpha));
    const double sweep = alpha.front() - alpha.back();
    if (!(sweep > 0.0))
        throw FitError(FitFailure::no_dip, "trace does not traverse the resonance circle");

    // f0 where the angle crosses its midpoint; Q from the total angle swept.
    const double mid = 0.5 * (alpha.front() + alpha.back());
    double f0 = f[n / 2];
    for (std::size_t i = 1; i < n; ++i) {
        if ((alpha[i - 1] - mid) * (alpha[i] - mid) <= 0.0 && alpha[i - 1] != alpha[i]) {
            f0 = f[i - 1] + (mid - alpha[i - 1]) / (alpha[i] - alpha[i - 1]) * (f[i] - f[i - 1]);
            break;
        }
    }
    const double target = std::min(sweep, 2.0 * std::numbers::pi * 0.9999);
    auto swept = [&](double lq) {
        const double q = std::exp(lq);
        return 2.0 * (std::atan(2.0 * q * (f.back() - f0) / f0) - std::atan(2.0 * q * (f.front() - f0) / f0));
    };
    double lo = 0.0, hi = std::log(1e13);
    for (int it = 0; it < 200; ++it) {
        const double m = 0.5 * (lo + hi);
        (swept(m) < target ? lo : hi) = m;
    }
    PhaseSweepProblem ps{f, alpha};
    Eigen::VectorXd x0(3);
    x0 << mid, 0.5 * (lo + hi), f0;
    const auto ph = optim::levenberg_marquardt(ps, x0);
    const double alpha0 = ph.x[0];
    const double q = std::exp(ph.x[1]);
    f0 = ph.x[2];
    if (!(f0 > f.front() && f0 < f.back()))
        throw FitError(FitFailure::no_dip, "resonance lies outside the sweep");

    const cplx off = circle.center - circle.radius * std::polar(1.0, alpha0);
    const double amp = std::abs(off);
    const double depth = 2.0 * circle.radius / amp; // Q / |Qe|
    double phi = opt.fix_phi ? opt.phi_value : std::arg(1.0 - circle.center / off);
    phi = std::clamp(phi, -1.5, 1.5);
    const double qe = q / depth;
    double inv_qi = 1.0 / q - std::cos(phi) / qe;
    inv_qi = std::max(inv_qi, 1e-7 / q);

    ResonanceParams p;
    p.f0_ghz = f0;
    p.qe_mag = qe;
    p.phi_rad = phi;
    p.q_total = 1.0 / (inv_qi + std::cos(phi) / qe);
    p.baseline_amp = amp;
    p.baseline_phase_rad = std::arg(off) - 2.0 * std::numbers::pi * fc * tau;
    p.electrical_delay_ns = tau;
    return p;
}

} // namespace detail

/// Three-stage fit: electrical delay from the off-resonant wings (refined by
/// circularity), algebraic circle fit for the starting point, then joint
/// nonlinear least squares on both quadratures.
///
/// Throws FitError for a trace with no resonance, a resonance outside the
/// window, iteration-limit exhaustion, or a parameter pinned at its bound.
inline ResonanceFit fit_resonance(const ComplexSweep& sweep,
                                  const std::optional<ResonanceParams>& guess = std::nullopt,
                                  const ResonanceFitOptions& opt = {}) {
    const auto& f = sweep.freqs_ghz();
    const auto& z = sweep.values();
    const std::size_t n = f.size();
    if (n < 7) throw FitError(FitFailure::insufficient_data, "need at least 7 points");
    if (opt.sigma && opt.sigma->size() != n)
        throw std::invalid_argument("sigma length does not match sweep");
    const double fc = 0.5 * (f.front() + f.back());

    ResonanceParams start = guess ? *guess : detail::initial_estimate(f, z, fc, opt);
    if (guess) start.validate();
    if (opt.fix_phi) {
        const double qi = start.qi();
        start.phi_rad = opt.phi_value;
        const double inv_qi = std::isfinite(qi) && qi > 0 ? 1.0 / qi : 1e-7 / start.q_total;
        start.q_total = 1.0 / (inv_qi + std::cos(start.phi_rad) / start.qe_mag);
    }

    detail::NotchProblem prob{f, z, std::vector<double>(n, 1.0), fc, {}, {}};
    if (opt.sigma)
        for (std::size_t i = 0; i < n; ++i) {
            if (!((*opt.sigma)[i] > 0.0)) throw std::invalid_argument("sigma must be positive");
            prob.weight[i] = 1.0 / (*opt.sigma)[i];
        }
    prob.free.fill(true);
    prob.free[3] = !opt.fix_phi;
    prob.free[6] = opt.fit_delay;
    prob.fixed = detail::to_internal(start, fc);
    if (!std::isfinite(prob.fixed[1])) prob.fixed[1] = std::log(1e12);

    optim::LmOptions lm;
    lm.max_iterations = opt.max_iterations;
    const auto res = optim::levenberg_marquardt(prob, prob.compress(prob.fixed), lm);
    if (!res.converged) throw FitError(FitFailure::diverged, "iteration limit reached");
    const auto xi = prob.expand(res.x);
    if (std::abs(xi[3]) > std::numbers::pi / 2 - 1e-6)
        throw FitError(FitFailure::at_bound, "phi at +/- pi/2");
    if (xi[1] > std::log(1e12) || xi[2] > std::log(1e12))
        throw FitError(FitFailure::at_bound, "quality factor unconstrained (> 1e12)");

    ResonanceFit out;
    out.params = detail::from_internal(xi, fc);
    out.qi = std::exp(xi[1]);
    out.qe_complex = std::polar(out.params.qe_mag, -out.params.phi_rad);
    out.n_points = n;
    out.iterations = res.iterations;
    out.converged = res.converged;

    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += std::norm(s21_model(f[i], out.params) - z[i]);
    out.residual_rms = std::sqrt(ss / static_cast<double>(n));

    const auto dof = static_cast<double>(2 * n) - static_cast<double>(prob.n_free());
    const double sigma2 = opt.sigma ? 1.0 : (dof > 0 ? 2.0 * res.cost / dof : 0.0);
    const Eigen::MatrixXd c_free = optim::covariance_from_jacobian(res.jacobian, sigma2);
    Eigen::Matrix<double, 7, 7> c_int = Eigen::Matrix<double, 7, 7>::Zero();
    {
        std::array<Eigen::Index, 7> idx{};
        Eigen::Index k = 0;
        for (std::size_t j = 0; j < 7; ++j) idx[j] = prob.free[j] ? k++ : -1;
        for (std::size_t a = 0; a < 7; ++a)
            for (std::size_t b = 0; b < 7; ++b)
                if (idx[a] >= 0 && idx[b] >= 0) c_int(a, b) = c_free(idx[a], idx[b]);
    }
    // Internal -> physical: (f0, Qi, Qe, phi, a, theta, tau).
    Eigen::Matrix<double, 7, 7> T = Eigen::Matrix<double, 7, 7>::Zero();
    T(0, 0) = 1.0;
    T(1, 1) = out.qi;
    T(2, 2) = out.params.qe_mag;
    T(3, 3) = 1.0;
    T(4, 4) = out.params.baseline_amp;
    T(5, 5) = 1.0;
    T(5, 6) = -2.0 * std::numbers::pi * fc;
    T(6, 6) = 1.0;
    out.covariance = T * c_int * T.transpose();
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();

    const double q = out.params.q_total, qe = out.params.qe_mag, phi = out.params.phi_rad;
    Eigen::Matrix<double, 7, 1> gq = Eigen::Matrix<double, 7, 1>::Zero();
    gq[1] = q * q / (out.qi * out.qi);
    gq[2] = q * q * std::cos(phi) / (qe * qe);
    gq[3] = q * q * std::sin(phi) / qe;
    out.sigma_q_total = std::sqrt(std::max(0.0, (gq.transpose() * out.covariance * gq)(0, 0)));
    return out;
}

/// Steady-state photon number of a notch resonator driven with `applied_power_w`
/// at the feedline: n = 2 Q^2 P / (hbar w0^2 |Qe|). A convention, not a
/// calibration: the measured chain's attenuation must already be removed from P.
inline double estimate_photon_number(double applied_power_w, const ResonanceFit& fit) {
    if (!(applied_power_w >= 0.0) || !std::isfinite(applied_power_w))
        throw std::invalid_argument("applied power must be non-negative");
    const auto& p = fit.params;
    if (!(p.q_total > 0.0 && p.qe_mag > 0.0 && p.f0_ghz > 0.0))
        throw std::invalid_argument("fit must have positive Q, |Qe| and f0");
    const double w0 = 2.0 * std::numbers::pi * p.f0_ghz * 1e9;
    return 2.0 * p.q_total * p.q_total * applied_power_w / (constants::hbar * w0 * w0 * p.qe_mag);
}

/// dBm at the device plane to watts.
inline double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }

} // namespace mmres
