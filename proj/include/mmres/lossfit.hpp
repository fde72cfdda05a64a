#pragma once

// Power- and temperature-sweep fits of the loss budget, and the Qe-vs-Qi
// correlation check. Fits work on inverse quality factors, where the loss
// channels add.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmres/error.hpp"
#include "mmres/lm.hpp"
#include "mmres/loss.hpp"
#include "mmres/rng.hpp"
#include "mmres/text.hpp"

namespace mmres {

/// One measured internal Q. `x` is the photon number for power sweeps and the
/// temperature in K for temperature sweeps. qi_err <= 0 means "not given".
struct QiPoint {
    double x = 0.0;
    double qi = 0.0;
    double qi_err = 0.0;
};

struct PowerFitOptions {
    double flat_threshold = 0.05; // (max - min)/median of Qi below this => TLS unconstrained
    int max_iterations = 200;
};

struct PowerFitResult {
    TlsParams tls;
    double q_other = 0.0;
    /// Over (q_tls0, n_c, beta, q_other).
    Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();
    std::array<bool, 4> unconstrained{};
    bool reduced_model = false; // only q_other fitted
    double chi2 = 0.0;
    std::size_t dof = 0;
    int iterations = 0;
    bool converged = false;

    bool tls_unconstrained() const { return unconstrained[0] || unconstrained[1] || unconstrained[2]; }
};

inline const std::array<const char*, 4>& power_fit_param_names() {
    static const std::array<const char*, 4> n = {"q_tls0", "n_c", "beta", "q_other"};
    return n;
}

struct TempFitOptions {
    double n_c = 1.0; // TLS saturation shape, held fixed
    double beta = 0.5;
    std::optional<double> tc_fixed;
    double tc_guess = 9.2;
    double gap_ratio = constants::bcs_gap_ratio;
    int max_iterations = 200;
};

struct TempFitResult {
    LossBudget budget;
    /// Over (q_sigma0, tc_k, q_tls0, q_other); the Tc row is zero when held.
    Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();
    std::array<bool, 4> unconstrained{};
    bool tc_fixed = false;
    double chi2 = 0.0;
    std::size_t dof = 0;
    int iterations = 0;
    bool converged = false;
};

inline const std::array<const char*, 4>& temp_fit_param_names() {
    static const std::array<const char*, 4> n = {"q_sigma0", "tc_k", "q_tls0", "q_other"};
    return n;
}

namespace detail {

inline std::vector<double> loss_sigma(std::span<const QiPoint> pts) {
    std::vector<double> s(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& p = pts[i];
        if (!(p.qi > 0.0) || !std::isfinite(p.qi)) throw std::invalid_argument("qi must be positive");
        s[i] = p.qi_err > 0.0 ? p.qi_err / (p.qi * p.qi) : 1.0 / p.qi;
    }
    return s;
}

inline bool all_errors_given(std::span<const QiPoint> pts) {
    return std::all_of(pts.begin(), pts.end(), [](const QiPoint& p) { return p.qi_err > 0.0; });
}

/// TLS loss th / (Q0 sqrt(1 + (n/nc)^beta th)) and its pieces.
struct TlsLoss {
    double value;
    double s; // (n/nc)^beta th
};

inline TlsLoss tls_loss(double nbar, double th, double q0, double nc, double beta) {
    const double s = nbar > 0.0 ? std::pow(nbar / nc, beta) * th : 0.0;
    return {th / (q0 * std::sqrt(1.0 + s)), s};
}

// x = (ln Q0, ln nc, beta, ln Qother)
struct PowerProblem {
    std::span<const QiPoint> pts;
    std::vector<double> sigma;
    double th = 1.0;

    bool residuals(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
        if (!x.allFinite() || !(x[2] > 0.0 && x[2] <= 2.0)) return false;
        if (std::abs(x[0]) > 80.0 || std::abs(x[1]) > 80.0 || std::abs(x[3]) > 80.0) return false;
        r.resize(static_cast<Eigen::Index>(pts.size()));
        const double q0 = std::exp(x[0]), nc = std::exp(x[1]), qo = std::exp(x[3]);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto t = tls_loss(pts[i].x, th, q0, nc, x[2]);
            r[static_cast<Eigen::Index>(i)] = (t.value + 1.0 / qo - 1.0 / pts[i].qi) / sigma[i];
        }
        return r.allFinite();
    }

    void jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& J) const {
        J.resize(static_cast<Eigen::Index>(pts.size()), 4);
        const double q0 = std::exp(x[0]), nc = std::exp(x[1]), qo = std::exp(x[3]);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            const auto t = tls_loss(pts[i].x, th, q0, nc, x[2]);
            const double half = t.value * t.s / (2.0 * (1.0 + t.s));
            J(k, 0) = -t.value / sigma[i];
            J(k, 1) = x[2] * half / sigma[i];
            J(k, 2) = pts[i].x > 0.0 ? -half * std::log(pts[i].x / nc) / sigma[i] : 0.0;
            J(k, 3) = -1.0 / (qo * sigma[i]);
        }
    }
};

// x = (ln Qsigma0, Tc, ln Q0, ln Qother); Tc held when `tc_free` is false.
struct TempProblem {
    std::span<const QiPoint> pts;
    std::vector<double> sigma;
    double nbar = 0.0;
    double f_ghz = 0.0;
    TempFitOptions opt;
    bool tc_free = true;
    double tc_held = 9.2;

    double tc_of(const Eigen::VectorXd& x) const { return tc_free ? x[1] : tc_held; }

    /// sigma1/sigma2 at every point for a given Tc; false if any T >= Tc.
    bool ratios(double tc, std::vector<double>& out) const {
        out.resize(pts.size());
        QpParams qp{1.0, tc, opt.gap_ratio * tc};
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (!(pts[i].x < tc)) return false;
            const auto s = mb_sigma(pts[i].x, f_ghz, qp);
            out[i] = s.sigma1 / s.sigma2;
        }
        return true;
    }

    bool residuals(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
        if (!x.allFinite()) return false;
        for (Eigen::Index j : {0, 2, 3})
            if (std::abs(x[j]) > 80.0) return false;
        const double tc = tc_of(x);
        if (!(tc > 0.0)) return false;
        const double ratio_g = opt.gap_ratio;
        if (!(ratio_g >= 1.0 && ratio_g <= 3.0)) return false;
        std::vector<double> rat;
        if (!ratios(tc, rat)) return false;
        r.resize(static_cast<Eigen::Index>(pts.size()));
        const double qs = std::exp(x[0]), q0 = std::exp(x[2]), qo = std::exp(x[3]);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double th = tls_thermal_factor(pts[i].x, f_ghz);
            const double l = tls_loss(nbar, th, q0, opt.n_c, opt.beta).value + rat[i] / qs + 1.0 / qo;
            r[static_cast<Eigen::Index>(i)] = (l - 1.0 / pts[i].qi) / sigma[i];
        }
        return r.allFinite();
    }

    void jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& J) const {
        const auto n = static_cast<Eigen::Index>(pts.size());
        J.resize(n, 4);
        const double tc = tc_of(x);
        std::vector<double> rat;
        ratios(tc, rat);
        const double qs = std::exp(x[0]), q0 = std::exp(x[2]), qo = std::exp(x[3]);
        std::vector<double> up, dn;
        double dtc = 0.0;
        bool have_up = false, have_dn = false;
        if (tc_free) {
            const double h = 1e-6 * tc;
            have_up = ratios(tc + h, up);
            have_dn = ratios(tc - h, dn);
            dtc = (have_up && have_dn) ? 2.0 * h : h;
        }
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            const double th = tls_thermal_factor(pts[i].x, f_ghz);
            J(k, 0) = -rat[i] / qs / sigma[i];
            if (tc_free) {
                const double hi = have_up ? up[i] : rat[i];
                const double lo = have_dn ? dn[i] : rat[i];
                J(k, 1) = (hi - lo) / dtc / qs / sigma[i];
            } else {
                J(k, 1) = 0.0;
            }
            J(k, 2) = -tls_loss(nbar, th, q0, opt.n_c, opt.beta).value / sigma[i];
            J(k, 3) = -1.0 / (qo * sigma[i]);
        }
        if (!tc_free) J.col(1).setZero();
    }
};

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace detail

/// Weighted least squares of 1/Qi(nbar) for the TLS parameters and Q_other.
/// Q_sigma is taken as infinite (low-temperature regime).
inline PowerFitResult fit_power_sweep(std::span<const QiPoint> points, double t_k, double f_ghz,
                                      const PowerFitOptions& opt = {}) {
    if (points.size() < 5) throw FitError(FitFailure::insufficient_data, "need at least 5 points");
    double nmin = std::numeric_limits<double>::infinity(), nmax = 0.0;
    for (const auto& p : points) {
        if (!(p.x > 0.0) || !std::isfinite(p.x))
            throw std::invalid_argument("photon numbers must be positive");
        nmin = std::min(nmin, p.x);
        nmax = std::max(nmax, p.x);
    }
    if (nmax < 1e3 * nmin * (1.0 - 1e-9))
        throw FitError(FitFailure::insufficient_data, "photon numbers must span at least 3 decades");

    std::vector<QiPoint> pts(points.begin(), points.end());
    std::stable_sort(pts.begin(), pts.end(), [](const QiPoint& a, const QiPoint& b) { return a.x < b.x; });
    const auto sigma = detail::loss_sigma(pts);
    const double th = tls_thermal_factor(t_k, f_ghz);
    const bool weighted = detail::all_errors_given(pts);

    PowerFitResult out;
    std::vector<double> qis;
    for (const auto& p : pts) qis.push_back(p.qi);
    const double qmed = detail::median(qis);
    const double spread = (*std::max_element(qis.begin(), qis.end()) - *std::min_element(qis.begin(), qis.end())) / qmed;

    if (spread < opt.flat_threshold) {
        // Constant-loss model: weighted mean of 1/Qi.
        double sw = 0.0, swl = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double w = 1.0 / (sigma[i] * sigma[i]);
            sw += w;
            swl += w / pts[i].qi;
        }
        const double loss = swl / sw;
        double chi2 = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double r = (loss - 1.0 / pts[i].qi) / sigma[i];
            chi2 += r * r;
        }
        out.reduced_model = true;
        out.q_other = 1.0 / loss;
        out.tls = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::quiet_NaN(),
                   std::numeric_limits<double>::quiet_NaN()};
        out.unconstrained = {true, true, true, false};
        out.chi2 = chi2;
        out.dof = pts.size() - 1;
        const double var_loss = (weighted ? 1.0 : chi2 / static_cast<double>(out.dof)) / sw;
        out.covariance(3, 3) = var_loss * std::pow(out.q_other, 4);
        out.converged = true;
        return out;
    }

    const double l_lo = 1.0 / pts.front().qi, l_hi = 1.0 / pts.back().qi;
    const double l_tls = std::max(l_lo - l_hi, 0.05 * l_lo);
    const double mid = 0.5 * (l_lo + l_hi);
    double n_half = std::sqrt(nmin * nmax);
    for (std::size_t i = 1; i < pts.size(); ++i)
        if ((1.0 / pts[i - 1].qi - mid) * (1.0 / pts[i].qi - mid) <= 0.0) {
            n_half = std::sqrt(pts[i - 1].x * pts[i].x);
            break;
        }

    detail::PowerProblem prob{pts, sigma, th};
    optim::LmOptions lm;
    lm.max_iterations = opt.max_iterations;
    lm.ftol = 1e-12;
    std::optional<optim::LmResult> best;
    for (double beta : {0.25, 0.5, 1.0, 1.5})
        for (double nc_scale : {0.1, 1.0, 10.0})
            for (double other_scale : {1.0, 0.7}) {
                Eigen::VectorXd x0(4);
                x0 << std::log(th / l_tls), std::log(n_half * nc_scale), beta,
                    std::log(1.0 / (l_hi * other_scale));
                Eigen::VectorXd r0;
                if (!prob.residuals(x0, r0)) continue;
                auto res = optim::levenberg_marquardt(prob, x0, lm);
                if (!best || res.cost < best->cost) best = std::move(res);
            }
    if (!best) throw FitError(FitFailure::diverged, "no feasible starting point");
    if (!best->converged) best = optim::levenberg_marquardt(prob, best->x, lm);
    if (!best->converged) throw FitError(FitFailure::diverged, "iteration limit reached");
    const auto& x = best->x;
    out.tls = {std::exp(x[0]), std::exp(x[1]), x[2]};
    out.q_other = std::exp(x[3]);
    out.chi2 = 2.0 * best->cost;
    out.dof = pts.size() - 4;
    out.iterations = best->iterations;
    out.converged = true;

    const double s2 = weighted ? 1.0 : (out.dof ? out.chi2 / static_cast<double>(out.dof) : 0.0);
    const Eigen::MatrixXd c = optim::covariance_from_jacobian(best->jacobian, s2);
    const Eigen::Vector4d scale(out.tls.q_tls0, out.tls.n_c, 1.0, out.q_other);
    out.covariance = scale.asDiagonal() * c * scale.asDiagonal();
    const std::array<double, 4> vals = {out.tls.q_tls0, out.tls.n_c, out.tls.beta, out.q_other};
    for (std::size_t j = 0; j < 4; ++j) {
        const double sd = std::sqrt(std::max(0.0, out.covariance(j, j)));
        out.unconstrained[j] = !std::isfinite(sd) || sd > std::abs(vals[j]);
    }
    // A channel whose parameter barely moves the model is not determined by the data.
    {
        Eigen::MatrixXd J = best->jacobian;
        const double total = J.norm();
        for (Eigen::Index j = 0; j < 4; ++j)
            if (J.col(j).norm() < 1e-8 * total) out.unconstrained[static_cast<std::size_t>(j)] = true;
    }
    return out;
}

/// Weighted least squares of 1/Qi(T) for Q_sigma0, Tc (optional), Q_TLS,0 and
/// Q_other, with the TLS saturation shape (n_c, beta) and nbar held fixed.
inline TempFitResult fit_temperature_sweep(std::span<const QiPoint> points, double nbar, double f_ghz,
                                           const TempFitOptions& opt = {}) {
    if (points.size() < 4) throw FitError(FitFailure::insufficient_data, "need at least 4 points");
    TlsParams{1.0, opt.n_c, opt.beta}.validate();
    if (!(nbar >= 0.0)) throw std::invalid_argument("nbar must be non-negative");
    std::vector<QiPoint> pts(points.begin(), points.end());
    std::stable_sort(pts.begin(), pts.end(), [](const QiPoint& a, const QiPoint& b) { return a.x < b.x; });
    for (const auto& p : pts)
        if (!(p.x > 0.0)) throw std::invalid_argument("temperatures must be positive");
    const double tmax = pts.back().x;
    const double tc0 = opt.tc_fixed ? *opt.tc_fixed : std::max(opt.tc_guess, 1.05 * tmax);
    if (opt.tc_fixed && !(tmax < *opt.tc_fixed))
        throw std::invalid_argument("all temperatures must lie below the fixed Tc");
    if (!opt.tc_fixed && tmax < 0.3 * opt.tc_guess)
        throw FitError(FitFailure::insufficient_data,
                       "Tc is free but no point reaches 0.3 Tc; hold Tc fixed instead");

    const auto sigma = detail::loss_sigma(pts);
    const bool weighted = detail::all_errors_given(pts);
    detail::TempProblem prob{pts, sigma, nbar, f_ghz, opt, !opt.tc_fixed, tc0};

    std::vector<double> rat;
    prob.ratios(tc0, rat);
    const double l_lo = 1.0 / pts.front().qi;
    const double excess = 1.0 / pts.back().qi - l_lo;
    const double qs0 = rat.back() / std::max(excess, 1e-3 * l_lo);
    const double th_lo = tls_thermal_factor(pts.front().x, f_ghz);
    const double sat = std::sqrt(1.0 + std::pow(nbar / opt.n_c, opt.beta) * th_lo);

    optim::LmOptions lm;
    lm.max_iterations = opt.max_iterations;
    lm.ftol = 1e-12;
    std::optional<optim::LmResult> best;
    for (double frac : {0.5, 0.2, 0.8})
        for (double qs_scale : {1.0, 0.1, 10.0}) {
            Eigen::VectorXd x0(4);
            x0 << std::log(qs0 * qs_scale), tc0, std::log(th_lo / (frac * l_lo * sat)),
                std::log(1.0 / ((1.0 - frac) * l_lo));
            Eigen::VectorXd r0;
            if (!prob.residuals(x0, r0)) continue;
            auto res = optim::levenberg_marquardt(prob, x0, lm);
            if (!best || res.cost < best->cost) best = std::move(res);
        }
    if (!best) throw FitError(FitFailure::diverged, "no feasible starting point");
    if (!best->converged) best = optim::levenberg_marquardt(prob, best->x, lm);

    const auto& x = best->x;
    TempFitResult out;
    out.tc_fixed = opt.tc_fixed.has_value();
    const double tc = prob.tc_of(x);
    out.budget.qp = {std::exp(x[0]), tc, opt.gap_ratio * tc};
    out.budget.tls = {std::exp(x[2]), opt.n_c, opt.beta};
    out.budget.q_other = std::exp(x[3]);
    const std::size_t n_free = out.tc_fixed ? 3 : 4;
    out.chi2 = 2.0 * best->cost;
    out.dof = pts.size() > n_free ? pts.size() - n_free : 0;
    out.iterations = best->iterations;
    out.converged = best->converged;

    const double s2 = weighted ? 1.0 : (out.dof ? out.chi2 / static_cast<double>(out.dof) : 0.0);
    Eigen::MatrixXd J = best->jacobian;
    if (out.tc_fixed) {
        Eigen::MatrixXd Jr(J.rows(), 3);
        Jr << J.col(0), J.col(2), J.col(3);
        const Eigen::MatrixXd cr = optim::covariance_from_jacobian(Jr, s2);
        const std::array<int, 3> map = {0, 2, 3};
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) out.covariance(map[a], map[b]) = cr(a, b);
    } else {
        out.covariance = optim::covariance_from_jacobian(J, s2);
    }
    const Eigen::Vector4d scale(out.budget.qp.q_sigma0, 1.0, out.budget.tls.q_tls0, out.budget.q_other);
    out.covariance = (scale.asDiagonal() * out.covariance * scale.asDiagonal()).eval();

    const std::array<double, 4> vals = {out.budget.qp.q_sigma0, tc, out.budget.tls.q_tls0,
                                        out.budget.q_other};
    for (std::size_t j = 0; j < 4; ++j) {
        if (j == 1 && out.tc_fixed) continue;
        const double sd = std::sqrt(std::max(0.0, out.covariance(j, j)));
        out.unconstrained[j] = !std::isfinite(sd) || sd > std::abs(vals[j]);
    }
    // Q_sigma0 is not determined when the quasiparticle channel never carries
    // a measurable share of the loss.
    prob.ratios(tc, rat);
    double max_frac = 0.0, max_tls = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto ch = qi_channels(pts[i].x, nbar, f_ghz, out.budget);
        max_frac = std::max(max_frac, ch.total / ch.sigma);
        max_tls = std::max(max_tls, ch.total / ch.tls);
    }
    if (max_frac < 1e-3) {
        out.unconstrained[0] = true;
        if (!out.tc_fixed) out.unconstrained[1] = true;
    }
    if (max_tls < 1e-3) out.unconstrained[2] = true;
    // Drift along an unidentifiable direction does not invalidate the rest.
    if (!out.converged && !out.unconstrained[0] && !out.unconstrained[2])
        throw FitError(FitFailure::diverged, "iteration limit reached");
    return out;
}

struct QeLossSample {
    double qe_mag = 0.0;
    double qi_low = 0.0;
    double qi_high = 0.0;
};

struct CorrelationStat {
    double pearson = 0.0;
    double p_value = 1.0;
    bool degenerate = false; // zero variance; pearson reported as 0
};

struct QeLossCorrelation {
    CorrelationStat low;
    CorrelationStat high;
    std::size_t n = 0;
    int permutations = 0;
};

namespace detail {

inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
    const auto n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    const double tiny = 1e-24 * static_cast<double>(a.size());
    if (saa <= tiny * std::max(1.0, ma * ma) || sbb <= tiny * std::max(1.0, mb * mb)) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline CorrelationStat correlation_with_permutations(std::span<const double> x, std::vector<double> y,
                                                     std::uint64_t seed, int permutations) {
    CorrelationStat st;
    const auto r = pearson(x, y);
    if (!r) {
        st.degenerate = true;
        return st;
    }
    st.pearson = *r;
    Rng rng(seed);
    int hits = 0;
    for (int k = 0; k < permutations; ++k) {
        rng.shuffle(y.begin(), y.end());
        const auto rp = pearson(x, y);
        if (rp && std::abs(*rp) >= std::abs(*r) - 1e-12) ++hits;
    }
    st.p_value = (1.0 + hits) / (1.0 + permutations);
    return st;
}

} // namespace detail

/// Pearson correlation of log10 |Qe| against log10 Qi at both power limits,
/// with two-sided permutation p-values.
inline QeLossCorrelation qe_loss_correlation(std::span<const QeLossSample> fits, std::uint64_t seed = 0,
                                             int permutations = 10000) {
    if (fits.size() < 3) throw std::invalid_argument("correlation needs at least 3 fits");
    std::vector<double> lq, llo, lhi;
    for (const auto& f : fits) {
        if (!(f.qe_mag > 0.0 && f.qi_low > 0.0 && f.qi_high > 0.0))
            throw std::invalid_argument("quality factors must be positive");
        lq.push_back(std::log10(f.qe_mag));
        llo.push_back(std::log10(f.qi_low));
        lhi.push_back(std::log10(f.qi_high));
    }
    QeLossCorrelation out;
    out.n = fits.size();
    out.permutations = permutations;
    out.low = detail::correlation_with_permutations(lq, llo, derive_seed(seed, 0), permutations);
    out.high = detail::correlation_with_permutations(lq, lhi, derive_seed(seed, 1), permutations);
    return out;
}

enum class SweepAxis { photon_number, temperature };

struct LossSweepData {
    SweepAxis axis = SweepAxis::photon_number;
    std::vector<QiPoint> points;
};

/// CSV with columns nbar or temperature_k, qi, and optional qi_err.
inline LossSweepData read_loss_csv(std::istream& in) {
    const auto t = text::read_csv(in);
    LossSweepData d;
    std::size_t cx;
    if (auto c = t.column("nbar")) {
        cx = *c;
        d.axis = SweepAxis::photon_number;
        if (t.column("temperature_k")) throw ParseError(0, "give either nbar or temperature_k, not both");
    } else if (auto c2 = t.column("temperature_k")) {
        cx = *c2;
        d.axis = SweepAxis::temperature;
    } else {
        throw ParseError(0, "missing mandatory column 'nbar' or 'temperature_k'");
    }
    const auto cq = t.require("qi");
    const auto ce = t.column("qi_err");
    for (const auto& row : t.rows) {
        QiPoint p;
        p.x = text::parse_double(row.cells[cx], row.line, t.header[cx]);
        p.qi = text::parse_double(row.cells[cq], row.line, "qi");
        if (ce && !row.cells[*ce].empty()) p.qi_err = text::parse_double(row.cells[*ce], row.line, "qi_err");
        if (!(p.qi > 0.0)) throw ParseError(row.line, "qi must be positive");
        if (!(p.x > 0.0)) throw ParseError(row.line, t.header[cx] + " must be positive");
        d.points.push_back(p);
    }
    if (d.points.empty()) throw ParseError(0, "no data rows");
    return d;
}

inline void write_loss_csv(std::ostream& out, const LossSweepData& d) {
    out << (d.axis == SweepAxis::photon_number ? "nbar" : "temperature_k") << ",qi,qi_err\n";
    for (const auto& p : d.points)
        out << text::format(p.x) << ',' << text::format(p.qi) << ',' << text::format(p.qi_err) << '\n';
}

} // namespace mmres
