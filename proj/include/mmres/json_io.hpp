#pragma once

// JSON records for fits, budgets and error terms. Objects serialize with
// sorted keys; non-finite numbers become null.

#include <cmath>
#include <complex>
#include <string>

#include "json.hpp"

#include "mmres/calib.hpp"
#include "mmres/error.hpp"
#include "mmres/lossfit.hpp"
#include "mmres/resonance.hpp"

namespace mmres::json_io {

using json = nlohmann::json;

inline constexpr int schema_version = 1;

inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json complex_pair(cplx z) { return json::array({number(z.real()), number(z.imag())}); }

inline cplx read_complex(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ParseError(0, std::string(what) + " must be a [re, im] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

template <class M>
json matrix(const M& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(number(m(i, k)));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline json envelope(const char* kind) {
    return json{{"schema_version", schema_version}, {"kind", kind}};
}

inline json to_json(const ResonanceParams& p) {
    return {{"f0_ghz", number(p.f0_ghz)},
            {"q_total", number(p.q_total)},
            {"qe_mag", number(p.qe_mag)},
            {"phi_rad", number(p.phi_rad)},
            {"baseline_amp", number(p.baseline_amp)},
            {"baseline_phase_rad", number(p.baseline_phase_rad)},
            {"electrical_delay_ns", number(p.electrical_delay_ns)}};
}

inline json to_json(const ResonanceFit& f) {
    json j = envelope("resonance_fit");
    j["params"] = to_json(f.params);
    j["qi"] = number(f.qi);
    j["qe_complex"] = complex_pair(f.qe_complex);
    json sig;
    for (std::size_t i = 0; i < 7; ++i) sig[resonance_param_names()[i]] = number(f.sigma(i));
    sig["q_total"] = number(f.sigma_q_total);
    j["sigma"] = sig;
    j["covariance_order"] = resonance_param_names();
    j["covariance"] = matrix(f.covariance);
    j["residual_rms"] = number(f.residual_rms);
    j["n_points"] = f.n_points;
    j["iterations"] = f.iterations;
    j["converged"] = f.converged;
    return j;
}

inline json to_json(const TlsParams& t) {
    return {{"q_tls0", number(t.q_tls0)}, {"n_c", number(t.n_c)}, {"beta", number(t.beta)}};
}

inline json to_json(const LossBudget& b) {
    return {{"tls", to_json(b.tls)},
            {"qp", {{"q_sigma0", number(b.qp.q_sigma0)}, {"tc_k", number(b.qp.tc_k)}, {"gap0_k", number(b.qp.gap0())}}},
            {"q_other", number(b.q_other)}};
}

template <std::size_t N>
json flags(const std::array<bool, N>& f, const std::array<const char*, N>& names) {
    json j = json::array();
    for (std::size_t i = 0; i < N; ++i)
        if (f[i]) j.push_back(names[i]);
    return j;
}

template <std::size_t N>
json sigmas(const Eigen::Matrix4d& c, const std::array<const char*, N>& names) {
    json j;
    for (std::size_t i = 0; i < N; ++i)
        j[names[i]] = number(std::sqrt(std::max(0.0, c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)))));
    return j;
}

inline json to_json(const PowerFitResult& r) {
    json j = envelope("power_fit");
    j["tls"] = to_json(r.tls);
    j["q_other"] = number(r.q_other);
    j["covariance_order"] = power_fit_param_names();
    j["covariance"] = matrix(r.covariance);
    j["sigma"] = sigmas(r.covariance, power_fit_param_names());
    j["unconstrained"] = flags(r.unconstrained, power_fit_param_names());
    j["reduced_model"] = r.reduced_model;
    j["chi2"] = number(r.chi2);
    j["dof"] = r.dof;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    return j;
}

inline json to_json(const TempFitResult& r) {
    json j = envelope("temperature_fit");
    j["budget"] = to_json(r.budget);
    j["tc_fixed"] = r.tc_fixed;
    j["covariance_order"] = temp_fit_param_names();
    j["covariance"] = matrix(r.covariance);
    j["sigma"] = sigmas(r.covariance, temp_fit_param_names());
    j["unconstrained"] = flags(r.unconstrained, temp_fit_param_names());
    j["chi2"] = number(r.chi2);
    j["dof"] = r.dof;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    return j;
}

inline json to_json(const CorrelationStat& s) {
    return {{"pearson", number(s.pearson)}, {"p_value", number(s.p_value)}, {"degenerate", s.degenerate}};
}

inline json to_json(const QeLossCorrelation& c) {
    json j = envelope("qe_loss_correlation");
    j["low_power"] = to_json(c.low);
    j["high_power"] = to_json(c.high);
    j["n"] = c.n;
    j["permutations"] = c.permutations;
    return j;
}

inline json to_json(const ErrorTerms& t) {
    json j = envelope("error_terms");
    json pts = json::array();
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto& e = t.points[i];
        pts.push_back({{"freq_ghz", t.freqs_ghz[i]},
                       {"e10", complex_pair(e.e10)},
                       {"e23", complex_pair(e.e23)},
                       {"e32", complex_pair(e.e32)},
                       {"e30", complex_pair(e.e30)},
                       {"e33", complex_pair(e.e33)},
                       {"e11", complex_pair(e.e11)}});
    }
    j["points"] = std::move(pts);
    return j;
}

inline ErrorTerms error_terms_from_json(const json& j) {
    if (!j.is_object() || j.value("kind", "") != "error_terms")
        throw ParseError(0, "not an error_terms document");
    if (j.value("schema_version", 0) != schema_version) throw ParseError(0, "unsupported schema_version");
    if (!j.contains("points") || !j["points"].is_array()) throw ParseError(0, "missing points array");
    ErrorTerms t;
    for (const auto& p : j["points"]) {
        if (!p.contains("freq_ghz") || !p["freq_ghz"].is_number()) throw ParseError(0, "point missing freq_ghz");
        t.freqs_ghz.push_back(p["freq_ghz"].get<double>());
        ErrorTermPoint e;
        for (auto [name, field] : {std::pair{"e10", &ErrorTermPoint::e10}, std::pair{"e23", &ErrorTermPoint::e23},
                                   std::pair{"e32", &ErrorTermPoint::e32}, std::pair{"e30", &ErrorTermPoint::e30},
                                   std::pair{"e33", &ErrorTermPoint::e33}, std::pair{"e11", &ErrorTermPoint::e11}}) {
            if (!p.contains(name)) throw ParseError(0, std::string("point missing ") + name);
            e.*field = read_complex(p[name], name);
        }
        t.points.push_back(e);
    }
    try {
        t.validate();
    } catch (const std::invalid_argument& ex) {
        throw ParseError(0, ex.what());
    }
    return t;
}

/// Canonical text: sorted keys, two-space indent, trailing newline.
inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

} // namespace mmres::json_io
