// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "support.hpp"

using namespace mmres;
using namespace mmres::support;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        if (!detail.empty()) detail += "; ";
        detail += (ok ? "" : "FAILED ") + what;
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 -------------------------------------------------------------------------
Outcome fit_closure() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(1);
    double worst_rel = 0.0, worst_abs = 0.0;
    int failures = 0;
    for (int k = 0; k < 100; ++k) {
        const double f0 = uniform(rng, 87.6, 102.4), qi = log_uniform(rng, 1e4, 5e6), qe = log_uniform(rng, 1e3, 1e6);
        const double phi = uniform(rng, -0.5, 0.5), a = uniform(rng, 0.3, 1.5);
        const double theta = uniform(rng, -3.0, 3.0), tau = uniform(rng, -0.3, 0.3);
        const auto truth = ResonanceParams::from_qi(f0, qi, qe, phi, a, theta, tau);
        const auto s = synth_resonance(truth, resonance_grid(truth, 401));
        try {
            const auto fit = fit_resonance(s);
            const auto& p = fit.params;
            const double rel = std::max({rel_err(p.f0_ghz, f0), rel_err(fit.qi, qi), rel_err(p.qe_mag, qe),
                                         rel_err(p.phi_rad, phi), rel_err(p.baseline_amp, a)});
            const double dtheta = std::remainder(p.baseline_phase_rad - theta, 2.0 * std::numbers::pi);
            const double ab = std::max(std::abs(dtheta), std::abs(p.electrical_delay_ns - tau));
            worst_rel = std::max(worst_rel, rel);
            worst_abs = std::max(worst_abs, ab);
            if (!(rel <= 1e-4) || !(ab <= 1e-4)) ++failures;
        } catch (const std::exception&) {
            ++failures;
        }
    }
    const double dt = seconds_since(t0);
    o.require(failures == 0, std::to_string(failures) + "/100 sets outside 1e-4");
    o.require(worst_rel <= 1e-4, "worst relative error " + fmt("%.2e", worst_rel));
    o.require(worst_abs <= 1e-4, "worst phase/delay error " + fmt("%.2e", worst_abs));
    o.require(dt <= 60.0, "runtime " + fmt("%.1f s", dt));
    return o;
}

// 2 -------------------------------------------------------------------------
Outcome power_recovery() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const double t_k = 0.02, f = 95.0;
    const auto nbars = logspace(0.1, 1e7, 20);
    struct Case {
        const char* name;
        double q_tls0, q_other;
    };
    for (const Case c : {Case{"typical", 0.953e6, 1.17e5}, Case{"high-Q", 1.03e6, 4.18e6}}) {
        LossBudget b;
        b.tls = {c.q_tls0, 20.0, 0.8};
        b.q_other = c.q_other;
        const auto clean = fit_power_sweep(synth_power_sweep(b, nbars, t_k, f), t_k, f);
        const double e0 = rel_err(clean.tls.q_tls0, c.q_tls0), e1 = rel_err(clean.q_other, c.q_other);
        o.require(e0 <= 0.01 && e1 <= 0.01,
                  std::string(c.name) + " noiseless rel err " + fmt("%.1e", e0) + "/" + fmt("%.1e", e1));
        std::vector<double> q0, qo;
        int failed = 0;
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            NoiseSpec n{NoiseKind::multiplicative, 0.02, seed};
            try {
                const auto r = fit_power_sweep(synth_power_sweep(b, nbars, t_k, f, n), t_k, f);
                q0.push_back(r.tls.q_tls0);
                qo.push_back(r.q_other);
            } catch (const std::exception&) {
                ++failed;
            }
        }
        auto median = [](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
        };
        const double m0 = rel_err(median(q0), c.q_tls0), m1 = rel_err(median(qo), c.q_other);
        o.require(failed == 0 && m0 <= 0.10 && m1 <= 0.10,
                  std::string(c.name) + " 2% noise median rel err " + fmt("%.3f", m0) + "/" + fmt("%.3f", m1) +
                      " (" + std::to_string(failed) + " failed fits)");
    }
    const double dt = seconds_since(t0);
    o.require(dt <= 120.0, "runtime " + fmt("%.1f s", dt));
    return o;
}

// 3 -------------------------------------------------------------------------
Outcome mattis_bardeen() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    QpParams qp;
    qp.tc_k = 9.2;
    double worst = 0.0;
    for (double frac : {0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99})
        for (double f : {95.0, 900.0}) {
            const auto a = mb_sigma(frac * qp.tc_k, f, qp);
            const auto b = mb_ref::sigma(frac * qp.tc_k, f, qp.tc_k);
            worst = std::max({worst, rel_err(a.sigma1, b.sigma1), rel_err(a.sigma2, b.sigma2)});
        }
    o.require(worst <= 1e-5, "20-point oracle worst rel err " + fmt("%.1e", worst));
    const auto lim = mb_sigma(0.999 * qp.tc_k, 95.0, qp);
    o.require(std::abs(lim.sigma1 - 1.0) <= 1e-3 && std::abs(lim.sigma2) <= 1e-3,
              "at 0.999 Tc sigma1 = " + fmt("%.5f", lim.sigma1) + ", sigma2 = " + fmt("%.5f", lim.sigma2) +
                  " (limits within 1e-3)");
    const double dt = seconds_since(t0);
    o.require(dt <= 60.0, "runtime " + fmt("%.1f s", dt));
    return o;
}

// 4 -------------------------------------------------------------------------
Outcome qp_negligible() {
    Outcome o;
    QpParams qp;
    qp.q_sigma0 = 1.0;
    qp.tc_k = 9.2;
    const double ratio = q_sigma(0.86, 95.0, qp);
    o.require(ratio > 1e8, "Q_sigma(0.86 K)/Q_sigma0 = " + fmt("%.3e", ratio));
    bool mono = true;
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 50; ++i) {
        const double t = qp.tc_k * (0.3 + 0.69 * i / 49.0);
        const double q = q_sigma(t, 95.0, qp);
        if (!(q < prev)) mono = false;
        prev = q;
    }
    o.require(mono, "Q_sigma strictly decreasing on 50 points in [0.3, 0.99] Tc");
    return o;
}

// 5 -------------------------------------------------------------------------
Outcome calibration() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(5);
    const auto freqs = linear_grid(75.0, 110.0, 201);
    double worst_rt = 0.0, worst_solve = 0.0;
    for (int k = 0; k < 50; ++k) {
        const auto terms = random_error_terms(rng, freqs);
        const auto dut = random_passive_dut(rng, freqs);
        const auto back = correct(embed(dut, terms), terms);
        for (std::size_t i = 0; i < freqs.size(); ++i)
            worst_rt = std::max({worst_rt, std::abs(back.s21[i] - dut.s21[i]), std::abs(back.s22[i] - dut.s22[i])});

        const cplx gamma = random_phase(rng, uniform(rng, 0.7, 1.0));
        CalStandards st{embed(ideal_standard(freqs, 1.0, 0.0), terms), embed(ideal_standard(freqs, 0.0, gamma), terms),
                        embed(line_standard(freqs, 1.0 / (4.0 * 92.5)), terms), gamma, std::nullopt};
        const auto solved = solve_error_terms(st);
        for (std::size_t i = 0; i < freqs.size(); ++i) {
            const auto& a = solved.points[i];
            const auto& b = terms.points[i];
            worst_solve = std::max({worst_solve, std::abs(a.e30 - b.e30) / std::abs(b.e30),
                                    std::abs(a.e33 - b.e33) / std::abs(b.e33), std::abs(a.e11 - b.e11) / std::abs(b.e11),
                                    std::abs(a.transmission_product() - b.transmission_product()) /
                                        std::abs(b.transmission_product()),
                                    std::abs(a.reflection_product() - b.reflection_product()) /
                                        std::abs(b.reflection_product())});
        }
    }
    const double dt = seconds_since(t0);
    o.require(worst_rt <= 1e-9, "round trip worst " + fmt("%.1e", worst_rt));
    o.require(worst_solve <= 1e-10, "T/R/L recovery worst rel " + fmt("%.1e", worst_solve));
    o.require(dt <= 30.0, "runtime " + fmt("%.1f s", dt));
    return o;
}

// 6 -------------------------------------------------------------------------
Outcome end_to_end() {
    Outcome o;
    const double qi = 8.27e5;
    const auto truth = ResonanceParams::from_qi(95.0, qi, 2e5, 0.2, 1.0, 0.0, 0.0);
    const auto freqs = resonance_grid(truth, 401);
    Rng rng(6);
    const auto terms = random_error_terms(rng, freqs);
    const auto measured = embed(notch_dut(truth, freqs), terms);
    auto fitted_qi = [](const SymmetricDut& d) { return fit_resonance(ComplexSweep(d.freqs_ghz, d.s21)).qi; };

    const double q_clean = fitted_qi(correct(measured, terms));
    o.require(rel_err(q_clean, qi) <= 0.005, "noiseless Qi rel err " + fmt("%.1e", rel_err(q_clean, qi)));

    const double m = 0.06;
    const double bound = propagate_to_scalar(measured, terms, m, fitted_qi);
    double worst = 0.0;
    int failed = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng r(derive_seed(6, seed));
        ErrorTerms pert = terms;
        for (std::size_t k = 0; k < kTermCoordinates; ++k) pert = perturb_terms(pert, k, random_phase(r, m));
        try {
            worst = std::max(worst, std::abs(fitted_qi(correct(measured, pert)) - q_clean));
        } catch (const std::exception&) {
            ++failed;
        }
    }
    o.require(failed == 0 && worst <= 3.0 * bound,
              "perturbed max |dQi| = " + fmt("%.4g", worst) + ", bound = " + fmt("%.4g", bound) + " (ratio " +
                  fmt("%.2f", worst / bound) + ", " + std::to_string(failed) + " failed fits)");
    return o;
}

// 7 -------------------------------------------------------------------------
Outcome taper_geometry() {
    Outcome o;
    TaperSpec spec;
    spec.n_points = 1001;
    const auto c = generate_contour(spec);
    o.require(c.points.front().second == 0.0 && contour_y(0.0, spec) == 0.0, "y(0) = 0 exactly");
    const double y_end = contour_y(spec.A1, spec);
    o.require(std::abs(y_end - 0.615) <= 1e-12, "y(A1) = " + fmt("%.12f", y_end));
    bool mono = true, concave = true;
    for (std::size_t i = 1; i < c.points.size(); ++i)
        if (!(c.points[i].second > c.points[i - 1].second)) mono = false;
    for (std::size_t i = 1; i + 1 < c.points.size(); ++i) {
        const double d2 = c.points[i + 1].second - 2.0 * c.points[i].second + c.points[i - 1].second;
        if (d2 > 1e-15) concave = false;
    }
    o.require(mono, "strictly increasing on 1001 points");
    o.require(concave, "non-positive second differences");

    std::stringstream csv;
    write_contour_csv(csv, c);
    const auto back = read_contour_csv(csv);
    double csv_err = 0.0;
    for (std::size_t i = 0; i < c.points.size(); ++i)
        csv_err = std::max({csv_err, std::abs(back.points[i].first - c.points[i].first),
                            std::abs(back.points[i].second - c.points[i].second)});
    std::stringstream svg;
    write_contour_svg(svg, c, spec);
    const auto poly = contour_from_outline(read_svg_polygon(svg), spec);
    double svg_err = 0.0;
    for (std::size_t i = 0; i < c.points.size(); ++i)
        svg_err = std::max({svg_err, std::abs(poly.points[i].first - c.points[i].first),
                            std::abs(poly.points[i].second - c.points[i].second)});
    o.require(back.points.size() == c.points.size() && csv_err <= 1e-9, "CSV round trip " + fmt("%.1e mm", csv_err));
    o.require(poly.points.size() == c.points.size() && svg_err <= 1e-9, "SVG round trip " + fmt("%.1e mm", svg_err));
    return o;
}

// 8 -------------------------------------------------------------------------
Outcome qe_rule() {
    Outcome o;
    double worst = 0.0;
    for (int i = 0; i <= 600; ++i) {
        const double target = std::pow(10.0, 1.0 + 6.0 * i / 600.0);
        worst = std::max(worst, rel_err(qe_of_separation(separation_for_qe(target)), target));
    }
    o.require(worst <= 1e-12, "inverse pair worst rel " + fmt("%.1e", worst));
    const double q100 = qe_of_separation(100.0), want = std::pow(10.0, 3.96491);
    o.require(rel_err(q100, want) <= 1e-9, "Qe(100 um) = " + fmt("%.6f", q100));
    return o;
}

// 9 -------------------------------------------------------------------------
Outcome phi_sensitivity() {
    Outcome o;
    const double qi = 8.27e5;
    const auto truth = ResonanceParams::from_qi(95.0, qi, 2e5, 0.4, 1.0, 0.3, 0.0);
    const auto freqs = resonance_grid(truth, 401);
    double worst_ratio = std::numeric_limits<double>::infinity();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto s = synth_resonance(truth, freqs, {NoiseKind::complex_gaussian, seed == 0 ? 0.0 : 2e-3, seed});
        const double free_err = rel_err(fit_resonance(s).qi, qi);
        ResonanceFitOptions fixed;
        fixed.fix_phi = true;
        fixed.phi_value = 0.0;
        const double fixed_err = rel_err(fit_resonance(s, std::nullopt, fixed).qi, qi);
        worst_ratio = std::min(worst_ratio, fixed_err / std::max(free_err, 1e-300));
    }
    o.require(worst_ratio >= 10.0, "phi-free/unconstrained Qi error ratio >= " + fmt("%.3g", worst_ratio));
    return o;
}

// 10 ------------------------------------------------------------------------
std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return files;
}

Outcome determinism() {
    Outcome o;
    const auto in = scratch_dir("acceptance_in");
    const auto out = in / "out";
    const auto freqs = linear_grid(90.0, 100.0, 101);
    Rng rng(10);
    const auto terms = random_error_terms(rng, freqs);
    for (const auto& [name, dut] : {std::pair{"thru", ideal_standard(freqs, 1.0, 0.0)},
                                    std::pair{"reflect", ideal_standard(freqs, 0.0, -1.0)},
                                    std::pair{"line", line_standard(freqs, 1.0 / (4.0 * 95.0))}}) {
        std::ofstream f(in / (std::string(name) + ".s2p"));
        write_touchstone(f, embed(dut, terms));
    }
    const std::string o_dir = out.string(), i_dir = in.string();
    const std::vector<std::vector<std::string>> runs = {
        {"--out", o_dir, "--seed", "7", "synth", "resonance", "--noise", "gaussian", "--sigma", "1e-3"},
        {"--out", o_dir, "--seed", "8", "synth", "resonance", "--name", "second", "--phi", "0.3"},
        {"--out", o_dir, "--jobs", "2", "fit", o_dir + "/synth_resonance.csv", o_dir + "/second.csv", "--chip", "A"},
        {"--out", o_dir, "--seed", "7", "synth", "power", "--noise", "multiplicative", "--sigma", "0.02", "--points", "20"},
        {"--out", o_dir, "powerfit", o_dir + "/synth_power.csv", "--qe-mag", "2e5", "--chip", "A"},
        {"--out", o_dir, "--seed", "3", "synth", "temperature", "--min", "0.5", "--max", "7", "--points", "15",
         "--noise", "multiplicative", "--sigma", "0.01"},
        {"--out", o_dir, "tempfit", o_dir + "/synth_temperature.csv", "--tc", "9.2"},
        {"--out", o_dir, "cal", "solve", "--thru", i_dir + "/thru.s2p", "--reflect", i_dir + "/reflect.s2p", "--line",
         i_dir + "/line.s2p"},
        {"--out", o_dir, "cal", "apply", "--terms", o_dir + "/error_terms.json", i_dir + "/line.s2p", "--term-error",
         "0.06"},
        {"--out", o_dir, "taper", "--n-points", "201"},
        {"--out", o_dir, "qe", "--target-qe", "2e5"},
        {"--out", o_dir + "/report", "--seed", "1", "report", o_dir},
    };
    std::map<std::string, std::string> first;
    for (int pass = 0; pass < 2; ++pass) {
        fs::remove_all(out);
        for (const auto& args : runs) {
            std::ostringstream so, se;
            const int code = cli::run(args, so, se);
            if (code != 0) {
                o.require(false, "'" + args[4] + "' exited " + std::to_string(code) + ": " + se.str());
                return o;
            }
        }
        if (pass == 0) first = snapshot(out);
    }
    const auto second = snapshot(out);
    std::size_t json_files = 0, differing = 0;
    for (const auto& [name, content] : first) {
        if (name.size() > 5 && name.substr(name.size() - 5) == ".json") ++json_files;
        const auto it = second.find(name);
        if (it == second.end() || it->second != content) ++differing;
    }
    o.require(first.size() == second.size() && differing == 0,
              std::to_string(first.size()) + " files (" + std::to_string(json_files) + " JSON), " +
                  std::to_string(differing) + " differ between runs");
    fs::remove_all(in);
    return o;
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"resonance fit closure", fit_closure},
        {"power-sweep recovery of reported loss budgets", power_recovery},
        {"Mattis-Bardeen quadrature vs trapezoid reference", mattis_bardeen},
        {"quasiparticle loss negligible at low temperature", qp_negligible},
        {"calibration round trip and T/R/L solve", calibration},
        {"end-to-end calibrated fit", end_to_end},
        {"taper geometry and export round trip", taper_geometry},
        {"coupling design rule", qe_rule},
        {"phi sensitivity", phi_sensitivity},
        {"CLI determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        if (!o.pass) ++failed;
        std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
