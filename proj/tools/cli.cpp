#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "mmres/mmres.hpp"

namespace fs = std::filesystem;

namespace mmres::cli {
namespace {

using json = nlohmann::json;

class IoError : public Error {
public:
    using Error::Error;
};

int classify(std::exception_ptr e, std::string& message) {
    try {
        std::rethrow_exception(e);
    } catch (const IoError& ex) {
        message = ex.what();
        return exit_io;
    } catch (const ParseError& ex) {
        message = std::string("parse error: ") + ex.what();
        return exit_io;
    } catch (const NumericalError& ex) {
        message = ex.what();
        return exit_numerical;
    } catch (const std::invalid_argument& ex) {
        message = std::string("invalid input: ") + ex.what();
        return exit_io;
    } catch (const json::exception& ex) {
        message = std::string("json: ") + ex.what();
        return exit_io;
    } catch (const std::exception& ex) {
        message = ex.what();
        return exit_numerical;
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Output of one work item, flushed in item order once all items finish.
struct Outcome {
    std::vector<std::pair<std::string, std::string>> files; // path -> content
    std::vector<std::string> notes;                         // to stderr
    std::vector<json> records;
    int code = exit_ok;
};

template <class F>
void parallel_for(std::size_t n, int jobs, F&& f) {
    const auto workers = static_cast<std::size_t>(std::max(1, jobs));
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(workers, n); ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) f(i);
        });
    for (auto& th : pool) th.join();
}

struct Context {
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool no_plot = false;
    int jobs = 1;
    std::string command;
    json resolved;
    std::ostream* out = nullptr;
    std::ostream* err = nullptr;

    std::string path(const std::string& name) const { return (fs::path(out_dir) / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    const fs::path p(path);
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    std::ofstream o(p, std::ios::binary | std::ios::trunc);
    if (!o) throw IoError("cannot write '" + path + "'");
    o << content;
    if (!o) throw IoError("write failed for '" + path + "'");
}

/// Runs `work` on each item (in parallel up to ctx.jobs), then writes files
/// and diagnostics in item order. Returns the combined exit code: I/O errors
/// dominate numerical failures.
int run_items(Context& ctx, std::size_t n, const std::function<void(std::size_t, Outcome&)>& work,
              std::vector<Outcome>* keep = nullptr) {
    std::vector<Outcome> results(n);
    parallel_for(n, ctx.jobs, [&](std::size_t i) {
        try {
            work(i, results[i]);
        } catch (...) {
            std::string msg;
            results[i].code = classify(std::current_exception(), msg);
            results[i].notes.push_back(msg);
        }
    });
    int code = exit_ok;
    bool io = false, num = false;
    for (auto& r : results) {
        for (const auto& [p, c] : r.files) write_file(p, c);
        for (const auto& m : r.notes) *ctx.err << m << '\n';
        io |= r.code == exit_io;
        num |= r.code == exit_numerical;
    }
    if (io) code = exit_io;
    else if (num) code = exit_numerical;
    if (keep) *keep = std::move(results);
    return code;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

std::string lower_ext(const std::string& path) { return text::lower(fs::path(path).extension().string()); }

std::vector<ComplexSweep> load_sweeps(const std::string& path) {
    std::istringstream in(read_file(path));
    if (lower_ext(path) == ".s2p") return {read_touchstone(in, path).s21_sweep()};
    return read_sweep_csv(in);
}

TwoPortSet load_s2p(const std::string& path) {
    std::istringstream in(read_file(path));
    return read_touchstone(in, path);
}

std::string provenance(const Context& ctx, const std::string& source) {
    return "mmres " + ctx.command + "; source=" + source +
           "; schema_version=" + std::to_string(json_io::schema_version);
}

std::string svg_text(const std::vector<plot::Panel>& panels, const std::string& prov) {
    std::ostringstream s;
    plot::write_svg(s, panels, prov);
    return s.str();
}

json opt_number(const std::optional<double>& v) { return v ? json_io::number(*v) : json(nullptr); }

// ---------------------------------------------------------------------------

struct FitArgs {
    std::vector<std::string> inputs;
    std::optional<double> crop_lo, crop_hi;
    bool fix_phi = false;
    double phi_value = 0.0;
    bool no_delay = false;
    int max_iterations = 200;
    std::optional<double> applied_power_w;
    std::string chip, group;
};

int cmd_fit(Context& ctx, const FitArgs& a) {
    return run_items(ctx, a.inputs.size(), [&](std::size_t i, Outcome& o) {
        const auto& src = a.inputs[i];
        auto sweeps = load_sweeps(src);
        for (std::size_t k = 0; k < sweeps.size(); ++k) {
            ComplexSweep s = sweeps[k];
            if (a.crop_lo || a.crop_hi)
                s = crop(s, a.crop_lo.value_or(s.freqs_ghz().front()), a.crop_hi.value_or(s.freqs_ghz().back()));
            const std::string name = stem_of(src) + (sweeps.size() > 1 ? "_" + std::to_string(k) : "");
            ResonanceFitOptions fo;
            fo.fix_phi = a.fix_phi;
            fo.phi_value = a.phi_value;
            fo.fit_delay = !a.no_delay;
            fo.max_iterations = a.max_iterations;
            try {
                const auto fit = fit_resonance(s, std::nullopt, fo);
                json j = json_io::to_json(fit);
                j["source"] = src;
                j["sweep_index"] = k;
                j["label"] = s.label();
                j["temperature_k"] = opt_number(s.temperature_k());
                if (s.drive()) {
                    j["drive"] = {{"kind", s.drive()->kind == DriveLevel::Kind::photon_number ? "photon_number" : "power_dbm"},
                                  {"value", s.drive()->value}};
                } else {
                    j["drive"] = nullptr;
                }
                j["chip"] = a.chip;
                j["group"] = a.group;
                if (a.applied_power_w) j["estimated_nbar"] = json_io::number(estimate_photon_number(*a.applied_power_w, fit));
                o.files.emplace_back(ctx.path(name + ".fit.json"), json_io::dump(j));
                o.records.push_back(j);
                if (!ctx.no_plot) {
                    const auto& f = s.freqs_ghz();
                    std::vector<double> re, im, mre, mim, ff;
                    for (std::size_t q = 0; q < f.size(); ++q) {
                        re.push_back(s.values()[q].real());
                        im.push_back(s.values()[q].imag());
                    }
                    const std::size_t dense = 4 * f.size();
                    for (std::size_t q = 0; q < dense; ++q) {
                        const double x = f.front() + (f.back() - f.front()) * static_cast<double>(q) / static_cast<double>(dense - 1);
                        const cplx m = s21_model(x, fit.params);
                        ff.push_back(x);
                        mre.push_back(m.real());
                        mim.push_back(m.imag());
                    }
                    plot::Panel p1{"In-phase", "frequency (GHz)", "Re S21", false, false,
                                   {{"data", f, re, true, "#1f77b4"}, {"model", ff, mre, false, "#d62728"}}};
                    plot::Panel p2{"Quadrature", "frequency (GHz)", "Im S21", false, false,
                                   {{"data", f, im, true, "#1f77b4"}, {"model", ff, mim, false, "#d62728"}}};
                    plot::Panel p3{"Complex plane", "Re S21", "Im S21", false, false,
                                   {{"data", re, im, true, "#1f77b4"}, {"model", mre, mim, false, "#d62728"}}};
                    o.files.emplace_back(ctx.path(name + ".fit.svg"), svg_text({p1, p2, p3}, provenance(ctx, src)));
                }
            } catch (const FitError& e) {
                o.notes.push_back(src + (sweeps.size() > 1 ? "[" + std::to_string(k) + "]" : "") + ": " + e.what());
                o.code = exit_numerical;
            }
        }
    });
}

// ---------------------------------------------------------------------------

struct LossArgs {
    std::vector<std::string> inputs;
    double temperature_k = 0.02;
    double f_ghz = 95.0;
    double flat_threshold = 0.05;
    double nbar = 1e5;
    double n_c = 1.0;
    double beta = 0.5;
    std::optional<double> tc;
    double tc_guess = 9.2;
    double gap_ratio = constants::bcs_gap_ratio;
    std::optional<double> qe_mag;
    std::string chip, group;
};

std::vector<double> span_grid(double lo, double hi, std::size_t n, bool log) {
    return log ? logspace(lo, hi, n) : [&] {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        return v;
    }();
}

int cmd_powerfit(Context& ctx, const LossArgs& a) {
    return run_items(ctx, a.inputs.size(), [&](std::size_t i, Outcome& o) {
        const auto& src = a.inputs[i];
        std::istringstream in(read_file(src));
        const auto data = read_loss_csv(in);
        if (data.axis != SweepAxis::photon_number) throw ParseError(0, src + ": powerfit needs an nbar column");
        PowerFitOptions po;
        po.flat_threshold = a.flat_threshold;
        const auto r = fit_power_sweep(data.points, a.temperature_k, a.f_ghz, po);
        double nmin = data.points.front().x, nmax = nmin;
        for (const auto& p : data.points) {
            nmin = std::min(nmin, p.x);
            nmax = std::max(nmax, p.x);
        }
        auto model = [&](double n) {
            const double tls = r.reduced_model ? 0.0 : 1.0 / q_tls(n, a.temperature_k, a.f_ghz, r.tls);
            return 1.0 / (tls + 1.0 / r.q_other);
        };
        json j = json_io::to_json(r);
        j["source"] = src;
        j["temperature_k"] = a.temperature_k;
        j["f_ghz"] = a.f_ghz;
        j["qi_low_power"] = json_io::number(model(nmin));
        j["qi_high_power"] = json_io::number(model(nmax));
        j["nbar_range"] = {nmin, nmax};
        j["qe_mag"] = opt_number(a.qe_mag);
        j["chip"] = a.chip;
        j["group"] = a.group;
        const std::string name = stem_of(src);
        o.files.emplace_back(ctx.path(name + ".powerfit.json"), json_io::dump(j));
        if (!ctx.no_plot) {
            std::vector<double> nx, ly, gx, tot, tls, oth;
            for (const auto& p : data.points) {
                nx.push_back(p.x);
                ly.push_back(1.0 / p.qi);
            }
            gx = span_grid(nmin, nmax, 200, true);
            for (double n : gx) {
                tot.push_back(1.0 / model(n));
                tls.push_back(r.reduced_model ? std::nan("") : 1.0 / q_tls(n, a.temperature_k, a.f_ghz, r.tls));
                oth.push_back(1.0 / r.q_other);
            }
            plot::Panel p{"Loss vs photon number", "photon number", "1/Qi", true, true,
                          {{"data", nx, ly, true, "#1f77b4"},
                           {"total", gx, tot, false, "#000000"},
                           {"TLS", gx, tls, false, "#d62728"},
                           {"other", gx, oth, false, "#2ca02c"}}};
            o.files.emplace_back(ctx.path(name + ".powerfit.svg"), svg_text({p}, provenance(ctx, src)));
        }
    });
}

int cmd_tempfit(Context& ctx, const LossArgs& a) {
    return run_items(ctx, a.inputs.size(), [&](std::size_t i, Outcome& o) {
        const auto& src = a.inputs[i];
        std::istringstream in(read_file(src));
        const auto data = read_loss_csv(in);
        if (data.axis != SweepAxis::temperature) throw ParseError(0, src + ": tempfit needs a temperature_k column");
        TempFitOptions to;
        to.n_c = a.n_c;
        to.beta = a.beta;
        to.tc_fixed = a.tc;
        to.tc_guess = a.tc_guess;
        to.gap_ratio = a.gap_ratio;
        const auto r = fit_temperature_sweep(data.points, a.nbar, a.f_ghz, to);
        json j = json_io::to_json(r);
        j["source"] = src;
        j["nbar"] = a.nbar;
        j["f_ghz"] = a.f_ghz;
        j["chip"] = a.chip;
        j["group"] = a.group;
        const std::string name = stem_of(src);
        o.files.emplace_back(ctx.path(name + ".tempfit.json"), json_io::dump(j));
        if (!ctx.no_plot) {
            std::vector<double> tx, ly, gx, tot, tls, qp, oth;
            double tmin = data.points.front().x, tmax = tmin;
            for (const auto& p : data.points) {
                tx.push_back(p.x);
                ly.push_back(1.0 / p.qi);
                tmin = std::min(tmin, p.x);
                tmax = std::max(tmax, p.x);
            }
            gx = span_grid(tmin, tmax, 200, false);
            for (double t : gx) {
                const auto c = qi_channels(t, a.nbar, a.f_ghz, r.budget);
                tot.push_back(1.0 / c.total);
                tls.push_back(1.0 / c.tls);
                qp.push_back(1.0 / c.sigma);
                oth.push_back(1.0 / c.other);
            }
            plot::Panel p{"Loss vs temperature", "temperature (K)", "1/Qi", false, true,
                          {{"data", tx, ly, true, "#1f77b4"},
                           {"total", gx, tot, false, "#000000"},
                           {"TLS", gx, tls, false, "#d62728"},
                           {"quasiparticle", gx, qp, false, "#9467bd"},
                           {"other", gx, oth, false, "#2ca02c"}}};
            o.files.emplace_back(ctx.path(name + ".tempfit.svg"), svg_text({p}, provenance(ctx, src)));
        }
    });
}

// ---------------------------------------------------------------------------

struct CalArgs {
    std::string thru, reflect, line;
    double gamma_re = -1.0, gamma_im = 0.0;
    std::string terms_out = "error_terms.json";
    std::string terms;
    std::vector<std::string> inputs;
    std::optional<double> term_error;
};

int cmd_cal_solve(Context& ctx, const CalArgs& a) {
    return run_items(ctx, 1, [&](std::size_t, Outcome& o) {
        CalStandards st{load_s2p(a.thru), load_s2p(a.reflect), load_s2p(a.line), cplx(a.gamma_re, a.gamma_im), std::nullopt};
        const auto terms = solve_error_terms(st);
        json j = json_io::to_json(terms);
        j["standards"] = {{"thru", a.thru}, {"reflect", a.reflect}, {"line", a.line}};
        j["reflect_gamma"] = json_io::complex_pair(st.reflect_gamma);
        o.files.emplace_back(ctx.path(a.terms_out), json_io::dump(j));
        for (auto idx : terms.gain_warnings())
            o.notes.push_back("warning: input path gain > 1 at " + text::format(terms.freqs_ghz[idx]) + " GHz");
    });
}

int cmd_cal_apply(Context& ctx, const CalArgs& a) {
    const auto terms = json_io::error_terms_from_json(json::parse(read_file(a.terms)));
    return run_items(ctx, a.inputs.size(), [&](std::size_t i, Outcome& o) {
        const auto& src = a.inputs[i];
        const auto m = load_s2p(src);
        const auto dut = correct(m, terms);
        TwoPortSet c{dut.freqs_ghz, dut.s21, dut.s22, src, m.reference_ohms};
        std::ostringstream s2p;
        write_touchstone(s2p, c, "corrected from " + src);
        const std::string name = stem_of(src);
        o.files.emplace_back(ctx.path(name + ".corrected.s2p"), s2p.str());
        const auto pv = dut.passivity_violations();
        if (!pv.empty())
            o.notes.push_back("warning: " + src + ": " + std::to_string(pv.size()) + " points exceed passivity");
        if (a.term_error) {
            const auto u = propagate_uncertainty(m, terms, *a.term_error);
            json j = json_io::envelope("calibration_uncertainty");
            j["source"] = src;
            j["term_error_magnitude"] = *a.term_error;
            json pts = json::array();
            for (std::size_t k = 0; k < u.size(); ++k)
                pts.push_back({{"freq_ghz", dut.freqs_ghz[k]}, {"ds21", u[k].s21}, {"ds22", u[k].s22}});
            j["points"] = std::move(pts);
            o.files.emplace_back(ctx.path(name + ".uncertainty.json"), json_io::dump(j));
        }
    });
}

// ---------------------------------------------------------------------------

int cmd_taper(Context& ctx, const TaperSpec& spec, const std::string& format) {
    return run_items(ctx, 1, [&](std::size_t, Outcome& o) {
        spec.validate();
        if (format != "csv" && format != "svg" && format != "both")
            throw std::invalid_argument("format must be csv, svg or both");
        const auto c = generate_contour(spec);
        json j = json_io::envelope("taper");
        json s;
        for (const auto& [name, m] : TaperSpec::fields()) s[name] = spec.*m;
        j["spec_mm"] = s;
        j["n_points"] = spec.n_points;
        j["y_end_mm"] = c.points.back().second;
        j["x_end_mm"] = c.points.back().first;
        j["entrance_slope"] = std::sqrt(2.0) * spec.end_offset() / spec.A1;
        j["svg_decimals_um"] = svg_decimals;
        o.files.emplace_back(ctx.path("taper.json"), json_io::dump(j));
        if (format != "svg") {
            std::ostringstream csv;
            write_contour_csv(csv, c);
            o.files.emplace_back(ctx.path("taper_contour.csv"), csv.str());
        }
        if (format != "csv") {
            std::ostringstream svg;
            write_contour_svg(svg, c, spec, provenance(ctx, "taper spec"));
            o.files.emplace_back(ctx.path("taper_outline.svg"), svg.str());
        }
    });
}

int cmd_qe(Context& ctx, std::optional<double> d_um, std::optional<double> target, const CouplingLaw& law) {
    return run_items(ctx, 1, [&](std::size_t, Outcome& o) {
        if (d_um.has_value() == target.has_value())
            throw std::invalid_argument("give exactly one of --separation-um or --target-qe");
        json j = json_io::envelope("qe_design");
        j["law"] = {{"intercept", law.intercept}, {"slope_per_um", law.slope_per_um}};
        if (d_um) {
            j["separation_um"] = *d_um;
            j["qe"] = qe_of_separation(*d_um, law);
        } else {
            j["qe"] = *target;
            j["separation_um"] = separation_for_qe(*target, law);
        }
        *ctx.out << j.dump() << '\n';
        o.files.emplace_back(ctx.path("qe.json"), json_io::dump(j));
    });
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string name;
    double f0_ghz = 95.0, qi = 8.27e5, qe = 2e5, phi = 0.0, amp = 1.0, theta = 0.0, delay_ns = 0.0;
    int points = 401;
    double half_widths = 6.0;
    std::string noise = "none";
    double sigma = 0.0;
    double q_tls0 = 9.53e5, n_c = 1.0, beta = 0.5, q_other = 1.17e5, q_sigma0 = 1e4, tc = 9.2;
    double temperature_k = 0.02, nbar = 1e5, f_ghz = 95.0;
    double x_min = 0.1, x_max = 1e7;
    std::string terms;
};

NoiseSpec noise_of(const SynthArgs& a, std::uint64_t seed) {
    NoiseSpec n;
    n.sigma = a.sigma;
    n.seed = seed;
    if (a.noise == "none") n.kind = NoiseKind::none;
    else if (a.noise == "gaussian") n.kind = NoiseKind::complex_gaussian;
    else if (a.noise == "multiplicative") n.kind = NoiseKind::multiplicative;
    else throw std::invalid_argument("noise must be none, gaussian or multiplicative");
    return n;
}

json noise_json(const NoiseSpec& n, const std::string& kind) {
    return {{"kind", kind}, {"sigma", n.sigma}, {"seed", n.seed}, {"rng", std::string(rng_name)}};
}

LossBudget budget_of(const SynthArgs& a) {
    LossBudget b;
    b.tls = {a.q_tls0, a.n_c, a.beta};
    b.qp = {a.q_sigma0, a.tc, 0.0};
    b.q_other = a.q_other;
    return b;
}

int cmd_synth(Context& ctx, const std::string& kind, const SynthArgs& a) {
    return run_items(ctx, 1, [&](std::size_t, Outcome& o) {
        const auto noise = noise_of(a, ctx.seed);
        const std::string name = a.name.empty() ? "synth_" + kind : a.name;
        json meta = json_io::envelope("synth");
        meta["generator"] = kind;
        meta["noise"] = noise_json(noise, a.noise);
        if (kind == "resonance" || kind == "embedded") {
            const auto p = ResonanceParams::from_qi(a.f0_ghz, a.qi, a.qe, a.phi, a.amp, a.theta, a.delay_ns);
            if (a.points < 7) throw std::invalid_argument("points must be >= 7");
            const auto grid = resonance_grid(p, static_cast<std::size_t>(a.points), a.half_widths);
            meta["truth"] = json_io::to_json(p);
            meta["truth"]["qi"] = a.qi;
            if (kind == "resonance") {
                const auto s = synth_resonance(p, grid, noise);
                std::ostringstream csv;
                const std::vector<ComplexSweep> v{s};
                write_sweep_csv(csv, v);
                o.files.emplace_back(ctx.path(name + ".csv"), csv.str());
            } else {
                const auto terms = a.terms.empty() ? ErrorTerms::identity(grid)
                                                   : json_io::error_terms_from_json(json::parse(read_file(a.terms)));
                const auto m = synth_embedded(notch_dut(p, grid), terms, noise);
                std::ostringstream s2p;
                write_touchstone(s2p, m, "synthetic embedded notch resonator");
                o.files.emplace_back(ctx.path(name + ".s2p"), s2p.str());
                meta["terms"] = a.terms;
            }
        } else if (kind == "power" || kind == "temperature") {
            const auto b = budget_of(a);
            if (a.points < 1) throw std::invalid_argument("points must be >= 1");
            const auto n = static_cast<std::size_t>(a.points);
            LossSweepData d;
            if (kind == "power") {
                d.axis = SweepAxis::photon_number;
                d.points = synth_power_sweep(b, logspace(a.x_min, a.x_max, n), a.temperature_k, a.f_ghz, noise);
                meta["temperature_k"] = a.temperature_k;
            } else {
                d.axis = SweepAxis::temperature;
                const auto grid = n == 1 ? std::vector<double>{a.x_min} : span_grid(a.x_min, a.x_max, n, false);
                d.points = synth_temperature_sweep(b, grid, a.nbar, a.f_ghz, noise);
                meta["nbar"] = a.nbar;
            }
            meta["f_ghz"] = a.f_ghz;
            meta["truth"] = json_io::to_json(b);
            std::ostringstream csv;
            write_loss_csv(csv, d);
            o.files.emplace_back(ctx.path(name + ".csv"), csv.str());
        } else {
            throw std::invalid_argument("unknown synth kind '" + kind + "'");
        }
        o.files.emplace_back(ctx.path(name + ".meta.json"), json_io::dump(meta));
    });
}

// ---------------------------------------------------------------------------

struct ReportRow {
    std::string source, chip, group, kind;
    std::optional<double> qi, qi_low, qi_high, q_tls0, qe_mag;
};

std::optional<double> get_num(const json& j, const char* key) {
    if (j.contains(key) && j[key].is_number()) return j[key].get<double>();
    return std::nullopt;
}

int cmd_report(Context& ctx, const std::vector<std::string>& dirs) {
    std::vector<std::string> files;
    for (const auto& d : dirs) {
        std::error_code ec;
        if (!fs::is_directory(d, ec)) throw IoError("not a directory: '" + d + "'");
        std::vector<std::string> here;
        for (const auto& e : fs::directory_iterator(d))
            if (e.is_regular_file() && lower_ext(e.path().string()) == ".json") here.push_back(e.path().string());
        std::sort(here.begin(), here.end());
        files.insert(files.end(), here.begin(), here.end());
    }
    std::vector<std::optional<ReportRow>> rows(files.size());
    std::vector<Outcome> outs;
    int code = run_items(ctx, files.size(), [&](std::size_t i, Outcome&) {
        const auto j = json::parse(read_file(files[i]));
        if (!j.is_object() || !j.contains("kind")) return;
        const auto kind = j["kind"].get<std::string>();
        if (kind != "resonance_fit" && kind != "power_fit") return;
        ReportRow r;
        r.source = fs::path(files[i]).filename().string();
        r.chip = j.value("chip", "");
        r.group = j.value("group", "");
        r.kind = kind;
        if (r.chip.empty()) r.chip = fs::path(files[i]).stem().stem().string();
        if (kind == "resonance_fit") {
            r.qi = get_num(j, "qi");
            if (j.contains("params")) r.qe_mag = get_num(j["params"], "qe_mag");
        } else {
            r.qi_low = get_num(j, "qi_low_power");
            r.qi_high = get_num(j, "qi_high_power");
            if (j.contains("tls")) r.q_tls0 = get_num(j["tls"], "q_tls0");
            r.qe_mag = get_num(j, "qe_mag");
        }
        rows[i] = r;
    }, &outs);
    if (code != exit_ok) return code;

    json table = json::array();
    std::ostringstream csv;
    auto cell = [](const std::optional<double>& v) { return v ? text::format(*v) : std::string(); };
    csv << "chip,group,kind,qi,qi_low,qi_high,q_tls0,qe_mag,source\n";
    struct Acc {
        std::map<std::string, std::pair<double, int>> sums;
        void add(const char* k, const std::optional<double>& v) {
            if (v && std::isfinite(*v)) {
                sums[k].first += *v;
                ++sums[k].second;
            }
        }
    };
    std::map<std::string, Acc> groups;
    std::vector<QeLossSample> corr;
    for (const auto& r : rows) {
        if (!r) continue;
        table.push_back({{"chip", r->chip}, {"group", r->group}, {"kind", r->kind}, {"source", r->source},
                         {"qi", opt_number(r->qi)}, {"qi_low", opt_number(r->qi_low)},
                         {"qi_high", opt_number(r->qi_high)}, {"q_tls0", opt_number(r->q_tls0)},
                         {"qe_mag", opt_number(r->qe_mag)}});
        csv << r->chip << ',' << r->group << ',' << r->kind << ',' << cell(r->qi) << ',' << cell(r->qi_low) << ','
            << cell(r->qi_high) << ',' << cell(r->q_tls0) << ',' << cell(r->qe_mag) << ',' << r->source << '\n';
        auto& g = groups[r->group];
        g.add("qi", r->qi);
        g.add("qi_low", r->qi_low);
        g.add("qi_high", r->qi_high);
        g.add("q_tls0", r->q_tls0);
        if (r->qe_mag && r->qi_low && r->qi_high) corr.push_back({*r->qe_mag, *r->qi_low, *r->qi_high});
    }
    json means;
    for (const auto& [g, acc] : groups) {
        json m;
        for (const auto& [k, sn] : acc.sums) m[k] = sn.first / sn.second;
        means[g] = m;
    }
    json j = json_io::envelope("report");
    j["rows"] = table;
    j["group_means"] = means;
    if (corr.size() >= 3) j["correlation"] = json_io::to_json(qe_loss_correlation(corr, ctx.seed));
    else j["correlation"] = nullptr;
    write_file(ctx.path("report.json"), json_io::dump(j));
    write_file(ctx.path("report.csv"), csv.str());
    *ctx.out << csv.str();
    return exit_ok;
}

// ---------------------------------------------------------------------------

json resolved_options(const CLI::App* app) {
    json j;
    for (const CLI::Option* o : app->get_options()) {
        const auto name = o->get_single_name();
        if (name.empty() || name == "help" || name == "h" || name == "config") continue;
        if (o->count() > 0) {
            const auto res = o->results();
            if (o->get_items_expected_max() > 1 || res.size() > 1) j[name] = res;
            else j[name] = res.empty() ? std::string("true") : res.front();
        } else {
            j[name] = o->get_default_str();
        }
    }
    return j;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Millimeter-wave resonator measurement analysis", "mmres"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "key = value / TOML config; sections name subcommands")->envname("MMRES_CONFIG");

    Context ctx;
    ctx.out = &out;
    ctx.err = &err;
    app.add_option("--out", ctx.out_dir, "Output directory");
    app.add_option("--seed", ctx.seed, "Random seed for synthesis and permutation tests");
    app.add_flag("--no-plot", ctx.no_plot, "Skip SVG plots");
    app.add_option("--jobs", ctx.jobs, "Process up to N input files concurrently")->check(CLI::PositiveNumber);

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "Fit the notch resonance line shape of sweep files (CSV or .s2p)");
    fit->add_option("inputs", fa.inputs, "Sweep files")->required();
    fit->add_option("--crop-lo", fa.crop_lo, "Lower crop frequency (GHz)");
    fit->add_option("--crop-hi", fa.crop_hi, "Upper crop frequency (GHz)");
    fit->add_flag("--fix-phi", fa.fix_phi, "Hold the asymmetry angle phi at --phi-value");
    fit->add_option("--phi-value", fa.phi_value, "Held phi (rad)");
    fit->add_flag("--no-delay", fa.no_delay, "Do not fit electrical delay");
    fit->add_option("--max-iterations", fa.max_iterations, "Iteration cap");
    fit->add_option("--applied-power-w", fa.applied_power_w, "Drive power at the device (W) for photon-number estimate");
    fit->add_option("--chip", fa.chip, "Chip label recorded in the output");
    fit->add_option("--group", fa.group, "Group label recorded in the output");

    LossArgs pa;
    auto* pfit = app.add_subcommand("powerfit", "Fit TLS and residual loss to Qi(nbar) CSV files");
    pfit->add_option("inputs", pa.inputs, "CSV files with nbar, qi[, qi_err]")->required();
    pfit->add_option("--temperature-k", pa.temperature_k, "Bath temperature (K)");
    pfit->add_option("--f-ghz", pa.f_ghz, "Resonance frequency (GHz)");
    pfit->add_option("--flat-threshold", pa.flat_threshold, "Relative Qi variation below which TLS is unconstrained");
    pfit->add_option("--qe-mag", pa.qe_mag, "Coupling Q of this resonator (recorded for reports)");
    pfit->add_option("--chip", pa.chip, "Chip label");
    pfit->add_option("--group", pa.group, "Group label");

    LossArgs ta;
    auto* tfit = app.add_subcommand("tempfit", "Fit quasiparticle, TLS and residual loss to Qi(T) CSV files");
    tfit->add_option("inputs", ta.inputs, "CSV files with temperature_k, qi[, qi_err]")->required();
    tfit->add_option("--nbar", ta.nbar, "Photon number held during the sweep");
    tfit->add_option("--f-ghz", ta.f_ghz, "Resonance frequency (GHz)");
    tfit->add_option("--n-c", ta.n_c, "TLS critical photon number (held)");
    tfit->add_option("--beta", ta.beta, "TLS saturation exponent (held)");
    tfit->add_option("--tc", ta.tc, "Hold Tc at this value (K)");
    tfit->add_option("--tc-guess", ta.tc_guess, "Starting Tc when free (K)");
    tfit->add_option("--gap-ratio", ta.gap_ratio, "Delta0 / (k Tc)");
    tfit->add_option("--chip", ta.chip, "Chip label");
    tfit->add_option("--group", ta.group, "Group label");

    CalArgs ca;
    auto* cal = app.add_subcommand("cal", "Calibration: solve error terms or apply them");
    cal->require_subcommand(1);
    auto* solve = cal->add_subcommand("solve", "Solve error terms from thru/reflect/line .s2p files");
    solve->add_option("--thru", ca.thru, "Thru standard")->required();
    solve->add_option("--reflect", ca.reflect, "Reflect standard")->required();
    solve->add_option("--line", ca.line, "Line standard")->required();
    solve->add_option("--gamma-re", ca.gamma_re, "Reflect coefficient, real part");
    solve->add_option("--gamma-im", ca.gamma_im, "Reflect coefficient, imaginary part");
    solve->add_option("--terms-out", ca.terms_out, "Output file name inside --out");
    auto* apply = cal->add_subcommand("apply", "Correct measured .s2p files with solved error terms");
    apply->add_option("--terms", ca.terms, "Error-terms JSON")->required();
    apply->add_option("inputs", ca.inputs, "Measured .s2p files")->required();
    apply->add_option("--term-error", ca.term_error, "Error-term vector magnitude for uncertainty output");

    TaperSpec spec;
    std::string taper_format = "both";
    auto* taper = app.add_subcommand("taper", "Export the finline taper contour and slot outline");
    for (const auto& [name, m] : TaperSpec::fields())
        taper->add_option(std::string("--") + name, spec.*m, std::string(name) + " (mm)");
    taper->add_option("--n-points", spec.n_points, "Contour samples");
    taper->add_option("--format", taper_format, "csv, svg or both");

    std::optional<double> sep_um, target_qe;
    CouplingLaw law;
    auto* qe = app.add_subcommand("qe", "Coupling design rule: Qe from separation or separation from Qe");
    qe->add_option("--separation-um", sep_um, "Resonator-feedline separation (um)");
    qe->add_option("--target-qe", target_qe, "Target coupling Q");
    qe->add_option("--intercept", law.intercept, "log10 Qe at zero separation");
    qe->add_option("--slope", law.slope_per_um, "log10 Qe per um");

    SynthArgs sa;
    std::string synth_kind;
    auto* synth = app.add_subcommand("synth", "Generate synthetic data");
    synth->add_option("kind", synth_kind, "resonance, embedded, power or temperature")->required();
    synth->add_option("--name", sa.name, "Output file stem");
    synth->add_option("--f0-ghz", sa.f0_ghz, "Resonance frequency (GHz)");
    synth->add_option("--qi", sa.qi, "Internal Q");
    synth->add_option("--qe", sa.qe, "|Qe|");
    synth->add_option("--phi", sa.phi, "Asymmetry angle (rad)");
    synth->add_option("--amp", sa.amp, "Baseline amplitude");
    synth->add_option("--theta", sa.theta, "Baseline phase (rad)");
    synth->add_option("--delay-ns", sa.delay_ns, "Electrical delay (ns)");
    synth->add_option("--points", sa.points, "Number of points");
    synth->add_option("--half-widths", sa.half_widths, "Resonance sweep half-span in linewidths");
    synth->add_option("--noise", sa.noise, "none, gaussian or multiplicative");
    synth->add_option("--sigma", sa.sigma, "Noise standard deviation");
    synth->add_option("--q-tls0", sa.q_tls0, "Q_TLS,0");
    synth->add_option("--n-c", sa.n_c, "TLS critical photon number");
    synth->add_option("--beta", sa.beta, "TLS saturation exponent");
    synth->add_option("--q-other", sa.q_other, "Q_other");
    synth->add_option("--q-sigma0", sa.q_sigma0, "Q_sigma0");
    synth->add_option("--tc", sa.tc, "Critical temperature (K)");
    synth->add_option("--temperature-k", sa.temperature_k, "Temperature for power sweeps (K)");
    synth->add_option("--nbar", sa.nbar, "Photon number for temperature sweeps");
    synth->add_option("--f-ghz", sa.f_ghz, "Frequency for loss sweeps (GHz)");
    synth->add_option("--min", sa.x_min, "Sweep start (nbar or K)");
    synth->add_option("--max", sa.x_max, "Sweep end (nbar or K)");
    synth->add_option("--terms", sa.terms, "Error-terms JSON for embedded synthesis");

    std::vector<std::string> report_dirs;
    auto* report = app.add_subcommand("report", "Summarize fit and power-fit JSON files per chip");
    report->add_option("dirs", report_dirs, "Directories holding JSON results")->required();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int c = app.exit(e, out, err);
        return c == 0 ? exit_ok : exit_io;
    }

    CLI::App* active = nullptr;
    for (auto* s : app.get_subcommands()) active = s;
    ctx.command = active->get_name();
    CLI::App* leaf = active;
    if (ctx.command == "cal") {
        leaf = active->get_subcommands().front();
        ctx.command = "cal_" + leaf->get_name();
    }
    json cfg;
    cfg["command"] = ctx.command;
    cfg["global"] = resolved_options(&app);
    cfg["options"] = resolved_options(leaf);

    try {
        std::error_code ec;
        fs::create_directories(ctx.out_dir, ec);
        json doc = json_io::envelope("resolved_config");
        doc["config"] = cfg;
        write_file(ctx.path(ctx.command + ".config.json"), json_io::dump(doc));

        if (ctx.command == "fit") return cmd_fit(ctx, fa);
        if (ctx.command == "powerfit") return cmd_powerfit(ctx, pa);
        if (ctx.command == "tempfit") return cmd_tempfit(ctx, ta);
        if (ctx.command == "cal_solve") return cmd_cal_solve(ctx, ca);
        if (ctx.command == "cal_apply") return cmd_cal_apply(ctx, ca);
        if (ctx.command == "taper") return cmd_taper(ctx, spec, taper_format);
        if (ctx.command == "qe") return cmd_qe(ctx, sep_um, target_qe, law);
        if (ctx.command == "synth") return cmd_synth(ctx, synth_kind, sa);
        if (ctx.command == "report") return cmd_report(ctx, report_dirs);
    } catch (...) {
        std::string msg;
        const int c = classify(std::current_exception(), msg);
        err << msg << '\n';
        return c;
    }
    return exit_io;
}

} // namespace mmres::cli
