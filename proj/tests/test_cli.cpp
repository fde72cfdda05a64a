#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"

using namespace mmres;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream o, e;
    const int c = cli::run(args, o, e);
    return {c, o.str(), e.str()};
}

json load(const fs::path& p) { return json::parse(support::slurp(p)); }

} // namespace

TEST(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(run({"--help"}).code, cli::exit_ok);
    EXPECT_NE(run({"fit", "--help"}).out.find("--fix-phi"), std::string::npos);
    EXPECT_EQ(run({}).code, cli::exit_io);
    EXPECT_EQ(run({"bogus"}).code, cli::exit_io);
    EXPECT_EQ(run({"fit"}).code, cli::exit_io);
}

TEST(Cli, SynthThenFitRecoversParameters) {
    const auto d = support::scratch_dir("cli_fit");
    const auto out = d.string();
    ASSERT_EQ(run({"--out", out, "synth", "resonance", "--qi", "5e5", "--qe", "1e5", "--phi", "0.25"}).code, 0);
    ASSERT_TRUE(fs::exists(d / "synth_resonance.csv"));
    const auto r = run({"--out", out, "fit", (d / "synth_resonance.csv").string(), "--applied-power-w", "1e-15"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = load(d / "synth_resonance.fit.json");
    EXPECT_EQ(j["kind"], "resonance_fit");
    EXPECT_NEAR(j["qi"].get<double>() / 5e5, 1.0, 1e-7);
    EXPECT_NEAR(j["params"]["phi_rad"].get<double>(), 0.25, 1e-8);
    EXPECT_GT(j["estimated_nbar"].get<double>(), 0.0);
    EXPECT_TRUE(fs::exists(d / "synth_resonance.fit.svg"));
    EXPECT_TRUE(fs::exists(d / "fit.config.json"));
    EXPECT_EQ(load(d / "fit.config.json")["config"]["options"]["applied-power-w"], "1e-15");
}

TEST(Cli, ExitCodes) {
    const auto d = support::scratch_dir("cli_codes");
    const auto out = d.string();
    EXPECT_EQ(run({"--out", out, "fit", (d / "missing.csv").string()}).code, cli::exit_io);
    {
        std::ofstream f(d / "bad.s2p");
        f << "# GHz S RI\n95 0 0 1 0\n";
    }
    const auto bad = run({"--out", out, "fit", (d / "bad.s2p").string()});
    EXPECT_EQ(bad.code, cli::exit_io);
    EXPECT_NE(bad.err.find("line 2"), std::string::npos);
    {
        std::ofstream f(d / "flat.csv");
        f << "freq_ghz,re,im\n";
        for (int i = 0; i < 50; ++i) f << 95.0 + 0.001 * i << ",0.5,0.1\n";
    }
    const auto flat = run({"--out", out, "fit", (d / "flat.csv").string()});
    EXPECT_EQ(flat.code, cli::exit_numerical);
    EXPECT_NE(flat.err.find("no dip found"), std::string::npos);
    EXPECT_EQ(run({"--out", out, "qe", "--target-qe", "0.5"}).code, cli::exit_io);
    EXPECT_EQ(run({"--out", out, "qe"}).code, cli::exit_io);
    EXPECT_EQ(run({"--out", out, "taper", "--S1", "5"}).code, cli::exit_io);
}

TEST(Cli, QeAndTaperOutputs) {
    const auto d = support::scratch_dir("cli_geom");
    const auto out = d.string();
    const auto q = run({"--out", out, "qe", "--separation-um", "100"});
    ASSERT_EQ(q.code, 0);
    EXPECT_NEAR(json::parse(q.out)["qe"].get<double>(), std::pow(10.0, 3.96491), 1e-6);
    ASSERT_EQ(run({"--out", out, "taper", "--format", "csv", "--n-points", "11"}).code, 0);
    EXPECT_TRUE(fs::exists(d / "taper_contour.csv"));
    EXPECT_FALSE(fs::exists(d / "taper_outline.svg"));
    std::ifstream csv(d / "taper_contour.csv");
    const auto c = read_contour_csv(csv);
    EXPECT_EQ(c.points.size(), 11u);
    EXPECT_DOUBLE_EQ(load(d / "taper.json")["y_end_mm"].get<double>(), 0.615);
}

TEST(Cli, ConfigFileAndEnvironmentVariable) {
    const auto d = support::scratch_dir("cli_config");
    const auto cfg = d / "run.toml";
    {
        std::ofstream f(cfg);
        f << "out = \"" << d.string() << "\"\n[taper]\nn-points = 21\nformat = \"csv\"\n";
    }
    ASSERT_EQ(run({"--config", cfg.string(), "taper"}).code, 0);
    std::ifstream a(d / "taper_contour.csv");
    EXPECT_EQ(read_contour_csv(a).points.size(), 21u);

    fs::remove(d / "taper_contour.csv");
    ::setenv("MMRES_CONFIG", cfg.string().c_str(), 1);
    const auto r = run({"taper", "--n-points", "31"});
    ::unsetenv("MMRES_CONFIG");
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream b(d / "taper_contour.csv");
    EXPECT_EQ(read_contour_csv(b).points.size(), 31u);
}

TEST(Cli, LossFitsAndReport) {
    const auto d = support::scratch_dir("cli_loss");
    const auto out = d.string();
    ASSERT_EQ(run({"--out", out, "synth", "power", "--q-tls0", "1.03e6", "--q-other", "4.18e6", "--n-c", "20", "--beta",
                   "0.8", "--points", "20"})
                  .code,
              0);
    const auto pf = run({"--out", out, "powerfit", (d / "synth_power.csv").string(), "--qe-mag", "3e4", "--chip", "c1",
                         "--group", "g"});
    ASSERT_EQ(pf.code, 0) << pf.err;
    const auto j = load(d / "synth_power.powerfit.json");
    EXPECT_NEAR(j["tls"]["q_tls0"].get<double>() / 1.03e6, 1.0, 1e-6);
    EXPECT_NEAR(j["q_other"].get<double>() / 4.18e6, 1.0, 1e-6);
    EXPECT_GT(j["qi_high_power"].get<double>(), j["qi_low_power"].get<double>());

    ASSERT_EQ(run({"--out", out, "synth", "temperature", "--min", "0.5", "--max", "7", "--points", "20"}).code, 0);
    const auto tf = run({"--out", out, "tempfit", (d / "synth_temperature.csv").string(), "--n-c", "1", "--beta", "0.5"});
    ASSERT_EQ(tf.code, 0) << tf.err;
    EXPECT_NEAR(load(d / "synth_temperature.tempfit.json")["budget"]["qp"]["q_sigma0"].get<double>() / 1e4, 1.0, 1e-5);
    // A temperature file handed to powerfit is a usage error.
    EXPECT_EQ(run({"--out", out, "powerfit", (d / "synth_temperature.csv").string()}).code, cli::exit_io);

    const auto rep = run({"--out", (d / "report").string(), "report", out});
    ASSERT_EQ(rep.code, 0) << rep.err;
    const auto r = load(d / "report" / "report.json");
    ASSERT_EQ(r["rows"].size(), 1u);
    EXPECT_EQ(r["rows"][0]["chip"], "c1");
    EXPECT_TRUE(r["correlation"].is_null());
    EXPECT_NE(rep.out.find("chip,group,kind"), std::string::npos);
}

TEST(Cli, CalibrationSolveAndApply) {
    const auto d = support::scratch_dir("cli_cal");
    const auto freqs = support::linear_grid(90.0, 100.0, 51);
    Rng rng(50);
    const auto terms = support::random_error_terms(rng, freqs);
    const auto dut = support::random_passive_dut(rng, freqs);
    auto put = [&](const char* name, const SymmetricDut& x) {
        std::ofstream f(d / name);
        write_touchstone(f, embed(x, terms));
    };
    put("thru.s2p", support::ideal_standard(freqs, 1.0, 0.0));
    put("reflect.s2p", support::ideal_standard(freqs, 0.0, -1.0));
    put("line.s2p", support::line_standard(freqs, 1.0 / (4.0 * 95.0)));
    put("dut.s2p", dut);
    const auto out = d.string();
    ASSERT_EQ(run({"--out", out, "cal", "solve", "--thru", out + "/thru.s2p", "--reflect", out + "/reflect.s2p",
                   "--line", out + "/line.s2p"})
                  .code,
              0);
    const auto r = run({"--out", out, "cal", "apply", "--terms", out + "/error_terms.json", out + "/dut.s2p",
                        "--term-error", "0.03"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream f(d / "dut.corrected.s2p");
    const auto c = read_touchstone(f);
    for (std::size_t i = 0; i < freqs.size(); ++i) EXPECT_LT(std::abs(c.s21m[i] - dut.s21[i]), 1e-10);
    EXPECT_EQ(load(d / "dut.uncertainty.json")["points"].size(), freqs.size());

    // Terms on a different grid cannot be applied.
    {
        std::ofstream g(d / "other.s2p");
        write_touchstone(g, embed(support::random_passive_dut(rng, support::linear_grid(90.0, 100.0, 50)),
                                  ErrorTerms::identity(support::linear_grid(90.0, 100.0, 50))));
    }
    EXPECT_EQ(run({"--out", out, "cal", "apply", "--terms", out + "/error_terms.json", out + "/other.s2p"}).code,
              cli::exit_io);
}

TEST(Cli, ParallelJobsMatchSequential) {
    const auto d = support::scratch_dir("cli_jobs");
    const auto out = d.string();
    std::vector<std::string> inputs;
    for (int k = 0; k < 4; ++k) {
        const auto name = "r" + std::to_string(k);
        ASSERT_EQ(run({"--out", out, "--seed", std::to_string(k), "synth", "resonance", "--name", name, "--noise",
                       "gaussian", "--sigma", "1e-3", "--qi", std::to_string(1e5 * (k + 1))})
                      .code,
                  0);
        inputs.push_back(out + "/" + name + ".csv");
    }
    auto fit = [&](const std::string& jobs, const fs::path& where) {
        std::vector<std::string> a{"--out", where.string(), "--jobs", jobs, "--no-plot", "fit"};
        a.insert(a.end(), inputs.begin(), inputs.end());
        return run(a).code;
    };
    ASSERT_EQ(fit("1", d / "seq"), 0);
    ASSERT_EQ(fit("3", d / "par"), 0);
    for (int k = 0; k < 4; ++k) {
        const auto name = "r" + std::to_string(k) + ".fit.json";
        EXPECT_EQ(support::slurp(d / "seq" / name), support::slurp(d / "par" / name));
    }
    EXPECT_FALSE(fs::exists(d / "seq" / "r0.fit.svg"));
}
