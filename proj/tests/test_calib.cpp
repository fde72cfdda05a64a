#include <gtest/gtest.h>

#include "support.hpp"

using namespace mmres;
using namespace mmres::support;

namespace {

// Hand-expanded forward network for a single point.
void forward(const ErrorTermPoint& e, cplx s21, cplx s22, cplx& m21, cplx& m22) {
    const cplx loop = 1.0 - e.e11 * s22;
    m21 = e.e30 + e.e10 * e.e32 * s21 / loop;
    const cplx gamma_in = s22 + e.e11 * s21 * s21 / loop;
    m22 = e.e33 + e.e23 * e.e32 * gamma_in;
}

} // namespace

TEST(Calib, EmbedMatchesHandExpansion) {
    Rng rng(11);
    const auto freqs = linear_grid(80.0, 100.0, 21);
    const auto terms = random_error_terms(rng, freqs);
    const auto dut = random_passive_dut(rng, freqs);
    const auto m = embed(dut, terms);
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        cplx m21, m22;
        forward(terms.points[i], dut.s21[i], dut.s22[i], m21, m22);
        EXPECT_NEAR(std::abs(m.s21m[i] - m21), 0.0, 1e-15);
        EXPECT_NEAR(std::abs(m.s22m[i] - m22), 0.0, 1e-15);
    }
}

TEST(Calib, IdentityTermsAreTransparent) {
    Rng rng(12);
    const auto freqs = linear_grid(80.0, 100.0, 11);
    const auto dut = random_passive_dut(rng, freqs);
    const auto id = ErrorTerms::identity(freqs);
    const auto m = embed(dut, id);
    EXPECT_EQ(m.s21m, dut.s21);
    EXPECT_EQ(m.s22m, dut.s22);
    const auto back = correct(m, id);
    for (std::size_t i = 0; i < freqs.size(); ++i) EXPECT_NEAR(std::abs(back.s21[i] - dut.s21[i]), 0.0, 1e-15);
}

TEST(Calib, CorrectInvertsEmbedOnRandomNetworks) {
    Rng rng(13);
    const auto freqs = linear_grid(75.0, 110.0, 101);
    for (int k = 0; k < 20; ++k) {
        const auto terms = random_error_terms(rng, freqs);
        const auto dut = random_passive_dut(rng, freqs);
        const auto back = correct(embed(dut, terms), terms);
        for (std::size_t i = 0; i < freqs.size(); ++i) {
            ASSERT_LT(std::abs(back.s21[i] - dut.s21[i]), 1e-10);
            ASSERT_LT(std::abs(back.s22[i] - dut.s22[i]), 1e-10);
        }
        EXPECT_TRUE(back.passivity_violations(1e-9).empty());
    }
}

TEST(Calib, CorrectRejectsMismatchedGrid) {
    const auto freqs = linear_grid(80.0, 100.0, 11);
    Rng rng(14);
    const auto m = embed(random_passive_dut(rng, freqs), ErrorTerms::identity(freqs));
    EXPECT_ANY_THROW(correct(m, ErrorTerms::identity(linear_grid(80.0, 100.0, 12))));
}

TEST(Calib, SolveRecoversTermsFromIdealStandards) {
    Rng rng(15);
    const auto freqs = linear_grid(75.0, 110.0, 41);
    const auto terms = random_error_terms(rng, freqs);
    const cplx gamma(-0.95, 0.1);
    CalStandards st{embed(ideal_standard(freqs, 1.0, 0.0), terms), embed(ideal_standard(freqs, 0.0, gamma), terms),
                    embed(line_standard(freqs, 0.0027), terms), gamma, std::nullopt};
    const auto s = solve_error_terms(st);
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        const auto& a = s.points[i];
        const auto& b = terms.points[i];
        EXPECT_LT(std::abs(a.e30 - b.e30), 1e-12);
        EXPECT_LT(std::abs(a.e33 - b.e33), 1e-12);
        EXPECT_LT(std::abs(a.e11 - b.e11), 1e-12);
        EXPECT_LT(std::abs(a.transmission_product() - b.transmission_product()), 1e-12);
        EXPECT_LT(std::abs(a.reflection_product() - b.reflection_product()), 1e-12);
    }
    // Solved terms de-embed a DUT as well as the true ones.
    const auto dut = random_passive_dut(rng, freqs);
    const auto back = correct(embed(dut, terms), s);
    for (std::size_t i = 0; i < freqs.size(); ++i) EXPECT_LT(std::abs(back.s21[i] - dut.s21[i]), 1e-11);
}

TEST(Calib, InputPathTermsSplitProducts) {
    Rng rng(16);
    const auto freqs = linear_grid(90.0, 100.0, 5);
    const auto terms = random_error_terms(rng, freqs);
    CalStandards st{embed(ideal_standard(freqs, 1.0, 0.0), terms), embed(ideal_standard(freqs, 0.0, -1.0), terms),
                    embed(line_standard(freqs, 0.0027), terms), -1.0, std::nullopt};
    InputPathTerms in;
    for (const auto& p : terms.points) {
        in.e10.push_back(p.e10);
        in.e23.push_back(p.e23);
    }
    const auto s = solve_error_terms(st, in);
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        EXPECT_LT(std::abs(s.points[i].e32 - terms.points[i].e32), 1e-12);
        EXPECT_LT(std::abs(s.points[i].e10 - terms.points[i].e10), 1e-12);
    }
}

TEST(Calib, DegenerateStandardsAreRejected) {
    const auto freqs = linear_grid(90.0, 100.0, 5);
    const auto id = ErrorTerms::identity(freqs);
    const auto thru = embed(ideal_standard(freqs, 1.0, 0.0), id);
    // Line equal to the thru: t^2 = 1.
    EXPECT_THROW(solve_error_terms({thru, embed(ideal_standard(freqs, 0.0, -1.0), id), thru, -1.0, std::nullopt}),
                 NumericalError);
    // Reflect of zero.
    EXPECT_THROW(solve_error_terms({thru, embed(ideal_standard(freqs, 0.0, 0.0), id),
                                    embed(line_standard(freqs, 0.0027), id), 0.0, std::nullopt}),
                 NumericalError);
    // Gamma equal to t^2 is an ordinary, solvable configuration.
    const cplx t = std::polar(1.0, -2.0 * std::numbers::pi * 95.0 * 0.0027);
    std::vector<cplx> line_t(freqs.size(), t);
    SymmetricDut line{freqs, line_t, std::vector<cplx>(freqs.size(), 0.0)};
    EXPECT_NO_THROW(solve_error_terms(
        {thru, embed(ideal_standard(freqs, 0.0, t * t), id), embed(line, id), t * t, line_t}));
}

TEST(Calib, StandardsOnDifferentGridsAreAligned) {
    const auto fine = linear_grid(90.0, 100.0, 101), coarse = linear_grid(91.0, 99.0, 9);
    const auto id = ErrorTerms::identity(fine);
    CalStandards st{embed(ideal_standard(fine, 1.0, 0.0), id),
                    embed(ideal_standard(coarse, 0.0, -1.0), ErrorTerms::identity(coarse)),
                    embed(line_standard(fine, 0.0027), id), -1.0, std::nullopt};
    const auto s = solve_error_terms(st);
    EXPECT_EQ(s.freqs_ghz, coarse);
    for (const auto& p : s.points) EXPECT_LT(std::abs(p.e11), 1e-9);
}

TEST(Calib, GainWarningsFlagActivePaths) {
    const auto freqs = linear_grid(90.0, 100.0, 3);
    auto t = ErrorTerms::identity(freqs);
    t.points[1].e10 = 1.5;
    EXPECT_EQ(t.gain_warnings(), std::vector<std::size_t>{1});
}

TEST(Calib, UncertaintyMatchesMonteCarloWorstCase) {
    Rng rng(17);
    const auto freqs = linear_grid(90.0, 100.0, 3);
    const auto terms = random_error_terms(rng, freqs);
    const auto dut = random_passive_dut(rng, freqs);
    const auto m = embed(dut, terms);
    const double mag = 1e-6;
    const auto u = propagate_uncertainty(m, terms, mag);
    const auto base = correct(m, terms);
    // One coordinate at a time, worst phase found by scanning: equals |derivative| * mag.
    for (std::size_t k = 0; k < kTermCoordinates; ++k) {
        double worst = 0.0;
        for (int j = 0; j < 360; ++j) {
            const auto c = correct(m, perturb_terms(terms, k, std::polar(mag, j * std::numbers::pi / 180.0)));
            worst = std::max(worst, std::abs(c.s21[0] - base.s21[0]));
        }
        EXPECT_LE(worst, u[0].s21 * (1.0 + 1e-3));
    }
    // Random joint perturbations stay inside sqrt(5) times the RSS bound.
    for (int trial = 0; trial < 200; ++trial) {
        ErrorTerms p = terms;
        for (std::size_t k = 0; k < kTermCoordinates; ++k) p = perturb_terms(p, k, random_phase(rng, mag));
        const auto c = correct(m, p);
        for (std::size_t i = 0; i < freqs.size(); ++i) {
            EXPECT_LE(std::abs(c.s21[i] - base.s21[i]), std::sqrt(5.0) * u[i].s21 * 1.01);
            EXPECT_LE(std::abs(c.s22[i] - base.s22[i]), std::sqrt(5.0) * u[i].s22 * 1.01);
        }
    }
    EXPECT_THROW(propagate_uncertainty(m, terms, -1.0), std::invalid_argument);
}
