#pragma once

// Touchstone v1 two-port (.s2p) reader and writer.
//
// Only S21 and S22 are kept on read. On write the device is treated as
// symmetric: S11 is emitted as S22 and S12 as S21.

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>
#include <string_view>

#include "mmres/error.hpp"
#include "mmres/netdata.hpp"
#include "mmres/text.hpp"

namespace mmres {

enum class TouchstoneFormat { RI, MA, DB };

struct TouchstoneOptions {
    double freq_scale_hz = 1e9; // multiplier from file unit to Hz
    TouchstoneFormat format = TouchstoneFormat::MA;
    double reference_ohms = 50.0;
};

namespace detail {

inline TouchstoneOptions parse_option_line(std::string_view body, std::size_t line) {
    TouchstoneOptions opt;
    const auto toks = text::split_ws(body);
    for (std::size_t i = 0; i < toks.size(); ++i) {
        const auto t = text::lower(toks[i]);
        if (t == "hz") opt.freq_scale_hz = 1.0;
        else if (t == "khz") opt.freq_scale_hz = 1e3;
        else if (t == "mhz") opt.freq_scale_hz = 1e6;
        else if (t == "ghz") opt.freq_scale_hz = 1e9;
        else if (t == "ri") opt.format = TouchstoneFormat::RI;
        else if (t == "ma") opt.format = TouchstoneFormat::MA;
        else if (t == "db") opt.format = TouchstoneFormat::DB;
        else if (t == "s") continue;
        else if (t == "y" || t == "z" || t == "h" || t == "g")
            throw ParseError(line, "only S-parameter files are supported, got '" +
                                       std::string(toks[i]) + "'");
        else if (t == "r") {
            if (i + 1 >= toks.size()) throw ParseError(line, "option 'R' without impedance");
            opt.reference_ohms = text::parse_double(toks[++i], line, "reference impedance");
        } else {
            throw ParseError(line, "unrecognized option '" + std::string(toks[i]) + "'");
        }
    }
    return opt;
}

inline cplx decode_pair(double a, double b, TouchstoneFormat fmt) {
    constexpr double deg = std::numbers::pi / 180.0;
    switch (fmt) {
    case TouchstoneFormat::RI: return {a, b};
    case TouchstoneFormat::MA: return std::polar(a, b * deg);
    case TouchstoneFormat::DB: return std::polar(std::pow(10.0, a / 20.0), b * deg);
    }
    return {};
}

} // namespace detail

inline TwoPortSet read_touchstone(std::istream& in, std::string provenance = {}) {
    TwoPortSet out;
    out.provenance = std::move(provenance);
    TouchstoneOptions opt;
    bool seen_option = false;
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string_view s = raw;
        if (const auto bang = s.find('!'); bang != std::string_view::npos) s = s.substr(0, bang);
        s = text::trim(s);
        if (s.empty()) continue;
        if (s.front() == '#') {
            if (!out.freqs_ghz.empty())
                throw ParseError(line, "option line after network data");
            if (!seen_option) opt = detail::parse_option_line(s.substr(1), line);
            seen_option = true; // later option lines are ignored
            continue;
        }
        const auto toks = text::split_ws(s);
        if (toks.size() != 9)
            throw ParseError(line, "expected 9 columns for a two-port row, found " +
                                       std::to_string(toks.size()));
        double v[9];
        for (int k = 0; k < 9; ++k) v[k] = text::parse_double(toks[k], line, "number");
        const double f_ghz = v[0] * opt.freq_scale_hz / 1e9;
        if (!(f_ghz > 0.0) || !std::isfinite(f_ghz))
            throw ParseError(line, "frequency must be positive");
        if (!out.freqs_ghz.empty() && !(f_ghz > out.freqs_ghz.back()))
            throw ParseError(line, "non-monotonic frequency");
        // Column order for two-port files: S11 S21 S12 S22.
        const cplx s21 = detail::decode_pair(v[3], v[4], opt.format);
        const cplx s22 = detail::decode_pair(v[7], v[8], opt.format);
        if (!std::isfinite(s21.real()) || !std::isfinite(s21.imag()) ||
            !std::isfinite(s22.real()) || !std::isfinite(s22.imag()))
            throw ParseError(line, "non-finite S-parameter");
        out.freqs_ghz.push_back(f_ghz);
        out.s21m.push_back(s21);
        out.s22m.push_back(s22);
    }
    if (out.freqs_ghz.empty()) throw ParseError(0, "no network data");
    out.reference_ohms = opt.reference_ohms;
    return out;
}

/// Writes GHz / RI, shortest round-trip number formatting.
inline void write_touchstone(std::ostream& os, const TwoPortSet& set,
                             std::string_view comment = {}) {
    set.validate();
    if (!comment.empty()) os << "! " << comment << '\n';
    os << "# GHz S RI R " << text::format(set.reference_ohms) << '\n';
    auto pair = [&](cplx z) { os << ' ' << text::format(z.real()) << ' ' << text::format(z.imag()); };
    for (std::size_t i = 0; i < set.size(); ++i) {
        os << text::format(set.freqs_ghz[i]);
        pair(set.s22m[i]);
        pair(set.s21m[i]);
        pair(set.s21m[i]);
        pair(set.s22m[i]);
        os << '\n';
    }
}

} // namespace mmres
