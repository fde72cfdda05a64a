#pragma once

// Finline taper outline and the coupling design rule.
//
// The contour y(x) = ((W0 - S1)/2)(x/A1) sqrt(2 - (x/A1)^2) is the fin edge
// offset from the waveguide wall: the slot half-width is W0/2 - y(x), opening
// at W0/2 on the waveguide side (x = 0) and closing to S1/2 at x = A1.

#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmres/config.hpp"
#include "mmres/error.hpp"
#include "mmres/text.hpp"

namespace mmres {

struct TaperSpec {
    // Optimized dimensions in mm.
    double H0 = 2.54, L1 = 3.45, L2 = 2.27, L3 = 1.66;
    double T0 = 0.1, H1 = 0.4, D1 = 0.2, D2 = 0.412;
    double W0 = 1.27, W1 = 2.29, W2 = 2.11, S1 = 0.04;
    double A1 = 0.895, D0 = 0.55, D3 = 0.8, R1 = 0.4;
    int n_points = 1001;

    using Field = std::pair<const char*, double TaperSpec::*>;
    static const std::array<Field, 16>& fields() {
        static const std::array<Field, 16> f = {{{"H0", &TaperSpec::H0}, {"L1", &TaperSpec::L1},
                                                 {"L2", &TaperSpec::L2}, {"L3", &TaperSpec::L3},
                                                 {"T0", &TaperSpec::T0}, {"H1", &TaperSpec::H1},
                                                 {"D1", &TaperSpec::D1}, {"D2", &TaperSpec::D2},
                                                 {"W0", &TaperSpec::W0}, {"W1", &TaperSpec::W1},
                                                 {"W2", &TaperSpec::W2}, {"S1", &TaperSpec::S1},
                                                 {"A1", &TaperSpec::A1}, {"D0", &TaperSpec::D0},
                                                 {"D3", &TaperSpec::D3}, {"R1", &TaperSpec::R1}}};
        return f;
    }

    void validate() const {
        for (const auto& [name, m] : fields())
            if (!(this->*m > 0.0) || !std::isfinite(this->*m))
                throw std::invalid_argument(std::string(name) + " must be positive");
        if (!(S1 < W0)) throw std::invalid_argument("S1 must be narrower than W0");
        if (n_points < 2) throw std::invalid_argument("n_points must be at least 2");
    }

    /// Fields from a config section; missing keys keep their defaults.
    static TaperSpec from_config(const Config::Section& sec) {
        TaperSpec s;
        for (const auto& [key, value] : sec) {
            bool found = false;
            for (const auto& [name, m] : fields())
                if (text::lower(name) == key) {
                    s.*m = text::parse_double(value, 0, name);
                    found = true;
                }
            if (key == "n_points") {
                const double v = text::parse_double(value, 0, "n_points");
                if (v != std::floor(v) || v < 2 || v > 1e8)
                    throw std::invalid_argument("n_points must be an integer >= 2");
                s.n_points = static_cast<int>(v);
                found = true;
            }
            if (!found) throw std::invalid_argument("unknown taper key '" + key + "'");
        }
        s.validate();
        return s;
    }

    double end_offset() const { return 0.5 * (W0 - S1); }
};

struct Contour {
    std::vector<std::pair<double, double>> points; // (x_mm, y_mm)
};

inline double contour_y(double x_mm, const TaperSpec& spec) {
    if (!(x_mm >= 0.0 && x_mm <= spec.A1))
        throw std::invalid_argument("x outside [0, A1]");
    const double u = x_mm / spec.A1;
    return spec.end_offset() * u * std::sqrt(2.0 - u * u);
}

inline Contour generate_contour(const TaperSpec& spec) {
    spec.validate();
    Contour c;
    const int n = spec.n_points;
    c.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double x = i == n - 1 ? spec.A1 : spec.A1 * static_cast<double>(i) / (n - 1);
        c.points.emplace_back(x, contour_y(x, spec));
    }
    return c;
}

inline void write_contour_csv(std::ostream& out, const Contour& c) {
    out << "x_mm,y_mm\n";
    for (const auto& [x, y] : c.points) out << text::format(x) << ',' << text::format(y) << '\n';
}

inline Contour read_contour_csv(std::istream& in) {
    const auto t = text::read_csv(in);
    const auto cx = t.require("x_mm"), cy = t.require("y_mm");
    Contour c;
    for (const auto& row : t.rows)
        c.points.emplace_back(text::parse_double(row.cells[cx], row.line, "x_mm"),
                              text::parse_double(row.cells[cy], row.line, "y_mm"));
    return c;
}

/// Full slot outline in mm: upper edge from the waveguide side to the slot,
/// lower edge back, first vertex repeated to close.
inline std::vector<std::pair<double, double>> slot_outline(const Contour& c, const TaperSpec& spec) {
    std::vector<std::pair<double, double>> v;
    v.reserve(2 * c.points.size() + 1);
    for (const auto& [x, y] : c.points) v.emplace_back(x, 0.5 * spec.W0 - y);
    for (auto it = c.points.rbegin(); it != c.points.rend(); ++it)
        v.emplace_back(it->first, -(0.5 * spec.W0 - it->second));
    v.push_back(v.front());
    return v;
}

/// Inverse of slot_outline: recovers the contour from the upper edge.
inline Contour contour_from_outline(const std::vector<std::pair<double, double>>& outline,
                                    const TaperSpec& spec) {
    if (outline.size() < 5 || outline.size() % 2 == 0)
        throw std::invalid_argument("outline is not a closed two-sided slot polygon");
    const std::size_t n = (outline.size() - 1) / 2;
    Contour c;
    for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(outline[i].first, 0.5 * spec.W0 - outline[i].second);
    return c;
}

inline constexpr int svg_decimals = 7;

/// SVG polygon, 1 user unit = 1 um.
inline void write_contour_svg(std::ostream& out, const Contour& c, const TaperSpec& spec,
                              const std::string& comment = {}) {
    const auto v = slot_outline(c, spec);
    const double w = spec.A1 * 1e3, h = spec.W0 * 1e3;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << text::format_fixed(-0.05 * w, 3) << ' '
        << text::format_fixed(-0.55 * h, 3) << ' ' << text::format_fixed(1.1 * w, 3) << ' '
        << text::format_fixed(1.1 * h, 3) << "\" width=\"" << text::format_fixed(1.1 * w, 3)
        << "\" height=\"" << text::format_fixed(1.1 * h, 3) << "\">\n";
    if (!comment.empty()) out << "<!-- " << comment << " -->\n";
    out << "<polygon fill=\"none\" stroke=\"black\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out << ' ';
        out << text::format_fixed(v[i].first * 1e3, svg_decimals) << ','
            << text::format_fixed(v[i].second * 1e3, svg_decimals);
    }
    out << "\"/>\n</svg>\n";
}

/// Vertices (mm) of the first polygon in an SVG written by write_contour_svg.
inline std::vector<std::pair<double, double>> read_svg_polygon(std::istream& in) {
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string doc = ss.str();
    const auto tag = doc.find("<polygon");
    if (tag == std::string::npos) throw ParseError(0, "no polygon element");
    const auto end = doc.find('>', tag);
    const auto attr = doc.find(" points=\"", tag);
    if (attr == std::string::npos || attr > end) throw ParseError(0, "polygon without points");
    const auto first = attr + 9, last = doc.find('"', first);
    if (last == std::string::npos) throw ParseError(0, "unterminated points attribute");
    const std::string_view pts(doc.data() + first, last - first);
    std::vector<std::pair<double, double>> v;
    for (auto tok : text::split_ws(pts)) {
        const auto comma = tok.find(',');
        if (comma == std::string_view::npos) throw ParseError(0, "malformed polygon point");
        v.emplace_back(text::parse_double(tok.substr(0, comma), 0, "x") * 1e-3,
                       text::parse_double(tok.substr(comma + 1), 0, "y") * 1e-3);
    }
    return v;
}

/// log10 Qe = intercept + slope * d, d in um.
struct CouplingLaw {
    double intercept = 0.06491;
    double slope_per_um = 0.0390;

    void validate() const {
        if (!std::isfinite(intercept) || !(slope_per_um > 0.0))
            throw std::invalid_argument("coupling law slope must be positive");
    }

    double floor() const { return std::pow(10.0, intercept); }
};

inline double qe_of_separation(double d_um, const CouplingLaw& law = {}) {
    law.validate();
    if (!(d_um >= 0.0) || !std::isfinite(d_um)) throw std::invalid_argument("separation must be >= 0");
    return std::pow(10.0, law.intercept + law.slope_per_um * d_um);
}

inline double separation_for_qe(double qe_target, const CouplingLaw& law = {}) {
    law.validate();
    if (!(qe_target > law.floor()) || !std::isfinite(qe_target))
        throw std::invalid_argument("target Qe is at or below the zero-separation value");
    return (std::log10(qe_target) - law.intercept) / law.slope_per_um;
}

} // namespace mmres
