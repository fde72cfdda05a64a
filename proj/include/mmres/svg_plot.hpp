#pragma once

// Minimal standalone SVG line/marker plots.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "mmres/text.hpp"

namespace mmres::plot {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    bool markers = false;
    std::string color = "#1f77b4";
};

struct Panel {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    bool log_x = false;
    bool log_y = false;
    std::vector<Series> series;
};

namespace detail {

inline std::string esc(const std::string& s) {
    std::string o;
    for (char c : s) {
        switch (c) {
        case '<': o += "&lt;"; break;
        case '>': o += "&gt;"; break;
        case '&': o += "&amp;"; break;
        case '"': o += "&quot;"; break;
        default: o += c;
        }
    }
    return o;
}

inline std::string px(double v) { return text::format_fixed(v, 2); }

inline std::string tick(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 4);
    return std::string(buf, r.ptr);
}

struct Axis {
    double lo = 0.0, hi = 1.0;
    bool log = false;
    double map(double v, double a, double b) const {
        const double t = log ? (std::log10(v) - lo) / (hi - lo) : (v - lo) / (hi - lo);
        return a + t * (b - a);
    }
};

inline Axis make_axis(const std::vector<Series>& ss, bool use_x, bool log) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : ss)
        for (double v : use_x ? s.x : s.y) {
            if (!std::isfinite(v) || (log && !(v > 0.0))) continue;
            const double w = log ? std::log10(v) : v;
            lo = std::min(lo, w);
            hi = std::max(hi, w);
        }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi == lo) {
        const double pad = lo == 0.0 ? 1.0 : 0.05 * std::abs(lo);
        lo -= pad;
        hi += pad;
    }
    const double m = 0.04 * (hi - lo);
    return {lo - m, hi + m, log};
}

} // namespace detail

/// Panels stacked vertically in one document. `provenance` lands in a
/// comment at the top.
inline void write_svg(std::ostream& out, const std::vector<Panel>& panels, const std::string& provenance) {
    using detail::px;
    const double W = 720, H = 360, L = 80, R = 160, T = 36, B = 52;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(W) << "\" height=\""
        << px(H * static_cast<double>(panels.size())) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<!-- " << detail::esc(provenance) << " -->\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t k = 0; k < panels.size(); ++k) {
        const auto& p = panels[k];
        const double y0 = H * static_cast<double>(k);
        const auto ax = detail::make_axis(p.series, true, p.log_x);
        const auto ay = detail::make_axis(p.series, false, p.log_y);
        const double x1 = L, x2 = W - R, yt = y0 + T, yb = y0 + H - B;
        out << "<g>\n<text x=\"" << px(W / 2 - R / 2) << "\" y=\"" << px(y0 + 20)
            << "\" text-anchor=\"middle\" font-size=\"14\">" << detail::esc(p.title) << "</text>\n";
        out << "<rect x=\"" << px(x1) << "\" y=\"" << px(yt) << "\" width=\"" << px(x2 - x1) << "\" height=\""
            << px(yb - yt) << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            const double fx = ax.lo + (ax.hi - ax.lo) * i / 4.0, fy = ay.lo + (ay.hi - ay.lo) * i / 4.0;
            const double vx = ax.log ? std::pow(10.0, fx) : fx, vy = ay.log ? std::pow(10.0, fy) : fy;
            const double sx = x1 + (x2 - x1) * i / 4.0, sy = yb - (yb - yt) * i / 4.0;
            out << "<text x=\"" << px(sx) << "\" y=\"" << px(yb + 16) << "\" text-anchor=\"middle\">"
                << detail::tick(vx) << "</text>\n";
            out << "<text x=\"" << px(x1 - 6) << "\" y=\"" << px(sy + 4) << "\" text-anchor=\"end\">"
                << detail::tick(vy) << "</text>\n";
        }
        out << "<text x=\"" << px((x1 + x2) / 2) << "\" y=\"" << px(yb + 36) << "\" text-anchor=\"middle\">"
            << detail::esc(p.xlabel) << "</text>\n";
        out << "<text transform=\"translate(" << px(18) << ',' << px((yt + yb) / 2)
            << ") rotate(-90)\" text-anchor=\"middle\">" << detail::esc(p.ylabel) << "</text>\n";
        for (std::size_t s = 0; s < p.series.size(); ++s) {
            const auto& se = p.series[s];
            std::string pts;
            for (std::size_t i = 0; i < se.x.size() && i < se.y.size(); ++i) {
                if (!std::isfinite(se.x[i]) || !std::isfinite(se.y[i])) continue;
                if ((ax.log && !(se.x[i] > 0.0)) || (ay.log && !(se.y[i] > 0.0))) continue;
                const double sx = ax.map(se.x[i], x1, x2), sy = ay.map(se.y[i], yb, yt);
                if (se.markers)
                    out << "<circle cx=\"" << px(sx) << "\" cy=\"" << px(sy) << "\" r=\"2.5\" fill=\"" << se.color
                        << "\"/>\n";
                else
                    pts += px(sx) + "," + px(sy) + " ";
            }
            if (!se.markers && !pts.empty()) {
                pts.pop_back();
                out << "<polyline fill=\"none\" stroke=\"" << se.color << "\" stroke-width=\"1.5\" points=\""
                    << pts << "\"/>\n";
            }
            const double ly = yt + 14 + 18 * static_cast<double>(s);
            out << "<line x1=\"" << px(x2 + 10) << "\" y1=\"" << px(ly - 4) << "\" x2=\"" << px(x2 + 30)
                << "\" y2=\"" << px(ly - 4) << "\" stroke=\"" << se.color << "\" stroke-width=\"2\"/>\n";
            out << "<text x=\"" << px(x2 + 36) << "\" y=\"" << px(ly) << "\">" << detail::esc(se.name)
                << "</text>\n";
        }
        out << "</g>\n";
    }
    out << "</svg>\n";
}

} // namespace mmres::plot
