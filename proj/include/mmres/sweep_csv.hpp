#pragma once

// Sweep CSV: header row, columns freq_ghz, re, im (mandatory) and
// temperature_k, nbar, power_dbm, label (optional). '#' lines are comments.

#include <algorithm>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "mmres/error.hpp"
#include "mmres/netdata.hpp"
#include "mmres/text.hpp"

namespace mmres {

/// Rows grouped by (label, temperature, drive), groups in order of first
/// appearance, each sorted by frequency.
inline std::vector<ComplexSweep> read_sweep_csv(std::istream& in) {
    const auto table = text::read_csv(in);
    const auto c_f = table.require("freq_ghz");
    const auto c_re = table.require("re");
    const auto c_im = table.require("im");
    const auto c_t = table.column("temperature_k");
    const auto c_n = table.column("nbar");
    const auto c_p = table.column("power_dbm");
    const auto c_l = table.column("label");

    struct Group {
        std::string label;
        std::optional<double> temperature;
        std::optional<DriveLevel> drive;
        std::vector<std::tuple<double, cplx, std::size_t>> points;
    };
    std::vector<Group> groups;

    auto optional_num = [](const text::CsvRow& r, std::optional<std::size_t> c,
                           const char* what) -> std::optional<double> {
        if (!c || r.cells[*c].empty()) return std::nullopt;
        return text::parse_double(r.cells[*c], r.line, what);
    };

    for (const auto& row : table.rows) {
        const double f = text::parse_double(row.cells[c_f], row.line, "freq_ghz");
        const double re = text::parse_double(row.cells[c_re], row.line, "re");
        const double im = text::parse_double(row.cells[c_im], row.line, "im");
        if (!(f > 0.0) || !std::isfinite(f)) throw ParseError(row.line, "freq_ghz must be positive");
        if (!std::isfinite(re) || !std::isfinite(im)) throw ParseError(row.line, "non-finite value");
        const auto temp = optional_num(row, c_t, "temperature_k");
        if (temp && !(*temp > 0.0)) throw ParseError(row.line, "temperature_k must be positive");
        std::optional<DriveLevel> drive;
        if (const auto n = optional_num(row, c_n, "nbar")) {
            if (!(*n > 0.0)) throw ParseError(row.line, "nbar must be positive");
            drive = DriveLevel{DriveLevel::Kind::photon_number, *n};
        } else if (const auto p = optional_num(row, c_p, "power_dbm")) {
            drive = DriveLevel{DriveLevel::Kind::power_dbm, *p};
        }
        std::string label = c_l && !row.cells[*c_l].empty() ? row.cells[*c_l] : "S21";

        auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
            return g.label == label && g.temperature == temp && g.drive == drive;
        });
        if (it == groups.end()) {
            groups.push_back({label, temp, drive, {}});
            it = std::prev(groups.end());
        }
        it->points.emplace_back(f, cplx(re, im), row.line);
    }
    if (groups.empty()) throw ParseError(0, "no data rows");

    std::vector<ComplexSweep> out;
    for (auto& g : groups) {
        std::stable_sort(g.points.begin(), g.points.end(),
                         [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
        std::vector<double> f;
        std::vector<cplx> v;
        for (std::size_t i = 0; i < g.points.size(); ++i) {
            if (i && std::get<0>(g.points[i]) == std::get<0>(g.points[i - 1]))
                throw ParseError(std::get<2>(g.points[i]), "duplicate frequency in group '" + g.label + "'");
            f.push_back(std::get<0>(g.points[i]));
            v.push_back(std::get<1>(g.points[i]));
        }
        if (f.size() < 2)
            throw ParseError(std::get<2>(g.points.front()),
                             "group '" + g.label + "' has fewer than 2 points");
        out.emplace_back(std::move(f), std::move(v), g.label, g.temperature, g.drive);
    }
    return out;
}

inline void write_sweep_csv(std::ostream& os, std::span<const ComplexSweep> sweeps) {
    os << "freq_ghz,re,im,temperature_k,nbar,power_dbm,label\n";
    for (const auto& s : sweeps) {
        const std::string t = s.temperature_k() ? text::format(*s.temperature_k()) : "";
        std::string n, p;
        if (const auto& d = s.drive()) {
            (d->kind == DriveLevel::Kind::photon_number ? n : p) = text::format(d->value);
        }
        for (std::size_t i = 0; i < s.size(); ++i) {
            os << text::format(s.freqs_ghz()[i]) << ',' << text::format(s.values()[i].real()) << ','
               << text::format(s.values()[i].imag()) << ',' << t << ',' << n << ',' << p << ','
               << s.label() << '\n';
        }
    }
}

} // namespace mmres
