#pragma once

// Locale-independent text helpers shared by the file readers and writers.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mmres/error.hpp"

namespace mmres::text {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

/// Parses the whole token as a double; never consults the C locale.
inline std::optional<double> to_double(std::string_view tok) {
    tok = trim(tok);
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    if (tok.empty()) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
    return v;
}

inline double parse_double(std::string_view tok, std::size_t line, std::string_view what) {
    if (auto v = to_double(tok)) return *v;
    throw ParseError(line, "cannot parse " + std::string(what) + " from '" + std::string(tok) + "'");
}

/// Shortest representation that reads back to the identical double.
inline std::string format(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

/// Fixed-point with `digits` decimals, locale independent.
inline std::string format_fixed(double v, int digits) {
    char buf[128];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
    if (ec != std::errc()) return format(v);
    return std::string(buf, ptr);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> cells;
};

/// Header-first comma-separated table. Blank lines and lines whose first
/// non-space character is '#' are skipped. Header names are lower-cased.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<CsvRow> rows;

    std::optional<std::size_t> column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        return std::nullopt;
    }

    std::size_t require(std::string_view name) const {
        if (auto c = column(name)) return *c;
        throw ParseError(0, "missing mandatory column '" + std::string(name) + "'");
    }
};

inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string raw;
    std::size_t line = 0;
    bool have_header = false;
    while (std::getline(in, raw)) {
        ++line;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        std::string_view s = raw;
        if (line == 1 && s.starts_with("\xEF\xBB\xBF")) s.remove_prefix(3);
        const auto tr = trim(s);
        if (tr.empty() || tr.front() == '#') continue;
        auto cells = split(tr, ',');
        if (!have_header) {
            for (auto c : cells) t.header.push_back(lower(c));
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size())
            throw ParseError(line, "expected " + std::to_string(t.header.size()) + " columns, found " +
                                       std::to_string(cells.size()));
        CsvRow row{line, {}};
        for (auto c : cells) row.cells.emplace_back(c);
        t.rows.push_back(std::move(row));
    }
    if (!have_header) throw ParseError(0, "missing header row");
    return t;
}

} // namespace mmres::text
