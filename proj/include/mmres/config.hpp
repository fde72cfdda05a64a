#pragma once

// key = value configuration with optional [section] headers.
//
//     # comment
//     seed = 7
//     [taper]
//     W0 = 1.27
//
// Keys before the first header belong to section "". Keys are matched
// case-insensitively; values are kept verbatim (trimmed).

#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "mmres/error.hpp"
#include "mmres/text.hpp"

namespace mmres {

class Config {
public:
    using Section = std::map<std::string, std::string>;

    static Config parse(std::istream& in) {
        Config c;
        std::string raw, section;
        std::size_t line = 0;
        while (std::getline(in, raw)) {
            ++line;
            auto s = text::trim(raw);
            if (s.empty() || s.front() == '#' || s.front() == ';') continue;
            if (s.front() == '[') {
                if (s.back() != ']') throw ParseError(line, "unterminated section header");
                section = text::lower(text::trim(s.substr(1, s.size() - 2)));
                c.sections_[section];
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string_view::npos) throw ParseError(line, "expected key = value");
            const auto key = text::lower(text::trim(s.substr(0, eq)));
            if (key.empty()) throw ParseError(line, "empty key");
            auto value = text::trim(s.substr(eq + 1));
            if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
                value = value.substr(1, value.size() - 2);
            c.sections_[section][key] = std::string(value);
        }
        return c;
    }

    const Section* section(std::string_view name) const {
        const auto it = sections_.find(text::lower(name));
        return it == sections_.end() ? nullptr : &it->second;
    }

    std::optional<std::string> get(std::string_view sec, std::string_view key) const {
        if (const auto* s = section(sec)) {
            const auto it = s->find(text::lower(key));
            if (it != s->end()) return it->second;
        }
        return std::nullopt;
    }

    void set(std::string_view sec, std::string_view key, std::string value) {
        sections_[text::lower(sec)][text::lower(key)] = std::move(value);
    }

    const std::map<std::string, Section>& sections() const { return sections_; }

private:
    std::map<std::string, Section> sections_;
};

} // namespace mmres
