#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "schedrl/error.hpp"

namespace schedrl {

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
    text = trim(text);
    if (text.empty()) return false;
    if constexpr (std::is_floating_point_v<T>) {
        // from_chars rejects a leading '+'; accept it for hand-written files.
        if (text.front() == '+') text.remove_prefix(1);
    }
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace detail

/// Plain-text `key = value` configuration. `#` starts a comment; blank lines
/// are ignored; later duplicates override earlier ones.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig parse(std::string_view text) {
        KvConfig cfg;
        std::size_t line_no = 0;
        for (auto raw : detail::split(text, '\n')) {
            ++line_no;
            if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
            const auto line = detail::trim(raw);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
            const auto key = detail::trim(line.substr(0, eq));
            if (key.empty()) throw ParseError("empty key", line_no);
            cfg.values_[std::string(key)] = std::string(detail::trim(line.substr(eq + 1)));
        }
        return cfg;
    }

    static KvConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    template <typename T>
    T get(const std::string& key, T fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        T out{};
        if (!detail::parse_number(it->second, out))
            throw ConfigError("config key '" + key + "': cannot parse '" + it->second + "'");
        if constexpr (std::is_floating_point_v<T>) {
            if (!std::isfinite(out)) throw ConfigError("config key '" + key + "' must be finite");
        }
        return out;
    }

    template <typename T>
    std::vector<T> get_list(const std::string& key, std::vector<T> fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<T> out;
        for (auto part : detail::split(it->second, ',')) {
            T v{};
            if (!detail::parse_number(part, v))
                throw ConfigError("config key '" + key + "': cannot parse list element '" +
                                  std::string(detail::trim(part)) + "'");
            out.push_back(v);
        }
        return out;
    }

    /// Rejects keys outside `known`, so typos fail loudly.
    void require_known(const std::set<std::string>& known, const std::string& what) const {
        for (const auto& [key, _] : values_) {
            if (!known.count(key)) throw ConfigError(what + ": unknown key '" + key + "'");
        }
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

    std::string to_string() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
        return out;
    }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace schedrl
