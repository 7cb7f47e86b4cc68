#pragma once

// Internal text/number helpers shared by the serialization code.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "irispad/errors.hpp"

namespace irispad::textio {

/// %.<sig>g rendering; 17 significant digits round-trip IEEE doubles exactly.
inline std::string format_double(double value, int significant = 17) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", significant, value);
    return buf;
}

inline std::string_view trim(std::string_view s) {
    const char* ws = " \t\r\n";
    const auto begin = s.find_first_not_of(ws);
    if (begin == std::string_view::npos) return {};
    const auto end = s.find_last_not_of(ws);
    return s.substr(begin, end - begin + 1);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(s.substr(start));
            break;
        }
        parts.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

inline double parse_double(std::string_view s, const std::string& what) {
    const auto t = trim(s);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size())
        throw FormatError("invalid number for " + what + ": '" + std::string(s) + "'");
    return value;
}

inline std::int64_t parse_int(std::string_view s, const std::string& what) {
    const auto t = trim(s);
    std::int64_t value = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size())
        throw FormatError("invalid integer for " + what + ": '" + std::string(s) + "'");
    return value;
}

/// FNV-1a 64-bit, used as the content checksum of model files.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (const char ch : bytes) {
        hash ^= static_cast<unsigned char>(ch);
        hash *= 0x100000001b3ull;
    }
    return hash;
}

std::string read_file(const std::filesystem::path& path);

/// Write-temp-then-rename so concurrent readers never observe partial files.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

} // namespace irispad::textio
