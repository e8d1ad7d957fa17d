#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "tivac/error.hpp"

namespace tivac {

// Round-trip-safe decimal formatting: 17 significant digits reproduce the
// exact double on re-parse.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[48];
    auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline bool try_parse_double(std::string_view s, double& out) {
    // trim surrounding whitespace
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return false;
    std::size_t e = s.find_last_not_of(" \t\r");
    s = s.substr(b, e - b + 1);
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last;
}

inline std::vector<std::string> split_line(std::string_view line, char delim = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string trim(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Equally spaced grid with exact endpoints (no fp overshoot past hi).
inline std::vector<double> linspace(double lo, double hi, int count) {
    if (count < 1) fail("bad_grid", "grid must contain at least one point");
    std::vector<double> out(static_cast<std::size_t>(count));
    if (count == 1) {
        out[0] = lo;
        return out;
    }
    const double step = (hi - lo) / static_cast<double>(count - 1);
    for (int i = 0; i < count; ++i) {
        double t = lo + step * static_cast<double>(i);
        out[static_cast<std::size_t>(i)] = std::min(t, hi);
    }
    out.front() = lo;
    out.back() = hi;
    return out;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("io_missing_file", "cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("io_write_failed", "cannot write file: " + path);
    out << content;
    if (!out) fail("io_write_failed", "write failed: " + path);
}

}  // namespace tivac
