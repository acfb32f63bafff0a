#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace flowaudit {

// Shortest round-trip decimal form, the canonical float format for CSV
// output (JSON goes through the JSON library, which does the same).
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

}  // namespace flowaudit
