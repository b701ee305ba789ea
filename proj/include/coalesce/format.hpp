#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace coalesce {

// 17 significant digits: round-trips every double.
inline std::string fmt17(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return {buf, res.ptr};
}

} // namespace coalesce
