#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ovenlab {

inline constexpr std::string_view kVersion = "ovenlab 0.1.0";

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string code_version_hash() {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(kVersion)));
    return std::string(buf);
}

}  // namespace ovenlab
