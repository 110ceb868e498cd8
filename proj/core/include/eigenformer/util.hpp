#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

namespace eigenformer {

constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = kFnvOffset) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline uint64_t fnv1a64_u32(uint32_t v, uint64_t h) { return fnv1a64(&v, sizeof(v), h); }

/// Shortest exact decimal form, stable across runs (used for byte-stable
/// CSV/log emission).
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace eigenformer
