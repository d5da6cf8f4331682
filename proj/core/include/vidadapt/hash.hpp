#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace vad {

// FNV-1a 64-bit. Used to pin artifacts (files, feature probes) in manifests
// and reports; not cryptographic.
inline uint64_t fnv1a64(std::span<const unsigned char> bytes, uint64_t h = 0xCBF29CE484222325ull) {
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001B3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(std::span<const unsigned char>(
        reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

template <typename T>
uint64_t fnv1a64_pod_array(std::span<const T> values, uint64_t h = 0xCBF29CE484222325ull) {
    return fnv1a64(std::span<const unsigned char>(
                       reinterpret_cast<const unsigned char*>(values.data()),
                       values.size() * sizeof(T)),
                   h);
}

std::string hash_hex(uint64_t h);

}  // namespace vad
