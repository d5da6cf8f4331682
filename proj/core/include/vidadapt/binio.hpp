#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vad::binio {

// Shared header+blob file convention: magic(4) | version u32 LE |
// header_len u32 LE | header text | little-endian payload.

inline void write_u32le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("binio: truncated file (u32)");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void write_f32le(std::ostream& os, std::span<const float> values) {
    for (float f : values) write_u32le(os, std::bit_cast<uint32_t>(f));
}

inline void read_f32le(std::istream& is, std::span<float> out) {
    for (float& f : out) f = std::bit_cast<float>(read_u32le(is));
}

inline void write_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char magic[4], const std::string& what) {
    char got[4];
    is.read(got, 4);
    if (!is || std::string(got, 4) != std::string(magic, 4))
        throw std::runtime_error(what + ": bad magic");
}

inline void write_header(std::ostream& os, const char magic[4], uint32_t version,
                         const std::string& header) {
    write_magic(os, magic);
    write_u32le(os, version);
    write_u32le(os, static_cast<uint32_t>(header.size()));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
}

inline std::string read_header(std::istream& is, const char magic[4], uint32_t expect_version,
                               const std::string& what) {
    expect_magic(is, magic, what);
    uint32_t version = read_u32le(is);
    if (version != expect_version) throw std::runtime_error(what + ": unsupported format version");
    uint32_t len = read_u32le(is);
    std::string header(len, '\0');
    is.read(header.data(), len);
    if (!is) throw std::runtime_error(what + ": truncated header");
    return header;
}

// Minimal key=value header parsing (split at first '=', trimmed).
std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& text);
std::string kv_get(const std::vector<std::pair<std::string, std::string>>& kv,
                   const std::string& key);

}  // namespace vad::binio
