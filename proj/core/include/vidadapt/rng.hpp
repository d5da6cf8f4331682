#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

namespace vad {

// Philox4x32-10 counter-based generator. Draws are a pure function of
// (key, counter), so any consumer can be handed an independent stream keyed
// by (seed, purpose, step) and the results do not depend on call order or
// thread count.
struct Philox4x32 {
    static constexpr uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr uint32_t kWeyl1 = 0xBB67AE85u;
    static constexpr uint32_t kMul0  = 0xD2511F53u;
    static constexpr uint32_t kMul1  = 0xCD9E8D57u;

    static std::array<uint32_t, 4> block(std::array<uint32_t, 2> key,
                                         std::array<uint32_t, 4> ctr) {
        for (int round = 0; round < 10; ++round) {
            uint64_t p0 = static_cast<uint64_t>(kMul0) * ctr[0];
            uint64_t p1 = static_cast<uint64_t>(kMul1) * ctr[2];
            uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
            uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }
};

// Documented seed derivation (splitmix64 of seed xor salted constant): one
// top-level seed reproduces every sub-run.
inline uint64_t derive_seed(uint64_t seed, uint64_t salt) {
    uint64_t z = seed ^ (salt * 0x9E3779B97F4A7C15ull);
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Stream identifiers. A purpose + step pair selects one independent stream
// under a given seed; draws within the stream are indexed by a block counter.
namespace purpose {
inline constexpr uint32_t kParamInit    = 1;
inline constexpr uint32_t kLossTimestep = 2;
inline constexpr uint32_t kLossNoise    = 3;
inline constexpr uint32_t kCondDropout  = 4;
inline constexpr uint32_t kSampleInit   = 5;
inline constexpr uint32_t kSampleStep   = 6;
inline constexpr uint32_t kLangevin     = 7;
inline constexpr uint32_t kGmmComponent = 8;
inline constexpr uint32_t kGmmDraw      = 9;
inline constexpr uint32_t kWorldMotion  = 10;
inline constexpr uint32_t kShuffle      = 11;
inline constexpr uint32_t kProbeInit    = 12;
inline constexpr uint32_t kMcmc         = 13;
inline constexpr uint32_t kBatchSelect  = 14;
}  // namespace purpose

class RngStream {
public:
    RngStream(uint64_t seed, uint32_t purpose_id, uint64_t step)
        : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
          base_{purpose_id, static_cast<uint32_t>(step), static_cast<uint32_t>(step >> 32), 0} {}

    uint32_t next_u32() {
        if (buf_pos_ == 4) refill();
        return buf_[buf_pos_++];
    }

    uint64_t next_u64() {
        uint64_t lo = next_u32();
        uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; pairs are cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0,1]: keeps log() finite
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    float normal_f() { return static_cast<float>(normal()); }

    void fill_normal(std::span<float> out) {
        for (float& v : out) v = normal_f();
    }

    // Uniform integer in {0,...,n-1} (n > 0), by rejection on u64.
    uint64_t uniform_int(uint64_t n) {
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

private:
    void refill() {
        std::array<uint32_t, 4> ctr = base_;
        ctr[3] = block_index_++;
        buf_ = Philox4x32::block(key_, ctr);
        buf_pos_ = 0;
    }

    std::array<uint32_t, 2> key_;
    std::array<uint32_t, 4> base_;
    std::array<uint32_t, 4> buf_{};
    int buf_pos_ = 4;
    uint32_t block_index_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace vad
