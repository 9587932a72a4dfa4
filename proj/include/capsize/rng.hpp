#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace capsize {

/// Counter-based Philox4x64-10 block function.
inline std::array<std::uint64_t, 4> philox4x64(std::array<std::uint64_t, 4> ctr,
                                               std::array<std::uint64_t, 2> key) {
    constexpr std::uint64_t m0 = 0xD2E7470EE14C6C93ULL;
    constexpr std::uint64_t m1 = 0xCA5A826395121157ULL;
    constexpr std::uint64_t w0 = 0x9E3779B97F4A7C15ULL;
    constexpr std::uint64_t w1 = 0xBB67AE8584CAA73BULL;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += w0;
            key[1] += w1;
        }
        const unsigned __int128 p0 = static_cast<unsigned __int128>(m0) * ctr[0];
        const unsigned __int128 p1 = static_cast<unsigned __int128>(m1) * ctr[2];
        const auto hi0 = static_cast<std::uint64_t>(p0 >> 64), lo0 = static_cast<std::uint64_t>(p0);
        const auto hi1 = static_cast<std::uint64_t>(p1 >> 64), lo1 = static_cast<std::uint64_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

/// Stream tags separate independent uses of one seed.
enum class StreamTag : std::uint64_t { noise = 1, initial_state = 2, seed_derivation = 3, reservoir = 4 };

/// Child seed for ensemble member or worker stream `index`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return philox4x64({index, 0, 0, 0}, {seed, static_cast<std::uint64_t>(StreamTag::seed_derivation)})[0];
}

/// Uniform double in [0, 1) from 53 high bits.
inline double to_unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

/// Normal variates addressed by a linear index; index k of a stream is always the same number.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, StreamTag tag) : key_{seed, static_cast<std::uint64_t>(tag)} {}

    double at(std::uint64_t index) {
        const std::uint64_t block = index >> 2;
        if (block != cached_block_ || !valid_) fill(block);
        return cache_[index & 3];
    }

    /// Uniform in [0,1) at a linear index, sharing no draws with `at`.
    double uniform(std::uint64_t index) const {
        return to_unit(philox4x64({index, 1, 0, 0}, key_)[0]);
    }

private:
    void fill(std::uint64_t block) {
        const auto r = philox4x64({block, 0, 0, 0}, key_);
        for (int pair = 0; pair < 2; ++pair) {
            const double u1 = (static_cast<double>(r[2 * pair] >> 11) + 1.0) * 0x1.0p-53;
            const double u2 = to_unit(r[2 * pair + 1]);
            const double rad = std::sqrt(-2.0 * std::log(u1));
            const double ang = 2.0 * std::numbers::pi * u2;
            cache_[2 * pair] = rad * std::cos(ang);
            cache_[2 * pair + 1] = rad * std::sin(ang);
        }
        cached_block_ = block;
        valid_ = true;
    }

    std::array<std::uint64_t, 2> key_;
    std::array<double, 4> cache_{};
    std::uint64_t cached_block_ = 0;
    bool valid_ = false;
};

}  // namespace capsize
