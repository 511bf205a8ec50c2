/**
 * @file philox.hpp
 * @brief Philox4x32-10 counter-based generator (Salmon et al., SC'11).
 *
 * A block is a pure function of (key, counter), so any entry of a random
 * matrix can be produced independently of evaluation order or thread count.
 */
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace mvreplica {

class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    explicit constexpr Philox4x32(Key key) : key_(key) {}

    /// Key from two 64-bit words, mixed so that nearby inputs give unrelated keys.
    static constexpr Philox4x32 from_seed(std::uint64_t a, std::uint64_t b = 0) {
        const std::uint64_t k = splitmix64(splitmix64(a) ^ (b + 0x632be59bd9b4e019ULL));
        return Philox4x32({static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)});
    }

    constexpr Counter block(Counter ctr) const {
        Key k = key_;
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, k);
            k[0] += kWeyl0;
            k[1] += kWeyl1;
        }
        return ctr;
    }

    /// Two standard normals from one block (Box-Muller on two 53-bit uniforms).
    std::array<double, 2> normal_pair(Counter ctr) const {
        const Counter b = block(ctr);
        const double u1 = to_open_unit(b[0], b[1]);
        const double u2 = to_unit(b[2], b[3]);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        return {radius * std::cos(angle), radius * std::sin(angle)};
    }

    static constexpr std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static constexpr Counter single_round(const Counter& c, const Key& k) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }

    /// [0, 1)
    static double to_unit(std::uint32_t a, std::uint32_t b) {
        const std::uint64_t bits = ((static_cast<std::uint64_t>(a) << 32) | b) >> 11;
        return static_cast<double>(bits) * 0x1.0p-53;
    }
    /// (0, 1]
    static double to_open_unit(std::uint32_t a, std::uint32_t b) {
        const std::uint64_t bits = ((static_cast<std::uint64_t>(a) << 32) | b) >> 11;
        return static_cast<double>(bits + 1) * 0x1.0p-53;
    }

    Key key_;
};

}  // namespace mvreplica
