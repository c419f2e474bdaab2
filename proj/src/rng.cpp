#include "fhn/rng.hpp"

#include <cmath>
#include <numbers>

namespace fhn {

namespace {

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> block(const DrawKey& k) {
    const std::array<std::uint32_t, 4> ctr{
        k.index, k.node, static_cast<std::uint32_t>(k.step),
        (static_cast<std::uint32_t>(k.stream) << 24) | static_cast<std::uint32_t>((k.step >> 32) & 0xFFFFFFu)};
    const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(k.seed), static_cast<std::uint32_t>(k.seed >> 32)};
    return philox4x32_10(ctr, key);
}

inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t x = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> c, std::array<std::uint32_t, 2> k) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            k[0] += 0x9E3779B9u;
            k[1] += 0xBB67AE85u;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(0xD2511F53u, c[0], hi0, lo0);
        mulhilo(0xCD9E8D57u, c[2], hi1, lo1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
    return c;
}

double uniform_draw(const DrawKey& k) {
    const auto r = block(k);
    return to_open_unit(r[0], r[1]);
}

double normal_draw(const DrawKey& k) {
    const auto r = block(k);
    const double u1 = to_open_unit(r[0], r[1]);
    const double u2 = to_open_unit(r[2], r[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterRng::below(std::uint64_t n) {
    const auto v = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    return v < n ? v : n - 1;
}

}  // namespace fhn
