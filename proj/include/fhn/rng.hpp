#pragma once

#include <array>
#include <cstdint>

namespace fhn {

/// Philox4x32 with 10 rounds.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

/// Stream tags keep draws for different purposes disjoint.
enum class Stream : std::uint32_t {
    OuNoise = 0,
    InitV = 1,
    InitW = 2,
    InitComponent = 3,
    Sampling = 4,
    Bootstrap = 5,
};

struct DrawKey {
    std::uint64_t seed = 0;
    Stream stream = Stream::OuNoise;
    std::uint64_t step = 0;  // below 2^40
    std::uint32_t node = 0;
    std::uint32_t index = 0;
};

/// Uniform in the open interval (0, 1), a pure function of the key.
double uniform_draw(const DrawKey& k);
/// Standard normal via Box-Muller, a pure function of the key.
double normal_draw(const DrawKey& k);

/// Sequential convenience wrapper: the i-th draw uses index i of a fixed (seed, stream, step, node).
class CounterRng {
public:
    CounterRng(std::uint64_t seed, Stream stream, std::uint64_t step = 0, std::uint32_t node = 0)
        : key_{seed, stream, step, node, 0} {}
    double uniform() { return uniform_draw(next()); }
    double normal() { return normal_draw(next()); }
    std::uint64_t below(std::uint64_t n);

private:
    DrawKey next() {
        DrawKey k = key_;
        k.index = counter_++;
        if (counter_ == 0) ++key_.step;
        return k;
    }
    DrawKey key_;
    std::uint32_t counter_ = 0;
};

}  // namespace fhn
