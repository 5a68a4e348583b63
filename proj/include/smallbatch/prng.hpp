#pragma once
// Counter-based splittable PRNG. Every (seed, stream) pair yields an
// independent deterministic sequence, so adding a new consumer stream never
// perturbs existing ones. Draw i of a stream is a pure function of
// (seed, stream, i), which lets samplers address draws by global index.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace smallbatch {

namespace streams {
inline constexpr std::uint64_t data = 1;
inline constexpr std::uint64_t noise = 2;
inline constexpr std::uint64_t init = 3;
inline constexpr std::uint64_t eval = 4;
inline constexpr std::uint64_t task = 5;
}  // namespace streams

class Prng {
  public:
    Prng(std::uint64_t seed, std::uint64_t stream, std::uint64_t start_counter = 0)
        : base_(mix(mix(seed ^ 0x5bf03635'0aeb3d7dULL) ^ (stream * kGolden))),
          counter_(start_counter) {}

    std::uint64_t next_u64() { return mix(base_ + (++counter_) * kGolden); }

    // in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // in (0, 1]
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    // standard normal via the Box-Muller transform (exact)
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // unbiased integer in [0, n) via 128-bit multiply
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    std::uint64_t counter() const { return counter_; }
    void jump_to(std::uint64_t counter) { counter_ = counter; }

  private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    // SplitMix64 finalizer
    static std::uint64_t mix(std::uint64_t x) {
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return x;
    }

    std::uint64_t base_;
    std::uint64_t counter_;
};

}  // namespace smallbatch
