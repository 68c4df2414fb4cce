#pragma once

#include <cstdint>

namespace kbf {

// splitmix64; used both as a mixer and to seed per-request streams.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derive an independent stream key from a base seed and one or two ordinals.
// Parallel schedules that assign ordinals deterministically get identical
// draws regardless of execution order.
inline uint64_t derive_stream(uint64_t seed, uint64_t ordinal) {
    return splitmix64(splitmix64(seed) ^ (0x517cc1b727220a95ULL * (ordinal + 1)));
}

inline uint64_t derive_stream(uint64_t seed, uint64_t a, uint64_t b) {
    return derive_stream(derive_stream(seed, a), b);
}

// xoshiro256** 1.0 by Blackman & Vigna (public domain).
class Rng {
  public:
    explicit Rng(uint64_t seed) {
        uint64_t s = seed;
        for (auto& w : state_) w = s = splitmix64(s);
    }

    using result_type = uint64_t;
    static constexpr uint64_t min() { return 0; }
    static constexpr uint64_t max() { return ~0ULL; }

    uint64_t operator()() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0,1).
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return (*this)() % n; }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t state_[4];
};

}  // namespace kbf
