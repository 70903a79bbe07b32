#pragma once

#include <cstdint>

namespace matte {

/// SplitMix64 stream. Used everywhere a seeded draw is needed so that
/// results are bit-identical across platforms and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    /// Uniform integer in [lo, hi] inclusive.
    std::uint64_t next_int(std::uint64_t lo, std::uint64_t hi) {
        return lo + next_u64() % (hi - lo + 1);
    }

    /// Derives an independent stream for sub-task `index` of this seed.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
        Rng r(seed ^ (0x517cc1b727220a95ULL * (index + 1)));
        return r.next_u64();
    }

private:
    std::uint64_t state_;
};

}  // namespace matte
