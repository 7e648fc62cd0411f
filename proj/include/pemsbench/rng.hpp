#pragma once

#include <cmath>
#include <cstdint>

namespace pemsbench::rng {

// Counter-based pseudo-random generator ("pemsbench-ctr-v1").
//
// Every value is a pure function of (seed, stream, counter), so any draw can
// be reproduced in any language from the definition below:
//
//   mix64(z): SplitMix64 finalizer (Stafford mix 13)
//     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//     return z ^ (z >> 31)
//
//   key(seed, stream) = mix64(seed + GOLDEN * (stream + 1))
//   at(seed, stream, counter) = mix64(key + GOLDEN * (counter + 1))
//
//   unit double  = (at(...) >> 11) * 2^-53              in [0, 1)
//   normal       = Box-Muller, two consecutive counters per draw,
//                  z = sqrt(-2 ln u1) * cos(2 pi u2), u1 drawn from (0, 1]
//
// Streams are split by hashing a substream tag into the stream id, never by
// jumping a shared state, so independent consumers stay decorrelated and
// insertion of new draw sites does not perturb existing ones.

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t at(std::uint64_t seed, std::uint64_t stream,
                                  std::uint64_t counter) {
    const std::uint64_t key = mix64(seed + kGolden * (stream + 1));
    return mix64(key + kGolden * (counter + 1));
}

// Stable 64-bit tag for naming streams by string (FNV-1a).
inline constexpr std::uint64_t stream_tag(const char* name) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const char* p = name; *p; ++p) {
        h = (h ^ static_cast<std::uint64_t>(*p)) * 0x100000001B3ull;
    }
    return h;
}

class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t stream)
        : seed_(seed), stream_(stream) {}

    Stream(std::uint64_t seed, const char* name)
        : seed_(seed), stream_(stream_tag(name)) {}

    // Child stream; advancing the child never touches the parent counter.
    Stream derive(std::uint64_t substream) const {
        return Stream(seed_, mix64(stream_ ^ (kGolden * (substream + 1))));
    }

    Stream derive(const char* name) const { return derive(stream_tag(name)); }

    std::uint64_t next_u64() { return at(seed_, stream_, counter_++); }

    // Uniform in [0, 1), 53-bit resolution.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_unit();
    }

    // Standard normal via Box-Muller; consumes exactly two counters.
    double next_normal() {
        const double u1 =
            static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        const double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

    bool next_bernoulli(double p) { return next_unit() < p; }

    // Uniform integer in [0, n); n must be positive. Lemire-style rejection
    // would be overkill here, modulo bias at 64 bits is far below any use in
    // this project.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

} // namespace pemsbench::rng
