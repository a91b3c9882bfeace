#pragma once

#include <cstdint>

namespace sailscf {

/// Counter-based SplitMix64 stream. Draw k of stream(seed) is
///   mix(seed + (k+1) * 0x9E3779B97F4A7C15)
/// with the Steele/Lea/Flood finalizer, so any draw is addressable by
/// (seed, counter) and sequences are reproducible across platforms.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static uint64_t at(uint64_t seed, uint64_t counter) {
        return mix(seed + (counter + 1) * 0x9E3779B97F4A7C15ULL);
    }

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform in [-a, a).
    double next_symmetric(double a) { return a * (2.0 * next_double() - 1.0); }

    /// Standard normal via Box-Muller (consumes two draws).
    double next_normal();

    /// Decorrelated child stream, e.g. for per-attempt or per-item substreams.
    static uint64_t derive(uint64_t seed, uint64_t stream) {
        return mix(seed ^ mix(stream + 0xA5A5A5A5A5A5A5A5ULL));
    }

private:
    uint64_t state_;
};

} // namespace sailscf
