#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

namespace dpalign {

// Deterministic seeded random source. Each consumer owns its own Rng so
// reordering one component's draws cannot perturb another's.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_base_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    // Inclusive bounds.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
    }

    double gaussian(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    template <typename It>
    void shuffle(It first, It last) {
        std::shuffle(first, last, engine_);
    }

    // Derived stream: mixes the base seed with a stream id so that
    // independent components get decorrelated, reproducible sequences.
    Rng fork(std::uint64_t stream) const { return Rng(mix(seed_base_, stream)); }

    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        // splitmix64 finalizer over the combined word
        std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_base() const { return seed_base_; }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    std::uint64_t seed_base_;
};

}  // namespace dpalign
