#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace fusionlab {

// Deterministic pseudo-random generator built on splitmix64.  Each draw
// advances the state by the golden-ratio gamma and mixes it:
//
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
//
// The update rule is fixed so that identical seeds produce identical streams
// on every platform; frozen test vectors rely on this.
class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();

    // Uniform on [0, 1), 53-bit resolution.
    double next_double();

    double uniform(double lo, double hi);

    // Standard Box-Muller; the paired draw is cached, never discarded.
    double normal(double mean = 0.0, double stddev = 1.0);

    // Uniform integer in [0, n).  n must be positive.  Rejection sampling,
    // so the result is unbiased.
    std::size_t next_below(std::size_t n);

    // Independent stream keyed by this rng's seed and a label.  Used to give
    // each pipeline stage (data, init, batching, selftrain) its own
    // reproducible stream from one top-level seed.
    SeededRng derive(std::string_view label) const;

    // Fisher-Yates using next_below.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = next_below(i + 1);
            std::swap(v[i], v[j]);
        }
    }

  private:
    std::uint64_t seed_;
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fusionlab
