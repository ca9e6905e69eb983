#include "fusionlab/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace fusionlab {

namespace {

std::uint64_t splitmix_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// FNV-1a over the label bytes; only used to key derived streams.
std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace

std::uint64_t SeededRng::next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return splitmix_mix(state_);
}

double SeededRng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
}

double SeededRng::normal(double mean, double stddev) {
    if (have_spare_) {
        have_spare_ = false;
        return mean + stddev * spare_;
    }
    // u1 in (0, 1] so the log is always finite.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return mean + stddev * r * std::cos(theta);
}

std::size_t SeededRng::next_below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("SeededRng::next_below: n must be positive");
    std::uint64_t bound = static_cast<std::uint64_t>(n);
    std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

SeededRng SeededRng::derive(std::string_view label) const {
    return SeededRng(splitmix_mix(seed_ ^ (fnv1a64(label) + 0x9E3779B97F4A7C15ULL)));
}

}  // namespace fusionlab
