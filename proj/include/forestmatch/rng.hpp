// Deterministic PRNG used everywhere randomness is needed.
//
// std::shuffle and the std distributions are implementation-defined, so all
// draws go through this splitmix64 generator to keep outputs byte-stable
// across compilers.

#pragma once

#include <cstdint>
#include <vector>

namespace forestmatch {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_real(double lo, double hi) { return lo + (hi - lo) * next_real(); }

    // Uniform in [0, bound); Lemire reduction, bound > 0.
    std::uint32_t next_below(std::uint32_t bound) {
        const std::uint64_t m = static_cast<std::uint64_t>(static_cast<std::uint32_t>(next_u64())) * bound;
        return static_cast<std::uint32_t>(m >> 32);
    }

    // Uniform integer in [lo, hi] inclusive.
    int next_int(int lo, int hi) { return lo + static_cast<int>(next_below(static_cast<std::uint32_t>(hi - lo + 1))); }

    // Stable seed derivation for named sub-streams.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = rng.next_below(static_cast<std::uint32_t>(i));
        std::swap(v[i - 1], v[j]);
    }
}

// k distinct indices drawn from [0, n); order is the draw order.
std::vector<std::uint32_t> sample_distinct(std::uint32_t n, std::uint32_t k, Rng& rng);

}  // namespace forestmatch
