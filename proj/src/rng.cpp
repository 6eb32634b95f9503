#include "forestmatch/rng.hpp"

namespace forestmatch {

std::vector<std::uint32_t> sample_distinct(std::uint32_t n, std::uint32_t k, Rng& rng) {
    // Floyd's algorithm; keeps draw order without touching an O(n) buffer.
    std::vector<std::uint32_t> out;
    out.reserve(k);
    for (std::uint32_t j = n - k; j < n; ++j) {
        const std::uint32_t v = rng.next_below(j + 1);
        bool seen = false;
        for (std::uint32_t s : out) {
            if (s == v) {
                seen = true;
                break;
            }
        }
        out.push_back(seen ? j : v);
    }
    return out;
}

}  // namespace forestmatch
