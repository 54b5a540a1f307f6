#pragma once
// SplitMix64 generator used everywhere determinism matters: dataset splits,
// bootstrap resampling, feature subsampling, fine-tune export sampling.
// The sequence depends only on the 64-bit seed, never on platform or locale.

#include <cstdint>
#include <vector>

namespace dedukt::detail {

// SplitMix64 finalizer (Steele, Lea, Flood 2014).
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix64(state_);
    }

    // Modulo-reduced draw; the tiny bias is irrelevant at the corpus sizes
    // involved and keeps the mapping trivially portable.
    std::uint64_t bounded(std::uint64_t n) { return n <= 1 ? 0 : next() % n; }

private:
    std::uint64_t state_;
};

// Stream seed for worker t derived from the master seed: one SplitMix64
// increment per index, then the finalizer. Independent of scheduling order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return mix64(master + (index + 1) * 0x9E3779B97F4A7C15ULL);
}

// Fisher-Yates, descending index.
template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.bounded(i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace dedukt::detail
