#pragma once
// Counter-based random streams.
//
// Every perturbed draw is addressed by (master_seed, sample_index). The stream
// for a draw is a SplitMix64 sequence whose starting state is a hash of both
// numbers, so draws can be generated in any order, on any thread, and still
// reproduce bit-for-bit.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace editcert {

struct SeedSpec {
    std::uint64_t master_seed = 0;
    std::uint64_t sample_index = 0;

    friend bool operator==(const SeedSpec&, const SeedSpec&) = default;
};

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

/// Derive a child seed from a parent seed and a label. Used for per-file,
/// per-epoch and per-example substreams.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t label) noexcept {
    return detail::mix64(parent + detail::kGolden) ^
           detail::rotl(detail::mix64(label * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL), 23);
}

/// SplitMix64 stream keyed by a SeedSpec. Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit constexpr CounterRng(SeedSpec seed) noexcept
        : state_(derive_seed(seed.master_seed, seed.sample_index)) {}
    explicit constexpr CounterRng(std::uint64_t seed) noexcept : state_(detail::mix64(seed)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        state_ += detail::kGolden;
        return detail::mix64(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    constexpr double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    constexpr bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Unbiased integer in [0, bound). bound must be positive.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept {
        const std::uint64_t limit = max() - max() % bound;
        std::uint64_t v = (*this)();
        while (v >= limit) v = (*this)();
        return v % bound;
    }

private:
    std::uint64_t state_;
};

/// Uniformly random size-k subset of {0..n-1} via a partial Fisher-Yates
/// shuffle. Returned indices are in shuffle order, not sorted.
inline std::vector<std::size_t> sample_subset(std::size_t n, std::size_t k, CounterRng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (k > n) k = n;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

template <typename T>
void shuffle(std::span<T> items, CounterRng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace editcert
