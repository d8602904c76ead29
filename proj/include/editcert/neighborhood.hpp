#pragma once
// Exact edit-distance neighborhoods for small instances, and the closed-form
// lower bound on Levenshtein neighborhood size that makes brute-force
// certification hopeless at realistic radii.

#include <cstddef>
#include <string>
#include <unordered_set>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "editcert/seqcore.hpp"

namespace editcert {

using BigInt = boost::multiprecision::cpp_int;

inline constexpr std::size_t kDefaultNeighborhoodCap = 10'000'000;

namespace detail {

inline BigInt binomial(long long n, long long k) {
    if (n < 0 || k < 0 || k > n) return 0;
    if (k > n - k) k = n - k;
    BigInt c = 1;
    for (long long i = 1; i <= k; ++i) {
        c *= n - k + i;
        c /= i;
    }
    return c;
}

}  // namespace detail

/// Sum over i = 0..r of (A-1)^i * sum over j = i-r..r of C(len + j, i), where
/// A is the alphabet size and binomials with a negative upper index vanish.
/// The inner sum telescopes by the hockey-stick identity.
inline BigInt neighborhood_size_lower_bound(std::size_t len, std::size_t r, std::size_t alphabet_size) {
    if (alphabet_size == 0) throw std::invalid_argument("alphabet size must be positive");
    const auto n = static_cast<long long>(len);
    const auto radius = static_cast<long long>(r);
    BigInt total = 0;
    BigInt power = 1;
    for (long long i = 0; i <= radius; ++i) {
        const long long lo = std::max(0LL, n + i - radius);
        const long long hi = n + radius;
        if (lo <= hi) total += power * (detail::binomial(hi + 1, i + 1) - detail::binomial(lo, i + 1));
        power *= alphabet_size - 1;
    }
    return total;
}

/// Layers of the neighborhood {x' : d_O(x, x') <= r}: layer d holds the
/// sequences at distance exactly d, in deterministic breadth-first order.
/// Throws CapExceeded when the Levenshtein lower bound (full op set) or the
/// running set size exceeds `cap`.
inline std::vector<std::vector<TokenSeq>> neighborhood_layers(const TokenSeq& x, std::size_t r, EditOpSet ops,
                                                               std::size_t cap = kDefaultNeighborhoodCap) {
    if (!ops.valid()) throw std::invalid_argument("edit op set must contain at least one op");
    if (ops == EditOpSet::levenshtein() &&
        neighborhood_size_lower_bound(x.size(), r, x.alphabet().size) > BigInt(cap)) {
        throw CapExceeded("neighborhood of radius " + std::to_string(r) + " around a length-" +
                          std::to_string(x.size()) + " sequence exceeds the cap of " + std::to_string(cap));
    }
    const auto alphabet = static_cast<Token>(x.alphabet().size);
    std::unordered_set<std::vector<Token>, TokenSeqHash> seen{x.tokens()};
    std::vector<std::vector<TokenSeq>> layers{{x}};
    std::vector<Token> buf;

    auto visit = [&](std::vector<TokenSeq>& next) {
        if (seen.size() >= cap) throw CapExceeded("neighborhood exceeds the cap of " + std::to_string(cap));
        if (seen.insert(buf).second) next.emplace_back(buf, x.alphabet());
    };

    for (std::size_t d = 1; d <= r; ++d) {
        std::vector<TokenSeq> next;
        for (const TokenSeq& s : layers.back()) {
            const auto& t = s.tokens();
            if (ops.del) {
                for (std::size_t i = 0; i < t.size(); ++i) {
                    buf.assign(t.begin(), t.end());
                    buf.erase(buf.begin() + static_cast<std::ptrdiff_t>(i));
                    visit(next);
                }
            }
            if (ops.sub) {
                for (std::size_t i = 0; i < t.size(); ++i) {
                    for (Token c = 0; c < alphabet; ++c) {
                        if (c == t[i]) continue;
                        buf.assign(t.begin(), t.end());
                        buf[i] = c;
                        visit(next);
                    }
                }
            }
            if (ops.ins) {
                for (std::size_t i = 0; i <= t.size(); ++i) {
                    for (Token c = 0; c < alphabet; ++c) {
                        buf.assign(t.begin(), t.end());
                        buf.insert(buf.begin() + static_cast<std::ptrdiff_t>(i), c);
                        visit(next);
                    }
                }
            }
        }
        if (next.empty()) break;
        layers.push_back(std::move(next));
    }
    return layers;
}

/// The set {x' : d_O(x, x') <= r} (ops transform x into x'), deduplicated and
/// ordered by distance from x.
inline std::vector<TokenSeq> enumerate_neighborhood(const TokenSeq& x, std::size_t r, EditOpSet ops,
                                                    std::size_t cap = kDefaultNeighborhoodCap) {
    std::vector<TokenSeq> out;
    for (auto& layer : neighborhood_layers(x, r, ops, cap))
        for (auto& s : layer) out.push_back(std::move(s));
    return out;
}

}  // namespace editcert
