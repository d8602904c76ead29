#pragma once
// Generators and slow reference implementations shared by the tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <vector>

#include "editcert/certify.hpp"
#include "editcert/random.hpp"
#include "editcert/seqcore.hpp"

namespace testsupport {

using editcert::Alphabet;
using editcert::CounterRng;
using editcert::Token;
using editcert::TokenSeq;

inline TokenSeq random_seq(CounterRng& rng, std::size_t max_len, std::size_t alphabet, std::size_t min_len = 0) {
    const std::size_t len = min_len + rng.below(max_len - min_len + 1);
    std::vector<Token> t(len);
    for (auto& v : t) v = static_cast<Token>(rng.below(alphabet));
    return TokenSeq(std::move(t), Alphabet(alphabet));
}

/// Every subsequence of `s` (as index masks), deduplicated.
inline std::set<std::vector<Token>> all_subsequences(const TokenSeq& s) {
    std::set<std::vector<Token>> out;
    const std::size_t n = s.size();
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        std::vector<Token> sub;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1) sub.push_back(s[i]);
        out.insert(std::move(sub));
    }
    return out;
}

/// LCS length by intersecting subsequence sets.
inline std::size_t brute_lcs(const TokenSeq& a, const TokenSeq& b) {
    const auto sa = all_subsequences(a);
    const auto sb = all_subsequences(b);
    std::size_t best = 0;
    for (const auto& s : sa)
        if (s.size() > best && sb.count(s)) best = s.size();
    return best;
}

/// LCS length by the exponential recursive definition.
inline std::size_t recursive_lcs(const std::vector<Token>& a, std::size_t i, const std::vector<Token>& b, std::size_t j) {
    if (i == a.size() || j == b.size()) return 0;
    if (a[i] == b[j]) return 1 + recursive_lcs(a, i + 1, b, j + 1);
    return std::max(recursive_lcs(a, i + 1, b, j), recursive_lcs(a, i, b, j + 1));
}

/// Sequences reachable from x by exactly one allowed op.
inline std::set<std::vector<Token>> one_step(const std::vector<Token>& x, editcert::EditOpSet ops, std::size_t alphabet) {
    std::set<std::vector<Token>> out;
    if (ops.del)
        for (std::size_t i = 0; i < x.size(); ++i) {
            auto y = x;
            y.erase(y.begin() + static_cast<std::ptrdiff_t>(i));
            out.insert(std::move(y));
        }
    if (ops.ins)
        for (std::size_t i = 0; i <= x.size(); ++i)
            for (Token t = 0; t < alphabet; ++t) {
                auto y = x;
                y.insert(y.begin() + static_cast<std::ptrdiff_t>(i), t);
                out.insert(std::move(y));
            }
    if (ops.sub)
        for (std::size_t i = 0; i < x.size(); ++i)
            for (Token t = 0; t < alphabet; ++t) {
                if (t == x[i]) continue;
                auto y = x;
                y[i] = t;
                out.insert(std::move(y));
            }
    return out;
}

/// Ball of radius r by repeated one-step expansion (no distance computation).
inline std::set<std::vector<Token>> brute_ball(const TokenSeq& x, std::size_t r, editcert::EditOpSet ops) {
    std::set<std::vector<Token>> ball{x.tokens()};
    std::set<std::vector<Token>> frontier = ball;
    for (std::size_t d = 0; d < r; ++d) {
        std::set<std::vector<Token>> next;
        for (const auto& s : frontier)
            for (auto& y : one_step(s, ops, x.alphabet().size))
                if (!ball.count(y)) next.insert(y);
        ball.insert(next.begin(), next.end());
        frontier = std::move(next);
    }
    return ball;
}


/// Whether every edit-count decomposition with total <= r allowed by `ops`
/// keeps the pointwise confidence bound at or above nu.
inline bool brute_force_certifies(double mu, double nu, double p, editcert::EditOpSet ops, std::uint64_t r) {
    for (std::uint64_t s = 0; s <= (ops.sub ? r : 0); ++s)
        for (std::uint64_t i = 0; i <= (ops.ins ? r - s : 0); ++i)
            for (std::uint64_t d = 0; d <= (ops.del ? r - s - i : 0); ++d)
                if (editcert::rho_bound(mu, p, s, i, d) < nu - 1e-12) return false;
    return true;
}

/// Pr[Bin(n, p) >= k] by direct summation of log-space terms.
inline long double exact_upper_tail(std::uint64_t k, std::uint64_t n, long double p) {
    long double s = 0;
    for (std::uint64_t i = k; i <= n; ++i) {
        const long double lt = std::lgamma(static_cast<long double>(n) + 1) - std::lgamma(static_cast<long double>(i) + 1) -
                               std::lgamma(static_cast<long double>(n - i) + 1) + static_cast<long double>(i) * std::log(p) +
                               static_cast<long double>(n - i) * std::log1p(-p);
        s += std::exp(lt);
    }
    return s;
}

}  // namespace testsupport
