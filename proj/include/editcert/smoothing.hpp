#pragma once
// Smoothing mechanisms: randomized deletion (each token deleted i.i.d.) and
// randomized ablation (all but a uniform size-k subset replaced by a null
// token). Both sample deterministically from a SeedSpec.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "editcert/random.hpp"
#include "editcert/seqcore.hpp"

namespace editcert {

class DeletionMechanism {
public:
    explicit DeletionMechanism(double p_del) : p_del_(p_del) {
        if (!(p_del > 0.0 && p_del < 1.0))
            throw std::invalid_argument("deletion probability must lie in (0, 1), got " + std::to_string(p_del));
    }
    double p_del() const noexcept { return p_del_; }

private:
    double p_del_;
};

class AblationMechanism {
public:
    /// The null token is the first value outside the base alphabet; ablated
    /// outputs live over an alphabet one larger than the input's.
    explicit AblationMechanism(double p_ab) : p_ab_(p_ab) {
        if (!(p_ab > 0.0 && p_ab < 1.0))
            throw std::invalid_argument("ablation fraction must lie in (0, 1), got " + std::to_string(p_ab));
    }
    double p_ab() const noexcept { return p_ab_; }

    /// ceil((1 - p_ab) n), clamped to [1, n] for n >= 1. The small offset keeps
    /// products like (1 - 0.7) * 10 = 3.0000000000000004 from rounding up.
    std::size_t retained_count(std::size_t n) const noexcept {
        if (n == 0) return 0;
        auto k = static_cast<std::size_t>(std::ceil((1.0 - p_ab_) * static_cast<double>(n) - 1e-9));
        return std::clamp<std::size_t>(k, 1, n);
    }

    static Token null_token(Alphabet base) noexcept { return static_cast<Token>(base.size); }
    static Alphabet output_alphabet(Alphabet base) { return Alphabet(base.size + 1); }

private:
    double p_ab_;
};

using Mechanism = std::variant<DeletionMechanism, AblationMechanism>;

inline double mechanism_strength(const Mechanism& m) {
    return std::visit(
        [](const auto& mech) {
            if constexpr (std::is_same_v<std::decay_t<decltype(mech)>, DeletionMechanism>) return mech.p_del();
            else return mech.p_ab();
        },
        m);
}

/// Keeps each token independently with probability 1 - p_del, in order.
inline TokenSeq sample_deletion(const TokenSeq& x, const DeletionMechanism& mech, SeedSpec seed) {
    CounterRng rng(seed);
    const double keep = 1.0 - mech.p_del();
    std::vector<Token> out;
    out.reserve(static_cast<std::size_t>(static_cast<double>(x.size()) * keep) + 8);
    for (Token t : x.tokens())
        if (rng.bernoulli(keep)) out.push_back(t);
    return TokenSeq(std::move(out), x.alphabet());
}

/// Training-time variant: when fewer than min(min_preserved, |x|) tokens
/// survive, uniformly chosen deleted positions are restored until the floor
/// is met. Never use for certification draws.
inline TokenSeq sample_deletion_with_floor(const TokenSeq& x, const DeletionMechanism& mech, SeedSpec seed,
                                           std::size_t min_preserved) {
    CounterRng rng(seed);
    const double keep = 1.0 - mech.p_del();
    std::vector<char> kept(x.size(), 0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        kept[i] = rng.bernoulli(keep) ? 1 : 0;
        count += static_cast<std::size_t>(kept[i]);
    }
    const std::size_t floor = std::min(min_preserved, x.size());
    if (count < floor) {
        std::vector<std::size_t> dropped;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!kept[i]) dropped.push_back(i);
        for (std::size_t i = 0; i < floor - count; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(dropped.size() - i));
            std::swap(dropped[i], dropped[j]);
            kept[dropped[i]] = 1;
        }
    }
    std::vector<Token> out;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (kept[i]) out.push_back(x[i]);
    return TokenSeq(std::move(out), x.alphabet());
}

/// Retains a uniformly random size-k(|x|) subset of positions; every other
/// position carries the null token.
inline TokenSeq sample_ablation(const TokenSeq& x, const AblationMechanism& mech, SeedSpec seed) {
    if (x.empty()) throw std::invalid_argument("ablation requires a non-empty sequence");
    CounterRng rng(seed);
    const Token null = AblationMechanism::null_token(x.alphabet());
    std::vector<Token> out(x.size(), null);
    for (std::size_t i : sample_subset(x.size(), mech.retained_count(x.size()), rng)) out[i] = x[i];
    return TokenSeq(std::move(out), AblationMechanism::output_alphabet(x.alphabet()));
}

inline TokenSeq sample_perturbation(const TokenSeq& x, const Mechanism& mech, SeedSpec seed) {
    return std::visit(
        [&](const auto& m) {
            if constexpr (std::is_same_v<std::decay_t<decltype(m)>, DeletionMechanism>)
                return sample_deletion(x, m, seed);
            else
                return sample_ablation(x, m, seed);
        },
        mech);
}

inline constexpr std::size_t kExactLengthCap = 20;

/// Output distribution of the deletion mechanism by enumerating all 2^|x|
/// retained-index sets. Keys are distinct output token vectors.
inline std::map<std::vector<Token>, double> exact_deletion_distribution(const TokenSeq& x,
                                                                         const DeletionMechanism& mech) {
    if (x.size() > kExactLengthCap)
        throw CapExceeded("exact deletion distribution is limited to length " + std::to_string(kExactLengthCap));
    const std::size_t n = x.size();
    const long double p = mech.p_del();
    const long double q = 1.0L - p;
    std::vector<long double> pow_p(n + 1, 1.0L), pow_q(n + 1, 1.0L);
    for (std::size_t i = 1; i <= n; ++i) {
        pow_p[i] = pow_p[i - 1] * p;
        pow_q[i] = pow_q[i - 1] * q;
    }
    std::map<std::vector<Token>, long double> acc;
    std::vector<Token> out;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        out.clear();
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1U) out.push_back(x[i]);
        acc[out] += pow_q[out.size()] * pow_p[n - out.size()];
    }
    std::map<std::vector<Token>, double> dist;
    for (auto& [seq, prob] : acc) dist.emplace(seq, static_cast<double>(prob));
    return dist;
}

}  // namespace editcert
