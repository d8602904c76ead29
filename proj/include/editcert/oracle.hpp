#pragma once
// Ground truth for small instances: exact smoothed confidences by
// enumeration, exhaustive checks of certificates over whole neighborhoods,
// and the pointwise confidence bound checked against exact values.

#include <charconv>
#include <cstddef>
#include <cstdlib>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "editcert/certify.hpp"
#include "editcert/classifier.hpp"
#include "editcert/neighborhood.hpp"
#include "editcert/pipeline.hpp"
#include "editcert/random.hpp"
#include "editcert/smoothing.hpp"

namespace editcert {

/// Exact per-class confidences of the smoothed classifier at one input.
struct ExactConfidence {
    std::vector<double> mu;

    ClassIndex argmax(std::span<const double> eta) const { return thresholded_argmax(mu, eta); }
};

/// mu_y = sum over deletion outcomes z of Pr[z] * [base(z) = y], using the
/// deduplicated output distribution so each distinct z is queried once.
inline ExactConfidence exact_confidence(const TokenSeq& x, BaseClassifier& base, const DeletionMechanism& mech) {
    std::vector<long double> acc(base.num_classes(), 0.0L);
    for (const auto& [tokens, prob] : exact_deletion_distribution(x, mech)) {
        const ClassIndex y = base.query(TokenSeq(tokens, x.alphabet()));
        if (y >= acc.size()) throw std::out_of_range("base classifier returned an invalid class");
        acc[y] += prob;
    }
    ExactConfidence out;
    for (long double v : acc) out.mu.push_back(static_cast<double>(v));
    return out;
}

/// A uniformly random classifier over all sequences, realized by hashing the
/// sequence with a per-table seed: equivalent to a lookup table materialized
/// lazily over every length. With `bias` b, class `favored` is returned with
/// probability b and the remaining mass is spread evenly over other classes.
class RandomTableClassifier final : public BaseClassifier {
public:
    RandomTableClassifier(std::uint64_t seed, std::size_t num_classes, double bias = 0.0, ClassIndex favored = 0)
        : seed_(seed), num_classes_(num_classes), bias_(bias), favored_(favored) {
        if (num_classes < 2) throw std::invalid_argument("need at least two classes");
    }

    std::size_t num_classes() const override { return num_classes_; }
    std::size_t max_concurrency() const override { return 0; }

    ClassIndex query(const TokenSeq& x) override {
        std::uint64_t h = derive_seed(seed_, x.size());
        for (Token t : x.tokens()) h = derive_seed(h, t);
        CounterRng rng(h);
        const double u = rng.uniform();
        if (bias_ > 0.0) {
            if (u < bias_) return favored_;
            const double rest = (u - bias_) / (1.0 - bias_);
            auto k = static_cast<ClassIndex>(rest * static_cast<double>(num_classes_ - 1));
            if (k >= num_classes_ - 1) k = num_classes_ - 2;
            return k >= favored_ ? k + 1 : k;
        }
        auto k = static_cast<ClassIndex>(u * static_cast<double>(num_classes_));
        return k >= num_classes_ ? num_classes_ - 1 : k;
    }

private:
    std::uint64_t seed_;
    std::size_t num_classes_;
    double bias_;
    ClassIndex favored_;
};

struct SoundnessOptions {
    std::size_t max_verify_radius = 4;  // unbounded or larger radii are checked up to here
    std::size_t frontier_extra = 2;     // search this far past r* for the first flip
    std::size_t cap = 200'000;
};

struct SoundnessReport {
    bool pass = true;
    ClassIndex prediction = 0;
    double mu = 0.0;
    double nu = 0.0;
    Radius radius = Radius::not_certifiable();
    std::size_t verified_radius = 0;         // ball radius actually enumerated for the check
    std::size_t neighbors_checked = 0;
    std::optional<std::size_t> flip_frontier;  // smallest radius with a differing prediction, if found
    std::size_t frontier_searched = 0;         // radius up to which the frontier search ran
    std::optional<TokenSeq> counterexample;
};

/// Computes the certificate from exact confidences and checks it against
/// every neighbor in the certified ball. The ball for op set O is
/// {x~ : O turns x~ into x in at most r steps}, enumerated from x with the
/// dual ops.
inline SoundnessReport verify_certificate_soundness(const TokenSeq& x, BaseClassifier& base,
                                                    const DeletionMechanism& mech, std::span<const double> eta,
                                                    EditOpSet ops, const SoundnessOptions& opts = {}) {
    if (eta.size() != base.num_classes()) throw std::invalid_argument("eta size must match the class count");
    std::unordered_map<std::vector<Token>, ClassIndex, TokenSeqHash> cache;
    auto smoothed = [&](const TokenSeq& s) {
        auto it = cache.find(s.tokens());
        if (it != cache.end()) return it->second;
        const ClassIndex y = exact_confidence(s, base, mech).argmax(eta);
        cache.emplace(s.tokens(), y);
        return y;
    };

    SoundnessReport rep;
    const ExactConfidence conf = exact_confidence(x, base, mech);
    rep.prediction = conf.argmax(eta);
    rep.mu = conf.mu[rep.prediction];
    rep.nu = nu_threshold(eta, rep.prediction);
    cache.emplace(x.tokens(), rep.prediction);
    if (rep.nu < 0.0 || rep.nu > 1.0) return rep;
    rep.radius = certified_radius(rep.mu, rep.nu, mech.p_del(), ops);

    std::size_t check = 0;
    if (rep.radius.is_unbounded()) check = opts.max_verify_radius;
    else if (rep.radius.is_finite()) check = std::min<std::size_t>(rep.radius.value(), opts.max_verify_radius);
    rep.verified_radius = rep.radius.certified() ? check : 0;
    const std::size_t search = (rep.radius.certified() ? check : 0) + opts.frontier_extra;

    const auto layers = neighborhood_layers(x, search, ops.dual(), opts.cap);
    rep.frontier_searched = std::min(search, layers.size() - 1);
    for (std::size_t d = 0; d < layers.size(); ++d) {
        for (const TokenSeq& s : layers[d]) {
            const bool in_ball = rep.radius.certified() && d <= check;
            if (in_ball) ++rep.neighbors_checked;
            if (smoothed(s) != rep.prediction) {
                if (!rep.flip_frontier) rep.flip_frontier = d;
                if (in_ball) {
                    rep.pass = false;
                    rep.counterexample = s;
                    return rep;
                }
                break;
            }
        }
        if (rep.flip_frontier) break;
    }
    return rep;
}

struct Theorem1Check {
    ClassIndex y = 0;
    double exact = 0.0;  // exact confidence of class y at x~
    double bound = 0.0;  // lower bound derived from x's confidence and the LCS distance
};

/// Exact confidence at x~ of the class predicted at x, next to its lower
/// bound. The bound must never exceed the exact value.
inline Theorem1Check check_theorem1(const TokenSeq& x, const TokenSeq& x_tilde, BaseClassifier& base,
                                    const DeletionMechanism& mech, std::span<const double> eta = {}) {
    constexpr std::size_t kCap = 14;
    if (x.size() > kCap || x_tilde.size() > kCap)
        throw CapExceeded("check_theorem1 supports sequences of length at most 14");
    std::vector<double> zeros(base.num_classes(), 0.0);
    if (eta.empty()) eta = zeros;
    const ExactConfidence at_x = exact_confidence(x, base, mech);
    Theorem1Check out;
    out.y = at_x.argmax(eta);
    out.exact = exact_confidence(x_tilde, base, mech).mu[out.y];
    out.bound = theorem1_bound(at_x.mu[out.y], mech.p_del(), x.size(), x_tilde.size(), lcs_distance(x, x_tilde));
    return out;
}

/// The decimal value a double was written as (its shortest round-trip
/// representation), e.g. 0.95 -> 19/20 rather than the nearest binary fraction.
inline detail::Rational decimal_rational(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific);
    const std::string text(buf, res.ptr);
    const std::size_t e = text.find('e');
    std::string digits;
    for (char c : text.substr(0, e))
        if (c != '.' && c != '-') digits.push_back(c);
    long long exp10 = std::stoll(text.substr(e + 1)) - static_cast<long long>(digits.size() - 1);
    boost::multiprecision::cpp_int num(digits), scale = 1;
    for (long long i = 0; i < std::llabs(exp10); ++i) scale *= 10;
    detail::Rational out = exp10 >= 0 ? detail::Rational(num * scale) : detail::Rational(num, scale);
    return v < 0 ? detail::Rational(-out) : out;
}

/// Hamming-ball confidence bounds for deletion (mu - 1 + p^r) and ablation
/// (mu - 1 + C(n - r, k) / C(n, k)) at equal strength p; deletion must be at
/// least as tight. Compared exactly in rational arithmetic.
inline bool deletion_dominates_ablation(double p, std::size_t len, std::size_t r) {
    const AblationMechanism abn(p);
    const std::size_t k = abn.retained_count(len);
    const detail::Rational prat = decimal_rational(p);
    detail::Rational del_term = 1;
    for (std::size_t i = 0; i < r; ++i) del_term *= prat;
    return del_term >= detail::ablation_ratio(len, k, r);
}

}  // namespace editcert
