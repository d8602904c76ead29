#pragma once
// Certificate mathematics for deletion smoothing (and the ablation baseline).
//
// Given the confidence mu of the predicted class and the threshold nu derived
// from the decision thresholds eta, the certified radius for each edit-op set
// is the largest r for which the worst-case confidence lower bound over the
// radius-r ball stays at or above nu:
//
//   O = {ins}                 floor(log((1 - mu) / (1 - nu)) / log p_del)
//   O = {del}, {del, ins}     floor(log(nu / mu) / log p_del)
//   O containing sub          floor(log(1 + nu - mu) / log p_del)
//
// Op-set direction: the ball around x is {x~ : ops turn x~ into x within r
// steps}, so the {ins} row covers adversaries that only delete from x.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "editcert/seqcore.hpp"
#include "editcert/smoothing.hpp"

namespace editcert {

using ClassIndex = std::size_t;

/// Certified radius: a finite number of edits, unbounded, or no certificate.
class Radius {
public:
    enum class Kind { Finite, Unbounded, NotCertifiable };

    static constexpr Radius finite(std::uint64_t r) noexcept { return Radius(Kind::Finite, r); }
    static constexpr Radius unbounded() noexcept { return Radius(Kind::Unbounded, 0); }
    static constexpr Radius not_certifiable() noexcept { return Radius(Kind::NotCertifiable, 0); }

    constexpr Kind kind() const noexcept { return kind_; }
    constexpr bool is_finite() const noexcept { return kind_ == Kind::Finite; }
    constexpr bool is_unbounded() const noexcept { return kind_ == Kind::Unbounded; }
    constexpr bool certified() const noexcept { return kind_ != Kind::NotCertifiable; }
    constexpr std::uint64_t value() const {
        if (kind_ != Kind::Finite) throw std::logic_error("radius is not finite");
        return value_;
    }

    /// True when a ball of radius r is covered.
    constexpr bool covers(std::uint64_t r) const noexcept {
        return kind_ == Kind::Unbounded || (kind_ == Kind::Finite && value_ >= r);
    }

    std::string to_string() const {
        switch (kind_) {
            case Kind::Finite: return std::to_string(value_);
            case Kind::Unbounded: return "unbounded";
            default: return "none";
        }
    }

    friend constexpr bool operator==(const Radius&, const Radius&) = default;

private:
    constexpr Radius(Kind k, std::uint64_t v) : kind_(k), value_(v) {}
    Kind kind_;
    std::uint64_t value_;
};

/// Guard added before flooring so that quotients landing exactly on an
/// integer are not rounded down by one ulp.
inline constexpr long double kFloorGuard = 1e-12L;

/// The confidence level class y must provably keep for the certificate to
/// hold, as a function of the per-class decision thresholds.
inline double nu_threshold(std::span<const double> eta, ClassIndex y) {
    const std::size_t k = eta.size();
    if (k < 2) throw std::invalid_argument("need at least two classes");
    if (y >= k) throw std::out_of_range("class index " + std::to_string(y) + " out of range");
    double min_other = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
        if (c != y) min_other = std::min(min_other, eta[c]);
    const double gap = eta[y] - min_other;
    if (k == 2) return (1.0 + gap) / 2.0;
    return gap >= 0.0 ? 0.5 + gap : 1.0 + gap;
}

/// Table lookup of the certified radius for confidence mu, threshold nu,
/// deletion probability p_del and op set `ops`.
inline Radius certified_radius(double mu, double nu, double p_del, EditOpSet ops) {
    if (!(p_del > 0.0 && p_del < 1.0)) throw std::invalid_argument("p_del must lie in (0, 1)");
    if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("mu must lie in [0, 1]");
    if (!(nu >= 0.0)) throw std::invalid_argument("nu must be non-negative");
    if (!ops.valid()) throw std::invalid_argument("edit op set must contain at least one op");
    if (nu > 1.0 || mu < nu) return Radius::not_certifiable();

    long double arg = 0;
    if (ops.sub) {
        arg = 1.0L + static_cast<long double>(nu) - static_cast<long double>(mu);
    } else if (ops.del) {
        if (mu == 0.0) return Radius::unbounded();  // nu == 0: bound p^r * 0 >= 0 always
        arg = static_cast<long double>(nu) / static_cast<long double>(mu);
    } else {
        if (mu == 1.0) return Radius::unbounded();
        arg = (1.0L - static_cast<long double>(mu)) / (1.0L - static_cast<long double>(nu));
    }
    if (arg <= 0.0L) return Radius::unbounded();
    const long double q = std::log(arg) / std::log(static_cast<long double>(p_del));
    const long double r = std::floor(q + kFloorGuard);
    if (r < 0.0L) return Radius::not_certifiable();
    return Radius::finite(static_cast<std::uint64_t>(r));
}

/// Pointwise confidence lower bound for an input reachable by n_sub
/// substitutions, n_ins insertions and n_del deletions (edits turning the
/// perturbed input back into x). May be negative, i.e. vacuous.
inline double rho_bound(double mu, double p_del, std::uint64_t n_sub, std::uint64_t n_ins, std::uint64_t n_del) {
    const long double p = p_del;
    const long double scale = std::pow(p, static_cast<long double>(n_del) - static_cast<long double>(n_ins));
    return static_cast<double>(scale * (static_cast<long double>(mu) - 1.0L +
                                        std::pow(p, static_cast<long double>(n_sub + n_ins))));
}

/// Confidence lower bound at x~ in terms of lengths and the LCS distance:
/// p^(|x~| - |x|) * (mu - 1 + p^((d_lcs + |x| - |x~|) / 2)).
inline double theorem1_bound(double mu, double p_del, std::size_t len_x, std::size_t len_xt, std::size_t d_lcs) {
    const auto lx = static_cast<long long>(len_x);
    const auto lt = static_cast<long long>(len_xt);
    const auto d = static_cast<long long>(d_lcs);
    if (d < std::llabs(lx - lt) || (d + lx - lt) % 2 != 0 || d > lx + lt)
        throw std::invalid_argument("inconsistent LCS distance " + std::to_string(d_lcs) + " for lengths " +
                                    std::to_string(len_x) + " and " + std::to_string(len_xt));
    const long double p = p_del;
    const long double outer = std::pow(p, static_cast<long double>(lt - lx));
    const long double inner = std::pow(p, static_cast<long double>((d + lx - lt) / 2));
    return static_cast<double>(outer * (static_cast<long double>(mu) - 1.0L + inner));
}

namespace detail {

using Rational = boost::multiprecision::cpp_rational;

/// C(n - r, k) / C(n, k) = prod_{j=1..r} (n - k - j + 1) / (n - j + 1), exact.
inline Rational ablation_ratio(std::size_t n, std::size_t k, std::size_t r) {
    if (r + k > n) return Rational(0);
    boost::multiprecision::cpp_int num = 1, den = 1;
    for (std::size_t j = 1; j <= r; ++j) {
        num *= n - k - j + 1;
        den *= n - j + 1;
    }
    return Rational(num, den);
}

inline long double ablation_log_ratio(std::size_t n, std::size_t k, std::size_t r) {
    long double s = 0;
    for (std::size_t j = 1; j <= r; ++j)
        s += std::log(static_cast<long double>(n - k - j + 1)) - std::log(static_cast<long double>(n - j + 1));
    return s;
}

}  // namespace detail

/// Length above which ablation ratios switch from exact rationals to log space.
inline constexpr std::size_t kExactAblationLength = 10'000;

/// Hamming radius for the ablation mechanism: the largest r in [0, len - k]
/// with mu - 1 + C(len - r, k) / C(len, k) >= nu, by binary search on the
/// non-increasing left side.
inline Radius abn_certified_radius(double mu, double nu, double p_ab, std::size_t len) {
    if (len == 0) throw std::invalid_argument("ablation certificate needs a non-empty input");
    const AblationMechanism mech(p_ab);
    const std::size_t k = mech.retained_count(len);
    // ratio >= 1 + nu - mu, compared exactly when feasible
    const double target = 1.0 + nu - mu;
    auto holds = [&](std::size_t r) {
        if (len <= kExactAblationLength) {
            return detail::ablation_ratio(len, k, r) >= detail::Rational(1) + detail::Rational(nu) - detail::Rational(mu);
        }
        if (target <= 0.0) return true;
        return detail::ablation_log_ratio(len, k, r) + kFloorGuard >= std::log(static_cast<long double>(target));
    };
    if (!holds(0)) return Radius::not_certifiable();
    std::size_t lo = 0, hi = len - k;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo + 1) / 2;
        if (holds(mid)) lo = mid;
        else hi = mid - 1;
    }
    return Radius::finite(lo);
}

/// Upper tail Pr[Bin(n, p) >= k] via the regularized incomplete beta.
inline double binomial_upper_tail(std::uint64_t k, std::uint64_t n, double p) {
    if (k == 0) return 1.0;
    if (k > n) return 0.0;
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return 1.0;
    return boost::math::ibeta(static_cast<double>(k), static_cast<double>(n - k + 1), p);
}

/// One-sided Clopper-Pearson lower confidence bound for a binomial proportion:
/// the p with Pr[Bin(n, p) >= k] = alpha (0 when k = 0), by bisection to an
/// absolute tolerance of 1e-12. The lower end of the final bracket is
/// returned, so the bound errs low.
inline double binomial_lcb(std::uint64_t k, std::uint64_t n, double alpha) {
    if (n == 0) throw std::invalid_argument("binomial_lcb needs n >= 1");
    if (k > n) throw std::invalid_argument("binomial_lcb: k exceeds n");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (k == 0) return 0.0;
    double lo = 0.0, hi = 1.0;
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        if (binomial_upper_tail(k, n, mid) < alpha) lo = mid;
        else hi = mid;
    }
    return lo;
}

}  // namespace editcert
