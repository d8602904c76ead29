#pragma once
// Monte Carlo certification of a smoothed classifier.
//
//   1. draw n_pred perturbations, tally votes, predict argmax(mu_hat - eta)
//   2. draw n_bnd fresh perturbations, lower-bound the predicted class's
//      confidence with a one-sided Clopper-Pearson bound at level alpha
//   3. abstain when the bound is below eta of the predicted class; otherwise
//      report the certified radius for each requested op set
//
// Prediction draws use sample indices [0, n_pred) and bound draws use
// [n_pred, n_pred + n_bnd) of one master seed, so results do not depend on
// how queries are scheduled across threads.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "editcert/certify.hpp"
#include "editcert/classifier.hpp"
#include "editcert/random.hpp"
#include "editcert/smoothing.hpp"

namespace editcert {

struct SmoothingConfig {
    Mechanism mechanism = DeletionMechanism(0.99);
    std::size_t n_pred = 1000;
    std::size_t n_bnd = 4000;
    double alpha = 0.05;
    std::vector<double> eta = {0.0, 0.0};

    std::size_t num_classes() const noexcept { return eta.size(); }

    void validate() const {
        if (eta.size() < 2) throw std::invalid_argument("need decision thresholds for at least two classes");
        if (n_pred == 0 || n_bnd == 0) throw std::invalid_argument("sample sizes must be positive");
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    }
};

struct OpSetRadius {
    EditOpSet ops;
    Radius radius;
};

struct CertifiedVerdict {
    ClassIndex predicted = 0;  // argmax of the prediction sample, reported even when abstaining
    bool abstain = false;
    double mu_hat = 0.0;       // empirical confidence of `predicted` in the prediction sample
    double mu_lcb = 0.0;       // lower confidence bound from the bound sample
    double nu = 0.0;
    std::vector<OpSetRadius> radii;
    std::uint64_t master_seed = 0;
    std::size_t n_pred = 0;
    std::size_t n_bnd = 0;

    std::optional<ClassIndex> prediction() const {
        return abstain ? std::nullopt : std::optional<ClassIndex>(predicted);
    }

    Radius radius(EditOpSet ops) const {
        for (const auto& r : radii)
            if (r.ops == ops) return r.radius;
        return Radius::not_certifiable();
    }
};

/// argmax_y (score_y - eta_y), ties broken toward the lowest class index.
inline ClassIndex thresholded_argmax(std::span<const double> score, std::span<const double> eta) {
    ClassIndex best = 0;
    for (ClassIndex y = 1; y < score.size(); ++y)
        if (score[y] - eta[y] > score[best] - eta[best]) best = y;
    return best;
}

struct TallyOptions {
    std::size_t threads = 1;
    std::size_t block = 64;
};

/// Votes of the base classifier over perturbations with sample indices
/// [first, first + count) of `master_seed`.
inline std::vector<std::uint64_t> tally_votes(const TokenSeq& x, BaseClassifier& base, const Mechanism& mech,
                                              std::uint64_t master_seed, std::uint64_t first, std::size_t count,
                                              const TallyOptions& opts = {}) {
    const std::size_t k = base.num_classes();
    const std::size_t block = std::max<std::size_t>(1, opts.block);
    const std::size_t num_blocks = (count + block - 1) / block;

    std::size_t workers = std::max<std::size_t>(1, opts.threads);
    if (base.max_concurrency() != 0) workers = std::min(workers, base.max_concurrency());
    workers = std::min(workers, std::max<std::size_t>(1, num_blocks));

    std::vector<std::vector<std::uint64_t>> partial(workers, std::vector<std::uint64_t>(k, 0));
    std::atomic<std::size_t> next_block{0};
    std::mutex err_mu;
    std::optional<std::pair<std::size_t, std::exception_ptr>> first_error;

    auto work = [&](std::size_t w) {
        std::vector<TokenSeq> batch;
        std::vector<ClassIndex> labels;
        for (std::size_t b = next_block++; b < num_blocks; b = next_block++) {
            const std::size_t begin = b * block;
            const std::size_t end = std::min(count, begin + block);
            batch.clear();
            for (std::size_t i = begin; i < end; ++i)
                batch.push_back(sample_perturbation(x, mech, SeedSpec{master_seed, first + i}));
            labels.assign(batch.size(), 0);
            try {
                base.query_batch(batch, labels);
                for (std::size_t i = 0; i < labels.size(); ++i) {
                    if (labels[i] >= k)
                        throw QueryError("base classifier returned class " + std::to_string(labels[i]) +
                                             " but only " + std::to_string(k) + " classes exist",
                                         first + begin + i);
                    ++partial[w][labels[i]];
                }
            } catch (const QueryError& e) {
                std::lock_guard lock(err_mu);
                if (!first_error || e.sample_index() < first_error->first)
                    first_error.emplace(e.sample_index(), std::current_exception());
                return;
            } catch (const std::exception& e) {
                std::lock_guard lock(err_mu);
                const std::size_t at = first + begin;
                if (!first_error || at < first_error->first)
                    first_error.emplace(at, std::make_exception_ptr(QueryError(
                                                std::string("base classifier query failed at sample ") +
                                                    std::to_string(at) + ": " + e.what(),
                                                at)));
                return;
            }
        }
    };

    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    }
    if (first_error) std::rethrow_exception(first_error->second);

    std::vector<std::uint64_t> votes(k, 0);
    for (const auto& p : partial)
        for (std::size_t c = 0; c < k; ++c) votes[c] += p[c];
    return votes;
}

/// Certified prediction for x. Deterministic given `master_seed`.
inline CertifiedVerdict certify(const TokenSeq& x, BaseClassifier& base, const SmoothingConfig& cfg,
                                std::span<const EditOpSet> ops_list, std::uint64_t master_seed,
                                const TallyOptions& opts = {}) {
    cfg.validate();
    if (base.num_classes() != cfg.num_classes())
        throw std::invalid_argument("classifier has " + std::to_string(base.num_classes()) +
                                    " classes but " + std::to_string(cfg.num_classes()) + " thresholds were given");
    if (std::holds_alternative<AblationMechanism>(cfg.mechanism) && x.empty())
        throw std::invalid_argument("ablation cannot certify an empty sequence");

    CertifiedVerdict v;
    v.master_seed = master_seed;
    v.n_pred = cfg.n_pred;
    v.n_bnd = cfg.n_bnd;

    const auto pred_votes = tally_votes(x, base, cfg.mechanism, master_seed, 0, cfg.n_pred, opts);
    std::vector<double> mu_hat(pred_votes.size());
    for (std::size_t c = 0; c < mu_hat.size(); ++c)
        mu_hat[c] = static_cast<double>(pred_votes[c]) / static_cast<double>(cfg.n_pred);
    v.predicted = thresholded_argmax(mu_hat, cfg.eta);
    v.mu_hat = mu_hat[v.predicted];

    const auto bnd_votes = tally_votes(x, base, cfg.mechanism, master_seed, cfg.n_pred, cfg.n_bnd, opts);
    v.mu_lcb = binomial_lcb(bnd_votes[v.predicted], cfg.n_bnd, cfg.alpha);
    v.nu = nu_threshold(cfg.eta, v.predicted);
    v.abstain = v.mu_lcb < cfg.eta[v.predicted];

    for (const EditOpSet& ops : ops_list) {
        Radius r = Radius::not_certifiable();
        if (!v.abstain && v.nu >= 0.0) {
            if (const auto* del = std::get_if<DeletionMechanism>(&cfg.mechanism)) {
                r = certified_radius(v.mu_lcb, v.nu, del->p_del(), ops);
            } else if (ops == EditOpSet::hamming()) {
                const auto& abn = std::get<AblationMechanism>(cfg.mechanism);
                r = abn_certified_radius(v.mu_lcb, v.nu, abn.p_ab(), x.size());
            }
        }
        v.radii.push_back({ops, r});
    }
    return v;
}

}  // namespace editcert
