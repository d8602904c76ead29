#pragma once
// Built-in base classifier: logistic regression on the normalized token
// histogram plus a log-length feature. Trained on perturbed inputs so that it
// performs well under smoothing.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "editcert/classifier.hpp"
#include "editcert/pipeline.hpp"
#include "editcert/random.hpp"
#include "editcert/smoothing.hpp"

namespace editcert {

struct LabeledSeq {
    TokenSeq seq;
    ClassIndex label = 0;
};

/// Binary classifier: class 1 iff score >= threshold. Tokens outside the
/// model alphabet (e.g. the ablation null token) are ignored by the
/// histogram but counted by the length feature.
class HistogramModel final : public BaseClassifier {
public:
    explicit HistogramModel(Alphabet alphabet = kByteAlphabet)
        : alphabet_(alphabet), weights_(alphabet.size, 0.0) {}

    Alphabet alphabet() const noexcept { return alphabet_; }
    double threshold() const noexcept { return threshold_; }
    void set_threshold(double t) noexcept { threshold_ = t; }
    std::vector<double>& token_weights() noexcept { return weights_; }
    const std::vector<double>& token_weights() const noexcept { return weights_; }
    double& length_weight() noexcept { return w_len_; }
    double length_weight() const noexcept { return w_len_; }
    double& bias() noexcept { return bias_; }
    double bias() const noexcept { return bias_; }

    static double length_feature(std::size_t len) { return std::log1p(static_cast<double>(len)); }

    /// Summed in token order so the score depends only on the histogram.
    double score(const TokenSeq& x) const {
        std::vector<Token> sorted;
        sorted.reserve(x.size());
        for (Token t : x.tokens())
            if (t < weights_.size()) sorted.push_back(t);
        std::sort(sorted.begin(), sorted.end());
        const std::size_t observed = sorted.size();
        double acc = 0.0;
        for (Token t : sorted) acc += weights_[t];
        const double hist = observed == 0 ? 0.0 : acc / static_cast<double>(observed);
        return hist + w_len_ * length_feature(x.size()) + bias_;
    }

    std::size_t num_classes() const override { return 2; }
    ClassIndex query(const TokenSeq& x) override { return score(x) >= threshold_ ? 1 : 0; }
    std::size_t max_concurrency() const override { return 0; }

    /// "editcert-histmodel v1" text format; zero token weights are omitted.
    void write(std::ostream& out) const {
        out << "editcert-histmodel v1\n";
        out << "alphabet " << alphabet_.size << '\n';
        out << "threshold " << format_double(threshold_) << '\n';
        for (std::size_t t = 0; t < weights_.size(); ++t)
            if (weights_[t] != 0.0) out << "w " << t << ' ' << format_double(weights_[t]) << '\n';
        out << "wlen " << format_double(w_len_) << '\n';
        out << "bias " << format_double(bias_) << '\n';
    }

    static HistogramModel read(std::istream& in) {
        std::string line;
        if (!std::getline(in, line) || strip_cr(line) != "editcert-histmodel v1")
            throw std::invalid_argument("not an editcert histogram model (bad header)");
        std::optional<HistogramModel> model;
        auto require = [&model]() -> HistogramModel& {
            if (!model) throw std::invalid_argument("model file: 'alphabet' must precede weights");
            return *model;
        };
        while (std::getline(in, line)) {
            line = strip_cr(line);
            if (line.empty()) continue;
            std::istringstream fields(line);
            std::string key;
            fields >> key;
            if (key == "alphabet") {
                std::size_t n = 0;
                fields >> n;
                if (!fields || n == 0) throw std::invalid_argument("model file: bad alphabet line");
                model.emplace(Alphabet(n));
            } else if (key == "threshold") {
                require().threshold_ = parse_double(fields);
            } else if (key == "w") {
                std::size_t t = 0;
                fields >> t;
                auto& m = require();
                if (!fields || t >= m.weights_.size()) throw std::invalid_argument("model file: bad weight index");
                m.weights_[t] = parse_double(fields);
            } else if (key == "wlen") {
                require().w_len_ = parse_double(fields);
            } else if (key == "bias") {
                require().bias_ = parse_double(fields);
            } else {
                throw std::invalid_argument("model file: unknown record '" + key + "'");
            }
        }
        if (!model) throw std::invalid_argument("model file: missing alphabet");
        return *model;
    }

    static std::string format_double(double v) {
        char buf[64];
        auto res = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, res.ptr);
    }

private:
    static std::string strip_cr(std::string s) {
        if (!s.empty() && s.back() == '\r') s.pop_back();
        return s;
    }

    static double parse_double(std::istringstream& fields) {
        std::string tok;
        fields >> tok;
        double v = 0;
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size())
            throw std::invalid_argument("model file: bad number '" + tok + "'");
        return v;
    }

    Alphabet alphabet_;
    std::vector<double> weights_;
    double w_len_ = 0.0;
    double bias_ = 0.0;
    double threshold_ = 0.0;
};

struct TrainConfig {
    std::size_t epochs = 40;
    double learning_rate = 0.5;
    std::size_t batch_size = 16;
    double l2 = 0.0;
    std::optional<Mechanism> mechanism;  // train-time smoothing; none trains on clean inputs
    std::size_t min_preserved = 0;       // floor on retained tokens, training draws only
};

inline TokenSeq training_perturbation(const TokenSeq& x, const TrainConfig& cfg, SeedSpec seed) {
    if (!cfg.mechanism) return x;
    if (const auto* del = std::get_if<DeletionMechanism>(&*cfg.mechanism))
        return sample_deletion_with_floor(x, *del, seed, cfg.min_preserved);
    const auto& abn = std::get<AblationMechanism>(*cfg.mechanism);
    if (x.empty()) return x;
    if (cfg.min_preserved > 0 && abn.retained_count(x.size()) < std::min(cfg.min_preserved, x.size())) {
        // retain at least min_preserved positions
        CounterRng rng(seed);
        const Token null = AblationMechanism::null_token(x.alphabet());
        std::vector<Token> out(x.size(), null);
        for (std::size_t i : sample_subset(x.size(), std::min(cfg.min_preserved, x.size()), rng)) out[i] = x[i];
        return TokenSeq(std::move(out), AblationMechanism::output_alphabet(x.alphabet()));
    }
    return sample_ablation(x, abn, seed);
}

/// Seeded mini-batch gradient descent on the logistic loss. Each epoch every
/// example is re-perturbed with fresh noise. Deterministic given `seed`.
inline HistogramModel train_histogram(std::span<const LabeledSeq> data, const TrainConfig& cfg, std::uint64_t seed) {
    if (data.empty()) throw std::invalid_argument("training set is empty");
    const Alphabet alphabet = data.front().seq.alphabet();
    if (alphabet.size < 2) throw std::invalid_argument("degenerate alphabet: need at least two tokens");
    std::size_t per_class[2] = {0, 0};
    for (const auto& ex : data) {
        if (ex.label > 1) throw std::invalid_argument("histogram model is binary; label " + std::to_string(ex.label));
        if (ex.seq.alphabet() != alphabet) throw AlphabetMismatch("training sequences use different alphabets");
        ++per_class[ex.label];
    }
    if (per_class[0] == 0 || per_class[1] == 0) throw std::invalid_argument("each class needs at least one example");

    HistogramModel model(alphabet);
    auto& w = model.token_weights();
    const std::size_t n = data.size();
    const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
    std::vector<std::size_t> order(n);
    std::vector<double> grad_w(alphabet.size, 0.0);
    std::vector<std::size_t> touched;
    std::vector<std::size_t> counts(alphabet.size, 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::uint64_t epoch_seed = derive_seed(seed, epoch);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        CounterRng shuffler(SeedSpec{epoch_seed, std::numeric_limits<std::uint64_t>::max()});
        shuffle(std::span(order), shuffler);

        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t end = std::min(n, start + batch);
            double grad_len = 0.0, grad_bias = 0.0;
            touched.clear();
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t i = order[b];
                const TokenSeq z = training_perturbation(data[i].seq, cfg, SeedSpec{epoch_seed, i});
                const double s = model.score(z);
                const double err = 1.0 / (1.0 + std::exp(-s)) - static_cast<double>(data[i].label);
                std::size_t observed = 0;
                for (Token t : z.tokens()) {
                    if (t >= alphabet.size) continue;
                    if (counts[t]++ == 0) touched.push_back(t);
                    ++observed;
                }
                for (std::size_t t : touched) {
                    if (counts[t] == 0) continue;
                    grad_w[t] += err * static_cast<double>(counts[t]) / static_cast<double>(observed);
                    counts[t] = 0;
                }
                grad_len += err * HistogramModel::length_feature(z.size());
                grad_bias += err;
            }
            const double scale = cfg.learning_rate / static_cast<double>(end - start);
            std::sort(touched.begin(), touched.end());
            touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
            for (std::size_t t : touched) {
                w[t] -= scale * grad_w[t];
                grad_w[t] = 0.0;
            }
            if (cfg.l2 > 0.0)
                for (double& wt : w) wt -= cfg.learning_rate * cfg.l2 * wt;
            model.length_weight() -= scale * grad_len;
            model.bias() -= scale * grad_bias;
        }
    }
    return model;
}

/// Calibrate against the smoothed classifier's vote fraction instead of the
/// raw base score.
struct SmoothedCalibration {
    Mechanism mechanism = DeletionMechanism(0.9);
    std::size_t samples = 200;
    std::vector<double> eta = {0.0, 0.0};
    std::uint64_t seed = 0;
};

/// Per benign example, the largest threshold at which it is flagged as
/// class 1: the raw score, or in smoothed mode the (m+1)-th largest sample
/// score where m = floor(n (1 + eta_1 - eta_0) / 2).
inline std::vector<double> benign_flag_levels(const HistogramModel& model, std::span<const LabeledSeq> validation,
                                              const std::optional<SmoothedCalibration>& smoothed) {
    std::vector<double> levels;
    std::size_t benign_index = 0;
    for (const auto& ex : validation) {
        if (ex.label != 0) continue;
        if (!smoothed) {
            levels.push_back(model.score(ex.seq));
            continue;
        }
        const auto& sc = *smoothed;
        if (sc.eta.size() != 2) throw std::invalid_argument("smoothed calibration needs two decision thresholds");
        const std::uint64_t example_seed = derive_seed(sc.seed, benign_index++);
        std::vector<double> scores;
        scores.reserve(sc.samples);
        for (std::size_t j = 0; j < sc.samples; ++j)
            scores.push_back(model.score(sample_perturbation(ex.seq, sc.mechanism, SeedSpec{example_seed, j})));
        std::sort(scores.begin(), scores.end(), std::greater<>());
        const double cut = static_cast<double>(sc.samples) * (1.0 + sc.eta[1] - sc.eta[0]) / 2.0;
        const double m = std::floor(cut + 1e-12);
        if (m < 0.0) levels.push_back(std::numeric_limits<double>::infinity());
        else if (m >= static_cast<double>(sc.samples)) levels.push_back(-std::numeric_limits<double>::infinity());
        else levels.push_back(scores[static_cast<std::size_t>(m)]);
    }
    return levels;
}

/// Smallest base threshold whose empirical false-positive rate on the benign
/// (label 0) validation examples is at most `target_fpr`. Boundary ties are
/// resolved toward the higher threshold.
inline double calibrate_threshold(const HistogramModel& model, std::span<const LabeledSeq> validation,
                                  const std::optional<SmoothedCalibration>& smoothed, double target_fpr) {
    if (!(target_fpr >= 0.0 && target_fpr <= 1.0)) throw std::invalid_argument("target FPR must lie in [0, 1]");
    std::vector<double> levels = benign_flag_levels(model, validation, smoothed);
    if (levels.empty()) throw std::invalid_argument("calibration set has no benign examples");
    std::sort(levels.begin(), levels.end(), std::greater<>());
    const auto allowed = static_cast<std::size_t>(std::floor(target_fpr * static_cast<double>(levels.size()) + 1e-9));
    if (allowed >= levels.size()) {
        for (auto it = levels.rbegin(); it != levels.rend(); ++it)
            if (std::isfinite(*it)) return *it;
        return std::numeric_limits<double>::lowest();
    }
    const double boundary = levels[allowed];
    if (boundary == -std::numeric_limits<double>::infinity()) return std::numeric_limits<double>::lowest();
    return std::nextafter(boundary, std::numeric_limits<double>::infinity());
}

/// Fraction of benign examples flagged at `threshold`, counted the same way
/// calibration counts them.
inline double empirical_fpr(const HistogramModel& model, std::span<const LabeledSeq> validation,
                            const std::optional<SmoothedCalibration>& smoothed, double threshold) {
    const auto levels = benign_flag_levels(model, validation, smoothed);
    if (levels.empty()) throw std::invalid_argument("calibration set has no benign examples");
    const auto flagged = std::count_if(levels.begin(), levels.end(), [&](double l) { return l >= threshold; });
    return static_cast<double>(flagged) / static_cast<double>(levels.size());
}

}  // namespace editcert
