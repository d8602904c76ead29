#pragma once
// Subcommand drivers behind tools/editcert. Each returns a process exit code
// or throws InputError / UsageError.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "editcert/chunking.hpp"
#include "editcert/cli/io.hpp"
#include "editcert/cli/metrics.hpp"
#include "editcert/external.hpp"
#include "editcert/external_http.hpp"
#include "editcert/histogram_model.hpp"
#include "editcert/oracle.hpp"
#include "editcert/pipeline.hpp"
#include "editcert/random.hpp"

namespace editcert::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitVerify = 3;

inline fs::path chunk_dict_path(const fs::path& model) { return fs::path(model.string() + ".chunks"); }

inline HistogramModel load_model(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open model " + path.string());
    try {
        return HistogramModel::read(in);
    } catch (const std::invalid_argument& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

inline void save_model(const fs::path& path, const HistogramModel& model) {
    std::ostringstream out;
    model.write(out);
    write_file_bytes(path, out.str());
}

inline std::optional<ChunkDictionary> load_chunk_dict(const fs::path& path, bool required) {
    std::ifstream in(path);
    if (!in) {
        if (required) throw InputError("cannot open chunk dictionary " + path.string());
        return std::nullopt;
    }
    try {
        return ChunkDictionary::read(in);
    } catch (const std::invalid_argument& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

inline std::vector<LabeledSeq> load_labeled(const Manifest& m, ChunkDictionary* interning,
                                            const ChunkDictionary* frozen) {
    std::vector<LabeledSeq> out;
    out.reserve(m.rows.size());
    for (const auto& row : m.rows) out.push_back({load_row(m, row, interning, frozen), row.label});
    return out;
}

// ---------------------------------------------------------------- gen

struct GenOptions {
    fs::path out_dir;
    std::size_t count = 100;
    std::uint64_t seed = 0;
    std::size_t min_len = 200;
    std::size_t max_len = 600;
    double class1_fraction = 0.5;
    std::vector<std::uint8_t> motif = {0x07, 0xAA, 0x55, 0xC3};
    double motif_share = 0.3;   // minimum fraction of class-1 bytes covered by motif copies
    std::size_t chunk_width = 0;  // >0 also writes fixed-width chunk maps
};

/// Planted-motif corpus: class-1 sequences embed the motif k times at random
/// offsets; class-0 sequences never contain any motif byte.
inline int cmd_gen(const GenOptions& opt, std::ostream& log) {
    if (opt.min_len == 0 || opt.min_len > opt.max_len) throw UsageError("need 0 < min_len <= max_len");
    if (opt.motif.empty()) throw UsageError("motif must be nonempty");
    if (!(opt.class1_fraction >= 0.0 && opt.class1_fraction <= 1.0)) throw UsageError("class-1 fraction must lie in [0, 1]");
    if (!(opt.motif_share > 0.0 && opt.motif_share <= 1.0)) throw UsageError("motif share must lie in (0, 1]");
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (ec) throw InputError("cannot create " + opt.out_dir.string() + ": " + ec.message());

    bool in_motif[256] = {};
    for (auto b : opt.motif) in_motif[b] = true;

    // exact class balance, positions shuffled by the seed
    const auto positives = static_cast<std::size_t>(std::llround(opt.class1_fraction * static_cast<double>(opt.count)));
    std::vector<std::size_t> labels(opt.count, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(positives), 1);
    CounterRng label_rng(SeedSpec{opt.seed, std::numeric_limits<std::uint64_t>::max()});
    shuffle(std::span(labels), label_rng);

    std::vector<ManifestRow> rows;
    for (std::size_t i = 0; i < opt.count; ++i) {
        CounterRng rng(SeedSpec{opt.seed, i});
        const std::size_t len = opt.min_len + rng.below(opt.max_len - opt.min_len + 1);
        const std::size_t m = opt.motif.size();
        std::size_t copies = 0;
        if (labels[i] == 1) {
            copies = static_cast<std::size_t>(std::ceil(opt.motif_share * static_cast<double>(len) / static_cast<double>(m)));
            copies = std::max<std::size_t>(1, std::min(copies, len / m));
        }
        const std::size_t background = len - copies * m;
        std::vector<std::size_t> offsets(copies);
        for (auto& o : offsets) o = rng.below(background + 1);
        std::sort(offsets.begin(), offsets.end());

        std::string bytes;
        bytes.reserve(len);
        std::size_t next = 0;
        for (std::size_t b = 0; b <= background; ++b) {
            while (next < offsets.size() && offsets[next] == b) {
                for (auto t : opt.motif) bytes.push_back(static_cast<char>(t));
                ++next;
            }
            if (b == background) break;
            std::uint8_t v = 0;
            do v = static_cast<std::uint8_t>(rng.below(256));
            while (in_motif[v]);
            bytes.push_back(static_cast<char>(v));
        }

        char name[32];
        std::snprintf(name, sizeof name, "seq_%05zu.bin", i);
        write_file_bytes(opt.out_dir / name, bytes);
        ManifestRow row{name, labels[i], std::nullopt};
        if (opt.chunk_width > 0) {
            ChunkMap map;
            for (std::size_t b = 0; b < bytes.size(); b += opt.chunk_width) map.boundaries.push_back(b);
            std::ostringstream out;
            map.write(out);
            const std::string chunk_name = std::string(name) + ".chunks";
            write_file_bytes(opt.out_dir / chunk_name, out.str());
            row.chunks = chunk_name;
        }
        rows.push_back(std::move(row));
    }
    write_manifest(opt.out_dir / "manifest.csv", rows);
    log << "wrote " << opt.count << " sequences (" << positives << " class 1) to " << opt.out_dir.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
    fs::path manifest;
    fs::path model_out;
    TrainConfig train;
    std::uint64_t seed = 0;
};

inline int cmd_train(const TrainOptions& opt, std::ostream& log) {
    const Manifest m = read_manifest(opt.manifest);
    ChunkDictionary dict;
    const bool chunked = m.chunked();
    const auto data = load_labeled(m, chunked ? &dict : nullptr, nullptr);
    HistogramModel model(kByteAlphabet);
    try {
        model = train_histogram(data, opt.train, opt.seed);
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    save_model(opt.model_out, model);
    if (chunked) {
        std::ostringstream out;
        dict.write(out);
        write_file_bytes(chunk_dict_path(opt.model_out), out.str());
    }
    std::size_t correct = 0;
    for (const auto& ex : data) correct += model.query(ex.seq) == ex.label;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", static_cast<double>(correct) / static_cast<double>(data.size()));
    log << "trained on " << data.size() << " sequences; clean training accuracy " << buf << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateOptions {
    fs::path manifest;  // validation set; label 0 is the benign class
    fs::path model;
    fs::path model_out;  // empty: overwrite `model`
    double target_fpr = 0.005;
    bool smoothed = true;
    SmoothedCalibration smoothing;
};

struct CalibrateResult {
    double threshold = 0.0;
    double fpr = 0.0;
    std::size_t benign = 0;
};

inline CalibrateResult run_calibrate(const CalibrateOptions& opt) {
    HistogramModel model = load_model(opt.model);
    const Manifest m = read_manifest(opt.manifest);
    const auto dict = load_chunk_dict(chunk_dict_path(opt.model), m.chunked());
    const auto data = load_labeled(m, nullptr, dict ? &*dict : nullptr);
    const std::optional<SmoothedCalibration> sc = opt.smoothed ? std::optional(opt.smoothing) : std::nullopt;
    CalibrateResult res;
    try {
        res.threshold = calibrate_threshold(model, data, sc, opt.target_fpr);
        res.fpr = empirical_fpr(model, data, sc, res.threshold);
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    res.benign = static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](const LabeledSeq& s) { return s.label == 0; }));
    model.set_threshold(res.threshold);
    save_model(opt.model_out.empty() ? opt.model : opt.model_out, model);
    return res;
}

inline int cmd_calibrate(const CalibrateOptions& opt, std::ostream& log) {
    const auto res = run_calibrate(opt);
    char buf[160];
    std::snprintf(buf, sizeof buf, "threshold %s; %s FPR %.6f on %zu benign sequences (target %.6f)\n",
                  HistogramModel::format_double(res.threshold).c_str(), opt.smoothed ? "smoothed" : "base", res.fpr,
                  res.benign, opt.target_fpr);
    log << buf;
    return kExitOk;
}

// ---------------------------------------------------------------- certify

struct CertifyOptions {
    fs::path manifest;
    std::optional<fs::path> model;
    std::optional<std::string> endpoint;  // http://... or a shell command
    std::optional<fs::path> chunk_dict;   // overrides <model>.chunks
    std::size_t num_classes = 2;          // for endpoints
    SmoothingConfig config;
    std::vector<EditOpSet> ops = {EditOpSet::levenshtein()};
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    fs::path out;
    bool timing = false;
};

using ClassifierFactory = std::function<std::unique_ptr<BaseClassifier>()>;

namespace detail {

class SharedModel final : public BaseClassifier {
public:
    explicit SharedModel(std::shared_ptr<HistogramModel> m) : m_(std::move(m)) {}
    std::size_t num_classes() const override { return m_->num_classes(); }
    ClassIndex query(const TokenSeq& x) override { return m_->query(x); }
    std::size_t max_concurrency() const override { return 0; }

private:
    std::shared_ptr<HistogramModel> m_;
};

}  // namespace detail

/// Certifies every manifest row and writes one record per row, in manifest
/// order, flushing as soon as the prefix is complete. Rows that fail are
/// recorded with an "error" field. `factory` is called once per worker.
inline std::size_t run_certify(const Manifest& m, const ClassifierFactory& factory, const ChunkDictionary* dict,
                               const CertifyOptions& opt, std::ostream& sink) {
    opt.config.validate();
    if (opt.ops.empty()) throw UsageError("no op sets requested");
    const std::size_t rows = m.rows.size();
    const std::size_t workers = std::max<std::size_t>(1, std::min(opt.threads, std::max<std::size_t>(1, rows)));
    TallyOptions tally;
    tally.threads = std::max<std::size_t>(1, opt.threads / workers);

    std::vector<std::optional<std::string>> lines(rows);
    std::size_t next_out = 0;
    std::size_t failures = 0;
    std::mutex out_mu;
    std::atomic<std::size_t> next_row{0};
    std::exception_ptr fatal;

    auto emit = [&](std::size_t i, std::string line, bool failed) {
        std::lock_guard lock(out_mu);
        lines[i] = std::move(line);
        failures += failed;
        while (next_out < rows && lines[next_out]) {
            sink << *lines[next_out] << '\n';
            lines[next_out].reset();
            ++next_out;
        }
        sink.flush();
    };

    auto work = [&]() {
        std::unique_ptr<BaseClassifier> base;
        try {
            base = factory();
        } catch (...) {
            std::lock_guard lock(out_mu);
            if (!fatal) fatal = std::current_exception();
            return;
        }
        if (base->num_classes() != opt.config.num_classes()) {
            std::lock_guard lock(out_mu);
            if (!fatal)
                fatal = std::make_exception_ptr(UsageError("classifier has " + std::to_string(base->num_classes()) +
                                                           " classes but eta has " +
                                                           std::to_string(opt.config.num_classes())));
            return;
        }
        for (std::size_t i = next_row++; i < rows; i = next_row++) {
            const auto& row = m.rows[i];
            RunRecord rec;
            rec.path = row.path;
            rec.seed = derive_seed(opt.seed, i);
            const auto start = std::chrono::steady_clock::now();
            bool failed = false;
            try {
                const TokenSeq x = load_row(m, row, nullptr, dict);
                rec.len = x.size();
                const auto v = certify(x, *base, opt.config, opt.ops, rec.seed, tally);
                rec.pred = v.prediction();
                rec.abstain = v.abstain;
                rec.mu_hat = v.mu_hat;
                rec.mu_lcb = v.mu_lcb;
                for (const auto& r : v.radii) rec.radius.emplace_back(r.ops.to_string(), r.radius);
            } catch (const std::exception& e) {
                failed = true;
                rec.error = e.what();
                rec.radius.clear();
                for (const auto& ops : opt.ops) rec.radius.emplace_back(ops.to_string(), Radius::not_certifiable());
            }
            if (opt.timing)
                rec.elapsed_ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            emit(i, to_json_line(rec), failed);
        }
    };

    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (fatal) std::rethrow_exception(fatal);
    return failures;
}

inline int cmd_certify(const CertifyOptions& opt, std::ostream& log) {
    if (opt.model.has_value() == opt.endpoint.has_value()) throw UsageError("give exactly one of --model or --endpoint");
    const Manifest m = read_manifest(opt.manifest);
    for (const auto& row : m.rows)
        if (row.label >= opt.config.num_classes())
            throw InputError("label " + std::to_string(row.label) + " of " + row.path + " is not below " +
                             std::to_string(opt.config.num_classes()));

    std::optional<ChunkDictionary> dict;
    if (opt.chunk_dict) dict = load_chunk_dict(*opt.chunk_dict, true);
    else if (opt.model) dict = load_chunk_dict(chunk_dict_path(*opt.model), false);

    ClassifierFactory factory;
    if (opt.model) {
        auto model = std::make_shared<HistogramModel>(load_model(*opt.model));
        factory = [model]() -> std::unique_ptr<BaseClassifier> { return std::make_unique<detail::SharedModel>(model); };
    } else if (opt.endpoint->rfind("http://", 0) == 0) {
        const std::string url = *opt.endpoint;
        const std::size_t k = opt.num_classes;
        factory = [url, k]() -> std::unique_ptr<BaseClassifier> { return std::make_unique<HttpClassifier>(url, k); };
    } else {
        const std::string cmd = *opt.endpoint;
        const std::size_t k = opt.num_classes;
        factory = [cmd, k]() -> std::unique_ptr<BaseClassifier> { return std::make_unique<SubprocessClassifier>(cmd, k); };
    }

    std::ofstream out(opt.out, std::ios::trunc);
    if (!out) throw InputError("cannot write " + opt.out.string());
    const std::size_t failures = run_certify(m, factory, dict ? &*dict : nullptr, opt, out);
    log << "certified " << m.rows.size() - failures << "/" << m.rows.size() << " rows";
    if (failures) log << " (" << failures << " recorded with errors)";
    log << " -> " << opt.out.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- metrics

struct MetricsOptions {
    fs::path records;
    fs::path manifest;
    std::vector<std::uint64_t> grid = default_radius_grid();
    std::string ops;  // empty: Levenshtein if present
    std::optional<fs::path> csv_out;
};

inline int cmd_metrics(const MetricsOptions& opt, std::ostream& out) {
    const auto records = read_records(opt.records);
    const Manifest m = read_manifest(opt.manifest);
    std::string ops = opt.ops;
    if (!ops.empty()) {
        try {
            ops = EditOpSet::parse(ops).to_string();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    const auto rep = compute_metrics(records, m, opt.grid, ops);
    out << render_table(rep);
    if (opt.csv_out) write_file_bytes(*opt.csv_out, render_csv(rep));
    return kExitOk;
}

// ---------------------------------------------------------------- verify

struct VerifyOptions {
    std::size_t trials = 200;
    std::size_t alphabet = 3;
    std::size_t length = 5;
    double p_del = 0.6;
    EditOpSet ops = EditOpSet::levenshtein();
    std::uint64_t seed = 0;
    double bias_low = 0.5;  // per-trial probability of the favored class is drawn from [bias_low, 1)
    bool verbose = false;
};

struct VerifySummary {
    std::size_t trials = 0;
    std::size_t passed = 0;
    std::size_t certified = 0;  // trials with a certificate of radius >= 1
    std::vector<SoundnessReport> reports;
};

inline VerifySummary run_verify(const VerifyOptions& opt) {
    if (opt.alphabet < 1 || opt.trials == 0) throw UsageError("need a nonempty alphabet and at least one trial");
    if (!(opt.bias_low >= 0.0 && opt.bias_low < 1.0)) throw UsageError("bias must lie in [0, 1)");
    const DeletionMechanism mech(opt.p_del);
    const std::vector<double> eta = {0.0, 0.0};
    VerifySummary sum;
    for (std::size_t t = 0; t < opt.trials; ++t) {
        CounterRng rng(SeedSpec{opt.seed, t});
        std::vector<Token> tokens(opt.length);
        for (auto& tok : tokens) tok = static_cast<Token>(rng.below(opt.alphabet));
        const TokenSeq x(std::move(tokens), Alphabet(opt.alphabet));
        const double bias = opt.bias_low + (1.0 - opt.bias_low) * rng.uniform();
        const auto favored = static_cast<ClassIndex>(rng.below(2));
        RandomTableClassifier table(rng(), 2, bias, favored);
        auto rep = verify_certificate_soundness(x, table, mech, eta, opt.ops);
        ++sum.trials;
        sum.passed += rep.pass;
        sum.certified += rep.radius.covers(1);
        sum.reports.push_back(std::move(rep));
    }
    return sum;
}

inline int cmd_verify(const VerifyOptions& opt, std::ostream& out) {
    const auto sum = run_verify(opt);
    for (std::size_t t = 0; t < sum.reports.size(); ++t) {
        const auto& r = sum.reports[t];
        if (!opt.verbose && r.pass) continue;
        out << "trial " << t << ": " << (r.pass ? "pass" : "FAIL") << " mu=" << r.mu << " radius=" << r.radius.to_string()
            << " checked=" << r.neighbors_checked << " frontier="
            << (r.flip_frontier ? std::to_string(*r.flip_frontier) : ">" + std::to_string(r.frontier_searched));
        if (r.counterexample) out << " counterexample=" << r.counterexample->to_letters();
        out << '\n';
    }
    out << "certified radius >= 1 in " << sum.certified << "/" << sum.trials << " trials\n";
    if (sum.passed == sum.trials) {
        out << "PASS " << sum.passed << "/" << sum.trials << '\n';
        return kExitOk;
    }
    out << "FAIL " << sum.trials - sum.passed << "/" << sum.trials << '\n';
    return kExitVerify;
}

}  // namespace editcert::cli
