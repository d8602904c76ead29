// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "editcert/cli/commands.hpp"
#include "editcert/neighborhood.hpp"
#include "editcert/oracle.hpp"
#include "support.hpp"

using namespace editcert;
using namespace editcert::cli;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double limit_s;
    std::function<Outcome()> run;
};

std::string join(const std::vector<std::uint64_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::uint64_t radius_or_zero(const Radius& r) { return r.is_finite() ? r.value() : 0; }

Outcome table_reproduction() {
    const std::vector<double> ps = {0.90, 0.95, 0.97, 0.99, 0.995, 0.999};
    const std::vector<std::uint64_t> ub_expected = {6, 13, 22, 68, 138, 692};
    const std::vector<std::uint64_t> median_expected = {6, 13, 22, 68, 137, 688};
    const double saturated = binomial_lcb(4000, 4000, 0.05);
    std::vector<std::uint64_t> ub, median;
    bool ok = true;
    for (const auto& ops : EditOpSet::all_sets()) {
        if (!ops.sub) continue;
        std::vector<std::uint64_t> u, m;
        for (double p : ps) {
            u.push_back(radius_or_zero(certified_radius(1.0, 0.5, p, ops)));
            m.push_back(radius_or_zero(certified_radius(saturated, 0.5, p, ops)));
        }
        ok = ok && u == ub_expected && m == median_expected;
        if (ub.empty()) {
            ub = u;
            median = m;
        }
    }
    return {ok, "UB " + join(ub) + " (want " + join(ub_expected) + "); saturated-LCB " + join(median) + " (want " +
                    join(median_expected) + ")"};
}

Outcome eta_sweep() {
    const std::vector<std::pair<double, std::pair<std::uint64_t, std::uint64_t>>> cases = {
        {0.5, {138, 138}}, {0.25, {276, 57}}, {0.05, {597, 10}}};
    bool ok = true;
    std::string detail;
    for (const auto& [eta1, want] : cases) {
        const std::vector<double> eta = {1.0 - eta1, eta1};
        const auto r1 = radius_or_zero(certified_radius(1.0, nu_threshold(eta, 1), 0.995, EditOpSet::levenshtein()));
        const auto r0 = radius_or_zero(certified_radius(1.0, nu_threshold(eta, 0), 0.995, EditOpSet::levenshtein()));
        ok = ok && r1 == want.first && r0 == want.second;
        char buf[96];
        std::snprintf(buf, sizeof buf, "%seta1=%.2f -> (%llu,%llu)", detail.empty() ? "" : "; ", eta1,
                      static_cast<unsigned long long>(r1), static_cast<unsigned long long>(r0));
        detail += buf;
    }
    return {ok, detail};
}

Outcome neighborhood_bound() {
    BigInt ten308 = 1;
    for (int i = 0; i < 308; ++i) ten308 *= 10;
    const BigInt n = neighborhood_size_lower_bound(10240, 128, 256);
    const std::string digits = n.str();
    return {n > ten308, "lower bound has " + std::to_string(digits.size()) + " decimal digits"};
}

Outcome soundness_suite() {
    const auto sum = run_verify(VerifyOptions{});
    return {sum.passed == sum.trials && sum.trials == 200,
            std::to_string(sum.passed) + "/" + std::to_string(sum.trials) + " pass; " + std::to_string(sum.certified) +
                " trials certified radius >= 1"};
}

Outcome theorem1_property() {
    CounterRng rng(1001);
    std::size_t bad = 0;
    double worst = 1e300;
    const double ps[] = {0.3, 0.5, 0.8};
    for (int t = 0; t < 1000; ++t) {
        const auto x = testsupport::random_seq(rng, 8, 2);
        const auto xt = testsupport::random_seq(rng, 8, 2);
        RandomTableClassifier base(rng(), 2, 0.5 + 0.5 * rng.uniform(), rng.below(2));
        const auto c = check_theorem1(x, xt, base, DeletionMechanism(ps[rng.below(3)]));
        worst = std::min(worst, c.exact - c.bound);
        bad += c.exact < c.bound - 1e-10;
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "%zu/1000 violations; min(exact - bound) = %.3g", bad, worst);
    return {bad == 0, buf};
}

Outcome table_vs_bruteforce() {
    std::size_t checks = 0, mismatches = 0;
    for (int mi = 0; mi <= 10; ++mi) {
        const double mu = 0.5 + 0.05 * mi;
        for (int ni = 0; ni <= 9; ++ni) {
            const double nu = 0.5 + 0.05 * ni;
            if (mu < nu) continue;
            for (double p : {0.5, 0.7, 0.9, 0.95, 0.99, 0.999}) {
                for (const auto& ops : EditOpSet::all_sets()) {
                    const Radius r = certified_radius(mu, nu, p, ops);
                    for (std::uint64_t k = 0; k <= 12; ++k) {
                        ++checks;
                        mismatches += r.covers(k) != testsupport::brute_force_certifies(mu, nu, p, ops, k);
                    }
                }
            }
        }
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatches in " + std::to_string(checks) + " checks"};
}

Outcome dominance() {
    std::size_t checks = 0, violations = 0;
    for (double p : {0.5, 0.9, 0.95, 0.99}) {
        for (std::size_t n = 1; n <= 30; ++n) {
            const std::size_t k = AblationMechanism(p).retained_count(n);
            for (std::size_t r = 0; r <= n - k; ++r) {
                ++checks;
                violations += !deletion_dominates_ablation(p, n, r);
            }
        }
    }
    return {violations == 0, std::to_string(violations) + " violations in " + std::to_string(checks) + " cases"};
}

Outcome lcb_checks() {
    double worst = 0;
    for (std::uint64_t n : {1ULL, 10ULL, 100ULL, 1000ULL, 4000ULL, 100000ULL})
        for (double a : {0.01, 0.05, 0.1})
            worst = std::max(worst, std::abs(binomial_lcb(n, n, a) - std::pow(a, 1.0 / static_cast<double>(n))));
    bool ok = worst <= 1e-10;
    std::string detail;
    char buf[96];
    std::snprintf(buf, sizeof buf, "max |lcb(n,n,a) - a^(1/n)| = %.2g; coverage", worst);
    detail = buf;
    std::mt19937_64 gen(2024);
    const int draws = 10000;
    const double sigma = std::sqrt(0.95 * 0.05 / draws);
    for (double p : {0.3, 0.7, 0.95}) {
        std::binomial_distribution<std::uint64_t> bin(1000, p);
        int covered = 0;
        for (int i = 0; i < draws; ++i) covered += binomial_lcb(bin(gen), 1000, 0.05) <= p;
        const double freq = static_cast<double>(covered) / draws;
        ok = ok && freq >= 0.95 - 3 * sigma;
        std::snprintf(buf, sizeof buf, " p=%.2f:%.4f", p, freq);
        detail += buf;
    }
    return {ok, detail};
}

Outcome exact_vs_monte_carlo() {
    CounterRng rng(909);
    const std::size_t n = 100000;
    int bad = 0;
    double worst = 0;
    for (int t = 0; t < 20; ++t) {
        const auto x = testsupport::random_seq(rng, 8, 3);
        const DeletionMechanism mech(0.2 + 0.6 * rng.uniform());
        RandomTableClassifier base(rng(), 2, 0.6, 1);
        const double mu = exact_confidence(x, base, mech).mu[1];
        const auto votes = tally_votes(x, base, mech, rng(), 0, n, TallyOptions{4, 256});
        const double err = std::abs(static_cast<double>(votes[1]) / n - mu);
        const double tol = 4 * std::sqrt(mu * (1 - mu) / n);
        bad += err > tol + 1e-12;
        if (tol > 0) worst = std::max(worst, err / tol);
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d/20 outside 4 sigma; worst error %.2f of tolerance", bad, worst);
    return {bad == 0, buf};
}

// Synthetic pipeline shared by criteria 10 and 11.
struct Pipeline {
    fs::path dir;
    bool prepared = false;
    double calibrated_fpr = 1.0;

    void prepare() {
        if (prepared) return;
        std::ostringstream log;
        GenOptions gen;
        gen.seed = 1;
        gen.count = 400;
        gen.out_dir = dir / "train";
        cmd_gen(gen, log);
        gen.seed = 2;
        gen.count = 1000;
        gen.class1_fraction = 0.0;
        gen.out_dir = dir / "val";
        cmd_gen(gen, log);
        gen.seed = 3;
        gen.count = 200;
        gen.class1_fraction = 0.5;
        gen.out_dir = dir / "test";
        cmd_gen(gen, log);

        TrainOptions train;
        train.manifest = dir / "train" / "manifest.csv";
        train.model_out = dir / "model.txt";
        train.train.mechanism = DeletionMechanism(0.9);
        train.seed = 4;
        cmd_train(train, log);

        CalibrateOptions cal;
        cal.manifest = dir / "val" / "manifest.csv";
        cal.model = dir / "model.txt";
        cal.target_fpr = 0.005;
        cal.smoothing.mechanism = DeletionMechanism(0.9);
        cal.smoothing.seed = 5;
        calibrated_fpr = run_calibrate(cal).fpr;
        prepared = true;
    }

    fs::path certify(std::size_t threads) {
        prepare();
        CertifyOptions opt;
        opt.manifest = dir / "test" / "manifest.csv";
        opt.model = dir / "model.txt";
        opt.config.mechanism = DeletionMechanism(0.9);
        opt.seed = 6;
        opt.threads = threads;
        opt.out = dir / ("records_" + std::to_string(threads) + ".jsonl");
        std::ostringstream log;
        cmd_certify(opt, log);
        return opt.out;
    }
};

Outcome end_to_end(Pipeline& pl) {
    const fs::path records = pl.certify(8);
    const auto rep = compute_metrics(read_records(records), read_manifest(pl.dir / "test" / "manifest.csv"),
                                     default_radius_grid(), "");
    bool monotone = true;
    for (std::size_t i = 1; i < rep.cert_acc.size(); ++i) monotone = monotone && rep.cert_acc[i] <= rep.cert_acc[i - 1];
    const bool ok = rep.clean_accuracy >= 0.95 && monotone && rep.median_cr >= 4 && rep.median_cr <= 6 &&
                    pl.calibrated_fpr <= 0.005;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "validation FPR %.4f; clean accuracy %.3f; median CR %.0f; CertAcc non-increasing: %s; CertAcc_4 %.3f",
                  pl.calibrated_fpr, rep.clean_accuracy, rep.median_cr, monotone ? "yes" : "no", rep.cert_acc[3]);
    return {ok, buf};
}

Outcome determinism(Pipeline& pl) {
    auto sorted_lines = [](const fs::path& p) {
        std::istringstream in(read_file_bytes(p));
        std::vector<std::string> lines;
        for (std::string l; std::getline(in, l);) lines.push_back(l);
        std::sort(lines.begin(), lines.end());
        std::string out;
        for (const auto& l : lines) out += l + '\n';
        return out;
    };
    const std::string many = sorted_lines(pl.certify(8));
    const std::string one = sorted_lines(pl.certify(1));
    return {!one.empty() && one == many, std::to_string(one.size()) + " bytes of sorted records, 1 vs 8 threads " +
                                             (one == many ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
    Pipeline pl;
    pl.dir = fs::temp_directory_path() / ("editcert_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(pl.dir);
    fs::create_directories(pl.dir);

    const std::vector<Criterion> criteria = {
        {1, "certificate table reproduction", 1, table_reproduction},
        {2, "eta-sweep reproduction", 1, eta_sweep},
        {3, "neighborhood size lower bound", 1, neighborhood_bound},
        {4, "soundness suite", 600, soundness_suite},
        {5, "Theorem 1 property", 300, theorem1_property},
        {6, "closed-form radius vs brute-force minimization", 60, table_vs_bruteforce},
        {7, "deletion vs ablation dominance", 60, dominance},
        {8, "binomial lower confidence bound", 120, lcb_checks},
        {9, "exact vs Monte Carlo confidence", 120, exact_vs_monte_carlo},
        {10, "end-to-end synthetic pipeline", 900, [&pl] { return end_to_end(pl); }},
        {11, "determinism across thread counts", 900, [&pl] { return determinism(pl); }},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs <= c.limit_s;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("%s criterion %d: %s: %s [%.2fs, limit %.0fs%s]\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                    o.detail.c_str(), secs, c.limit_s, in_time ? "" : ", over time");
        std::fflush(stdout);
    }
    fs::remove_all(pl.dir);
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
