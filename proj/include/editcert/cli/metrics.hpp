#pragma once
// Accuracy and certificate statistics over a set of run records.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "editcert/cli/io.hpp"

namespace editcert::cli {

/// 0, 1, 2, 4, ..., 1024 (128 included).
inline std::vector<std::uint64_t> default_radius_grid() {
    std::vector<std::uint64_t> g{0};
    for (std::uint64_t r = 1; r <= 1024; r *= 2) g.push_back(r);
    return g;
}

struct ClassCurve {
    std::size_t label = 0;
    std::size_t count = 0;
    std::vector<double> certified;  // per grid radius: |{label, correct, CR >= r}| / |{label}|
};

struct MetricsReport {
    std::string ops;
    std::size_t total = 0;
    std::size_t errors = 0;
    double clean_accuracy = 0.0;
    double abstain_rate = 0.0;
    std::vector<std::uint64_t> grid;
    std::vector<double> cert_acc;
    double median_cr = 0.0;                 // +inf when the median certificate is unbounded
    std::optional<double> median_ncr_pct;   // none when no record has a finite NCR
    std::vector<ClassCurve> per_class;
};

namespace detail {

/// Certificate size used for order statistics: no certificate counts as 0.
inline double cr_value(const RunRecord& r, const std::string& ops) {
    if (r.error || r.abstain) return 0.0;
    const Radius rad = r.radius_for(ops);
    if (rad.is_unbounded()) return std::numeric_limits<double>::infinity();
    if (rad.is_finite()) return static_cast<double>(rad.value());
    return 0.0;
}

template <typename T>
T lower_median(std::vector<T> v) {
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
}

inline std::string fmt(double v) {
    if (std::isinf(v)) return "unbounded";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace detail

/// Records are joined to manifest labels by path. Abstentions and failed rows
/// count as incorrect and uncertified.
inline MetricsReport compute_metrics(const std::vector<RunRecord>& records, const Manifest& labels,
                                     std::vector<std::uint64_t> grid, std::string ops) {
    std::map<std::string, std::size_t> label_of;
    for (const auto& row : labels.rows) {
        if (!label_of.emplace(row.path, row.label).second)
            throw InputError("manifest lists " + row.path + " more than once");
    }
    std::map<std::string, bool> seen;
    for (const auto& r : records) {
        if (!label_of.count(r.path)) throw InputError("record " + r.path + " has no label in the manifest");
        if (!seen.emplace(r.path, true).second) throw InputError("duplicate record for " + r.path);
    }
    if (seen.size() != label_of.size()) throw InputError("manifest rows without a run record");

    if (ops.empty()) {
        ops = EditOpSet::levenshtein().to_string();
        if (!records.empty() && !records.front().radius.empty()) {
            bool has_lev = false;
            for (const auto& [k, v] : records.front().radius) has_lev = has_lev || k == ops;
            if (!has_lev) ops = records.front().radius.front().first;
        }
    }

    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    MetricsReport rep;
    rep.ops = ops;
    rep.total = records.size();
    rep.grid = grid;
    rep.cert_acc.assign(grid.size(), 0.0);

    std::map<std::size_t, ClassCurve> classes;
    std::size_t correct = 0, abstained = 0;
    std::vector<double> crs, ncrs;
    for (const auto& r : records) {
        const std::size_t label = label_of.at(r.path);
        auto& cls = classes[label];
        cls.label = label;
        if (cls.certified.empty()) cls.certified.assign(grid.size(), 0.0);
        ++cls.count;
        if (r.error) ++rep.errors;
        if (r.abstain) ++abstained;
        const bool ok = !r.error && !r.abstain && r.pred && *r.pred == label;
        if (ok) ++correct;
        const Radius rad = (r.error || r.abstain) ? Radius::not_certifiable() : r.radius_for(ops);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (ok && rad.covers(grid[i])) {
                rep.cert_acc[i] += 1.0;
                cls.certified[i] += 1.0;
            }
        }
        const double cr = detail::cr_value(r, ops);
        crs.push_back(cr);
        if (r.len > 0) ncrs.push_back(std::isinf(cr) ? cr : 100.0 * cr / static_cast<double>(r.len));
    }

    if (rep.total > 0) {
        const auto n = static_cast<double>(rep.total);
        rep.clean_accuracy = static_cast<double>(correct) / n;
        rep.abstain_rate = static_cast<double>(abstained) / n;
        for (double& v : rep.cert_acc) v /= n;
        rep.median_cr = detail::lower_median(crs);
    }
    if (!ncrs.empty()) rep.median_ncr_pct = detail::lower_median(ncrs);
    for (auto& [label, c] : classes) {
        for (double& v : c.certified) v /= static_cast<double>(c.count);
        rep.per_class.push_back(c);
    }
    return rep;
}

inline std::string class_column(std::size_t label, std::size_t num_classes) {
    if (num_classes == 2 && label <= 1) return label == 1 ? "cert_tpr" : "cert_tnr";
    return "cert_recall_" + std::to_string(label);
}

inline std::string render_table(const MetricsReport& rep) {
    std::ostringstream out;
    out << "ops            " << rep.ops << '\n';
    out << "records        " << rep.total << '\n';
    out << "errors         " << rep.errors << '\n';
    out << "clean_accuracy " << detail::fmt(rep.clean_accuracy) << '\n';
    out << "abstain_rate   " << detail::fmt(rep.abstain_rate) << '\n';
    out << "median_cr      " << detail::fmt(rep.median_cr) << '\n';
    out << "median_ncr_pct " << (rep.median_ncr_pct ? detail::fmt(*rep.median_ncr_pct) : "n/a") << '\n';
    out << '\n';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%8s %10s", "radius", "cert_acc");
    out << buf;
    for (const auto& c : rep.per_class) {
        std::snprintf(buf, sizeof buf, " %14s", class_column(c.label, rep.per_class.size()).c_str());
        out << buf;
    }
    out << '\n';
    for (std::size_t i = 0; i < rep.grid.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%8llu %10.6f", static_cast<unsigned long long>(rep.grid[i]), rep.cert_acc[i]);
        out << buf;
        for (const auto& c : rep.per_class) {
            std::snprintf(buf, sizeof buf, " %14.6f", c.certified[i]);
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

/// One row per grid radius: radius, cert_acc, then per-class certified rates.
inline std::string render_csv(const MetricsReport& rep) {
    std::ostringstream out;
    out << "radius,cert_acc";
    for (const auto& c : rep.per_class) out << ',' << class_column(c.label, rep.per_class.size());
    out << '\n';
    for (std::size_t i = 0; i < rep.grid.size(); ++i) {
        out << rep.grid[i] << ',' << detail::fmt(rep.cert_acc[i]);
        for (const auto& c : rep.per_class) out << ',' << detail::fmt(c.certified[i]);
        out << '\n';
    }
    return out.str();
}

}  // namespace editcert::cli
