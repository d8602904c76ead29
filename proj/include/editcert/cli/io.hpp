#pragma once
// Manifests, token-file loading and run-record (JSON lines) serialization.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "editcert/certify.hpp"
#include "editcert/chunking.hpp"
#include "editcert/seqcore.hpp"

namespace editcert::cli {

/// Bad input files: exit code 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad flags or configuration: exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A verification suite found a counterexample: exit code 3.
class VerificationFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace fs = std::filesystem;

inline std::string read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const fs::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("write failed: " + path.string());
}

struct ManifestRow {
    std::string path;                   // as written in the manifest
    std::size_t label = 0;
    std::optional<std::string> chunks;  // chunk-map sidecar, as written
};

/// CSV with header "path,label[,chunks]". Relative paths resolve against the
/// manifest's directory.
struct Manifest {
    fs::path base_dir;
    std::vector<ManifestRow> rows;

    fs::path resolve(const std::string& p) const {
        fs::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    }

    bool chunked() const {
        for (const auto& r : rows)
            if (r.chunks) return true;
        return false;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    for (auto& f : out) {
        while (!f.empty() && (f.back() == ' ' || f.back() == '\r')) f.pop_back();
        while (!f.empty() && f.front() == ' ') f.erase(f.begin());
    }
    return out;
}

}  // namespace detail

inline Manifest parse_manifest(std::istream& in, fs::path base_dir) {
    Manifest m;
    m.base_dir = std::move(base_dir);
    std::string line;
    if (!std::getline(in, line)) throw InputError("manifest is empty (missing header)");
    const auto header = detail::split_csv_line(line);
    const bool has_chunks = header.size() == 3 && header[2] == "chunks";
    if (header.size() < 2 || header[0] != "path" || header[1] != "label" || (header.size() == 3 && !has_chunks) ||
        header.size() > 3)
        throw InputError("manifest header must be path,label[,chunks]; got: " + line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size() && !(has_chunks && fields.size() == 2))
            throw InputError("manifest line " + std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " fields");
        ManifestRow row;
        row.path = fields[0];
        if (row.path.empty()) throw InputError("manifest line " + std::to_string(lineno) + ": empty path");
        try {
            std::size_t used = 0;
            const unsigned long v = std::stoul(fields[1], &used);
            if (used != fields[1].size() || fields[1].front() == '-') throw std::invalid_argument("");
            row.label = v;
        } catch (const std::exception&) {
            throw InputError("manifest line " + std::to_string(lineno) + ": bad label '" + fields[1] + "'");
        }
        if (has_chunks && fields.size() == 3 && !fields[2].empty()) row.chunks = fields[2];
        m.rows.push_back(std::move(row));
    }
    return m;
}

inline Manifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open manifest " + path.string());
    return parse_manifest(in, path.parent_path());
}

inline void write_manifest(const fs::path& path, const std::vector<ManifestRow>& rows) {
    bool chunks = false;
    for (const auto& r : rows) chunks = chunks || r.chunks.has_value();
    std::ostringstream out;
    out << (chunks ? "path,label,chunks\n" : "path,label\n");
    for (const auto& r : rows) {
        out << r.path << ',' << r.label;
        if (chunks) out << ',' << r.chunks.value_or("");
        out << '\n';
    }
    write_file_bytes(path, out.str());
}

/// Raw bytes (alphabet 256), or chunk tokens when the row names a chunk map.
/// With `dict` mutable new chunks are interned; otherwise unseen chunks map
/// to the unknown token.
inline TokenSeq load_row(const Manifest& m, const ManifestRow& row, ChunkDictionary* interning,
                         const ChunkDictionary* frozen) {
    const std::string bytes = read_file_bytes(m.resolve(row.path));
    if (!row.chunks) return TokenSeq::from_bytes(bytes);
    ChunkMap map;
    try {
        map = ChunkMap::read_file(m.resolve(*row.chunks).string());
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
    try {
        if (interning) return apply_chunking(bytes, map, *interning);
        if (frozen) return apply_chunking_frozen(bytes, map, *frozen);
    } catch (const std::out_of_range& e) {
        throw InputError(row.path + ": " + e.what());
    }
    throw InputError(row.path + ": chunked input needs a chunk dictionary");
}

struct RunRecord {
    std::string path;
    std::size_t len = 0;
    std::optional<ClassIndex> pred;
    bool abstain = false;
    double mu_hat = 0.0;
    double mu_lcb = 0.0;
    std::vector<std::pair<std::string, Radius>> radius;  // keyed by canonical op-set string
    std::uint64_t seed = 0;
    std::optional<std::string> error;
    std::optional<double> elapsed_ms;

    Radius radius_for(const std::string& ops) const {
        for (const auto& [k, r] : radius)
            if (k == ops) return r;
        return Radius::not_certifiable();
    }
};

/// 100 * radius / length for finite radii, else none.
inline std::optional<double> ncr_percent(const Radius& r, std::size_t len) {
    if (!r.is_finite() || len == 0) return std::nullopt;
    return 100.0 * static_cast<double>(r.value()) / static_cast<double>(len);
}

inline nlohmann::ordered_json radius_to_json(const Radius& r) {
    if (r.is_finite()) return r.value();
    if (r.is_unbounded()) return "unbounded";
    return nullptr;
}

inline Radius radius_from_json(const nlohmann::json& j) {
    if (j.is_null()) return Radius::not_certifiable();
    if (j.is_string() && j.get<std::string>() == "unbounded") return Radius::unbounded();
    if (j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0))
        return Radius::finite(j.get<std::size_t>());
    throw InputError("bad radius value " + j.dump());
}

inline std::string to_json_line(const RunRecord& r) {
    nlohmann::ordered_json j;
    j["path"] = r.path;
    j["len"] = r.len;
    j["pred"] = r.pred ? nlohmann::ordered_json(*r.pred) : nlohmann::ordered_json(nullptr);
    j["abstain"] = r.abstain;
    j["mu_hat"] = r.mu_hat;
    j["mu_lcb"] = r.mu_lcb;
    nlohmann::ordered_json radius = nlohmann::ordered_json::object();
    nlohmann::ordered_json ncr = nlohmann::ordered_json::object();
    for (const auto& [ops, rad] : r.radius) {
        radius[ops] = radius_to_json(rad);
        const auto pct = ncr_percent(rad, r.len);
        ncr[ops] = pct ? nlohmann::ordered_json(*pct) : nlohmann::ordered_json(nullptr);
    }
    j["radius"] = radius;
    j["ncr_pct"] = ncr;
    j["seed"] = r.seed;
    if (r.error) j["error"] = *r.error;
    if (r.elapsed_ms) j["elapsed_ms"] = *r.elapsed_ms;
    return j.dump();
}

inline RunRecord from_json_line(std::string_view line) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(line);
        RunRecord r;
        r.path = j.at("path").get<std::string>();
        r.len = j.at("len").get<std::size_t>();
        if (!j.at("pred").is_null()) r.pred = j.at("pred").get<ClassIndex>();
        r.abstain = j.at("abstain").get<bool>();
        r.mu_hat = j.at("mu_hat").get<double>();
        r.mu_lcb = j.at("mu_lcb").get<double>();
        for (const auto& [ops, v] : j.at("radius").items()) r.radius.emplace_back(ops, radius_from_json(v));
        r.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("error")) r.error = j["error"].get<std::string>();
        if (j.contains("elapsed_ms")) r.elapsed_ms = j["elapsed_ms"].get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bad run record: ") + e.what());
    }
}

inline std::vector<RunRecord> read_records(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open records " + path.string());
    std::vector<RunRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(from_json_line(line));
    }
    return out;
}

}  // namespace editcert::cli
