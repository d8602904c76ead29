#pragma once
// Byte sequences reinterpreted as sequences of chunks (e.g. instructions).
// Chunk contents are interned into a dense token alphabet per corpus; token 0
// is reserved for chunks that were never seen while the dictionary was built.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "editcert/seqcore.hpp"

namespace editcert {

/// Start offsets of chunks within a byte sequence: begins at 0, strictly
/// increasing, every offset inside the sequence.
struct ChunkMap {
    std::vector<std::size_t> boundaries;

    void validate(std::size_t byte_length) const {
        if (byte_length == 0) {
            if (boundaries.size() > 1 || (boundaries.size() == 1 && boundaries[0] != 0))
                throw std::out_of_range("chunk map has boundaries for an empty sequence");
            return;
        }
        if (boundaries.empty() || boundaries.front() != 0)
            throw std::out_of_range("chunk map must begin at offset 0");
        for (std::size_t i = 1; i < boundaries.size(); ++i) {
            if (boundaries[i] <= boundaries[i - 1])
                throw std::out_of_range("chunk boundaries must be strictly increasing");
        }
        if (boundaries.back() >= byte_length)
            throw std::out_of_range("chunk boundary " + std::to_string(boundaries.back()) +
                                    " is past the end of a " + std::to_string(byte_length) + "-byte sequence");
    }

    /// Sidecar format: one decimal offset per line, ascending, first line "0".
    static ChunkMap read(std::istream& in) {
        ChunkMap map;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::size_t used = 0;
            unsigned long long v = 0;
            try {
                v = std::stoull(line, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != line.size() || line.front() == '-')
                throw std::invalid_argument("chunk map line " + std::to_string(lineno) + " is not an offset: " + line);
            map.boundaries.push_back(static_cast<std::size_t>(v));
        }
        return map;
    }

    static ChunkMap read_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open chunk map " + path);
        return read(in);
    }

    void write(std::ostream& out) const {
        for (std::size_t b : boundaries) out << b << '\n';
    }
};

class ChunkDictionary {
public:
    static constexpr Token kUnknown = 0;

    ChunkDictionary() : contents_{std::string()} {}

    /// Token for `chunk`, adding it when new.
    Token intern(std::string_view chunk) {
        auto [it, inserted] = ids_.try_emplace(std::string(chunk), static_cast<Token>(contents_.size()));
        if (inserted) contents_.emplace_back(chunk);
        return it->second;
    }

    /// Token for `chunk`, or kUnknown.
    Token lookup(std::string_view chunk) const {
        auto it = ids_.find(std::string(chunk));
        return it == ids_.end() ? kUnknown : it->second;
    }

    const std::string& contents(Token t) const { return contents_.at(t); }

    /// Alphabet covering every interned chunk plus the unknown token.
    Alphabet alphabet() const { return Alphabet(contents_.size()); }
    std::size_t size() const noexcept { return contents_.size(); }

    void write(std::ostream& out) const {
        out << "editcert-chunkdict v1\n";
        out << "count " << contents_.size() << '\n';
        static constexpr char kHex[] = "0123456789abcdef";
        for (std::size_t i = 1; i < contents_.size(); ++i) {
            out << "chunk " << i << ' ';
            for (unsigned char c : contents_[i]) out << kHex[c >> 4] << kHex[c & 15];
            out << '\n';
        }
    }

    static ChunkDictionary read(std::istream& in) {
        std::string line;
        if (!std::getline(in, line) || line != "editcert-chunkdict v1")
            throw std::invalid_argument("not a chunk dictionary (bad header)");
        ChunkDictionary dict;
        std::size_t count = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream fields(line);
            std::string key;
            fields >> key;
            if (key == "count") {
                fields >> count;
            } else if (key == "chunk") {
                std::size_t id = 0;
                std::string hex;
                fields >> id >> hex;
                if (!fields || id != dict.contents_.size() || hex.size() % 2 != 0)
                    throw std::invalid_argument("malformed chunk dictionary entry: " + line);
                std::string bytes;
                for (std::size_t i = 0; i < hex.size(); i += 2)
                    bytes.push_back(static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
                dict.intern(bytes);
            } else {
                throw std::invalid_argument("unknown chunk dictionary record: " + key);
            }
        }
        if (count != 0 && count != dict.size()) throw std::invalid_argument("chunk dictionary count mismatch");
        return dict;
    }

private:
    std::map<std::string, Token, std::less<>> ids_;
    std::vector<std::string> contents_;
};

namespace detail {

template <typename Lookup>
TokenSeq chunk_tokens(std::string_view bytes, const ChunkMap& map, Lookup&& lookup, const ChunkDictionary& dict) {
    map.validate(bytes.size());
    std::vector<Token> tokens;
    if (!bytes.empty()) {
        tokens.reserve(map.boundaries.size());
        for (std::size_t i = 0; i < map.boundaries.size(); ++i) {
            const std::size_t begin = map.boundaries[i];
            const std::size_t end = i + 1 < map.boundaries.size() ? map.boundaries[i + 1] : bytes.size();
            tokens.push_back(lookup(bytes.substr(begin, end - begin)));
        }
    }
    return TokenSeq(std::move(tokens), dict.alphabet());
}

}  // namespace detail

/// Chunk `bytes` at the map's boundaries, interning new chunk contents.
inline TokenSeq apply_chunking(std::string_view bytes, const ChunkMap& map, ChunkDictionary& dict) {
    return detail::chunk_tokens(bytes, map, [&dict](std::string_view c) { return dict.intern(c); }, dict);
}

/// Chunk `bytes` against a frozen dictionary; unseen chunks become kUnknown.
inline TokenSeq apply_chunking_frozen(std::string_view bytes, const ChunkMap& map, const ChunkDictionary& dict) {
    return detail::chunk_tokens(bytes, map, [&dict](std::string_view c) { return dict.lookup(c); }, dict);
}

/// Concatenated chunk contents.
inline std::string reconstruct_bytes(const TokenSeq& chunks, const ChunkDictionary& dict) {
    std::string out;
    for (Token t : chunks.tokens()) out += dict.contents(t);
    return out;
}

}  // namespace editcert
