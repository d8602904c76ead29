#pragma once
// Token sequences, edit-op sets, and the edit distances the certificates are
// stated in (Levenshtein, LCS, Hamming and every op-restricted variant).

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace editcert {

using Token = std::uint32_t;

class AlphabetMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class CapExceeded : public std::length_error {
public:
    using std::length_error::length_error;
};

struct Alphabet {
    std::size_t size = 256;

    constexpr explicit Alphabet(std::size_t n = 256) : size(n) {
        if (n == 0) throw std::invalid_argument("alphabet size must be positive");
    }
    constexpr bool contains(Token t) const noexcept { return t < size; }
    friend constexpr bool operator==(const Alphabet&, const Alphabet&) = default;
};

inline constexpr Alphabet kByteAlphabet{256};

/// A finite sequence over an alphabet. The empty sequence is valid.
class TokenSeq {
public:
    TokenSeq() = default;

    TokenSeq(std::vector<Token> tokens, Alphabet alphabet) : tokens_(std::move(tokens)), alphabet_(alphabet) {
        for (Token t : tokens_) {
            if (!alphabet_.contains(t)) {
                throw std::invalid_argument("token " + std::to_string(t) + " outside alphabet of size " +
                                            std::to_string(alphabet_.size));
            }
        }
    }

    TokenSeq(std::initializer_list<Token> tokens, Alphabet alphabet)
        : TokenSeq(std::vector<Token>(tokens), alphabet) {}

    /// Bytes of a string as tokens over the 256-symbol alphabet.
    static TokenSeq from_bytes(std::string_view bytes) {
        std::vector<Token> tokens(bytes.size());
        std::transform(bytes.begin(), bytes.end(), tokens.begin(),
                       [](char c) { return static_cast<Token>(static_cast<unsigned char>(c)); });
        TokenSeq s;
        s.tokens_ = std::move(tokens);
        return s;
    }

    /// Letters 'A', 'B', ... map to tokens 0, 1, ... over an alphabet of the given size.
    static TokenSeq from_letters(std::string_view letters, Alphabet alphabet) {
        std::vector<Token> tokens;
        tokens.reserve(letters.size());
        for (char c : letters) tokens.push_back(static_cast<Token>(c - 'A'));
        return TokenSeq(std::move(tokens), alphabet);
    }

    const std::vector<Token>& tokens() const noexcept { return tokens_; }
    std::span<const Token> view() const noexcept { return tokens_; }
    Alphabet alphabet() const noexcept { return alphabet_; }
    std::size_t size() const noexcept { return tokens_.size(); }
    bool empty() const noexcept { return tokens_.empty(); }
    Token operator[](std::size_t i) const { return tokens_[i]; }

    /// Same tokens over a (possibly larger) alphabet.
    TokenSeq with_alphabet(Alphabet alphabet) const { return TokenSeq(tokens_, alphabet); }

    std::string to_letters() const {
        std::string out;
        out.reserve(tokens_.size());
        for (Token t : tokens_) out.push_back(static_cast<char>('A' + t));
        return out;
    }

    friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
    friend auto operator<=>(const TokenSeq& a, const TokenSeq& b) {
        if (auto c = a.alphabet_.size <=> b.alphabet_.size; c != 0) return c;
        return a.tokens_ <=> b.tokens_;
    }

private:
    std::vector<Token> tokens_;
    Alphabet alphabet_{kByteAlphabet};
};

struct TokenSeqHash {
    std::size_t operator()(std::span<const Token> tokens) const noexcept {
        return std::hash<std::string_view>{}(
            std::string_view(reinterpret_cast<const char*>(tokens.data()), tokens.size() * sizeof(Token)));
    }
    std::size_t operator()(const std::vector<Token>& tokens) const noexcept { return (*this)(std::span(tokens)); }
    std::size_t operator()(const TokenSeq& s) const noexcept { return (*this)(s.view()); }
};

/// Which elementary edit ops an adversary may use. Canonical string form joins
/// the set members in the order del, ins, sub with '+', e.g. "del+ins+sub".
struct EditOpSet {
    bool del = false;
    bool ins = false;
    bool sub = false;

    static constexpr EditOpSet levenshtein() { return {true, true, true}; }
    static constexpr EditOpSet lcs() { return {true, true, false}; }
    static constexpr EditOpSet hamming() { return {false, false, true}; }

    constexpr bool valid() const noexcept { return del || ins || sub; }

    /// Ops that undo these ops: a deletion turning a into b is an insertion
    /// turning b into a.
    constexpr EditOpSet dual() const noexcept { return {ins, del, sub}; }

    constexpr bool contains(const EditOpSet& o) const noexcept {
        return (del || !o.del) && (ins || !o.ins) && (sub || !o.sub);
    }

    std::string to_string() const {
        std::string out;
        auto add = [&out](const char* name) {
            if (!out.empty()) out += '+';
            out += name;
        };
        if (del) add("del");
        if (ins) add("ins");
        if (sub) add("sub");
        return out;
    }

    /// Accepts "del+ins", "del,ins" or "ins|del" style lists.
    static EditOpSet parse(std::string_view text) {
        EditOpSet ops;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            std::size_t end = text.find_first_of("+,|", pos);
            if (end == std::string_view::npos) end = text.size();
            std::string_view name = text.substr(pos, end - pos);
            while (!name.empty() && name.front() == ' ') name.remove_prefix(1);
            while (!name.empty() && name.back() == ' ') name.remove_suffix(1);
            if (name == "del") ops.del = true;
            else if (name == "ins") ops.ins = true;
            else if (name == "sub") ops.sub = true;
            else if (name == "lev" || name == "all") ops = levenshtein();
            else if (!name.empty()) throw std::invalid_argument("unknown edit op '" + std::string(name) + "'");
            pos = end + 1;
        }
        if (!ops.valid()) throw std::invalid_argument("edit op set must contain at least one op");
        return ops;
    }

    /// All seven non-empty op sets.
    static std::vector<EditOpSet> all_sets() {
        std::vector<EditOpSet> out;
        for (int m = 1; m < 8; ++m) out.push_back({(m & 1) != 0, (m & 2) != 0, (m & 4) != 0});
        return out;
    }

    friend constexpr bool operator==(const EditOpSet&, const EditOpSet&) = default;
};

/// Parses a ';'-separated list of op sets, e.g. "del,ins,sub;sub".
inline std::vector<EditOpSet> parse_op_set_list(std::string_view text) {
    std::vector<EditOpSet> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find(';', pos);
        if (end == std::string_view::npos) end = text.size();
        if (end > pos) out.push_back(EditOpSet::parse(text.substr(pos, end - pos)));
        pos = end + 1;
    }
    if (out.empty()) throw std::invalid_argument("empty op set list");
    return out;
}

/// Edit distance value; std::nullopt means no edit path exists.
using Distance = std::optional<std::size_t>;

namespace detail {

inline void require_same_alphabet(const TokenSeq& a, const TokenSeq& b) {
    if (a.alphabet() != b.alphabet()) {
        throw AlphabetMismatch("sequences are over different alphabets (" + std::to_string(a.alphabet().size) +
                               " vs " + std::to_string(b.alphabet().size) + ")");
    }
}

inline std::size_t lcs_length(std::span<const Token> a, std::span<const Token> b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Wagner-Fischer DP where disallowed ops have infinite cost. Ops transform a
/// into b: `del` removes a token of a, `ins` adds a token of b.
inline Distance edit_distance(std::span<const Token> a, std::span<const Token> b, EditOpSet ops) {
    constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max() / 2;
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = ops.ins ? j : (j == 0 ? 0 : kInf);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = ops.del ? i : kInf;
        for (std::size_t j = 1; j <= m; ++j) {
            std::size_t best = kInf;
            if (a[i - 1] == b[j - 1]) best = prev[j - 1];
            else if (ops.sub) best = prev[j - 1] + 1;
            if (ops.del) best = std::min(best, prev[j] + 1);
            if (ops.ins) best = std::min(best, cur[j - 1] + 1);
            cur[j] = std::min(best, kInf);
        }
        std::swap(prev, cur);
    }
    if (prev[m] >= kInf) return std::nullopt;
    return prev[m];
}

}  // namespace detail

inline std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
    detail::require_same_alphabet(a, b);
    return detail::lcs_length(a.view(), b.view());
}

/// |a| + |b| - 2 |LCS(a, b)|; equals the edit distance with ops {del, ins}.
inline std::size_t lcs_distance(const TokenSeq& a, const TokenSeq& b) {
    return a.size() + b.size() - 2 * lcs_length(a, b);
}

/// Minimum number of ops from `ops` transforming a into b.
inline Distance edit_distance(const TokenSeq& a, const TokenSeq& b, EditOpSet ops) {
    detail::require_same_alphabet(a, b);
    if (!ops.valid()) throw std::invalid_argument("edit op set must contain at least one op");
    return detail::edit_distance(a.view(), b.view(), ops);
}

inline Distance hamming_distance(const TokenSeq& a, const TokenSeq& b) {
    detail::require_same_alphabet(a, b);
    if (a.size() != b.size()) return std::nullopt;
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

}  // namespace editcert
