#pragma once
// Base classifiers that live outside the process.
//
// Subprocess protocol (newline-delimited over the child's stdin/stdout):
//   request   "PREDICT <base64 of token bytes>"
//   response  "CLASS <integer>" or "ERR <message>"
//   The child may announce pipelining support at startup with
//   "CAPS concurrent=<n>"; otherwise one request is in flight at a time.
//
// Tokens are packed little-endian, one byte each for alphabets of at most 256
// symbols, two bytes up to 65536 symbols, four bytes beyond that.

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <poll.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "editcert/classifier.hpp"
#include "editcert/seqcore.hpp"

namespace editcert {

class TransportError : public std::runtime_error {
public:
    TransportError(const std::string& what, std::size_t attempts)
        : std::runtime_error(what + " (after " + std::to_string(attempts) + " attempt" + (attempts == 1 ? "" : "s") +
                             ")"),
          attempts_(attempts) {}
    std::size_t attempts() const noexcept { return attempts_; }

private:
    std::size_t attempts_;
};

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace wire {

inline std::string base64_encode(std::string_view in) {
    static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < in.size(); i += 3) {
        const std::uint32_t v = static_cast<unsigned char>(in[i]) << 16 | static_cast<unsigned char>(in[i + 1]) << 8 |
                                static_cast<unsigned char>(in[i + 2]);
        out += kAlphabet[v >> 18 & 63];
        out += kAlphabet[v >> 12 & 63];
        out += kAlphabet[v >> 6 & 63];
        out += kAlphabet[v & 63];
    }
    if (i < in.size()) {
        std::uint32_t v = static_cast<unsigned char>(in[i]) << 16;
        if (i + 1 < in.size()) v |= static_cast<unsigned char>(in[i + 1]) << 8;
        out += kAlphabet[v >> 18 & 63];
        out += kAlphabet[v >> 12 & 63];
        out += i + 1 < in.size() ? kAlphabet[v >> 6 & 63] : '=';
        out += '=';
    }
    return out;
}

inline std::string base64_decode(std::string_view in) {
    auto value = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (in.size() % 4 != 0) throw ProtocolError("base64 payload length is not a multiple of 4");
    std::string out;
    out.reserve(in.size() / 4 * 3);
    for (std::size_t i = 0; i < in.size(); i += 4) {
        int v[4];
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            const char c = in[i + static_cast<std::size_t>(j)];
            if (c == '=' && i + 4 == in.size() && j >= 2) {
                v[j] = 0;
                ++pad;
            } else if (pad > 0 || (v[j] = value(c)) < 0) {
                throw ProtocolError("invalid base64 payload");
            }
        }
        const std::uint32_t bits = static_cast<std::uint32_t>(v[0] << 18 | v[1] << 12 | v[2] << 6 | v[3]);
        out += static_cast<char>(bits >> 16 & 0xff);
        if (pad < 2) out += static_cast<char>(bits >> 8 & 0xff);
        if (pad < 1) out += static_cast<char>(bits & 0xff);
    }
    return out;
}

inline std::size_t token_width(Alphabet alphabet) {
    if (alphabet.size <= 256) return 1;
    if (alphabet.size <= 65536) return 2;
    return 4;
}

inline std::string pack_tokens(const TokenSeq& x) {
    const std::size_t width = token_width(x.alphabet());
    std::string out;
    out.reserve(x.size() * width);
    for (Token t : x.tokens())
        for (std::size_t b = 0; b < width; ++b) out += static_cast<char>(t >> (8 * b) & 0xff);
    return out;
}

inline TokenSeq unpack_tokens(std::string_view bytes, Alphabet alphabet) {
    const std::size_t width = token_width(alphabet);
    if (bytes.size() % width != 0) throw ProtocolError("token payload is not a whole number of tokens");
    std::vector<Token> tokens(bytes.size() / width, 0);
    for (std::size_t i = 0; i < tokens.size(); ++i)
        for (std::size_t b = 0; b < width; ++b)
            tokens[i] |= static_cast<Token>(static_cast<unsigned char>(bytes[i * width + b])) << (8 * b);
    return TokenSeq(std::move(tokens), alphabet);
}

/// Parses "CLASS <n>"; "ERR <msg>" and anything else throw.
inline ClassIndex parse_class_line(std::string_view line, std::size_t num_classes) {
    if (line.rfind("ERR", 0) == 0) {
        std::string_view msg = line.substr(3);
        if (!msg.empty() && msg.front() == ' ') msg.remove_prefix(1);
        throw ProtocolError("classifier reported an error: " + std::string(msg));
    }
    if (line.rfind("CLASS ", 0) != 0) throw ProtocolError("malformed response line: '" + std::string(line) + "'");
    const std::string_view num = line.substr(6);
    std::size_t value = 0;
    if (num.empty()) throw ProtocolError("malformed response line: '" + std::string(line) + "'");
    for (char c : num) {
        if (c < '0' || c > '9') throw ProtocolError("malformed class index in '" + std::string(line) + "'");
        value = value * 10 + static_cast<std::size_t>(c - '0');
        if (value > (1ULL << 40)) throw ProtocolError("class index overflow in '" + std::string(line) + "'");
    }
    if (value >= num_classes)
        throw ProtocolError("class index " + std::to_string(value) + " out of range for " +
                            std::to_string(num_classes) + " classes");
    return value;
}

}  // namespace wire

struct SubprocessOptions {
    std::size_t max_attempts = 3;
    std::chrono::milliseconds handshake_timeout{200};
    std::chrono::milliseconds response_timeout{30000};
};

/// Runs `command` through /bin/sh and speaks the line protocol over its
/// stdin/stdout. A crashed or unresponsive child is restarted and the
/// in-flight window retried, up to max_attempts tries per window.
class SubprocessClassifier final : public BaseClassifier {
public:
    SubprocessClassifier(std::string command, std::size_t num_classes, SubprocessOptions opts = {})
        : command_(std::move(command)), num_classes_(num_classes), opts_(opts) {
        std::signal(SIGPIPE, SIG_IGN);
        if (opts_.max_attempts == 0) opts_.max_attempts = 1;
    }

    SubprocessClassifier(const SubprocessClassifier&) = delete;
    SubprocessClassifier& operator=(const SubprocessClassifier&) = delete;
    ~SubprocessClassifier() override { stop(); }

    std::size_t num_classes() const override { return num_classes_; }
    std::size_t max_concurrency() const override { return 1; }

    /// Pipelining window announced by the child (1 until it says otherwise).
    std::size_t pipeline_depth() {
        ensure_started_once();
        return depth_;
    }

    ClassIndex query(const TokenSeq& x) override {
        ClassIndex out = 0;
        query_batch(std::span(&x, 1), std::span(&out, 1));
        return out;
    }

    void query_batch(std::span<const TokenSeq> xs, std::span<ClassIndex> out) override {
        std::size_t pos = 0;
        while (pos < xs.size()) {
            ensure_started_once();
            const std::size_t n = std::min(depth_, xs.size() - pos);
            std::string last_error;
            bool done = false;
            for (std::size_t attempt = 1; attempt <= opts_.max_attempts && !done; ++attempt) {
                try {
                    if (!running()) start();
                    for (std::size_t i = 0; i < n; ++i)
                        write_line("PREDICT " + wire::base64_encode(wire::pack_tokens(xs[pos + i])));
                    for (std::size_t i = 0; i < n; ++i) {
                        std::string line = read_response_line();
                        out[pos + i] = wire::parse_class_line(line, num_classes_);
                    }
                    done = true;
                } catch (const TransportFailure& e) {
                    last_error = e.what();
                    stop();
                } catch (const ProtocolError&) {
                    stop();  // unread responses would desynchronize the stream
                    throw;
                }
            }
            if (!done) throw TransportError("subprocess '" + command_ + "': " + last_error, opts_.max_attempts);
            pos += n;
        }
    }

private:
    struct TransportFailure : std::runtime_error {
        using std::runtime_error::runtime_error;
    };

    bool running() const noexcept { return pid_ > 0; }

    void ensure_started_once() {
        if (started_once_) return;
        started_once_ = true;
        try {
            start();
        } catch (const TransportFailure&) {
            stop();
        }
    }

    void start() {
        int to_child[2], from_child[2];
        if (pipe(to_child) != 0) throw TransportFailure(std::string("pipe: ") + std::strerror(errno));
        if (pipe(from_child) != 0) {
            close(to_child[0]);
            close(to_child[1]);
            throw TransportFailure(std::string("pipe: ") + std::strerror(errno));
        }
        const pid_t pid = fork();
        if (pid < 0) {
            for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) close(fd);
            throw TransportFailure(std::string("fork: ") + std::strerror(errno));
        }
        if (pid == 0) {
            dup2(to_child[0], STDIN_FILENO);
            dup2(from_child[1], STDOUT_FILENO);
            for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) close(fd);
            execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
            _exit(127);
        }
        close(to_child[0]);
        close(from_child[1]);
        pid_ = pid;
        write_fd_ = to_child[1];
        read_fd_ = from_child[0];
        buffer_.clear();
        saw_response_ = false;

        // Optional handshake line.
        if (auto line = read_line(opts_.handshake_timeout, /*allow_timeout=*/true)) {
            if (!parse_caps(*line)) pending_.push_back(std::move(*line));
        }
    }

    void stop() noexcept {
        if (write_fd_ >= 0) close(write_fd_);
        if (read_fd_ >= 0) close(read_fd_);
        write_fd_ = read_fd_ = -1;
        pending_.clear();
        buffer_.clear();
        if (pid_ > 0) {
            int status = 0;
            for (int i = 0; i < 100; ++i) {
                if (waitpid(pid_, &status, WNOHANG) != 0) {
                    pid_ = -1;
                    return;
                }
                std::this_thread::sleep_for(std::chrono::milliseconds(5));
            }
            kill(pid_, SIGKILL);
            waitpid(pid_, &status, 0);
            pid_ = -1;
        }
    }

    bool parse_caps(std::string_view line) {
        constexpr std::string_view kPrefix = "CAPS concurrent=";
        if (line.rfind(kPrefix, 0) != 0) return false;
        std::size_t n = 0;
        for (char c : line.substr(kPrefix.size())) {
            if (c < '0' || c > '9') throw ProtocolError("malformed CAPS line: '" + std::string(line) + "'");
            n = n * 10 + static_cast<std::size_t>(c - '0');
        }
        depth_ = std::max<std::size_t>(1, n);
        return true;
    }

    void write_line(const std::string& line) {
        std::string data = line + '\n';
        std::size_t off = 0;
        while (off < data.size()) {
            const ssize_t w = ::write(write_fd_, data.data() + off, data.size() - off);
            if (w < 0) {
                if (errno == EINTR) continue;
                throw TransportFailure(std::string("write to classifier failed: ") + std::strerror(errno));
            }
            off += static_cast<std::size_t>(w);
        }
    }

    std::string read_response_line() {
        for (;;) {
            std::string line;
            if (!pending_.empty()) {
                line = std::move(pending_.front());
                pending_.erase(pending_.begin());
            } else {
                line = *read_line(opts_.response_timeout, false);
            }
            if (!saw_response_ && parse_caps(line)) continue;
            saw_response_ = true;
            return line;
        }
    }

    std::optional<std::string> read_line(std::chrono::milliseconds timeout, bool allow_timeout) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        for (;;) {
            if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline -
                                                                                    std::chrono::steady_clock::now());
            if (left.count() <= 0) {
                if (allow_timeout) return std::nullopt;
                throw TransportFailure("timed out waiting for classifier response");
            }
            pollfd pfd{read_fd_, POLLIN, 0};
            const int ready = poll(&pfd, 1, static_cast<int>(left.count()));
            if (ready < 0) {
                if (errno == EINTR) continue;
                throw TransportFailure(std::string("poll failed: ") + std::strerror(errno));
            }
            if (ready == 0) continue;
            char chunk[4096];
            const ssize_t got = ::read(read_fd_, chunk, sizeof chunk);
            if (got < 0) {
                if (errno == EINTR) continue;
                throw TransportFailure(std::string("read from classifier failed: ") + std::strerror(errno));
            }
            if (got == 0) {
                if (allow_timeout) return std::nullopt;
                throw TransportFailure("classifier closed its output");
            }
            buffer_.append(chunk, static_cast<std::size_t>(got));
        }
    }

    std::string command_;
    std::size_t num_classes_;
    SubprocessOptions opts_;
    pid_t pid_ = -1;
    int write_fd_ = -1;
    int read_fd_ = -1;
    std::string buffer_;
    std::vector<std::string> pending_;
    std::size_t depth_ = 1;
    bool started_once_ = false;
    bool saw_response_ = false;
};

}  // namespace editcert
