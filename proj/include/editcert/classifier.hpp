#pragma once
// The base-classifier boundary. Smoothing treats every classifier as an
// oracle from token sequences to class indices.

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

#include "editcert/certify.hpp"
#include "editcert/seqcore.hpp"

namespace editcert {

/// Raised when the base classifier cannot answer a query.
class QueryError : public std::runtime_error {
public:
    QueryError(const std::string& what, std::size_t sample_index)
        : std::runtime_error(what), sample_index_(sample_index) {}
    std::size_t sample_index() const noexcept { return sample_index_; }

private:
    std::size_t sample_index_;
};

/// A deterministic classifier. `query` must be a pure function of its input
/// for the lifetime of a certification run.
class BaseClassifier {
public:
    virtual ~BaseClassifier() = default;

    virtual std::size_t num_classes() const = 0;
    virtual ClassIndex query(const TokenSeq& x) = 0;

    /// Answer a batch. Implementations that can pipeline requests override this.
    virtual void query_batch(std::span<const TokenSeq> xs, std::span<ClassIndex> out) {
        for (std::size_t i = 0; i < xs.size(); ++i) out[i] = query(xs[i]);
    }

    /// How many threads may call query concurrently; 0 means unlimited.
    virtual std::size_t max_concurrency() const { return 1; }
};

/// Adapts a callable. Used for stubs, lookup tables, and tests.
class FunctionClassifier final : public BaseClassifier {
public:
    using Fn = std::function<ClassIndex(const TokenSeq&)>;

    FunctionClassifier(std::size_t num_classes, Fn fn, std::size_t max_concurrency = 0)
        : num_classes_(num_classes), fn_(std::move(fn)), max_concurrency_(max_concurrency) {}

    std::size_t num_classes() const override { return num_classes_; }
    ClassIndex query(const TokenSeq& x) override { return fn_(x); }
    std::size_t max_concurrency() const override { return max_concurrency_; }

private:
    std::size_t num_classes_;
    Fn fn_;
    std::size_t max_concurrency_;
};

inline FunctionClassifier constant_classifier(std::size_t num_classes, ClassIndex c) {
    return FunctionClassifier(num_classes, [c](const TokenSeq&) { return c; });
}

}  // namespace editcert
