#pragma once
// HTTP base classifier: POST {"tokens_b64": "..."} to /predict, expect
// {"class": <int>} with status 200.

#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "editcert/external.hpp"

namespace editcert {

struct HttpOptions {
    std::size_t max_attempts = 3;
    int timeout_seconds = 30;
};

class HttpClassifier final : public BaseClassifier {
public:
    /// `url` is "http://host[:port][/path]"; the path defaults to /predict.
    HttpClassifier(const std::string& url, std::size_t num_classes, HttpOptions opts = {})
        : num_classes_(num_classes), opts_(opts) {
        const std::string scheme = "http://";
        if (url.rfind(scheme, 0) != 0) throw std::invalid_argument("endpoint URL must start with http://: " + url);
        const std::size_t slash = url.find('/', scheme.size());
        base_ = slash == std::string::npos ? url : url.substr(0, slash);
        path_ = slash == std::string::npos ? "/predict" : url.substr(slash);
        if (path_ == "/") path_ = "/predict";
        client_ = std::make_unique<httplib::Client>(base_);
        client_->set_connection_timeout(opts_.timeout_seconds, 0);
        client_->set_read_timeout(opts_.timeout_seconds, 0);
        client_->set_write_timeout(opts_.timeout_seconds, 0);
        if (opts_.max_attempts == 0) opts_.max_attempts = 1;
    }

    std::size_t num_classes() const override { return num_classes_; }
    std::size_t max_concurrency() const override { return 1; }

    ClassIndex query(const TokenSeq& x) override {
        const nlohmann::json body = {{"tokens_b64", wire::base64_encode(wire::pack_tokens(x))}};
        const std::string payload = body.dump();
        std::string last_error;
        for (std::size_t attempt = 1; attempt <= opts_.max_attempts; ++attempt) {
            auto res = client_->Post(path_, payload, "application/json");
            if (!res) {
                last_error = httplib::to_string(res.error());
                continue;
            }
            if (res->status != 200) {
                last_error = "HTTP status " + std::to_string(res->status);
                continue;
            }
            nlohmann::json reply;
            try {
                reply = nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception&) {
                throw ProtocolError("endpoint returned invalid JSON: " + res->body.substr(0, 200));
            }
            if (!reply.is_object() || !reply.contains("class") || !reply["class"].is_number_integer())
                throw ProtocolError("endpoint reply lacks an integer 'class' field");
            const auto cls = reply["class"].get<long long>();
            if (cls < 0 || static_cast<std::size_t>(cls) >= num_classes_)
                throw ProtocolError("class index " + std::to_string(cls) + " out of range for " +
                                    std::to_string(num_classes_) + " classes");
            return static_cast<ClassIndex>(cls);
        }
        throw TransportError("endpoint " + base_ + path_ + ": " + last_error, opts_.max_attempts);
    }

private:
    std::size_t num_classes_;
    HttpOptions opts_;
    std::string base_;
    std::string path_;
    std::unique_ptr<httplib::Client> client_;
};

}  // namespace editcert
