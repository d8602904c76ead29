#include <gtest/gtest.h>

#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "editcert/external.hpp"
#include "editcert/external_http.hpp"
#include "editcert/histogram_model.hpp"
#include "support.hpp"

using namespace editcert;

namespace {

// Class 1 carries token 7 at frequency >= 0.3; class 0 never contains it.
std::vector<LabeledSeq> planted(std::size_t n, std::uint64_t seed) {
    CounterRng rng(seed);
    std::vector<LabeledSeq> out;
    for (std::size_t i = 0; i < n; ++i) {
        const ClassIndex y = i % 2;
        const std::size_t len = 50 + rng.below(100);
        std::vector<Token> t(len);
        for (auto& v : t) {
            if (y == 1 && rng.uniform() < 0.35) {
                v = 7;
            } else {
                v = static_cast<Token>(rng.below(255));
                if (v >= 7) ++v;
            }
        }
        out.push_back({TokenSeq(std::move(t), kByteAlphabet), y});
    }
    return out;
}

double accuracy(HistogramModel& m, const std::vector<LabeledSeq>& data) {
    std::size_t ok = 0;
    for (const auto& ex : data) ok += m.query(ex.seq) == ex.label;
    return static_cast<double>(ok) / static_cast<double>(data.size());
}

// Benign examples whose raw scores are exactly `scores`: token t carries weight t.
std::pair<HistogramModel, std::vector<LabeledSeq>> scored(const std::vector<int>& scores) {
    HistogramModel m(Alphabet(128));
    for (std::size_t t = 0; t < 128; ++t) m.token_weights()[t] = static_cast<double>(t);
    std::vector<LabeledSeq> data;
    for (int s : scores) data.push_back({TokenSeq({static_cast<Token>(s)}, Alphabet(128)), 0});
    return {m, data};
}

std::string stub(const std::string& args) { return std::string(STUB_CLASSIFIER_PATH) + " " + args; }

}  // namespace

TEST(HistogramTraining, SeparableFamilyReachesFullAccuracy) {
    const auto train = planted(200, 1), test = planted(200, 2);
    TrainConfig cfg;
    cfg.mechanism = DeletionMechanism(0.9);
    auto model = train_histogram(train, cfg, 11);
    EXPECT_DOUBLE_EQ(accuracy(model, test), 1.0);
    EXPECT_GT(model.token_weights()[7], 0.0);
}

TEST(HistogramTraining, ZeroEpochsGivesZeroModel) {
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto data = planted(20, 3);
    const auto model = train_histogram(data, cfg, 1);
    for (double w : model.token_weights()) EXPECT_EQ(w, 0.0);
    EXPECT_EQ(model.length_weight(), 0.0);
    EXPECT_EQ(model.bias(), 0.0);
    for (const auto& ex : data) EXPECT_EQ(model.score(ex.seq), 0.0);
}

TEST(HistogramTraining, Deterministic) {
    const auto data = planted(60, 4);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.mechanism = DeletionMechanism(0.5);
    cfg.min_preserved = 10;
    const auto a = train_histogram(data, cfg, 9);
    const auto b = train_histogram(data, cfg, 9);
    EXPECT_EQ(a.token_weights(), b.token_weights());
    EXPECT_EQ(a.length_weight(), b.length_weight());
    EXPECT_EQ(a.bias(), b.bias());
    const auto c = train_histogram(data, cfg, 10);
    EXPECT_NE(a.token_weights(), c.token_weights());
}

TEST(HistogramTraining, RejectsBadData) {
    std::vector<LabeledSeq> empty;
    EXPECT_THROW(train_histogram(empty, {}, 1), std::invalid_argument);
    auto one_class = planted(10, 5);
    for (auto& ex : one_class) ex.label = 0;
    EXPECT_THROW(train_histogram(one_class, {}, 1), std::invalid_argument);
    std::vector<LabeledSeq> tiny = {{TokenSeq({0}, Alphabet(1)), 0}, {TokenSeq({0}, Alphabet(1)), 1}};
    EXPECT_THROW(train_histogram(tiny, {}, 1), std::invalid_argument);
    auto three = planted(10, 6);
    three[0].label = 2;
    EXPECT_THROW(train_histogram(three, {}, 1), std::invalid_argument);
}

TEST(HistogramTraining, MinPreservedFloorsTrainingDraws) {
    TrainConfig cfg;
    cfg.mechanism = DeletionMechanism(0.99);
    cfg.min_preserved = 20;
    const TokenSeq x(std::vector<Token>(100, 3), kByteAlphabet);
    for (std::uint64_t s = 0; s < 50; ++s) EXPECT_GE(training_perturbation(x, cfg, SeedSpec{1, s}).size(), 20u);
    cfg.mechanism = AblationMechanism(0.99);
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto z = training_perturbation(x, cfg, SeedSpec{1, s});
        EXPECT_EQ(std::count(z.tokens().begin(), z.tokens().end(), 3u), 20);
    }
}

TEST(HistogramModelProps, PermutationInvariant) {
    const auto model = train_histogram(planted(100, 7), {}, 3);
    CounterRng rng(8);
    for (int t = 0; t < 50; ++t) {
        auto x = testsupport::random_seq(rng, 80, 256, 1);
        auto tokens = x.tokens();
        shuffle(std::span(tokens), rng);
        EXPECT_EQ(model.score(x), model.score(TokenSeq(tokens, kByteAlphabet)));
    }
}

TEST(HistogramModelProps, FileRoundTrip) {
    auto model = train_histogram(planted(100, 9), {}, 4);
    model.set_threshold(0.123456789);
    std::stringstream buf;
    model.write(buf);
    EXPECT_EQ(buf.str().rfind("editcert-histmodel v1\nalphabet 256\nthreshold 0.123456789\n", 0), 0u);
    const auto back = HistogramModel::read(buf);
    EXPECT_EQ(back.token_weights(), model.token_weights());
    EXPECT_EQ(back.length_weight(), model.length_weight());
    EXPECT_EQ(back.bias(), model.bias());
    EXPECT_EQ(back.threshold(), model.threshold());
    EXPECT_EQ(back.alphabet(), model.alphabet());

    std::istringstream bad_header("editcert-histmodel v2\n");
    EXPECT_THROW(HistogramModel::read(bad_header), std::invalid_argument);
    std::istringstream bad_index("editcert-histmodel v1\nalphabet 4\nw 9 1.0\n");
    EXPECT_THROW(HistogramModel::read(bad_index), std::invalid_argument);
    std::istringstream bad_number("editcert-histmodel v1\nalphabet 4\nbias x\n");
    EXPECT_THROW(HistogramModel::read(bad_number), std::invalid_argument);
    std::istringstream crlf("editcert-histmodel v1\r\nalphabet 4\r\nw 2 0.5\r\nbias -1\r\n");
    const auto win = HistogramModel::read(crlf);
    EXPECT_EQ(win.token_weights()[2], 0.5);
    EXPECT_EQ(win.bias(), -1.0);
}

TEST(Calibration, OrderStatisticExamples) {
    std::vector<int> s;
    for (int i = 1; i <= 100; ++i) s.push_back(i);
    auto [model, data] = scored(s);
    const double t = calibrate_threshold(model, data, std::nullopt, 0.05);
    EXPECT_GT(t, 95.0);
    EXPECT_EQ(t, std::nextafter(95.0, 1e9));
    EXPECT_DOUBLE_EQ(empirical_fpr(model, data, std::nullopt, t), 0.05);
    EXPECT_EQ(calibrate_threshold(model, data, std::nullopt, 1.0), 1.0);
    EXPECT_EQ(calibrate_threshold(model, data, std::nullopt, 0.0), std::nextafter(100.0, 1e9));
}

TEST(Calibration, IgnoresMalwareAndNeedsBenign) {
    auto [model, data] = scored({1, 2, 3, 4});
    data.push_back({TokenSeq({100}, Alphabet(128)), 1});
    EXPECT_EQ(calibrate_threshold(model, data, std::nullopt, 0.0), std::nextafter(4.0, 1e9));
    for (auto& ex : data) ex.label = 1;
    EXPECT_THROW(calibrate_threshold(model, data, std::nullopt, 0.1), std::invalid_argument);
    EXPECT_THROW(calibrate_threshold(model, data, std::nullopt, 1.5), std::invalid_argument);
}

TEST(Calibration, AchievesTargetExactlyAsCounted) {
    CounterRng rng(12);
    for (int t = 0; t < 30; ++t) {
        std::vector<int> s;
        const std::size_t n = 1 + rng.below(60);
        for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<int>(rng.below(20)));
        auto [model, data] = scored(s);
        const double target = rng.uniform();
        const double thr = calibrate_threshold(model, data, std::nullopt, target);
        EXPECT_LE(empirical_fpr(model, data, std::nullopt, thr), target + 1e-12);
        // no threshold below it reaching another benign score also meets the target
        double below = -1;
        for (int v : s)
            if (v < thr) below = std::max(below, static_cast<double>(v));
        if (below >= 0) {
            EXPECT_GT(empirical_fpr(model, data, std::nullopt, below), target);
        }
    }
}

TEST(Calibration, SmoothedMode) {
    const auto train = planted(200, 13);
    TrainConfig cfg;
    cfg.mechanism = DeletionMechanism(0.9);
    auto model = train_histogram(train, cfg, 5);
    const auto val = planted(200, 14);
    SmoothedCalibration sc;
    sc.samples = 50;
    const double thr = calibrate_threshold(model, val, sc, 0.05);
    EXPECT_LE(empirical_fpr(model, val, sc, thr), 0.05);
    sc.eta = {0.0, 0.0, 0.0};
    EXPECT_THROW(calibrate_threshold(model, val, sc, 0.05), std::invalid_argument);
}

TEST(Wire, Base64KnownVectors) {
    EXPECT_EQ(wire::base64_encode(""), "");
    EXPECT_EQ(wire::base64_encode("f"), "Zg==");
    EXPECT_EQ(wire::base64_encode("fo"), "Zm8=");
    EXPECT_EQ(wire::base64_encode("foo"), "Zm9v");
    EXPECT_EQ(wire::base64_encode("foobar"), "Zm9vYmFy");
    EXPECT_EQ(wire::base64_decode("Zm9vYmE="), "fooba");
    EXPECT_THROW(wire::base64_decode("Zm9"), ProtocolError);
    EXPECT_THROW(wire::base64_decode("Zm=v"), ProtocolError);
    EXPECT_THROW(wire::base64_decode("Z!9v"), ProtocolError);
}

TEST(Wire, TokenPackingRoundTrips) {
    for (std::size_t size : {2u, 256u, 257u, 65536u, 70000u}) {
        std::vector<Token> all;
        for (std::size_t t = 0; t < std::min<std::size_t>(size, 1000); ++t) all.push_back(static_cast<Token>(t));
        all.push_back(static_cast<Token>(size - 1));
        const TokenSeq x(all, Alphabet(size));
        const auto packed = wire::pack_tokens(x);
        EXPECT_EQ(packed.size(), all.size() * wire::token_width(Alphabet(size)));
        EXPECT_EQ(wire::unpack_tokens(wire::base64_decode(wire::base64_encode(packed)), Alphabet(size)), x);
    }
    EXPECT_THROW(wire::unpack_tokens("abc", Alphabet(300)), ProtocolError);
}

TEST(Wire, ParseClassLine) {
    EXPECT_EQ(wire::parse_class_line("CLASS 1", 2), 1u);
    EXPECT_THROW(wire::parse_class_line("CLASS 2", 2), ProtocolError);
    EXPECT_THROW(wire::parse_class_line("CLASS", 2), ProtocolError);
    EXPECT_THROW(wire::parse_class_line("CLASS -1", 2), ProtocolError);
    EXPECT_THROW(wire::parse_class_line("ERR no model", 2), ProtocolError);
    EXPECT_THROW(wire::parse_class_line("class 1", 2), ProtocolError);
}

TEST(Subprocess, StubContracts) {
    SubprocessClassifier always(stub("constant 1"), 2);
    EXPECT_EQ(always.query(TokenSeq({1, 2, 3}, kByteAlphabet)), 1u);
    EXPECT_EQ(always.query(TokenSeq({}, kByteAlphabet)), 1u);
    SubprocessClassifier parity(stub("parity"), 2);
    EXPECT_EQ(parity.query(TokenSeq({1, 2, 3, 4}, kByteAlphabet)), 0u);
    EXPECT_EQ(parity.query(TokenSeq({1, 2, 3}, kByteAlphabet)), 1u);
    EXPECT_EQ(parity.pipeline_depth(), 1u);
}

TEST(Subprocess, RoundTripsEveryTokenAndEmpty) {
    // the stub hashes the decoded payload, so any corruption changes the class
    const std::size_t classes = 1u << 20;
    auto expected = [&](const TokenSeq& x) {
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : wire::pack_tokens(x)) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return h % classes;
    };
    SubprocessClassifier checksum(stub("checksum"), classes);
    for (std::size_t size : {256u, 1000u}) {
        std::vector<Token> all;
        for (std::size_t t = 0; t < size; ++t) all.push_back(static_cast<Token>(t));
        const TokenSeq x(all, Alphabet(size));
        EXPECT_EQ(checksum.query(x), expected(x));
        for (std::size_t t = 0; t < size; ++t) {
            const TokenSeq one({static_cast<Token>(t)}, Alphabet(size));
            ASSERT_EQ(checksum.query(one), expected(one)) << t;
        }
    }
    const TokenSeq empty({}, kByteAlphabet);
    EXPECT_EQ(checksum.query(empty), expected(empty));
}

TEST(Subprocess, PipelinedBatches) {
    SubprocessClassifier caps(stub("caps 8"), 2);
    EXPECT_EQ(caps.pipeline_depth(), 8u);
    std::vector<TokenSeq> xs;
    for (std::size_t n = 0; n < 37; ++n) xs.emplace_back(std::vector<Token>(n, 1), kByteAlphabet);
    std::vector<ClassIndex> out(xs.size());
    caps.query_batch(xs, out);
    for (std::size_t n = 0; n < xs.size(); ++n) EXPECT_EQ(out[n], n % 2);
}

TEST(Subprocess, ErrorPaths) {
    SubprocessClassifier err(stub("err"), 2);
    EXPECT_THROW(err.query(TokenSeq({1}, kByteAlphabet)), ProtocolError);
    SubprocessClassifier garbage(stub("garbage"), 2);
    EXPECT_THROW(garbage.query(TokenSeq({1}, kByteAlphabet)), ProtocolError);
    SubprocessClassifier out_of_range(stub("constant 5"), 2);
    EXPECT_THROW(out_of_range.query(TokenSeq({1}, kByteAlphabet)), ProtocolError);
    SubprocessClassifier dead(stub("die"), 2);
    try {
        dead.query(TokenSeq({1}, kByteAlphabet));
        FAIL() << "expected TransportError";
    } catch (const TransportError& e) {
        EXPECT_EQ(e.attempts(), 3u);
    }
}

TEST(Subprocess, RestartsAfterCrash) {
    const auto marker = std::filesystem::temp_directory_path() /
                        ("editcert_crash_" + std::to_string(::getpid()));
    std::filesystem::remove(marker);
    SubprocessClassifier flaky(stub("crash-once " + marker.string()), 2);
    EXPECT_EQ(flaky.query(TokenSeq({1, 2}, kByteAlphabet)), 0u);
    EXPECT_EQ(flaky.query(TokenSeq({1}, kByteAlphabet)), 1u);
    EXPECT_TRUE(std::filesystem::exists(marker));
    std::filesystem::remove(marker);
}

TEST(Http, LoopbackRoundTrip) {
    httplib::Server server;
    std::mutex mu;
    std::vector<std::string> seen;
    server.Post("/predict", [&](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        const std::string bytes = wire::base64_decode(body.at("tokens_b64").get<std::string>());
        {
            std::lock_guard lock(mu);
            seen.push_back(bytes);
        }
        res.set_content(nlohmann::json{{"class", bytes.size() % 2}}.dump(), "application/json");
    });
    server.Post("/bad", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"class\": 7}", "application/json");
    });
    server.Post("/fail", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    const std::string base = "http://127.0.0.1:" + std::to_string(port);

    HttpClassifier client(base, 2);
    std::vector<Token> all;
    for (Token t = 0; t < 256; ++t) all.push_back(t);
    const TokenSeq x(all, kByteAlphabet);
    EXPECT_EQ(client.query(x), 0u);
    EXPECT_EQ(client.query(TokenSeq({}, kByteAlphabet)), 0u);
    EXPECT_EQ(client.query(TokenSeq({9, 9, 9}, kByteAlphabet)), 1u);
    {
        std::lock_guard lock(mu);
        ASSERT_EQ(seen.size(), 3u);
        EXPECT_EQ(seen[0], wire::pack_tokens(x));
        EXPECT_EQ(seen[1], "");
    }
    HttpClassifier bad(base + "/bad", 2);
    EXPECT_THROW(bad.query(x), ProtocolError);
    HttpClassifier failing(base + "/fail", 2, HttpOptions{2, 5});
    try {
        failing.query(x);
        FAIL() << "expected TransportError";
    } catch (const TransportError& e) {
        EXPECT_EQ(e.attempts(), 2u);
    }
    server.stop();
    th.join();

    HttpClassifier down(base, 2, HttpOptions{3, 1});
    try {
        down.query(x);
        FAIL() << "expected TransportError";
    } catch (const TransportError& e) {
        EXPECT_EQ(e.attempts(), 3u);
    }
    EXPECT_THROW(HttpClassifier("https://example.com", 2), std::invalid_argument);
}
