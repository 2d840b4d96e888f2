#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "fedmem/error.hpp"
#include "fedmem/generate.hpp"
#include "support.hpp"

using namespace fedmem;

namespace {

void expect_near_vec(const std::vector<double>& got, const std::vector<double>& want, double tol = 1e-12)
{
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "index " << i;
}

}  // namespace

TEST(Decoding, TopKAndTopPExamples)
{
    const std::vector<double> d = {0.5, 0.3, 0.2};
    expect_near_vec(truncate_top_k(d, 2), {0.625, 0.375, 0.0});
    expect_near_vec(truncate_top_p(d, 0.8), {0.625, 0.375, 0.0});
    expect_near_vec(truncate_top_p(d, 1.0), d);
    expect_near_vec(truncate_top_k(d, 40), d);
    expect_near_vec(truncate_top_k(std::vector<double>{0.4, 0.2, 0.4}, 1), {1.0, 0.0, 0.0});
}

TEST(Decoding, Temperature)
{
    const std::vector<double> d = {0.5, 0.3, 0.2};
    expect_near_vec(apply_temperature(d, 1.0), d, 0.0);
    const double z = std::sqrt(0.5) + std::sqrt(0.3) + std::sqrt(0.2);
    expect_near_vec(apply_temperature(d, 2.0), {std::sqrt(0.5) / z, std::sqrt(0.3) / z, std::sqrt(0.2) / z});
    const auto cold = apply_temperature(d, 0.05);
    EXPECT_GT(cold[0], 0.99);
}

TEST(Decoding, SampleIndexSkipsZeros)
{
    const std::vector<double> d = {0.0, 0.5, 0.0, 0.5};
    EXPECT_EQ(sample_index(d, 0.0), 1u);
    EXPECT_EQ(sample_index(d, 0.4999), 1u);
    EXPECT_EQ(sample_index(d, 0.5), 3u);
    EXPECT_EQ(sample_index(d, 0.999999999), 3u);
    EXPECT_EQ(argmax(std::vector<double>{0.2, 0.4, 0.4}), 1u);
}

TEST(Decoding, ConfigValidation)
{
    DecodingConfig c;
    c.k = 0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.p = 0.0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.temperature = 0.0;
    EXPECT_THROW(c.validate(), Error);
    EXPECT_EQ(parse_strategy("top_p"), Strategy::top_p);
    EXPECT_FALSE(parse_strategy("beam"));
}

TEST(Degenerate, ThresholdAtTenRepeats)
{
    auto repeat = [](int n) {
        std::string s = "start";
        for (int i = 0; i < n; ++i) s += " x y z";
        return s;
    };
    EXPECT_TRUE(is_degenerate(repeat(10)));
    EXPECT_FALSE(is_degenerate(repeat(9)));
    EXPECT_FALSE(is_degenerate("a normal sentence."));
}

TEST(NGramBackend, GreedyReproducesMemorizedText)
{
    const auto client = synth::make_client(0, {"the quick brown fox jumps over the lazy dog"});
    const auto model = fit_counts(client, 4);
    NGramBackend backend(model);
    DecodingConfig cfg;
    cfg.strategy = Strategy::greedy;
    GenerationRequest r{"s", 0, tokenize("the quick brown"), "the quick brown"};
    EXPECT_EQ(backend.complete(r, cfg), "fox jumps over the lazy dog");
    EXPECT_EQ(backend.tag().rfind("ngram:", 0), 0u);
}

TEST(NGramBackend, SeededSamplingIsReproducible)
{
    auto clients = synth::disjoint_clients(2, 1, 40, 30, 3);
    const auto model = fit_counts(clients[0], 3);
    NGramBackend backend(model);
    DecodingConfig cfg;
    cfg.seed = 5;
    const auto e = *split_prefix_suffix(clients[0].samples[0], 5);
    GenerationRequest r{"id1", 0, e.prefix_tokens, e.prefix_text};
    const auto a = generate(backend, r, cfg);
    const auto b = generate(backend, r, cfg);
    EXPECT_EQ(a, b);
    cfg.seed = 6;
    EXPECT_EQ(generate(backend, r, cfg).decoding, cfg.fingerprint());
}

TEST(Cache, RoundTrip)
{
    std::vector<Generation> gens = {{"a", 0, "text \"q\"\n", "ngram:1", "top_k k=40", false, false},
                                    {"b", 1, "café", "ngram:1", "top_k k=40", true, false}};
    std::stringstream ss;
    write_generations(ss, gens);
    EXPECT_EQ(read_generations(ss), gens);
}

TEST(HttpBackend, RequestBodyFields)
{
    DecodingConfig cfg;
    const auto body = nlohmann::json::parse(HttpBackend::request_body({"p1", 0, {}, "hello"}, cfg));
    for (const char* key : {"prompt", "max_tokens", "strategy", "temperature", "top_k", "top_p", "seed"}) {
        EXPECT_TRUE(body.contains(key)) << key;
    }
    EXPECT_EQ(body["prompt"], "hello");
    EXPECT_EQ(body["top_k"], 40);
}

TEST(HttpBackend, RetriesThenSucceedsAndFailsCleanly)
{
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/flaky", [&](const httplib::Request& req, httplib::Response& res) {
        if (++calls < 3) {
            res.status = 503;
            return;
        }
        const auto body = nlohmann::json::parse(req.body);
        res.set_content(nlohmann::json{{"text", "echo " + body["prompt"].get<std::string>()}}.dump(),
                        "application/json");
    });
    server.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"nottext\": 1}", "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpBackend::Options opt;
    opt.retries = 3;
    opt.backoff = std::chrono::milliseconds(1);
    opt.timeout = std::chrono::seconds(5);
    const std::string base = "http://127.0.0.1:" + std::to_string(port);
    DecodingConfig cfg;
    HttpBackend flaky(base + "/flaky", opt);
    EXPECT_EQ(generate(flaky, {"p", 0, {}, "hi"}, cfg).text, "echo hi");
    EXPECT_EQ(calls.load(), 3);

    HttpBackend broken(base + "/broken", opt);
    try {
        generate(broken, {"p", 0, {}, "hi"}, cfg);
        FAIL() << "expected backend-error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::backend_error);
    }
    server.stop();
    t.join();
}
