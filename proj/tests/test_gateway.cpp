#include <httplib.h>

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "support.hpp"
#include "telekit/gateway.hpp"
#include "telekit/parallel.hpp"

using namespace telekit;
using namespace telekit::gateway;

namespace {

EndpointConfig config(Capability cap, int retries = 3) {
    EndpointConfig c;
    c.capability = cap;
    c.model_name = "m";
    c.retries = retries;
    c.backoff_base_ms = 0;
    return c;
}

}  // namespace

TEST(ScorerTest, ConstantMockHandComputed) {
    auto s = tk_test::mock(Capability::scorer, {{"constant_logprob", -1.0}});
    const std::vector<TokenId> ids{5, 6, 7, 8};
    EXPECT_EQ(s->score_tokens(ids), std::vector<double>(3, -1.0));
}

TEST(ScorerTest, SingleTokenNeedsNoCall) {
    auto s = tk_test::mock(Capability::scorer);
    const std::vector<TokenId> one{5};
    EXPECT_TRUE(s->score_tokens(one).empty());
    EXPECT_TRUE(s->score_tokens({}).empty());
    EXPECT_EQ(s->calls(), 0u);
}

TEST(ScorerTest, ContextLimit) {
    auto c = config(Capability::scorer);
    c.context_limit = 3;
    auto s = Endpoint::create(c);
    const std::vector<TokenId> ids{1, 2, 3, 4};
    EXPECT_THROW(s->score_tokens(ids), Error);
}

TEST(ScorerTest, CountMismatchIsGatewayFailure) {
    auto s = tk_test::scripted(Capability::scorer, [](Capability, const json&) { return json{{"logprobs", {-1.0}}}; });
    const std::vector<TokenId> ids{1, 2, 3};
    try {
        s->score_tokens(ids);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::gateway_failure);
    }
}

TEST(CapabilityTest, WrongCapabilityRejected) {
    auto s = tk_test::mock(Capability::scorer);
    EXPECT_THROW(s->complete("x", {}), Error);
    EXPECT_THROW(s->embed("x"), Error);
}

TEST(GeneratorTest, CannedAndZeroCap) {
    auto g = tk_test::mock(Capability::generator, {{"canned", {{"p", "one two three"}}}});
    EXPECT_EQ(g->complete("p", {}).text, "one two three");
    const auto c = g->complete("p", DecodingParams{true, 0});
    EXPECT_EQ(c.text, "");
    EXPECT_EQ(g->calls(), 1u);
}

TEST(GeneratorTest, GreedyDeterministic) {
    auto g = tk_test::mock(Capability::generator);
    const auto a = g->complete("Some prompt", {}).text;
    for (int i = 0; i < 5; ++i) EXPECT_EQ(g->complete("Some prompt", {}).text, a);
}

TEST(GeneratorTest, TruncateWords) {
    EXPECT_EQ(truncate_words("a  b\tc d", 3), "a  b\tc");
    EXPECT_EQ(truncate_words("  a b ", 5), "  a b ");
    EXPECT_EQ(truncate_words("a b", 0), "");
}

TEST(JudgeParseTest, TextAndLogits) {
    EXPECT_EQ(parse_judge("Yes.", std::nullopt, std::nullopt).verdict, Verdict::yes);
    EXPECT_EQ(parse_judge("  no, because", std::nullopt, std::nullopt).verdict, Verdict::no);
    EXPECT_EQ(parse_judge("Maybe", std::nullopt, std::nullopt).verdict, Verdict::indeterminate);
    EXPECT_EQ(parse_judge("Yesterday", std::nullopt, std::nullopt).verdict, Verdict::indeterminate);
    const auto r = parse_judge("Yes", 0.3, 0.9);
    EXPECT_EQ(r.verdict, Verdict::no);
    EXPECT_TRUE(r.from_logits);
    EXPECT_EQ(parse_judge("", 1.0, 1.0).verdict, Verdict::no);
}

TEST(JudgeTest, MockLogitsExposed) {
    auto j = tk_test::mock(Capability::judge, {{"expose_logits", true}, {"verdicts", {{"q", "Yes"}}}});
    EXPECT_EQ(j->judge_binary("q").verdict, Verdict::yes);
}

TEST(NormalizeTest, ServerShapes) {
    const json oa_score = json::parse(
        R"({"choices":[{"logprobs":{"tokens":["a","b","c"],"token_logprobs":[null,-0.5,-1.5]}}]})");
    const auto s = normalize_response(Capability::scorer, oa_score);
    EXPECT_EQ(s["logprobs"], json::parse("[-0.5,-1.5]"));
    EXPECT_EQ(s["token_ids"].size(), 3u);

    EXPECT_EQ(normalize_response(Capability::generator, json::parse(R"({"choices":[{"text":"hi"}]})"))["text"], "hi");
    EXPECT_EQ(normalize_response(Capability::generator,
                                 json::parse(R"({"choices":[{"message":{"content":"yo"}}]})"))["text"],
              "yo");
    EXPECT_EQ(normalize_response(Capability::generator, json::parse(R"({"content":"c"})"))["text"], "c");
    EXPECT_EQ(normalize_response(Capability::embedder, json::parse(R"({"data":[{"embedding":[1,2]}]})"))["embedding"],
              json::parse("[1,2]"));
    EXPECT_EQ(normalize_response(Capability::embedder, json::parse(R"({"embeddings":[[3]]})"))["embedding"],
              json::parse("[3]"));

    const auto j = normalize_response(
        Capability::judge,
        json::parse(R"({"choices":[{"text":"No","logprobs":{"top_logprobs":[{" Yes":-0.2," No":-1.9,"no":-3}]}}]})"));
    EXPECT_EQ(j["yes_logit"], -0.2);
    EXPECT_EQ(j["no_logit"], -1.9);
}

TEST(NormalizeTest, MalformedRejected) {
    EXPECT_THROW(normalize_response(Capability::scorer, json::parse("[]")), TransportError);
    EXPECT_THROW(normalize_response(Capability::scorer, json::parse(R"({"logprobs":["x"]})")), TransportError);
    EXPECT_THROW(normalize_response(Capability::generator, json::parse(R"({"text":3})")), TransportError);
    EXPECT_THROW(normalize_response(Capability::embedder, json::parse(R"({"embedding":"v"})")), TransportError);
    EXPECT_THROW(normalize_response(Capability::judge, json::object()), TransportError);
}

TEST(RetryTest, TransientFailuresRetried) {
    auto c = config(Capability::generator, 3);
    c.options = {{"fail_first", 2}, {"default_completion", "ok"}};
    auto t = std::make_shared<Transcript>();
    auto g = Endpoint::create(c, t);
    EXPECT_EQ(g->complete("x", {}).text, "ok");
    ASSERT_EQ(t->size(), 1u);
    EXPECT_EQ(t->entries()[0].attempts, 3);
}

TEST(RetryTest, ExhaustedRetriesFail) {
    auto c = config(Capability::generator, 1);
    c.options = {{"fail_first", 5}};
    auto g = Endpoint::create(c);
    try {
        g->complete("x", {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::gateway_failure);
    }
}

TEST(RetryTest, PermanentErrorNotRetried) {
    std::atomic<int> sends{0};
    Endpoint e(config(Capability::generator, 5), std::make_unique<ScriptedTransport>([&](Capability, const json&) -> json {
                   ++sends;
                   throw TransportError("bad request", false);
               }));
    EXPECT_THROW(e.complete("x", {}), Error);
    EXPECT_EQ(sends.load(), 1);
}

TEST(InFlightTest, BudgetRespected) {
    for (int budget : {1, 3}) {
        auto t = std::make_shared<Transcript>();
        std::atomic<int> now{0};
        std::atomic<int> worst{0};
        auto e = tk_test::scripted(
            Capability::generator,
            [&](Capability, const json&) {
                const int cur = ++now;
                int w = worst.load();
                while (cur > w && !worst.compare_exchange_weak(w, cur)) {
                }
                std::this_thread::sleep_for(std::chrono::milliseconds(2));
                --now;
                return json{{"text", "x"}};
            },
            t, budget);
        parallel_for(40, 8, [&](std::size_t i) { e->complete("p" + std::to_string(i), {}); });
        const auto entries = t->entries();
        EXPECT_EQ(entries.size(), 40u);
        EXPECT_LE(Transcript::max_overlap(entries), static_cast<std::size_t>(budget));
        EXPECT_LE(worst.load(), budget);
        EXPECT_LE(e->peak_in_flight(), static_cast<std::size_t>(budget));
    }
}

TEST(TranscriptTest, MaxOverlapHand) {
    std::vector<TranscriptEntry> es(4);
    es[0].started_us = 0, es[0].finished_us = 10;
    es[1].started_us = 5, es[1].finished_us = 15;
    es[2].started_us = 10, es[2].finished_us = 20;  // starts as 0 ends
    es[3].started_us = 12, es[3].finished_us = 13;
    EXPECT_EQ(Transcript::max_overlap(es), 3u);
    EXPECT_EQ(Transcript::max_overlap({}), 0u);
}

TEST(TranscriptTest, ReplayByteForByte) {
    tk_test::TempDir tmp;
    const auto path = tmp / "t.jsonl";
    std::vector<json> first;
    {
        auto t = std::make_shared<Transcript>(path);
        auto g = tk_test::mock(Capability::generator, json::object(), t);
        auto s = tk_test::mock(Capability::scorer, json::object(), t);
        auto j = tk_test::mock(Capability::judge, json::object(), t);
        first.push_back(g->complete("hello world", {}).text);
        first.push_back(s->score_text("abc").logprobs);
        first.push_back(to_string(j->judge_binary("Is this wireless?").verdict));
    }
    const auto log1 = Transcript::load(path);
    ASSERT_EQ(log1.size(), 3u);

    const auto path2 = tmp / "t2.jsonl";
    {
        auto t = std::make_shared<Transcript>(path2);
        auto mk = [&](Capability cap) {
            EndpointConfig c = config(cap, 0);
            c.base_url = "replay:" + path.string();
            c.model_name = "mock-" + std::string(to_string(cap));
            return Endpoint::create(c, t);
        };
        auto g = mk(Capability::generator);
        auto s = mk(Capability::scorer);
        auto j = mk(Capability::judge);
        EXPECT_EQ(json(g->complete("hello world", {}).text), first[0]);
        EXPECT_EQ(json(s->score_text("abc").logprobs), first[1]);
        EXPECT_EQ(json(to_string(j->judge_binary("Is this wireless?").verdict)), first[2]);
        EXPECT_THROW(g->complete("unseen", {}), Error);
    }
    const auto log2 = Transcript::load(path2);
    ASSERT_EQ(log2.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(log2[i].request_digest, log1[i].request_digest);
        EXPECT_EQ(log2[i].response_digest, log1[i].response_digest);
        EXPECT_EQ(log2[i].response.dump(), log1[i].response.dump());
    }
}

TEST(TranscriptTest, DigestStable) {
    const json r{{"prompt", "x"}, {"max_new_tokens", 3}};
    EXPECT_EQ(request_digest(Capability::generator, r), request_digest(Capability::generator, json::parse(r.dump())));
    EXPECT_NE(request_digest(Capability::generator, r), request_digest(Capability::judge, r));
}

TEST(ConfigTest, ValidateAndJson) {
    EndpointConfig c;
    EXPECT_NO_THROW(c.validate());
    c.base_url = "ftp://x";
    EXPECT_THROW(c.validate(), Error);
    c = EndpointConfig{};
    c.max_in_flight = 0;
    EXPECT_THROW(c.validate(), Error);
    c = EndpointConfig{};
    c.retries = -1;
    EXPECT_THROW(c.validate(), Error);

    EndpointConfig d = config(Capability::embedder);
    d.base_url = "http://localhost:9/v1";
    d.context_limit = 4096;
    EXPECT_EQ(EndpointConfig::from_json(d.to_json()).to_json(), d.to_json());
    EXPECT_EQ(d.identity(), "m@http://localhost:9/v1");
    EXPECT_THROW(EndpointConfig::from_json(json{{"capability", "oracle"}}), Error);
    EXPECT_THROW(EndpointConfig::from_json(json{{"base_url", "mock:"}}), Error);
    EXPECT_THROW(EndpointConfig::from_json(json::array()), Error);
}

TEST(HttpTest, LocalServerRoundTrip) {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::string auth;
    server.Post("/api/v1/complete", [&](const httplib::Request& req, httplib::Response& res) {
        const auto j = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        if (hits++ == 0) {
            res.status = 503;
            return;
        }
        res.set_content(json{{"choices", {{{"text", "echo " + j["prompt"].get<std::string>()}}}}}.dump(),
                        "application/json");
    });
    server.Post("/api/embeddings", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"data":[{"embedding":[0.5,0.25]}]})", "application/json");
    });
    server.Post("/api/v1/judge", [&](const httplib::Request&, httplib::Response& res) {
        res.status = 400;
        res.set_content("nope", "text/plain");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("TELEKIT_TEST_TOKEN", "sekrit", 1);
    auto c = config(Capability::generator, 2);
    c.base_url = "http://127.0.0.1:" + std::to_string(port) + "/api/";
    c.auth_env = "TELEKIT_TEST_TOKEN";
    c.timeout_s = 5;
    auto g = Endpoint::create(c);
    EXPECT_EQ(g->complete("ping", {}).text, "echo ping");
    EXPECT_EQ(hits.load(), 2);
    EXPECT_EQ(auth, "Bearer sekrit");

    auto ec = config(Capability::embedder, 0);
    ec.base_url = c.base_url;
    ec.options = {{"paths", {{"embedder", "/embeddings"}}}};
    EXPECT_EQ(Endpoint::create(ec)->embed("x"), (std::vector<double>{0.5, 0.25}));

    auto jc = config(Capability::judge, 3);
    jc.base_url = c.base_url;
    EXPECT_THROW(Endpoint::create(jc)->judge_binary("q"), Error);

    server.stop();
    th.join();

    // Nothing listening now: connection errors are gateway failures.
    c.retries = 0;
    EXPECT_THROW(Endpoint::create(c)->complete("ping", {}), Error);
}
