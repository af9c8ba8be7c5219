#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "telekit/io.hpp"
#include "telekit/prompts.hpp"
#include "telekit/relevance.hpp"
#include "telekit/text.hpp"

using namespace telekit;
using namespace telekit::relevance;
using gateway::Capability;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const KeywordList& seed_list() {
    static const KeywordList k = KeywordList::load(fs::path(TELEKIT_DATA_DIR) / "keywords.txt");
    return k;
}

Document web(std::uint64_t i, std::string content) {
    return Document{DocId{Category::web, i}, std::move(content), WebMeta{"https://s" + std::to_string(i) + ".example"}};
}

Document paper(std::uint64_t i, std::string abstract) {
    return Document{DocId{Category::arxiv, i}, "body", ArxivMeta{std::to_string(i), "t", std::move(abstract)}};
}

// Judge that answers from a fixed text or logit pair.
std::shared_ptr<gateway::Endpoint> judge_says(json reply) {
    return tk_test::scripted(Capability::judge, [reply](Capability, const json&) { return reply; });
}

}  // namespace

TEST(KeywordTest, SeedListShape) {
    EXPECT_EQ(seed_list().terms().size(), 100u);
    std::set<std::string> uniq(seed_list().terms().begin(), seed_list().terms().end());
    EXPECT_EQ(uniq.size(), 100u);
}

TEST(KeywordTest, WiFiMatches) {
    EXPECT_TRUE(seed_list().matches("The operator uses Wi-Fi offloading for capacity."));
}

TEST(KeywordTest, NoKeyword) {
    EXPECT_FALSE(seed_list().matches("A recipe for sourdough bread with rye flour."));
}

TEST(KeywordTest, BoundaryInsidePunctuation) {
    EXPECT_TRUE(seed_list().matches("Rollout of (5G) in rural areas"));
    EXPECT_FALSE(KeywordList({"lte"}).matches("a water filter"));
    EXPECT_TRUE(KeywordList({"lte"}).matches("LTE-Advanced"));
    EXPECT_TRUE(KeywordList({"wi-fi"}).matches("WI-FI"));
}

TEST(KeywordTest, ConfigErrors) {
    EXPECT_THROW(KeywordList({}), Error);
    EXPECT_THROW(KeywordList({"a", "A"}), Error);
    EXPECT_EQ(KeywordList::parse("# c\nlte\n\n5g\n").terms().size(), 2u);
}

TEST(KeywordProperty, AddingKeywordNeverShrinksFlaggedSet) {
    tk_test::Gen g(8);
    std::vector<std::string> docs;
    for (int i = 0; i < 200; ++i) docs.push_back(g.sentence(3, 20));
    std::vector<std::string> terms{g.word(2, 3)};
    for (int step = 0; step < 15; ++step) {
        const KeywordList small(terms);
        auto bigger = terms;
        bigger.push_back(g.word(2, 3) + std::to_string(step));
        const KeywordList big(bigger);
        for (const auto& d : docs) {
            if (small.matches(d)) EXPECT_TRUE(big.matches(d));
        }
        terms = bigger;
    }
}

TEST(ExcerptTest, WebTruncatedAbstractFull) {
    std::string s;
    for (int i = 0; i < 12000; ++i) s += "\xC3\xA9";
    EXPECT_EQ(text::count_scalars(make_excerpt(s, PromptKind::web_content)), 10000u);
    EXPECT_EQ(make_excerpt(s, PromptKind::paper_abstract), s);
}

TEST(ClassifyTest, LogitArgmax) {
    auto yes = judge_says({{"text", ""}, {"yes_logit", 2.0}, {"no_logit", -1.0}});
    const auto v = classify_relevance("x", *yes, PromptKind::paper_abstract);
    EXPECT_TRUE(v.llm_relevant);
    EXPECT_EQ(v.basis, DecisionBasis::logits);
    EXPECT_FALSE(v.indeterminate);
}

TEST(ClassifyTest, TieIsNotRelevant) {
    auto tie = judge_says({{"text", "Yes"}, {"yes_logit", 0.5}, {"no_logit", 0.5}});
    EXPECT_FALSE(classify_relevance("x", *tie, PromptKind::web_content).llm_relevant);
}

TEST(ClassifyTest, TextualNo) {
    auto no = judge_says({{"text", "No."}});
    const auto v = classify_relevance("x", *no, PromptKind::web_content);
    EXPECT_FALSE(v.llm_relevant);
    EXPECT_EQ(v.basis, DecisionBasis::text);
}

TEST(ClassifyTest, IndeterminateText) {
    auto maybe = judge_says({{"text", "Maybe"}});
    const auto v = classify_relevance("x", *maybe, PromptKind::web_content);
    EXPECT_TRUE(v.indeterminate);
    EXPECT_FALSE(v.llm_relevant);
}

TEST(ClassifyTest, PromptSentVerbatim) {
    std::string seen;
    auto j = tk_test::scripted(Capability::judge, [&](Capability, const json& req) {
        seen = req["prompt"];
        return json{{"text", "Yes"}};
    });
    classify_relevance("MIMO abstract", *j, PromptKind::paper_abstract);
    EXPECT_EQ(seen, prompts::abstract_relevance("MIMO abstract"));
    classify_relevance("site", *j, PromptKind::web_content);
    EXPECT_EQ(seen, prompts::web_relevance("site"));
}

TEST(FilterTest, EmptyCorpus) {
    auto j = judge_says({{"text", "Yes"}});
    const auto r = filter_corpus({}, seed_list(), *j);
    EXPECT_TRUE(r.kept.empty());
    EXPECT_EQ(r.funnel, FunnelCounts{});
}

TEST(FilterTest, AllKeywordAllYesKeepsInput) {
    std::vector<Document> docs;
    for (std::uint64_t i = 0; i < 20; ++i) docs.push_back(web(i, "LTE handover number " + std::to_string(i)));
    auto j = judge_says({{"text", "Yes"}});
    const auto r = filter_corpus(docs, seed_list(), *j);
    EXPECT_EQ(r.kept, docs);
    EXPECT_EQ(r.funnel.kept, 20u);
}

TEST(FilterTest, StandardsPassThroughArxivSkipsKeywords) {
    const std::vector<Document> docs{
        Document{DocId{Category::standard, 0}, "spec", StandardMeta{29, 12, "f"}},
        paper(1, "No telecom words at all."),
    };
    int calls = 0;
    auto j = tk_test::scripted(Capability::judge, [&](Capability, const json&) {
        ++calls;
        return json{{"text", "Yes"}};
    });
    const auto r = filter_corpus(docs, seed_list(), *j);
    EXPECT_EQ(r.kept.size(), 2u);
    EXPECT_EQ(calls, 1);
    EXPECT_EQ(r.funnel.passthrough, 1u);
    EXPECT_EQ(r.funnel.keyword_flagged, 1u);
}

TEST(FilterTest, GatewayFailureWithholds) {
    const std::vector<Document> docs{web(0, "5G core"), web(1, "5G radio")};
    auto j = tk_test::scripted(Capability::judge, [](Capability, const json& req) -> json {
        if (req["prompt"].get<std::string>().find("core") != std::string::npos) {
            throw gateway::TransportError("down", false);
        }
        return json{{"text", "Yes"}};
    });
    const auto r = filter_corpus(docs, seed_list(), *j);
    EXPECT_EQ(r.kept.size(), 1u);
    EXPECT_EQ(r.retry, (std::vector<DocId>{DocId{Category::web, 0}}));
    EXPECT_EQ(r.funnel.withheld, 1u);
}

TEST(FilterProperty, LogitVerdictsFollowArgmax) {
    tk_test::Gen g(31);
    std::vector<Document> docs;
    for (std::uint64_t i = 0; i < 300; ++i) docs.push_back(web(i, "5G doc " + std::to_string(i)));
    auto j = tk_test::scripted(Capability::judge, [](Capability, const json& req) {
        const auto h = fnv1a64(req["prompt"].get<std::string>());
        const double y = static_cast<double>(h % 7) - 3;
        const double n = static_cast<double>((h >> 8) % 7) - 3;
        return json{{"text", ""}, {"yes_logit", y}, {"no_logit", n}};
    });
    const auto r = filter_corpus(docs, seed_list(), *j, {.workers = 4});
    ASSERT_EQ(r.verdicts.size(), docs.size());
    for (const auto& v : r.verdicts) {
        ASSERT_EQ(v.basis, DecisionBasis::logits);
        EXPECT_EQ(v.llm_relevant, *v.yes_logit > *v.no_logit);
    }
    EXPECT_TRUE(std::is_sorted(r.verdicts.begin(), r.verdicts.end(),
                               [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; }));
}

TEST(FilterProperty, KeptSetIsFixpoint) {
    tk_test::Gen g(12);
    std::vector<Document> docs;
    for (std::uint64_t i = 0; i < 200; ++i) {
        docs.push_back(web(i, g.sentence() + (g.coin() ? " wireless " : " ") + g.sentence()));
    }
    auto j = tk_test::mock(Capability::judge);
    const auto once = filter_corpus(docs, seed_list(), *j);
    const auto twice = filter_corpus(once.kept, seed_list(), *j);
    EXPECT_EQ(twice.kept, once.kept);
}

TEST(FilterTest, ParallelEqualsSerial) {
    tk_test::Gen g(3);
    std::vector<Document> docs;
    for (std::uint64_t i = 0; i < 100; ++i) docs.push_back(web(i, g.sentence() + " antenna " + g.sentence()));
    auto j = tk_test::mock(Capability::judge, {{"lexicon", {"a"}}});
    const auto a = filter_corpus(docs, seed_list(), *j, {.workers = 1});
    const auto b = filter_corpus(docs, seed_list(), *j, {.workers = 8});
    EXPECT_EQ(a.kept, b.kept);
    EXPECT_EQ(a.funnel, b.funnel);
}

TEST(PrecisionRecallTest, PaperRows) {
    // arXiv row: P=0.666, R=0.956 -> F1 0.785; web row: P=0.455, R=1 -> F1 0.625.
    const auto a = precision_recall({.tp = 79587, .fp = 39913, .fn = 3663});
    EXPECT_NEAR(*a.precision, 0.666, 0.0005);
    EXPECT_NEAR(*a.recall, 0.956, 0.0005);
    EXPECT_NEAR(*a.f1, 0.785, 0.001);
    const auto w = precision_recall({.tp = 91, .fp = 109, .fn = 0});
    EXPECT_NEAR(*w.precision, 0.455, 0.0005);
    EXPECT_DOUBLE_EQ(*w.recall, 1.0);
    EXPECT_NEAR(*w.f1, 0.625, 0.001);
}

TEST(PrecisionRecallTest, UndefinedPrecision) {
    const auto r = precision_recall({.tp = 0, .fp = 0, .fn = 5});
    EXPECT_FALSE(r.precision.has_value());
    EXPECT_EQ(r.recall, std::optional<double>(0.0));
    EXPECT_FALSE(r.f1.has_value());
    const auto z = precision_recall({.tp = 0, .fp = 3, .fn = 4});
    EXPECT_EQ(z.f1, std::optional<double>(0.0));
}

TEST(PrecisionRecallProperty, ScaleInvariant) {
    tk_test::Gen g(5);
    for (int i = 0; i < 500; ++i) {
        ConfusionCounts c{g.range(1, 10000), g.range(0, 10000), g.range(0, 10000), g.range(0, 10000)};
        const auto k = g.range(2, 1000);
        const auto a = precision_recall(c);
        const auto b = precision_recall({c.tp * k, c.fp * k, c.fn * k, c.tn * k});
        EXPECT_NEAR(*a.precision, *b.precision, 1e-12);
        EXPECT_NEAR(*a.recall, *b.recall, 1e-12);
        EXPECT_NEAR(*a.f1, *b.f1, 1e-12);
    }
}

TEST(LabelTest, ConfusionFromLabels) {
    tk_test::TempDir tmp;
    io::write_file(tmp / "labels.jsonl",
                   "{\"doc_id\":\"web_0\",\"human_label\":true}\n{\"doc_id\":\"web_1\",\"human_label\":false}\n"
                   "{\"doc_id\":\"web_2\",\"human_label\":true}\n{\"doc_id\":\"web_9\",\"human_label\":true}\n");
    const auto labels = load_labels(tmp / "labels.jsonl");
    std::vector<RelevanceVerdict> v(3);
    for (int i = 0; i < 3; ++i) {
        v[i].doc_id = DocId{Category::web, static_cast<std::uint64_t>(i)};
        v[i].classified = true;
    }
    v[0].llm_relevant = true;
    v[1].llm_relevant = true;
    v[2].llm_relevant = false;
    const auto c = confusion_from_labels(v, labels);
    EXPECT_EQ(c.tp, 1u);
    EXPECT_EQ(c.fp, 1u);
    EXPECT_EQ(c.fn, 1u);
    EXPECT_EQ(c.tn, 0u);
}

TEST(VerdictTest, JsonShape) {
    RelevanceVerdict v;
    v.doc_id = DocId{Category::web, 4};
    v.classified = true;
    v.yes_logit = 1.0;
    v.no_logit = 0.0;
    v.basis = DecisionBasis::logits;
    v.llm_relevant = true;
    const auto j = v.to_json();
    EXPECT_EQ(j["doc_id"], "web_4");
    EXPECT_EQ(j["decision_basis"], "logits");
    EXPECT_EQ(j["llm_relevant"], true);
}
