#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "support.hpp"
#include "telekit/corpus.hpp"
#include "telekit/io.hpp"

using namespace telekit;
using tk_test::Gen;
using tk_test::TempDir;

namespace {

ErrorCode code_of(const std::string& line) {
    try {
        parse_record(line);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error for " << line;
    return ErrorCode::invalid_argument;
}

Document wiki(std::uint64_t i, std::string content, std::string url) {
    return Document{DocId{Category::wiki, i}, std::move(content), WikiMeta{"T" + std::to_string(i), std::move(url)}};
}

}  // namespace

TEST(DocIdTest, RoundTrip) {
    const auto id = DocId::parse("wiki_132");
    EXPECT_EQ(id.category, Category::wiki);
    EXPECT_EQ(id.index, 132u);
    EXPECT_EQ(id.str(), "wiki_132");
    EXPECT_TRUE(DocId::is_valid("standard_0"));
    for (const char* bad : {"wiki", "wiki_", "_1", "wiki_-1", "wiki_1a", "news_4", "wiki_99999999999999999999"}) {
        EXPECT_FALSE(DocId::is_valid(bad)) << bad;
        EXPECT_THROW(DocId::parse(bad), Error) << bad;
    }
}

TEST(ParseRecordTest, WikiIndexFromId) {
    const auto d = parse_record(
        R"({"ID":"wiki_132","Category":"wiki","Content":"Radio.","Metadata":{"Title":"Radio","Url":"https://x"}})");
    EXPECT_EQ(d.category(), Category::wiki);
    EXPECT_EQ(d.id.index, 132u);
}

TEST(ParseRecordTest, StandardSample) {
    const auto d = parse_record(
        R"({"ID":"standard_2413","Category":"standard","Content":"5G System; Session Management.",)"
        R"("Metadata":{"Series":29,"Release":12,"File_name":"29161-c00"}})");
    const auto& m = std::get<StandardMeta>(d.metadata);
    EXPECT_EQ(m.series, 29);
    EXPECT_EQ(m.release, 12);
    EXPECT_EQ(m.file_name, "29161-c00");
}

TEST(ParseRecordTest, Errors) {
    EXPECT_EQ(code_of(R"({"ID":"wiki_7","Category":"arxiv","Content":"x","Metadata":{"Arxiv_id":"1","Title":"t","Abstract":"a"}})"),
              ErrorCode::id_category_mismatch);
    EXPECT_EQ(code_of("{not json"), ErrorCode::malformed_json);
    EXPECT_EQ(code_of("[1,2]"), ErrorCode::malformed_json);
    EXPECT_EQ(code_of(R"({"ID":"wiki_7","Category":"wiki","Content":"x"})"), ErrorCode::missing_field);
    EXPECT_EQ(code_of(R"({"ID":"news_7","Category":"news","Content":"x","Metadata":{}})"), ErrorCode::unknown_category);
    EXPECT_EQ(code_of(R"({"ID":"wiki_x","Category":"wiki","Content":"x","Metadata":{"Title":"t","Url":"u"}})"),
              ErrorCode::invalid_id);
    EXPECT_EQ(code_of(R"({"ID":"wiki_7","Category":"wiki","Content":"  ","Metadata":{"Title":"t","Url":"u"}})"),
              ErrorCode::empty_content);
    EXPECT_EQ(code_of(R"({"ID":"wiki_7","Category":"wiki","Content":"x","Metadata":{"Title":"t"}})"),
              ErrorCode::missing_field);
    EXPECT_EQ(code_of(R"({"ID":"wiki_7","Category":"wiki","Content":"x","Metadata":{"Title":"t","Url":"u","Extra":1}})"),
              ErrorCode::invalid_metadata);
    EXPECT_EQ(code_of(R"({"ID":"standard_1","Category":"standard","Content":"x","Metadata":{"Series":"abc","Release":1,"File_name":"f"}})"),
              ErrorCode::invalid_metadata);
}

TEST(ParseRecordTest, LineNumberAttached) {
    try {
        parse_record("{", 17);
        FAIL();
    } catch (const Error& e) {
        ASSERT_TRUE(e.line().has_value());
        EXPECT_EQ(*e.line(), 17u);
    }
}

TEST(ParseRecordTest, IllFormedUtf8Replaced) {
    const std::string line = "{\"ID\":\"web_1\",\"Category\":\"web\",\"Content\":\"a\xff" "b\",\"Metadata\":{\"Url\":\"u\"}}";
    const auto d = parse_record(line);
    EXPECT_EQ(d.content, "a\xEF\xBF\xBD" "b");
}

TEST(WriteRecordsTest, ZeroAndOne) {
    std::ostringstream empty;
    EXPECT_EQ(write_records({}, empty), 0u);
    EXPECT_EQ(empty.str(), "");

    std::ostringstream one;
    const std::vector<Document> docs{wiki(1, "hello", "https://a")};
    EXPECT_EQ(write_records(docs, one), 1u);
    const auto s = one.str();
    ASSERT_FALSE(s.empty());
    EXPECT_EQ(s.back(), '\n');
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1);
    EXPECT_EQ(s.find("{\"ID\":\"wiki_1\",\"Category\":\"wiki\",\"Content\":\"hello\",\"Metadata\":{\"Title\":\"T1\",\"Url\":\"https://a\"}}"), 0u);
}

TEST(WriteRecordsTest, StreamFailureReportsCount) {
    std::ostringstream sink;
    sink.setstate(std::ios::badbit);
    const std::vector<Document> docs{wiki(1, "a", "u"), wiki(2, "b", "v")};
    try {
        write_records(docs, sink);
        FAIL();
    } catch (const WriteError& e) {
        EXPECT_EQ(e.written(), 0u);
        EXPECT_EQ(e.code(), ErrorCode::io_failure);
    }
}

// parse . write = identity, 1000 synthetic documents over all categories.
TEST(CorpusProperty, WriteParseIdentity) {
    Gen g(20240601);
    std::vector<Document> docs;
    for (std::uint64_t i = 0; i < 1000; ++i) docs.push_back(g.document(kAllCategories[i % 4], g.below(1u << 30)));
    std::ostringstream out;
    ASSERT_EQ(write_records(docs, out), docs.size());
    std::istringstream in(out.str());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        const auto d = parse_record(line, n + 1);
        ASSERT_EQ(d, docs[n]) << "record " << n;
        ++n;
    }
    EXPECT_EQ(n, docs.size());
}

TEST(CorpusProperty, FileRoundTripPlainAndGzip) {
    TempDir tmp;
    Gen g(7);
    std::vector<Document> docs;
    for (std::uint64_t i = 0; i < 50; ++i) docs.push_back(g.document(kAllCategories[g.below(4)], i));
    for (const char* name : {"c.jsonl", "c.jsonl.gz"}) {
        write_records_file(tmp / name, docs);
        EXPECT_EQ(read_all_records(tmp / name), docs) << name;
    }
}

TEST(ReadRecordsTest, ErrorsRoutedWithLineNumbers) {
    TempDir tmp;
    io::write_file(tmp / "in.jsonl",
                   serialize_record(wiki(1, "a", "u")) + "\n{bad\n\n" + serialize_record(wiki(2, "b", "v")) + "\n");
    std::vector<Document> ok;
    std::vector<RecordError> errs;
    read_records(tmp / "in.jsonl", [&](Document&& d) { ok.push_back(std::move(d)); },
                 [&](const RecordError& e) { errs.push_back(e); });
    EXPECT_EQ(ok.size(), 2u);
    ASSERT_EQ(errs.size(), 1u);
    EXPECT_EQ(errs[0].line, 2u);
    EXPECT_EQ(errs[0].code, ErrorCode::malformed_json);
    EXPECT_THROW(read_all_records(tmp / "in.jsonl"), Error);
}

TEST(DedupTest, SameContentSecondDropped) {
    const std::vector<Document> docs{wiki(1, "same", "a"), wiki(2, "same", "b")};
    const auto r = dedup_by_key(docs, DedupKey::content_hash);
    ASSERT_EQ(r.kept.size(), 1u);
    EXPECT_EQ(r.kept[0].id.index, 1u);
    EXPECT_EQ(r.dropped, 1u);
}

TEST(DedupTest, NfcEquivalentContentIsDuplicate) {
    const std::vector<Document> docs{wiki(1, "caf\xC3\xA9", "a"), wiki(2, "cafe\xCC\x81", "b")};
    EXPECT_EQ(dedup_by_key(docs, DedupKey::content_hash).kept.size(), 1u);
}

TEST(DedupTest, NoDuplicatesIsIdentity) {
    Gen g(3);
    std::vector<Document> docs;
    for (std::uint64_t i = 0; i < 30; ++i) docs.push_back(wiki(i, "doc " + std::to_string(i), "u" + std::to_string(i)));
    EXPECT_EQ(dedup_by_key(docs, DedupKey::content_hash).kept, docs);
    EXPECT_EQ(dedup_by_key(docs, DedupKey::metadata_url).kept, docs);
}

TEST(DedupTest, UrlTenWithThreeShared) {
    std::vector<Document> docs;
    for (std::uint64_t i = 0; i < 10; ++i) {
        docs.push_back(wiki(i, "c" + std::to_string(i), i % 3 == 0 && i < 9 ? "shared" : "u" + std::to_string(i)));
    }
    // Pairwise oracle: keep i unless some j < i has the same url.
    std::size_t expected = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        bool dup = false;
        for (std::size_t j = 0; j < i; ++j) dup |= *metadata_url(docs[j].metadata) == *metadata_url(docs[i].metadata);
        expected += !dup;
    }
    ASSERT_EQ(expected, 8u);
    EXPECT_EQ(dedup_by_key(docs, DedupKey::metadata_url).kept.size(), expected);
}

TEST(DedupTest, UrlKeyFlagsCategoriesWithoutUrl) {
    const std::vector<Document> docs{
        Document{DocId{Category::standard, 1}, "x", StandardMeta{29, 12, "f"}},
        Document{DocId{Category::standard, 2}, "x", StandardMeta{29, 12, "f"}},
    };
    const auto r = dedup_by_key(docs, DedupKey::metadata_url);
    EXPECT_EQ(r.kept.size(), 2u);
    EXPECT_EQ(r.flagged.size(), 2u);
}

TEST(DedupTest, CollisionsNeverDrop) {
    // A fetcher returning different text for the same hash bucket must keep both.
    Deduplicator d(DedupKey::content_hash, [](std::uint64_t) { return std::string("other"); });
    EXPECT_EQ(d.offer(wiki(1, "abc", "a")), DedupOutcome::keep);
    EXPECT_EQ(d.offer(wiki(2, "abc", "b")), DedupOutcome::keep);
}

TEST(DedupProperty, Idempotent) {
    Gen g(11);
    for (int round = 0; round < 20; ++round) {
        std::vector<Document> docs;
        const auto n = g.range(0, 60);
        for (std::size_t i = 0; i < n; ++i) {
            docs.push_back(wiki(i, "c" + std::to_string(g.below(15)), "u" + std::to_string(g.below(15))));
        }
        for (auto key : {DedupKey::content_hash, DedupKey::metadata_url}) {
            const auto once = dedup_by_key(docs, key).kept;
            const auto twice = dedup_by_key(once, key).kept;
            EXPECT_EQ(once, twice);
        }
    }
}

TEST(StatsTest, EmptyCorpus) {
    ByteTokenizer tok;
    const auto s = corpus_stats({}, tok);
    EXPECT_EQ(s.totals(), CategoryStats{});
    EXPECT_FALSE(s.partial());
}

TEST(StatsTest, ByteTokenizerTwoTokens) {
    ByteTokenizer tok;
    const std::vector<Document> docs{wiki(1, "ab", "u")};
    const auto s = corpus_stats(docs, tok);
    EXPECT_EQ(s.totals().items, 1u);
    EXPECT_EQ(s.totals().tokens, 2u);
    EXPECT_EQ(s.totals().bytes, 2u);
}

TEST(StatsTest, MixedCategoriesHandCount) {
    ByteTokenizer tok;
    const std::vector<Document> docs{
        Document{DocId{Category::arxiv, 0}, "abc", ArxivMeta{"1", "t", "a"}},
        Document{DocId{Category::arxiv, 1}, "de", ArxivMeta{"2", "t", "a"}},
        Document{DocId{Category::standard, 0}, "fghi", StandardMeta{29, 12, "f"}},
        wiki(0, "j", "u"),
        wiki(1, "kl", "v"),
        wiki(2, "mno", "w"),
        Document{DocId{Category::web, 0}, "\xC3\xA9", WebMeta{"x"}},
    };
    const auto s = corpus_stats(docs, tok);
    EXPECT_EQ(s.per_category.at(Category::arxiv), (CategoryStats{2, 5, 5, 0}));
    EXPECT_EQ(s.per_category.at(Category::standard), (CategoryStats{1, 4, 4, 0}));
    EXPECT_EQ(s.per_category.at(Category::wiki), (CategoryStats{3, 6, 6, 0}));
    EXPECT_EQ(s.per_category.at(Category::web), (CategoryStats{1, 2, 2, 0}));
    EXPECT_EQ(s.totals().items, 7u);
}

TEST(StatsTest, TokenizerFailureMarksPartial) {
    struct Failing final : Tokenizer {
        std::string name() const override { return "failing"; }
        std::vector<TokenId> encode(std::string_view t) const override {
            if (t.find('!') != std::string_view::npos) throw std::runtime_error("cannot encode");
            return std::vector<TokenId>(t.size(), 1);
        }
    } tok;
    const std::vector<Document> docs{wiki(1, "ok", "a"), wiki(2, "bad!", "b")};
    const auto s = corpus_stats(docs, tok);
    EXPECT_TRUE(s.partial());
    EXPECT_EQ(s.totals().items, 2u);
    EXPECT_EQ(s.totals().tokens, 2u);
    EXPECT_NE(format_stats_table(s).find("partial"), std::string::npos);
}

TEST(StatsTest, TableLayout) {
    ByteTokenizer tok;
    const std::vector<Document> docs{wiki(1, std::string(1500, 'x'), "u")};
    const auto table = format_stats_table(corpus_stats(docs, tok));
    EXPECT_NE(table.find("Items"), std::string::npos);
    EXPECT_NE(table.find("Size"), std::string::npos);
    EXPECT_NE(table.find("Tokens"), std::string::npos);
    for (const char* row : {"arxiv", "standard", "wiki", "web", "total"}) EXPECT_NE(table.find(row), std::string::npos);
    EXPECT_NE(table.find("1.5 KBs"), std::string::npos);
    EXPECT_NE(table.find("1.5k"), std::string::npos);
}

TEST(StatsTest, Humanize) {
    EXPECT_EQ(humanize_count(999), "999");
    EXPECT_EQ(humanize_count(6400000), "6.4M");
    EXPECT_EQ(humanize_count(2500000000ULL), "2.5B");
    EXPECT_EQ(humanize_bytes(52000000000ULL), "52 GBs");
}

TEST(StatsProperty, PermutationInvariant) {
    Gen g(99);
    WordTokenizer tok;
    for (int round = 0; round < 10; ++round) {
        std::vector<Document> docs;
        const auto n = g.range(1, 80);
        for (std::size_t i = 0; i < n; ++i) docs.push_back(g.document(kAllCategories[g.below(4)], i));
        const auto base = corpus_stats(docs, tok);
        std::shuffle(docs.begin(), docs.end(), g.engine());
        EXPECT_EQ(corpus_stats(docs, tok), base);

        // Merging halves equals the whole.
        const auto mid = docs.size() / 2;
        auto left = corpus_stats(std::span(docs).first(mid), tok);
        left.merge(corpus_stats(std::span(docs).subspan(mid), tok));
        EXPECT_EQ(left.totals(), base.totals());
    }
}
