#include <gtest/gtest.h>

#include <atomic>
#include <numeric>

#include "support.hpp"
#include "telekit/hash.hpp"
#include "telekit/io.hpp"
#include "telekit/parallel.hpp"
#include "telekit/prompts.hpp"
#include "telekit/text.hpp"
#include "telekit/tokenizer.hpp"

using namespace telekit;
using tk_test::Gen;
using tk_test::TempDir;

TEST(TextTest, Utf8Validation) {
    EXPECT_TRUE(text::is_valid_utf8("plain \xC3\xA9 \xF0\x9F\x98\x80"));
    EXPECT_FALSE(text::is_valid_utf8("\xC3"));
    EXPECT_FALSE(text::is_valid_utf8("\xED\xA0\x80"));  // surrogate
    EXPECT_EQ(text::sanitize_utf8("a\xC3z"), "a\xEF\xBF\xBDz");
    EXPECT_EQ(text::sanitize_utf8("ok"), "ok");
}

TEST(TextTest, ScalarCounting) {
    const std::string s = "a\xC3\xA9\xE6\x97\xA5\xF0\x9F\x98\x80";  // a é 日 😀
    EXPECT_EQ(text::count_scalars(s), 4u);
    EXPECT_EQ(text::take_scalars(s, 2), "a\xC3\xA9");
    EXPECT_EQ(text::take_scalars(s, 10), s);
    const auto parts = text::split_scalars(s, 3);
    ASSERT_EQ(parts.size(), 2u);
    EXPECT_EQ(text::count_scalars(parts[0]), 3u);
    EXPECT_EQ(parts[1], "\xF0\x9F\x98\x80");
}

TEST(TextProperty, SplitConcatenatesBack) {
    Gen g(5);
    for (int i = 0; i < 200; ++i) {
        const auto s = g.unicode_text(g.range(0, 300));
        const auto n = g.range(1, 40);
        std::string joined;
        const auto parts = text::split_scalars(s, n);
        for (std::size_t p = 0; p < parts.size(); ++p) {
            joined += parts[p];
            if (p + 1 < parts.size()) {
                EXPECT_EQ(text::count_scalars(parts[p]), n);
            } else {
                EXPECT_LE(text::count_scalars(parts[p]), n);
            }
        }
        EXPECT_EQ(joined, s);
    }
}

TEST(TextTest, NormalizationAndFolding) {
    EXPECT_EQ(text::nfc("e\xCC\x81"), "\xC3\xA9");
    EXPECT_EQ(text::case_fold("Wi-Fi STRASSE"), "wi-fi strasse");
    EXPECT_EQ(text::case_fold("Stra\xC3\x9F" "e"), "strasse");
    EXPECT_EQ(text::trim("  x y \n"), "x y");
    EXPECT_TRUE(text::is_blank(" \t\n"));
    EXPECT_EQ(text::words("  a bb\tccc\n").size(), 3u);
}

TEST(HashTest, StableValues) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(hex64(255), "00000000000000ff");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(HashTest, FileDigest) {
    TempDir tmp;
    io::write_file(tmp / "f", "abc");
    EXPECT_EQ(sha256_file_hex(tmp / "f"), sha256_hex("abc"));
}

TEST(TokenizerTest, ByteAndWord) {
    ByteTokenizer b;
    EXPECT_EQ(b.encode("ab"), (std::vector<TokenId>{97, 98}));
    WordTokenizer w(1000);
    const auto t = w.encode("5G NR, uplink!");
    EXPECT_EQ(t.size(), 5u);  // 5G NR , uplink !
    for (auto id : t) EXPECT_LT(id, 1000u);
    EXPECT_EQ(w.encode("NR"), w.encode(" NR "));
    EXPECT_EQ(make_tokenizer("byte")->name(), "byte");
    EXPECT_EQ(make_tokenizer("word")->name(), "word");
    EXPECT_THROW(make_tokenizer("bpe"), Error);
}

TEST(IoTest, LinesPlainAndGzip) {
    TempDir tmp;
    for (const char* name : {"a.txt", "a.txt.gz"}) {
        {
            io::LineWriter w(tmp / name);
            w.write_line("first");
            w.write_line("");
            w.write("third\r\n");
            w.close();
        }
        io::LineReader r(tmp / name);
        std::string line;
        std::vector<std::string> lines;
        std::vector<std::uint64_t> offsets;
        while (r.next(line)) {
            lines.push_back(line);
            offsets.push_back(r.line_offset());
        }
        EXPECT_EQ(lines, (std::vector<std::string>{"first", "", "third"})) << name;
        EXPECT_EQ(offsets, (std::vector<std::uint64_t>{0, 6, 7})) << name;
        EXPECT_EQ(r.line_number(), 3u);
    }
    EXPECT_TRUE(io::has_gzip_extension("x.jsonl.gz"));
    EXPECT_FALSE(io::has_gzip_extension("x.jsonl"));
}

TEST(IoTest, MissingFileIsIoFailure) {
    try {
        io::LineReader r("/nonexistent/telekit/file");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::io_failure);
    }
}

TEST(PromptTest, TemplatesFilledVerbatim) {
    const auto p = prompts::abstract_relevance("We study MIMO.");
    EXPECT_EQ(p,
              "Given the following scientific paper abstract: We study MIMO., Answer by Yes or No if this paper is "
              "related to the telecommunications and networking domains.");
    EXPECT_NE(prompts::web_relevance("X").find("website content: X, Answer"), std::string::npos);
    EXPECT_TRUE(prompts::qna_generation("P").starts_with("Generate 5 questions and short answers based on the following passage: P. \n"));
    EXPECT_TRUE(prompts::answerability("Q?").ends_with("the question came: Q?"));
    EXPECT_EQ(prompts::answer_format("S"),
              "The following is a question about telecommunications and networking.\nQuestion: S\nAnswer:");
    const auto j = prompts::judge("q", "g", "p");
    EXPECT_NE(j.find("\nQuestion: q\nGround Truth Answer: g\nProvided Answer: p\n"), std::string::npos);
    EXPECT_TRUE(j.ends_with("Is the Provided Answer correct?"));
    // Placeholder-like text in values is not substituted again.
    EXPECT_EQ(prompts::fill("a {x} b", "{x}", "{x}"), "a {x} b");
}

TEST(ParallelTest, CoversEveryIndexOnce) {
    for (std::size_t workers : {1u, 2u, 8u}) {
        std::vector<std::atomic<int>> hits(1000);
        parallel_for(hits.size(), workers, [&](std::size_t i) { hits[i]++; });
        for (auto& h : hits) EXPECT_EQ(h.load(), 1);
    }
}

TEST(ParallelTest, RethrowsFirstError) {
    EXPECT_THROW(parallel_for(100, 4,
                              [](std::size_t i) {
                                  if (i == 37) throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
}
