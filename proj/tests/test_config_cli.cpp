#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "support.hpp"
#include "telekit/cli.hpp"
#include "telekit/config.hpp"
#include "telekit/corpus.hpp"
#include "telekit/io.hpp"

using namespace telekit;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) {
        if (c == '\'') {
            q += "'\\''";
        } else {
            q.push_back(c);
        }
    }
    return q + "'";
}

Run run_cli(const std::vector<std::string>& args, const tk_test::TempDir& tmp) {
    std::string cmd = quote(TELEKIT_CLI);
    for (const auto& a : args) cmd += " " + quote(a);
    const auto out = tmp / "stdout.txt";
    const auto err = tmp / "stderr.txt";
    cmd += " >" + quote(out.string()) + " 2>" + quote(err.string());
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = tk_test::slurp(out);
    r.err = tk_test::slurp(err);
    return r;
}

const fs::path kPapers = fs::path(TELEKIT_FIXTURES) / "cli" / "papers";

void write_corpus(const fs::path& p) {
    std::vector<Document> docs{
        Document{DocId{Category::wiki, 0}, "Radio bearers carry user data.", WikiMeta{"Radio bearer", "u0"}},
        Document{DocId{Category::web, 0}, "Cheap routers for sale.", WebMeta{"https://shop.example/r"}},
        Document{DocId{Category::wiki, 1}, "A cell serves a sector.", WikiMeta{"Cell", "u1"}},
    };
    std::string text;
    for (const auto& d : docs) text += serialize_record(d) + "\n";
    io::write_file(p, text);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST(ConfigTest, DefaultsPointAtShippedData) {
    const auto c = config::PipelineConfig::defaults();
    EXPECT_TRUE(fs::exists(c.keywords));
    EXPECT_TRUE(fs::exists(c.filter_bank));
    EXPECT_TRUE(fs::exists(c.blocklist));
    EXPECT_TRUE(fs::exists(c.section_patterns));
    EXPECT_TRUE(c.endpoints.empty());
    EXPECT_EQ(c.tokenizer, "byte");
}

TEST(ConfigTest, FromJsonResolvesRelativePaths) {
    const json j = json::parse(R"({
        "endpoints": {"judge": {"base_url": "mock:", "model_name": "j", "retries": 1},
                      "scorer": {"base_url": "replay:t.jsonl"}},
        "keywords": "kw.txt", "tokenizer": "word", "seed": 9, "workers": 3,
        "recipe": {"epochs": 1, "context_length": 64}
    })");
    const auto c = config::PipelineConfig::from_json(j, "/base");
    EXPECT_EQ(c.keywords, fs::path("/base/kw.txt"));
    EXPECT_EQ(c.endpoints.at(gateway::Capability::judge).model_name, "j");
    EXPECT_EQ(c.endpoints.at(gateway::Capability::judge).retries, 1);
    EXPECT_EQ(c.endpoints.at(gateway::Capability::scorer).base_url, "replay:/base/t.jsonl");
    EXPECT_EQ(c.tokenizer, "word");
    EXPECT_EQ(c.recipe.seed, 9u);
    EXPECT_EQ(c.recipe.context_length, 64u);
    EXPECT_EQ(c.effective_workers(), 3u);
}

TEST(ConfigTest, Errors) {
    auto code = [](auto&& f) {
        try {
            f();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::invalid_argument;
    };
    using config::PipelineConfig;
    EXPECT_EQ(code([] { PipelineConfig::from_json(json::array()); }), ErrorCode::config_invalid);
    EXPECT_EQ(code([] { PipelineConfig::from_json(json{{"endpoints", {{"oracle", json::object()}}}}); }),
              ErrorCode::config_invalid);
    EXPECT_EQ(code([] { PipelineConfig::from_json(json{{"seed", "x"}}); }), ErrorCode::config_invalid);
    const gateway::Capability judge[] = {gateway::Capability::judge};
    EXPECT_EQ(code([&] { PipelineConfig::defaults().validate(judge); }), ErrorCode::config_invalid);
    auto c = PipelineConfig::defaults();
    c.tokenizer = "bpe";
    EXPECT_EQ(code([&] { c.validate({}); }), ErrorCode::config_invalid);
    c = PipelineConfig::defaults();
    c.use_mock();
    EXPECT_NO_THROW(c.validate(judge));
}

TEST(ConfigTest, LoadMissingNamesPath) {
    try {
        config::PipelineConfig::load("/nonexistent/dir/pipeline.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::config_invalid);
        EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/pipeline.json"), std::string::npos);
    }
}

// ---------------------------------------------------------------------------
// CLI

TEST(CliTest, UsageErrors) {
    tk_test::TempDir tmp;
    EXPECT_EQ(run_cli({"frobnicate"}, tmp).code, cli::kUsage);
    EXPECT_EQ(run_cli({"stats"}, tmp).code, cli::kUsage);  // --in is required
    EXPECT_EQ(run_cli({"--bogus-flag", "stats", "--in", "x"}, tmp).code, cli::kUsage);
    const auto help = run_cli({"--help"}, tmp);
    EXPECT_EQ(help.code, cli::kOk);
    EXPECT_NE(help.out.find("qna-filter"), std::string::npos);
}

TEST(CliTest, MissingConfigExitThree) {
    tk_test::TempDir tmp;
    const auto r = run_cli({"-c", "/nonexistent/pipeline.json", "stats", "--in", "x.jsonl"}, tmp);
    EXPECT_EQ(r.code, cli::kConfig);
    EXPECT_NE(r.err.find("/nonexistent/pipeline.json"), std::string::npos);
}

TEST(CliTest, InputAndIoExitCodes) {
    tk_test::TempDir tmp;
    EXPECT_EQ(run_cli({"stats", "--in", (tmp / "absent.jsonl").string()}, tmp).code, cli::kIo);
    io::write_file(tmp / "bad.jsonl", "{\"ID\":\"wiki_0\"}\n");
    EXPECT_EQ(run_cli({"stats", "--in", (tmp / "bad.jsonl").string()}, tmp).code, cli::kInput);
}

TEST(CliTest, GatewayFailureExitFive) {
    tk_test::TempDir tmp;
    write_corpus(tmp / "c.jsonl");
    const json cfg{{"endpoints", {{"scorer", {{"base_url", "mock:"}, {"retries", 0}, {"options", {{"always_fail", true}}}}}}}};
    io::write_file(tmp / "cfg.json", cfg.dump());
    const auto r = run_cli({"-q", "-c", (tmp / "cfg.json").string(), "audit", "--in", (tmp / "c.jsonl").string(), "--out",
                        (tmp / "a.json").string(), "--T", "4"},
                       tmp);
    EXPECT_EQ(r.code, cli::kGateway) << r.err;
}

TEST(CliTest, ConfigPrecedence) {
    tk_test::TempDir tmp;
    write_corpus(tmp / "c.jsonl");
    io::write_file(tmp / "cfg.json", R"({"tokenizer": "word"})");
    const auto in = (tmp / "c.jsonl").string();
    const auto js = (tmp / "s.json").string();

    ASSERT_EQ(run_cli({"-q", "stats", "--in", in, "--json", js}, tmp).code, 0);
    EXPECT_EQ(json::parse(tk_test::slurp(js))["tokenizer"], "byte");  // built-in default

    ASSERT_EQ(run_cli({"-q", "-c", (tmp / "cfg.json").string(), "stats", "--in", in, "--json", js}, tmp).code, 0);
    EXPECT_EQ(json::parse(tk_test::slurp(js))["tokenizer"], "word");  // file beats default

    ASSERT_EQ(run_cli({"-q", "-c", (tmp / "cfg.json").string(), "--tokenizer", "byte", "stats", "--in", in, "--json", js},
                  tmp)
                  .code,
              0);
    EXPECT_EQ(json::parse(tk_test::slurp(js))["tokenizer"], "byte");  // flag beats file
}

TEST(CliTest, DryRunWritesNothing) {
    tk_test::TempDir tmp;
    write_corpus(tmp / "c.jsonl");
    const auto in = (tmp / "c.jsonl").string();
    EXPECT_EQ(run_cli({"--dry-run", "clean", "--in", kPapers.string(), "--out", (tmp / "o.jsonl").string()}, tmp).code, 0);
    EXPECT_EQ(run_cli({"--dry-run", "--mock", "filter", "--in", in, "--out", (tmp / "f.jsonl").string()}, tmp).code, 0);
    EXPECT_EQ(run_cli({"--dry-run", "pack", "--in", in, "--out", (tmp / "shards").string()}, tmp).code, 0);
    EXPECT_FALSE(fs::exists(tmp / "o.jsonl"));
    EXPECT_FALSE(fs::exists(tmp / "f.jsonl"));
    EXPECT_FALSE(fs::exists(tmp / "shards"));
    // dry run still validates configuration
    EXPECT_EQ(run_cli({"--dry-run", "filter", "--in", in, "--out", (tmp / "f.jsonl").string()}, tmp).code, cli::kConfig);
}

TEST(CliTest, CleanGolden) {
    tk_test::TempDir tmp;
    const auto r = run_cli({"-q", "clean", "--in", kPapers.string(), "--out", (tmp / "o.jsonl").string()}, tmp);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto got = tk_test::slurp(tmp / "o.jsonl");
    EXPECT_EQ(got, tk_test::slurp(fs::path(TELEKIT_FIXTURES) / "cli" / "clean_golden.jsonl"));
    // every line is a valid record
    std::istringstream lines(got);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
        EXPECT_EQ(serialize_record(parse_record(line)), line);
        ++n;
    }
    EXPECT_EQ(n, 3u);
}

TEST(CliTest, StatsTable) {
    tk_test::TempDir tmp;
    write_corpus(tmp / "c.jsonl");
    const auto r = run_cli({"-q", "stats", "--in", (tmp / "c.jsonl").string()}, tmp);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(r.out.starts_with("           "));
    EXPECT_NE(r.out.find("\nwiki "), std::string::npos);
    EXPECT_NE(r.out.find("\nweb "), std::string::npos);
    EXPECT_NE(r.out.find("\ntotal "), std::string::npos);
    EXPECT_NE(r.out.find("tokenizer: byte"), std::string::npos);
}

TEST(CliTest, DeterministicAcrossRuns) {
    tk_test::TempDir tmp;
    write_corpus(tmp / "c.jsonl");
    std::string first_clean, first_filter;
    for (const char* workers : {"1", "3"}) {
        const auto o = (tmp / "o.jsonl").string();
        const auto f = (tmp / "f.jsonl").string();
        ASSERT_EQ(run_cli({"-q", "-j", workers, "clean", "--in", kPapers.string(), "--out", o}, tmp).code, 0);
        ASSERT_EQ(run_cli({"-q", "-j", workers, "--mock", "filter", "--in", (tmp / "c.jsonl").string(), "--out", f}, tmp).code,
                  0);
        if (first_clean.empty()) {
            first_clean = tk_test::slurp(o);
            first_filter = tk_test::slurp(f);
        } else {
            EXPECT_EQ(tk_test::slurp(o), first_clean);
            EXPECT_EQ(tk_test::slurp(f), first_filter);
        }
    }
}

TEST(CliTest, InProcessRunMatchesBinary) {
    tk_test::TempDir tmp;
    EXPECT_EQ(cli::run({"frobnicate"}), cli::kUsage);
    EXPECT_EQ(cli::run({"-q", "-c", (tmp / "none.json").string(), "stats", "--in", "x"}), cli::kConfig);
}
