#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "telekit/error.hpp"
#include "telekit/tokenizer.hpp"

namespace telekit {

enum class Category { arxiv, standard, wiki, web };

inline constexpr Category kAllCategories[] = {Category::arxiv, Category::standard,
                                              Category::wiki, Category::web};

std::string_view to_string(Category c);
std::optional<Category> parse_category(std::string_view s);

// "<category>_<index>", e.g. wiki_132.
struct DocId {
    Category category = Category::arxiv;
    std::uint64_t index = 0;

    std::string str() const;
    static DocId parse(std::string_view s);  // throws Error(invalid_id)
    static bool is_valid(std::string_view s);

    auto operator<=>(const DocId&) const = default;
};

struct ArxivMeta {
    std::string arxiv_id;
    std::string title;
    std::string abstract;
    bool operator==(const ArxivMeta&) const = default;
};

struct StandardMeta {
    std::int64_t series = 0;
    std::int64_t release = 0;
    std::string file_name;
    bool operator==(const StandardMeta&) const = default;
};

struct WikiMeta {
    std::string title;
    std::string url;
    bool operator==(const WikiMeta&) const = default;
};

struct WebMeta {
    std::string url;
    bool operator==(const WebMeta&) const = default;
};

using Metadata = std::variant<ArxivMeta, StandardMeta, WikiMeta, WebMeta>;

Category category_of(const Metadata& m);
// Url for wiki/web metadata; nullopt for categories without one.
std::optional<std::string_view> metadata_url(const Metadata& m);

struct Document {
    DocId id;
    std::string content;
    Metadata metadata;

    Category category() const noexcept { return id.category; }
    bool operator==(const Document&) const = default;
};

// Throws Error(...) when an invariant of Document does not hold.
void validate(const Document& doc);

// Parses one JSONL row. Errors carry the given line number.
Document parse_record(std::string_view line, std::size_t line_number = 0);
std::string serialize_record(const Document& doc);

// Writes one JSON object per line (ID, Category, Content, Metadata).
// On a stream failure throws WriteError carrying the count written so far.
class WriteError : public Error {
public:
    WriteError(const std::string& message, std::size_t written)
        : Error(ErrorCode::io_failure, message), written_(written) {}
    std::size_t written() const noexcept { return written_; }

private:
    std::size_t written_;
};

std::size_t write_records(std::span<const Document> docs, std::ostream& sink);

// Streams records from a (possibly gzip) JSONL file. Bad lines go to on_error
// when supplied; otherwise the first bad line throws.
struct RecordError {
    std::size_t line = 0;
    ErrorCode code = ErrorCode::malformed_json;
    std::string message;
};
void read_records(const std::filesystem::path& path,
                  const std::function<void(Document&&)>& on_record,
                  const std::function<void(const RecordError&)>& on_error = {});
std::vector<Document> read_all_records(const std::filesystem::path& path);
void write_records_file(const std::filesystem::path& path, std::span<const Document> docs);

// ---------------------------------------------------------------------------
// Deduplication

enum class DedupKey { content_hash, metadata_url };

enum class DedupOutcome { keep, drop, flagged_keep };

// Streaming first-occurrence deduplicator. Content keys hash the NFC form of
// the content; on a hash hit the earlier content is fetched through the
// fetcher and compared in full, so hash collisions never drop a record.
class Deduplicator {
public:
    using ContentFetcher = std::function<std::string(std::uint64_t ordinal)>;

    // Without a fetcher, normalized contents are retained in memory.
    explicit Deduplicator(DedupKey key, ContentFetcher fetcher = {});

    DedupOutcome offer(const Document& doc);

    std::size_t dropped() const noexcept { return dropped_; }
    std::size_t flagged() const noexcept { return flagged_; }

private:
    DedupKey key_;
    ContentFetcher fetcher_;
    std::uint64_t ordinal_ = 0;
    std::unordered_map<std::uint64_t, std::vector<std::uint64_t>> by_hash_;
    std::unordered_map<std::uint64_t, std::string> retained_;
    std::unordered_map<std::string, std::uint64_t> urls_;
    std::size_t dropped_ = 0;
    std::size_t flagged_ = 0;
};

struct DedupResult {
    std::vector<Document> kept;
    std::size_t dropped = 0;
    std::vector<DocId> flagged;  // records lacking the requested key (kept)
};

DedupResult dedup_by_key(std::span<const Document> docs, DedupKey key);

// ---------------------------------------------------------------------------
// Corpus statistics

struct CategoryStats {
    std::uint64_t items = 0;
    std::uint64_t bytes = 0;
    std::uint64_t tokens = 0;
    std::uint64_t token_failures = 0;

    CategoryStats& operator+=(const CategoryStats& o);
    bool operator==(const CategoryStats&) const = default;
};

struct CorpusStats {
    std::string tokenizer_name;
    std::map<Category, CategoryStats> per_category;

    CategoryStats totals() const;
    bool partial() const;  // some token counts missing due to tokenizer failures

    void add(const Document& doc, const Tokenizer& tokenizer);
    CorpusStats& merge(const CorpusStats& other);
    bool operator==(const CorpusStats&) const = default;
};

CorpusStats corpus_stats(std::span<const Document> docs, const Tokenizer& tokenizer);

// Table in the layout "category | Items | Size | Tokens" with humanized units.
std::string format_stats_table(const CorpusStats& stats);
std::string humanize_count(std::uint64_t n);
std::string humanize_bytes(std::uint64_t n);

}  // namespace telekit
