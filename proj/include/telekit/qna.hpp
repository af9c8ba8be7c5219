#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "telekit/corpus.hpp"
#include "telekit/gateway.hpp"

namespace telekit::qna {

inline constexpr std::size_t kSegmentScalars = 20000;
inline constexpr std::size_t kMinSegmentScalars = 500;
inline constexpr std::size_t kPairsPerSegment = 5;

struct QnaItem {
    std::string statement;
    std::string answer;
    DocId source_id;

    bool operator==(const QnaItem&) const = default;
};

void validate(const QnaItem& item);  // throws empty_content / invalid_id
// {"Statement", "Answer", "ID"}
std::string serialize_qna(const QnaItem& item);
QnaItem parse_qna(std::string_view line, std::size_t line_number = 0);
std::size_t write_qna(std::span<const QnaItem> items, std::ostream& sink);
std::vector<QnaItem> read_qna_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Segmentation

struct Segment {
    DocId source_id;
    std::string text;
    std::size_t ordinal = 0;
};

struct Segmentation {
    std::vector<Segment> segments;
    bool short_remainder_dropped = false;   // final piece below the minimum
    std::size_t dropped_scalars = 0;
};

// Throws category_excluded for web documents.
Segmentation segment_content(const Document& doc, std::size_t limit = kSegmentScalars,
                             std::size_t min_final = kMinSegmentScalars);

// ---------------------------------------------------------------------------
// Generation

struct QnaPair {
    std::string statement;
    std::string answer;
    bool operator==(const QnaPair&) const = default;
};

struct ParseOutcome {
    std::vector<QnaPair> pairs;
    std::vector<std::string> warnings;
    std::size_t echoes = 0;  // pairs equal to a shot example, removed
};

// Reads "Question k: ..." / "Answer k: ..." blocks, k = 1..5.
ParseOutcome parse_completion(std::string_view completion);

struct GenerateOptions {
    int max_new_tokens = 1024;
    std::size_t workers = 1;
    std::size_t limit = kSegmentScalars;
    std::size_t min_final = kMinSegmentScalars;
};

// Throws generation_parse when no pair can be read from the completion.
ParseOutcome generate_qna(const Segment& seg, gateway::Endpoint& generator, int max_new_tokens = 1024);

struct GenerationRun {
    std::vector<QnaItem> candidates;  // ordered by (source_id, ordinal, pair index)
    std::size_t documents = 0;
    std::size_t excluded_documents = 0;  // web
    std::size_t short_documents = 0;     // no segment at all
    std::size_t segments = 0;
    std::size_t failed_segments = 0;     // unparseable or gateway failure
    std::size_t parse_warnings = 0;
    std::size_t echoes = 0;

    nlohmann::ordered_json to_json() const;
};

GenerationRun generate_candidates(std::span<const Document> docs, gateway::Endpoint& generator,
                                  const GenerateOptions& options = {});

// ---------------------------------------------------------------------------
// Filters

struct FilterPattern {
    std::string name;
    std::string pattern;
    std::regex re;
};

// Ordered (name, regex) list; matching is case-insensitive.
class FilterBank {
public:
    // Throws config_invalid on an empty bank, a duplicate name or a bad regex.
    explicit FilterBank(std::vector<std::pair<std::string, std::string>> patterns);
    // One `name<TAB>pattern` per line; '#' starts a comment line.
    static FilterBank parse(std::string_view tsv);
    static FilterBank load(const std::filesystem::path& path);

    const std::vector<FilterPattern>& patterns() const noexcept { return patterns_; }
    std::size_t size() const noexcept { return patterns_.size(); }
    // Name of the first pattern matching `s`.
    std::optional<std::string> first_match(std::string_view s) const;

private:
    std::vector<FilterPattern> patterns_;
};

struct Rejection {
    QnaItem item;
    std::string reason;
};

struct RegexResult {
    std::vector<QnaItem> kept;
    std::vector<Rejection> rejected;
};

RegexResult regex_filter(std::span<const QnaItem> items, const FilterBank& bank);

struct AnswerabilityVerdict {
    QnaItem item;
    gateway::Verdict verdict = gateway::Verdict::indeterminate;
    std::optional<double> yes_logit;
    std::optional<double> no_logit;

    nlohmann::ordered_json to_json() const;
};

struct AnswerabilityResult {
    std::vector<QnaItem> kept;
    std::vector<QnaItem> rejected;
    std::vector<AnswerabilityVerdict> verdicts;  // input order
    std::size_t indeterminate = 0;
    std::size_t gateway_failures = 0;            // rejected conservatively
};

AnswerabilityResult answerability_filter(std::span<const QnaItem> items, gateway::Endpoint& judge,
                                         std::size_t workers = 1);

// ---------------------------------------------------------------------------
// Retention

struct RetentionCounts {
    std::uint64_t generated = 0;
    std::uint64_t regex_rejected = 0;
    std::uint64_t llm_rejected = 0;
    std::uint64_t retained = 0;

    bool consistent() const noexcept { return retained + regex_rejected + llm_rejected == generated; }
    double rate() const noexcept {
        return generated == 0 ? 0.0 : static_cast<double>(retained) / static_cast<double>(generated);
    }
    RetentionCounts& operator+=(const RetentionCounts& o);
    bool operator==(const RetentionCounts&) const = default;
};

struct RetentionStats {
    RetentionCounts total;
    std::map<Category, RetentionCounts> by_category;

    bool consistent() const;
    nlohmann::ordered_json to_json() const;
};

struct QnaFilterRun {
    std::vector<QnaItem> kept;
    RegexResult regex;
    AnswerabilityResult answerability;
    RetentionStats stats;
};

QnaFilterRun filter_candidates(std::span<const QnaItem> candidates, const FilterBank& bank,
                               gateway::Endpoint& judge, std::size_t workers = 1);

// Writes the eval set and returns `stats` after checking it against `kept`.
// Throws invalid_argument when retained differs from kept.size() or the
// identity does not hold.
RetentionStats emit_eval_set(std::span<const QnaItem> kept, std::ostream& sink, RetentionStats stats);

}  // namespace telekit::qna
