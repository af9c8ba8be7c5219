#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "telekit/corpus.hpp"
#include "telekit/gateway.hpp"

namespace telekit::relevance {

// Case-folded terms matched in case-folded content; a match may not extend a
// word (no letter or digit right before or after it).
class KeywordList {
public:
    explicit KeywordList(std::vector<std::string> terms);  // throws Error(config_invalid)
    static KeywordList parse(std::string_view text);      // one term per line, '#' comments
    static KeywordList load(const std::filesystem::path& path);

    const std::vector<std::string>& terms() const noexcept { return terms_; }
    bool matches(std::string_view content) const;
    std::optional<std::string> first_match(std::string_view content) const;

private:
    std::vector<std::string> terms_;
};

bool keyword_prefilter(const Document& doc, const KeywordList& keywords);

enum class PromptKind { paper_abstract, web_content };
enum class DecisionBasis { logits, text };

inline constexpr std::size_t kExcerptScalars = 10000;

// Full text for abstracts; the first 10,000 scalar values for web content.
std::string_view make_excerpt(std::string_view content, PromptKind kind);

struct RelevanceVerdict {
    DocId doc_id;
    bool flagged_by_keyword = false;
    bool classified = false;  // false when the keyword step already rejected the document
    bool llm_relevant = false;
    std::optional<double> yes_logit;
    std::optional<double> no_logit;
    DecisionBasis basis = DecisionBasis::text;
    bool indeterminate = false;

    nlohmann::ordered_json to_json() const;
};

// Throws Error(gateway_failure) when the endpoint fails after its retries.
RelevanceVerdict classify_relevance(std::string_view excerpt, gateway::Endpoint& judge, PromptKind kind);

struct FunnelCounts {
    std::uint64_t input = 0;
    std::uint64_t keyword_flagged = 0;   // arxiv documents skip this step and count as flagged
    std::uint64_t classified = 0;
    std::uint64_t kept = 0;
    std::uint64_t passthrough = 0;       // standards, not filtered
    std::uint64_t indeterminate = 0;
    std::uint64_t withheld = 0;          // endpoint failures, routed to the retry queue

    FunnelCounts& operator+=(const FunnelCounts& o);
    bool operator==(const FunnelCounts&) const = default;
    nlohmann::ordered_json to_json() const;
};

struct FilterOptions {
    std::size_t workers = 1;
};

struct FilterResult {
    std::vector<Document> kept;             // input order
    std::size_t dropped = 0;
    std::vector<RelevanceVerdict> verdicts; // sorted by document id
    std::vector<DocId> retry;               // verdict withheld
    FunnelCounts funnel;
};

FilterResult filter_corpus(std::span<const Document> docs, const KeywordList& keywords,
                           gateway::Endpoint& judge, const FilterOptions& options = {});

// ---------------------------------------------------------------------------

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;
    std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
};

struct PrecisionRecall {
    std::optional<double> precision;  // undefined when tp + fp == 0
    std::optional<double> recall;     // undefined when tp + fn == 0
    std::optional<double> f1;         // undefined when either is; 0 when both are 0
};

PrecisionRecall precision_recall(const ConfusionCounts& counts);

// Labeled sample: JSONL rows {"doc_id": "...", "human_label": true|false}.
std::map<DocId, bool> load_labels(const std::filesystem::path& path);

// Documents without a verdict are skipped (they were never classified).
ConfusionCounts confusion_from_labels(std::span<const RelevanceVerdict> verdicts,
                                      const std::map<DocId, bool>& labels);

}  // namespace telekit::relevance
