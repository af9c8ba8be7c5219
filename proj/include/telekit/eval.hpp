#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "telekit/gateway.hpp"
#include "telekit/qna.hpp"

namespace telekit::eval {

using qna::QnaItem;

// logprobs[j - 2] is the log-probability of token j (1-based), j = 2..length.
struct ScoredSequence {
    std::vector<TokenId> token_ids;
    std::vector<double> logprobs;
    std::size_t answer_start = 0;  // k, 1-based
    std::size_t length = 0;        // T

    void validate() const;  // throws invalid_argument
    std::span<const double> answer_logprobs() const;
};

// Mean log-probability of the answer tokens of one sequence.
double answer_mean_logprob(const ScoredSequence& s);
// exp(-(1/N) sum_i mean_i); throws invalid_argument on an empty list or an
// item without answer tokens.
double ans_ppl(std::span<const ScoredSequence> scored);

// Throws invalid_argument on a dimension mismatch; nullopt on a zero norm.
std::optional<double> cosine(std::span<const double> a, std::span<const double> b);
std::optional<double> sem_score(std::string_view truth, std::string_view answer, gateway::Endpoint& embedder);

std::vector<QnaItem> select_subset(std::span<const QnaItem> items, std::string_view id_prefix);

struct GeneratedAnswer {
    std::optional<std::string> text;  // nullopt: generation failed
    bool truncated = false;
};

std::vector<GeneratedAnswer> generate_answers(std::span<const QnaItem> items, gateway::Endpoint& generator,
                                              const gateway::DecodingParams& decoding = {},
                                              std::size_t workers = 1);

// Scores prompt + " " + truth and locates the answer start by scoring the
// prompt alone. Throws gateway_failure on transport errors.
ScoredSequence score_answer(const QnaItem& item, gateway::Endpoint& scorer);

struct JudgeOutcome {
    bool yes = false;
    bool flagged = false;  // indeterminate or failed, counted as No
};

JudgeOutcome judge_answer(const QnaItem& item, std::string_view prediction, gateway::Endpoint& judge);
// Fraction of Yes over the given outcomes.
double llm_eval(std::span<const JudgeOutcome> outcomes);

// ---------------------------------------------------------------------------
// Report

struct ItemRecord {
    std::size_t index = 0;  // position in the evaluated set
    QnaItem item;
    bool generation_failed = false;
    std::optional<std::string> model_answer;
    std::optional<double> answer_mean_logprob;
    std::optional<double> semscore;
    std::optional<bool> judged_yes;
    std::vector<std::string> flags;
};

// Running sums make reports mergeable; means are derived.
struct MetricAccumulator {
    double sum = 0;
    std::uint64_t count = 0;
    void add(double v) {
        sum += v;
        ++count;
    }
    std::optional<double> mean() const {
        if (count == 0) return std::nullopt;
        return sum / static_cast<double>(count);
    }
    MetricAccumulator& operator+=(const MetricAccumulator& o) {
        sum += o.sum;
        count += o.count;
        return *this;
    }
};

struct ExclusionCounts {
    std::uint64_t generation_failed = 0;
    std::uint64_t scorer_failed = 0;
    std::uint64_t semscore_undefined = 0;
    std::uint64_t embedder_failed = 0;
    std::uint64_t judge_indeterminate = 0;
    std::uint64_t judge_failed = 0;
    ExclusionCounts& operator+=(const ExclusionCounts& o);
};

struct EvalReport {
    std::optional<MetricAccumulator> ans;       // per-item mean answer logprobs
    std::optional<MetricAccumulator> semscore;
    std::optional<MetricAccumulator> llm_eval;  // 1 per Yes
    std::uint64_t n_items = 0;
    std::map<std::string, std::string> endpoints;  // capability -> identity
    std::optional<gateway::DecodingParams> decoding;
    ExclusionCounts exclusions;
    std::vector<ItemRecord> items;

    std::optional<double> ans_ppl() const;
    std::optional<double> semscore_mean() const;
    std::optional<double> llm_eval_score() const;

    nlohmann::ordered_json to_json() const;
    std::string items_csv() const;
    // Ans-PPL to 2 decimals, SemScore and LLM-Eval to 4.
    std::string summary_table() const;
};

// Merges shards; item indices are kept. Throws invalid_argument on an empty
// list or when no metric was computed.
EvalReport aggregate_report(std::span<const EvalReport> parts);

struct EvalEndpoints {
    gateway::Endpoint* generator = nullptr;
    gateway::Endpoint* scorer = nullptr;
    gateway::Endpoint* embedder = nullptr;
    gateway::Endpoint* judge = nullptr;
};

struct EvalOptions {
    gateway::DecodingParams decoding;
    std::size_t workers = 1;
};

// Runs every metric whose endpoint is present. SemScore and LLM-Eval need a
// generator.
EvalReport run_eval(std::span<const QnaItem> items, const EvalEndpoints& endpoints, const EvalOptions& options = {});

}  // namespace telekit::eval
