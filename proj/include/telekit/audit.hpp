#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "telekit/gateway.hpp"
#include "telekit/tokenizer.hpp"

namespace telekit::audit {

inline constexpr std::size_t kDefaultChunkTokens = 1024;

struct ChunkedCorpus {
    std::size_t T = kDefaultChunkTokens;
    std::string tokenizer_name;
    std::vector<std::vector<TokenId>> chunks;
    std::uint64_t discarded_tokens = 0;  // trailing remainders shorter than T
};

// Appends the full T-token chunks of `text`; the remainder is discarded.
void append_chunks(ChunkedCorpus& corpus, std::string_view text, const Tokenizer& tokenizer);
ChunkedCorpus chunk_tokens(std::string_view text, const Tokenizer& tokenizer, std::size_t T);

struct TailStats {
    double tau = 0;
    double tail_mean = 0;
    double tail_std = 0;          // population
    std::uint64_t tail_size = 0;
    std::uint64_t n_losses = 0;
};

// Nearest-rank 90th percentile and the statistics of {loss >= tau}.
// Throws invalid_argument on an empty input.
TailStats tail_stats(std::vector<double> losses);

struct TailReport {
    std::string tokenizer_name;
    std::size_t T = 0;
    std::uint64_t n_chunks = 0;       // scored successfully
    std::uint64_t failed_chunks = 0;
    std::uint64_t discarded_tokens = 0;
    TailStats tail;
    std::string scorer;

    nlohmann::ordered_json to_json() const;
    static TailReport from_json(const nlohmann::json& j);
};

struct AuditResult {
    TailReport report;
    std::vector<double> losses;  // pooled, chunk order
};

// Pooled losses of scored chunks; merge by concatenation.
struct LossPool {
    std::vector<double> losses;
    std::uint64_t n_chunks = 0;
    std::uint64_t failed_chunks = 0;
};

// Scores every chunk and appends its T-1 losses (position 1 has no context).
// Chunks whose scoring fails are counted and skipped.
void score_chunks(const ChunkedCorpus& corpus, gateway::Endpoint& scorer, LossPool& pool, std::size_t workers = 1);

// Throws all_chunks_failed when nothing was scored but chunks failed, and
// invalid_argument when there was nothing to score.
TailReport make_report(const LossPool& pool, std::string tokenizer_name, std::size_t T, std::string scorer,
                       std::uint64_t discarded_tokens = 0);

// Scores every chunk (position 1 excluded) and pools the losses. Chunks whose
// scoring fails are excluded and counted; if all fail, throws all_chunks_failed.
AuditResult tail_report(const ChunkedCorpus& corpus, gateway::Endpoint& scorer, std::size_t workers = 1);

struct ComparisonVerdict {
    bool cleaner = false;
    bool mixed_signal = false;   // mean and std moved in opposite directions
    double delta_mean = 0;       // clean - raw
    double delta_std = 0;

    nlohmann::ordered_json to_json() const;
};

// Throws comparability when tokenizer or T differ.
ComparisonVerdict compare_tails(const TailReport& raw, const TailReport& clean);

// "loss_bin,count" rows; bins are [k*width, (k+1)*width).
std::string histogram_csv(std::span<const double> losses, double bin_width = 0.25);

}  // namespace telekit::audit
