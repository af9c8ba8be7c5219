#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "telekit/tokenizer.hpp"

namespace telekit::packer {

inline constexpr std::size_t kDefaultContextLength = 8192;

struct BoundarySpan {
    std::size_t start = 0;
    std::size_t end = 0;  // exclusive
    std::string doc_id;
    bool operator==(const BoundarySpan&) const = default;
};

struct PackedSequence {
    std::vector<TokenId> token_ids;      // always L long
    std::vector<BoundarySpan> boundaries;
    std::size_t pad_count = 0;
};

struct TokenDoc {
    std::string id;
    std::vector<TokenId> tokens;
    bool general = false;
};

// Greedy first-fit over a window of open sequences. Documents longer than L
// are split into L-sized pieces first. A sequence is emitted as soon as it is
// full; when more than `max_open` are open the oldest is emitted padded.
class SequencePacker {
public:
    using Sink = std::function<void(PackedSequence&&)>;

    SequencePacker(std::size_t L, Sink sink, std::size_t max_open = 64, TokenId pad_id = 0);

    void add(const std::string& doc_id, std::span<const TokenId> tokens);
    void finish();

    std::uint64_t sequences() const noexcept { return sequences_; }
    std::uint64_t pad_tokens() const noexcept { return pad_tokens_; }
    std::uint64_t tokens() const noexcept { return tokens_; }

private:
    void place(const std::string& doc_id, std::span<const TokenId> piece);
    void emit(std::size_t slot);

    std::size_t L_;
    Sink sink_;
    std::size_t max_open_;
    TokenId pad_id_;
    std::vector<PackedSequence> open_;
    std::uint64_t sequences_ = 0;
    std::uint64_t pad_tokens_ = 0;
    std::uint64_t tokens_ = 0;
};

std::vector<PackedSequence> pack_sequences(std::span<const TokenDoc> docs, std::size_t L,
                                           std::size_t max_open = 64);

// Deterministic Fisher-Yates permutation of [0, n) for (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint32_t epoch);

struct MixEntry {
    bool general = false;
    std::size_t index = 0;  // into the domain or general list
    bool operator==(const MixEntry&) const = default;
};

struct MixPlan {
    std::vector<MixEntry> order;
    std::uint64_t domain_tokens = 0;
    std::uint64_t general_tokens = 0;
    bool general_exhausted = false;

    double actual_fraction() const noexcept {
        const auto total = domain_tokens + general_tokens;
        return total == 0 ? 0.0 : static_cast<double>(general_tokens) / static_cast<double>(total);
    }
};

// Adds general documents (in the given order) until their share of all
// tokens reaches `fraction`, then scatters them among the domain documents
// at seeded positions. Domain order is kept.
MixPlan mix_general(std::span<const std::uint64_t> domain_lengths, std::span<const std::uint64_t> general_lengths,
                    double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Shards: <stem>.bin holds little-endian uint32 tokens, L per sequence;
// <stem>.idx.jsonl holds one {"seq","pad","spans":[[start,end,id],...]} per sequence.

struct ShardInfo {
    std::filesystem::path bin;
    std::filesystem::path index;
    std::uint64_t sequences = 0;
    std::uint64_t tokens = 0;      // non-pad
    std::uint64_t pad_tokens = 0;
    std::uint32_t epoch = 0;
    std::string sha256;            // of the .bin file
    std::string index_sha256;
};

class ShardWriter {
public:
    ShardWriter(std::filesystem::path dir, std::string prefix, std::uint32_t epoch,
                std::size_t sequences_per_shard = 1024);
    ~ShardWriter();

    void write(const PackedSequence& seq);
    std::vector<ShardInfo> finish();

private:
    void open_next();
    void close_current();

    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::vector<PackedSequence> read_shard(const ShardInfo& shard, std::size_t L);

// ---------------------------------------------------------------------------
// Recipe manifest

struct RecipeConfig {
    std::uint64_t batch_size_tokens = 4194304;
    std::size_t context_length = kDefaultContextLength;
    std::string optimizer = "AdamW";
    double weight_decay = 0.1;
    double max_grad_norm = 1.0;
    double min_lr_ratio = 0.1;
    double warmup_epochs = 0.1;
    double max_lr = 1e-5;
    int epochs = 2;
    double mix_fraction = 0.05;
    std::uint64_t seed = 0;
    std::string tokenizer = "byte";

    void validate() const;  // throws config_invalid
};

struct RecipeManifest {
    RecipeConfig config;
    std::vector<ShardInfo> shards;
    std::vector<std::string> warnings;

    nlohmann::ordered_json to_json(const std::filesystem::path& relative_to = {}) const;
    std::string summary() const;
};

// Throws missing_digest when a shard has no digest or its file is gone.
RecipeManifest build_recipe(const RecipeConfig& config, std::vector<ShardInfo> shards);
void emit_recipe(const RecipeManifest& manifest, const std::filesystem::path& path);

}  // namespace telekit::packer
