#include "telekit/packer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "telekit/error.hpp"
#include "telekit/hash.hpp"
#include "telekit/io.hpp"

namespace telekit::packer {

using nlohmann::ordered_json;

SequencePacker::SequencePacker(std::size_t L, Sink sink, std::size_t max_open, TokenId pad_id)
    : L_(L), sink_(std::move(sink)), max_open_(std::max<std::size_t>(1, max_open)), pad_id_(pad_id) {
    if (L_ < 2) throw Error(ErrorCode::invalid_argument, "sequence length must be at least 2");
}

void SequencePacker::add(const std::string& doc_id, std::span<const TokenId> tokens) {
    for (std::size_t off = 0; off < tokens.size(); off += L_) {
        place(doc_id, tokens.subspan(off, std::min(L_, tokens.size() - off)));
    }
}

void SequencePacker::place(const std::string& doc_id, std::span<const TokenId> piece) {
    tokens_ += piece.size();
    std::size_t slot = 0;
    while (slot < open_.size() && open_[slot].token_ids.size() + piece.size() > L_) ++slot;
    if (slot == open_.size()) {
        open_.emplace_back();
        open_.back().token_ids.reserve(L_);
    }
    auto& seq = open_[slot];
    const auto start = seq.token_ids.size();
    seq.token_ids.insert(seq.token_ids.end(), piece.begin(), piece.end());
    seq.boundaries.push_back(BoundarySpan{start, seq.token_ids.size(), doc_id});
    if (seq.token_ids.size() == L_) {
        emit(slot);
    } else if (open_.size() > max_open_) {
        emit(0);
    }
}

void SequencePacker::emit(std::size_t slot) {
    PackedSequence seq = std::move(open_[slot]);
    open_.erase(open_.begin() + static_cast<std::ptrdiff_t>(slot));
    seq.pad_count = L_ - seq.token_ids.size();
    seq.token_ids.resize(L_, pad_id_);
    pad_tokens_ += seq.pad_count;
    ++sequences_;
    sink_(std::move(seq));
}

void SequencePacker::finish() {
    while (!open_.empty()) emit(0);
}

std::vector<PackedSequence> pack_sequences(std::span<const TokenDoc> docs, std::size_t L, std::size_t max_open) {
    std::vector<PackedSequence> out;
    SequencePacker packer(L, [&](PackedSequence&& s) { out.push_back(std::move(s)); }, max_open);
    for (const auto& d : docs) packer.add(d.id, d.tokens);
    packer.finish();
    return out;
}

namespace {

// Unbiased draw from [0, n) by rejection.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[bounded(rng, i)]);
    }
}

}  // namespace

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint32_t epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(mix64(seed ^ mix64(0x5eed0000ULL + epoch)));
    shuffle(order, rng);
    return order;
}

MixPlan mix_general(std::span<const std::uint64_t> domain_lengths, std::span<const std::uint64_t> general_lengths,
                    double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "mix fraction must be within [0, 1]");
    }
    MixPlan plan;
    for (auto n : domain_lengths) plan.domain_tokens += n;
    std::size_t taken = 0;
    if (fraction > 0) {
        const bool all = fraction >= 1.0;
        const double target = all ? 0.0 : fraction / (1.0 - fraction) * static_cast<double>(plan.domain_tokens);
        while (all || static_cast<double>(plan.general_tokens) < target) {
            if (taken == general_lengths.size()) {
                plan.general_exhausted = !all;
                break;
            }
            plan.general_tokens += general_lengths[taken++];
        }
    }
    const std::size_t total = domain_lengths.size() + taken;
    std::vector<std::size_t> slots(total);
    for (std::size_t i = 0; i < total; ++i) slots[i] = i;
    std::mt19937_64 rng(mix64(seed ^ 0x6d69785f67656eULL));
    if (taken > 0) shuffle(slots, rng);
    std::vector<char> is_general(total, 0);
    for (std::size_t i = 0; i < taken; ++i) is_general[slots[i]] = 1;
    plan.order.reserve(total);
    std::size_t d = 0, g = 0;
    for (std::size_t i = 0; i < total; ++i) {
        if (is_general[i]) {
            plan.order.push_back(MixEntry{true, g++});
        } else {
            plan.order.push_back(MixEntry{false, d++});
        }
    }
    return plan;
}

// ---------------------------------------------------------------------------

struct ShardWriter::Impl {
    std::filesystem::path dir;
    std::string prefix;
    std::uint32_t epoch = 0;
    std::size_t per_shard = 1024;
    std::size_t shard_no = 0;
    std::ofstream bin;
    std::ofstream idx;
    std::optional<ShardInfo> current;
    std::vector<ShardInfo> done;
};

ShardWriter::ShardWriter(std::filesystem::path dir, std::string prefix, std::uint32_t epoch,
                         std::size_t sequences_per_shard)
    : impl_(std::make_unique<Impl>()) {
    impl_->dir = std::move(dir);
    impl_->prefix = std::move(prefix);
    impl_->epoch = epoch;
    impl_->per_shard = std::max<std::size_t>(1, sequences_per_shard);
    std::filesystem::create_directories(impl_->dir);
}

ShardWriter::~ShardWriter() = default;

void ShardWriter::open_next() {
    char stem[128];
    std::snprintf(stem, sizeof stem, "%s-e%u-%05zu", impl_->prefix.c_str(), impl_->epoch, impl_->shard_no++);
    ShardInfo info;
    info.bin = impl_->dir / (std::string(stem) + ".bin");
    info.index = impl_->dir / (std::string(stem) + ".idx.jsonl");
    info.epoch = impl_->epoch;
    impl_->bin.open(info.bin, std::ios::binary | std::ios::trunc);
    impl_->idx.open(info.index, std::ios::binary | std::ios::trunc);
    if (!impl_->bin || !impl_->idx) throw Error(ErrorCode::io_failure, "cannot create shard " + info.bin.string());
    impl_->current = std::move(info);
}

void ShardWriter::close_current() {
    if (!impl_->current) return;
    impl_->bin.close();
    impl_->idx.close();
    if (!impl_->bin || !impl_->idx) throw Error(ErrorCode::io_failure, "cannot finish shard " + impl_->current->bin.string());
    auto info = std::move(*impl_->current);
    impl_->current.reset();
    info.sha256 = sha256_file_hex(info.bin);
    info.index_sha256 = sha256_file_hex(info.index);
    impl_->done.push_back(std::move(info));
}

void ShardWriter::write(const PackedSequence& seq) {
    if (impl_->current && impl_->current->sequences == impl_->per_shard) close_current();
    if (!impl_->current) open_next();
    auto& info = *impl_->current;
    std::string buf(seq.token_ids.size() * 4, '\0');
    for (std::size_t i = 0; i < seq.token_ids.size(); ++i) {
        const auto v = seq.token_ids[i];
        buf[4 * i] = static_cast<char>(v & 0xff);
        buf[4 * i + 1] = static_cast<char>((v >> 8) & 0xff);
        buf[4 * i + 2] = static_cast<char>((v >> 16) & 0xff);
        buf[4 * i + 3] = static_cast<char>((v >> 24) & 0xff);
    }
    impl_->bin.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    ordered_json j;
    j["seq"] = info.sequences;
    j["pad"] = seq.pad_count;
    ordered_json spans = ordered_json::array();
    for (const auto& b : seq.boundaries) spans.push_back(ordered_json::array({b.start, b.end, b.doc_id}));
    j["spans"] = spans;
    impl_->idx << j.dump() << '\n';
    if (!impl_->bin || !impl_->idx) throw Error(ErrorCode::io_failure, "write failed on shard " + info.bin.string());
    ++info.sequences;
    info.pad_tokens += seq.pad_count;
    info.tokens += seq.token_ids.size() - seq.pad_count;
}

std::vector<ShardInfo> ShardWriter::finish() {
    close_current();
    return std::move(impl_->done);
}

std::vector<PackedSequence> read_shard(const ShardInfo& shard, std::size_t L) {
    const auto bytes = io::read_file(shard.bin);
    if (bytes.size() % (4 * L) != 0) throw Error(ErrorCode::io_failure, "shard size is not a multiple of L");
    std::vector<PackedSequence> out(bytes.size() / (4 * L));
    for (std::size_t s = 0; s < out.size(); ++s) {
        auto& ids = out[s].token_ids;
        ids.resize(L);
        for (std::size_t i = 0; i < L; ++i) {
            const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + 4 * (s * L + i));
            ids[i] = static_cast<TokenId>(p[0]) | static_cast<TokenId>(p[1]) << 8 | static_cast<TokenId>(p[2]) << 16 |
                     static_cast<TokenId>(p[3]) << 24;
        }
    }
    io::LineReader reader(shard.index);
    std::string line;
    std::size_t s = 0;
    while (reader.next(line)) {
        if (s >= out.size()) throw Error(ErrorCode::io_failure, "shard index has more rows than sequences");
        const auto j = nlohmann::json::parse(line);
        out[s].pad_count = j.at("pad").get<std::size_t>();
        for (const auto& sp : j.at("spans")) {
            out[s].boundaries.push_back(
                BoundarySpan{sp.at(0).get<std::size_t>(), sp.at(1).get<std::size_t>(), sp.at(2).get<std::string>()});
        }
        ++s;
    }
    if (s != out.size()) throw Error(ErrorCode::io_failure, "shard index row count differs from sequences");
    return out;
}

// ---------------------------------------------------------------------------

void RecipeConfig::validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorCode::config_invalid, m); };
    if (batch_size_tokens == 0) bad("batch_size_tokens must be positive");
    if (context_length < 2) bad("context_length must be at least 2");
    if (epochs < 1) bad("epochs must be at least 1");
    if (!(mix_fraction >= 0.0 && mix_fraction <= 1.0)) bad("mix_fraction must be within [0, 1]");
    if (!(weight_decay >= 0.0)) bad("weight_decay must be non-negative");
    if (!(max_grad_norm > 0.0)) bad("max_grad_norm must be positive");
    if (!(max_lr > 0.0)) bad("max_lr must be positive");
    if (!(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0)) bad("min_lr_ratio must be within [0, 1]");
    if (!(warmup_epochs >= 0.0)) bad("warmup_epochs must be non-negative");
}

RecipeManifest build_recipe(const RecipeConfig& config, std::vector<ShardInfo> shards) {
    config.validate();
    for (const auto& s : shards) {
        if (s.sha256.empty() || s.index_sha256.empty()) {
            throw Error(ErrorCode::missing_digest, "shard without digest: " + s.bin.string());
        }
        if (!std::filesystem::exists(s.bin) || !std::filesystem::exists(s.index)) {
            throw Error(ErrorCode::missing_digest, "shard file missing: " + s.bin.string());
        }
    }
    RecipeManifest m;
    m.config = config;
    m.shards = std::move(shards);
    if (config.epochs > 2) {
        m.warnings.push_back("epochs = " + std::to_string(config.epochs) +
                             ": training beyond two epochs tends to memorize the corpus and overfit");
    }
    return m;
}

std::string RecipeManifest::summary() const {
    std::uint64_t tokens = 0, pads = 0, seqs = 0;
    for (const auto& s : shards) {
        tokens += s.tokens;
        pads += s.pad_tokens;
        seqs += s.sequences;
    }
    std::ostringstream out;
    out << config.optimizer << " (weight decay " << config.weight_decay << "), max LR " << config.max_lr
        << ", cosine decay to " << config.min_lr_ratio * 100 << "% of max after linear warmup over "
        << config.warmup_epochs << " epoch; " << config.epochs << " epochs of " << config.batch_size_tokens
        << "-token batches at context " << config.context_length << ", grad norm clipped at " << config.max_grad_norm
        << "; " << config.mix_fraction * 100 << "% general data; " << shards.size() << " shards, " << seqs
        << " sequences, " << tokens << " tokens, " << pads << " pad.";
    return out.str();
}

ordered_json RecipeManifest::to_json(const std::filesystem::path& relative_to) const {
    ordered_json j;
    j["batch_size_tokens"] = config.batch_size_tokens;
    j["context_length"] = config.context_length;
    ordered_json opt;
    opt["name"] = config.optimizer;
    opt["weight_decay"] = config.weight_decay;
    j["optimizer"] = opt;
    j["max_grad_norm"] = config.max_grad_norm;
    ordered_json sched;
    sched["type"] = "cosine";
    sched["min_lr_ratio"] = config.min_lr_ratio;
    ordered_json warm;
    warm["type"] = "linear";
    warm["epochs"] = config.warmup_epochs;
    sched["warmup"] = warm;
    j["lr_schedule"] = sched;
    j["max_lr"] = config.max_lr;
    j["epochs"] = config.epochs;
    j["mix_fraction"] = config.mix_fraction;
    j["seed"] = config.seed;
    j["tokenizer"] = config.tokenizer;
    ordered_json arr = ordered_json::array();
    auto rel = [&](const std::filesystem::path& p) {
        return relative_to.empty() ? p.generic_string() : p.lexically_relative(relative_to).generic_string();
    };
    for (const auto& s : shards) {
        ordered_json o;
        o["epoch"] = s.epoch;
        o["bin"] = rel(s.bin);
        o["index"] = rel(s.index);
        o["sequences"] = s.sequences;
        o["tokens"] = s.tokens;
        o["pad_tokens"] = s.pad_tokens;
        o["sha256"] = s.sha256;
        o["index_sha256"] = s.index_sha256;
        arr.push_back(o);
    }
    j["shards"] = arr;
    j["warnings"] = warnings;
    j["summary"] = summary();
    return j;
}

void emit_recipe(const RecipeManifest& manifest, const std::filesystem::path& path) {
    io::write_file(path, manifest.to_json(path.parent_path()).dump(2) + "\n");
}

}  // namespace telekit::packer
