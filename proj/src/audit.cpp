#include "telekit/audit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>

#include "telekit/parallel.hpp"

namespace telekit::audit {

using nlohmann::ordered_json;

void append_chunks(ChunkedCorpus& corpus, std::string_view text, const Tokenizer& tokenizer) {
    if (corpus.T < 2) throw Error(ErrorCode::invalid_argument, "chunk length T must be at least 2");
    const auto ids = tokenizer.encode(text);
    const std::size_t full = ids.size() / corpus.T;
    for (std::size_t c = 0; c < full; ++c) {
        const auto first = ids.begin() + static_cast<std::ptrdiff_t>(c * corpus.T);
        corpus.chunks.emplace_back(first, first + static_cast<std::ptrdiff_t>(corpus.T));
    }
    corpus.discarded_tokens += ids.size() - full * corpus.T;
}

ChunkedCorpus chunk_tokens(std::string_view text, const Tokenizer& tokenizer, std::size_t T) {
    ChunkedCorpus corpus;
    corpus.T = T;
    corpus.tokenizer_name = tokenizer.name();
    append_chunks(corpus, text, tokenizer);
    return corpus;
}

TailStats tail_stats(std::vector<double> losses) {
    if (losses.empty()) throw Error(ErrorCode::invalid_argument, "tail statistics of an empty loss set");
    std::sort(losses.begin(), losses.end());
    const std::size_t n = losses.size();
    // smallest rank r with r/n >= 0.9, computed in integers
    const std::size_t rank = (9 * n + 9) / 10;
    TailStats s;
    s.n_losses = n;
    s.tau = losses[rank - 1];
    const auto first = std::lower_bound(losses.begin(), losses.end(), s.tau);
    s.tail_size = static_cast<std::uint64_t>(losses.end() - first);
    double sum = 0;
    for (auto it = first; it != losses.end(); ++it) sum += *it;
    s.tail_mean = sum / static_cast<double>(s.tail_size);
    double sq = 0;
    for (auto it = first; it != losses.end(); ++it) sq += (*it - s.tail_mean) * (*it - s.tail_mean);
    s.tail_std = std::sqrt(sq / static_cast<double>(s.tail_size));
    return s;
}

ordered_json TailReport::to_json() const {
    ordered_json j;
    j["tokenizer"] = tokenizer_name;
    j["T"] = T;
    j["scorer"] = scorer;
    j["n_chunks"] = n_chunks;
    j["failed_chunks"] = failed_chunks;
    j["discarded_tokens"] = discarded_tokens;
    j["n_losses"] = tail.n_losses;
    j["tau"] = tail.tau;
    j["tail_size"] = tail.tail_size;
    j["tail_mean"] = tail.tail_mean;
    j["tail_std"] = tail.tail_std;
    return j;
}

TailReport TailReport::from_json(const nlohmann::json& j) {
    try {
        TailReport r;
        r.tokenizer_name = j.at("tokenizer").get<std::string>();
        r.T = j.at("T").get<std::size_t>();
        r.scorer = j.value("scorer", std::string());
        r.n_chunks = j.at("n_chunks").get<std::uint64_t>();
        r.failed_chunks = j.value("failed_chunks", std::uint64_t{0});
        r.discarded_tokens = j.value("discarded_tokens", std::uint64_t{0});
        r.tail.n_losses = j.at("n_losses").get<std::uint64_t>();
        r.tail.tau = j.at("tau").get<double>();
        r.tail.tail_size = j.value("tail_size", std::uint64_t{0});
        r.tail.tail_mean = j.at("tail_mean").get<double>();
        r.tail.tail_std = j.at("tail_std").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::malformed_json, std::string("tail report: ") + e.what());
    }
}

void score_chunks(const ChunkedCorpus& corpus, gateway::Endpoint& scorer, LossPool& pool, std::size_t workers) {
    std::vector<std::optional<std::vector<double>>> scored(corpus.chunks.size());
    parallel_for(corpus.chunks.size(), workers, [&](std::size_t i) {
        try {
            auto lp = scorer.score_tokens(corpus.chunks[i]);
            if (lp.size() != corpus.T - 1) return;
            for (auto& v : lp) v = -v;
            scored[i] = std::move(lp);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::gateway_failure) throw;
        }
    });
    for (auto& s : scored) {
        if (!s) {
            ++pool.failed_chunks;
            continue;
        }
        ++pool.n_chunks;
        pool.losses.insert(pool.losses.end(), s->begin(), s->end());
    }
}

TailReport make_report(const LossPool& pool, std::string tokenizer_name, std::size_t T, std::string scorer,
                       std::uint64_t discarded_tokens) {
    if (pool.n_chunks == 0) {
        if (pool.failed_chunks > 0) {
            throw Error(ErrorCode::all_chunks_failed,
                        "scorer failed on all " + std::to_string(pool.failed_chunks) + " chunks");
        }
        throw Error(ErrorCode::invalid_argument, "no full chunks to score");
    }
    TailReport r;
    r.tokenizer_name = std::move(tokenizer_name);
    r.T = T;
    r.scorer = std::move(scorer);
    r.n_chunks = pool.n_chunks;
    r.failed_chunks = pool.failed_chunks;
    r.discarded_tokens = discarded_tokens;
    r.tail = tail_stats(pool.losses);
    return r;
}

AuditResult tail_report(const ChunkedCorpus& corpus, gateway::Endpoint& scorer, std::size_t workers) {
    LossPool pool;
    score_chunks(corpus, scorer, pool, workers);
    AuditResult out;
    out.report = make_report(pool, corpus.tokenizer_name, corpus.T, scorer.identity(), corpus.discarded_tokens);
    out.losses = std::move(pool.losses);
    return out;
}

ordered_json ComparisonVerdict::to_json() const {
    ordered_json j;
    j["cleaner"] = cleaner;
    j["mixed_signal"] = mixed_signal;
    j["delta_tail_mean"] = delta_mean;
    j["delta_tail_std"] = delta_std;
    return j;
}

ComparisonVerdict compare_tails(const TailReport& raw, const TailReport& clean) {
    if (raw.tokenizer_name != clean.tokenizer_name || raw.T != clean.T) {
        throw Error(ErrorCode::comparability, "reports differ in tokenizer or T: " + raw.tokenizer_name + "/" +
                                                  std::to_string(raw.T) + " vs " + clean.tokenizer_name + "/" +
                                                  std::to_string(clean.T));
    }
    ComparisonVerdict v;
    v.delta_mean = clean.tail.tail_mean - raw.tail.tail_mean;
    v.delta_std = clean.tail.tail_std - raw.tail.tail_std;
    const bool mean_lower = v.delta_mean < 0;
    const bool std_lower = v.delta_std < 0;
    v.cleaner = mean_lower && std_lower;
    v.mixed_signal = (mean_lower && v.delta_std > 0) || (std_lower && v.delta_mean > 0);
    return v;
}

std::string histogram_csv(std::span<const double> losses, double bin_width) {
    if (!(bin_width > 0)) throw Error(ErrorCode::invalid_argument, "histogram bin width must be positive");
    std::map<std::int64_t, std::uint64_t> bins;
    for (double l : losses) ++bins[static_cast<std::int64_t>(std::floor(l / bin_width))];
    std::ostringstream out;
    out << "loss_bin,count\n";
    for (const auto& [k, count] : bins) out << static_cast<double>(k) * bin_width << ',' << count << '\n';
    return out.str();
}

}  // namespace telekit::audit
