#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "telekit/error.hpp"
#include "telekit/tokenizer.hpp"

namespace telekit::gateway {

using json = nlohmann::json;

enum class Capability { scorer, generator, embedder, judge };

std::string_view to_string(Capability c);
std::optional<Capability> parse_capability(std::string_view s);

// base_url selects the transport:
//   http://host:port, https://...   JSON over HTTP
//   mock:                           built-in deterministic mock
//   replay:<transcript.jsonl>       answers from a recorded transcript
struct EndpointConfig {
    std::string base_url = "mock:";
    Capability capability = Capability::generator;
    std::string model_name = "mock";
    std::string auth_env;             // name of the env var holding a bearer token
    double timeout_s = 60.0;
    int retries = 3;
    int max_in_flight = 4;
    double backoff_base_ms = 100.0;
    std::size_t context_limit = 0;    // scorer input limit in tokens; 0 = unlimited
    json options = json::object();    // transport specific (paths, mock knobs)

    void validate() const;            // throws Error(config_invalid)
    static EndpointConfig from_json(const json& j);
    json to_json() const;
    std::string identity() const;     // "<model_name>@<base_url>"
};

class TransportError : public Error {
public:
    TransportError(const std::string& message, bool retryable)
        : Error(ErrorCode::gateway_failure, message), retryable_(retryable) {}
    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

// Sends one normalized request and returns a normalized response (see
// docs/gateway_protocol.md). Implementations must be thread-safe.
class Transport {
public:
    virtual ~Transport() = default;
    virtual json send(Capability capability, const json& request) = 0;
};

class ScriptedTransport final : public Transport {
public:
    using Handler = std::function<json(Capability, const json&)>;
    explicit ScriptedTransport(Handler handler) : handler_(std::move(handler)) {}
    json send(Capability capability, const json& request) override { return handler_(capability, request); }

private:
    Handler handler_;
};

std::unique_ptr<Transport> make_mock_transport(const json& options);
std::unique_ptr<Transport> make_http_transport(const EndpointConfig& config);
std::unique_ptr<Transport> make_replay_transport(const std::filesystem::path& transcript);
std::unique_ptr<Transport> make_transport(const EndpointConfig& config);

// Maps common inference-server response shapes onto the normalized schema.
json normalize_response(Capability capability, const json& raw);

// ---------------------------------------------------------------------------
// Transcript

std::uint64_t request_digest(Capability capability, const json& request);
std::uint64_t response_digest(const json& response);

struct TranscriptEntry {
    std::uint64_t seq = 0;
    Capability capability = Capability::generator;
    std::string endpoint;
    std::uint64_t request_digest = 0;
    std::uint64_t response_digest = 0;
    double latency_ms = 0;
    int attempts = 0;
    std::int64_t started_us = 0;   // relative to the transcript's creation
    std::int64_t finished_us = 0;
    json request;
    json response;

    json to_json() const;
    static TranscriptEntry from_json(const json& j);
};

// Append-only, thread-safe log of gateway calls.
class Transcript {
public:
    Transcript();
    // Also streams every entry to `path` as JSONL.
    explicit Transcript(const std::filesystem::path& path);
    ~Transcript();

    void record(TranscriptEntry entry);  // assigns seq
    std::vector<TranscriptEntry> entries() const;
    std::size_t size() const;
    std::int64_t now_us() const;

    static std::vector<TranscriptEntry> load(const std::filesystem::path& path);
    // Largest number of calls whose [started, finished] intervals overlap.
    static std::size_t max_overlap(std::span<const TranscriptEntry> entries);

private:
    struct Sink;
    mutable std::mutex mu_;
    std::vector<TranscriptEntry> entries_;
    std::unique_ptr<Sink> sink_;
    std::chrono::steady_clock::time_point origin_;
};

// ---------------------------------------------------------------------------
// Endpoint

enum class Verdict { yes, no, indeterminate };
std::string_view to_string(Verdict v);

struct JudgeResult {
    Verdict verdict = Verdict::indeterminate;
    std::optional<double> yes_logit;
    std::optional<double> no_logit;
    std::string text;
    bool from_logits = false;
};

// Logits win when both are present (a tie is No); otherwise the first
// alphabetic token of the text decides.
JudgeResult parse_judge(std::string_view text, std::optional<double> yes_logit, std::optional<double> no_logit);

struct DecodingParams {
    bool greedy = true;
    int max_new_tokens = 100;
    json to_json() const;
};

struct Completion {
    std::string text;
    DecodingParams decoding;
    bool truncated = false;
};

struct TextScore {
    std::vector<TokenId> token_ids;
    std::vector<double> logprobs;  // positions 2..n
};

// First `n` whitespace-delimited words of `text`, original spacing kept.
std::string truncate_words(std::string_view text, int n);

class Endpoint {
public:
    Endpoint(EndpointConfig config, std::unique_ptr<Transport> transport,
             std::shared_ptr<Transcript> transcript = nullptr);

    static std::shared_ptr<Endpoint> create(const EndpointConfig& config,
                                            std::shared_ptr<Transcript> transcript = nullptr);

    const EndpointConfig& config() const noexcept { return config_; }
    std::string identity() const { return config_.identity(); }

    std::vector<double> score_tokens(std::span<const TokenId> token_ids);
    TextScore score_text(std::string_view text);
    Completion complete(std::string_view prompt, const DecodingParams& decoding);
    std::vector<double> embed(std::string_view text);
    JudgeResult judge_binary(std::string_view prompt);

    std::size_t peak_in_flight() const;
    std::size_t calls() const;

private:
    json call(const json& request);
    void require(Capability c) const;

    EndpointConfig config_;
    std::unique_ptr<Transport> transport_;
    std::shared_ptr<Transcript> transcript_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::size_t in_flight_ = 0;
    std::size_t peak_ = 0;
    std::size_t calls_ = 0;
};

}  // namespace telekit::gateway
