#include "telekit/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <thread>

#include "telekit/hash.hpp"
#include "telekit/io.hpp"

namespace telekit::gateway {

namespace {

constexpr std::string_view kCapabilityNames[] = {"scorer", "generator", "embedder", "judge"};

std::uint64_t parse_hex(const std::string& s) { return std::stoull(s, nullptr, 16); }

const json* find_path(const json& j, const char* pointer) {
    const json::json_pointer ptr(pointer);
    if (!j.contains(ptr)) return nullptr;
    return &j.at(ptr);
}

TransportError malformed(Capability c, const std::string& what) {
    return TransportError("malformed " + std::string(to_string(c)) + " response: " + what, false);
}

}  // namespace

std::string_view to_string(Capability c) { return kCapabilityNames[static_cast<int>(c)]; }

std::optional<Capability> parse_capability(std::string_view s) {
    for (int i = 0; i < 4; ++i) {
        if (kCapabilityNames[i] == s) return static_cast<Capability>(i);
    }
    return std::nullopt;
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::yes: return "Yes";
        case Verdict::no: return "No";
        default: return "Indeterminate";
    }
}

// ---------------------------------------------------------------------------

void EndpointConfig::validate() const {
    auto fail = [&](const std::string& m) { throw Error(ErrorCode::config_invalid, "endpoint " + identity() + ": " + m); };
    if (base_url.empty()) fail("empty base_url");
    if (retries < 0) fail("retries must be >= 0");
    if (max_in_flight < 1) fail("max_in_flight must be >= 1");
    if (timeout_s <= 0) fail("timeout must be positive");
    if (backoff_base_ms < 0) fail("backoff must be >= 0");
    const bool known = base_url.starts_with("http://") || base_url.starts_with("https://") ||
                       base_url.starts_with("mock:") || base_url.starts_with("replay:");
    if (!known) fail("unsupported base_url scheme: " + base_url);
    if (!options.is_object()) fail("options must be an object");
}

EndpointConfig EndpointConfig::from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::config_invalid, "endpoint entry must be an object");
    EndpointConfig c;
    try {
        const auto cap = j.at("capability").get<std::string>();
        const auto parsed = parse_capability(cap);
        if (!parsed) throw Error(ErrorCode::config_invalid, "unknown capability: " + cap);
        c.capability = *parsed;
        c.base_url = j.value("base_url", c.base_url);
        c.model_name = j.value("model_name", c.model_name);
        c.auth_env = j.value("auth_env", c.auth_env);
        c.timeout_s = j.value("timeout_s", c.timeout_s);
        c.retries = j.value("retries", c.retries);
        c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
        c.backoff_base_ms = j.value("backoff_base_ms", c.backoff_base_ms);
        c.context_limit = j.value("context_limit", c.context_limit);
        if (j.contains("options")) c.options = j.at("options");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config_invalid, std::string("endpoint entry: ") + e.what());
    }
    c.validate();
    return c;
}

json EndpointConfig::to_json() const {
    return json{{"base_url", base_url},         {"capability", to_string(capability)},
                {"model_name", model_name},     {"auth_env", auth_env},
                {"timeout_s", timeout_s},       {"retries", retries},
                {"max_in_flight", max_in_flight}, {"backoff_base_ms", backoff_base_ms},
                {"context_limit", context_limit}, {"options", options}};
}

std::string EndpointConfig::identity() const { return model_name + "@" + base_url; }

std::unique_ptr<Transport> make_transport(const EndpointConfig& config) {
    if (config.base_url.starts_with("mock:")) return make_mock_transport(config.options);
    if (config.base_url.starts_with("replay:")) return make_replay_transport(config.base_url.substr(7));
    return make_http_transport(config);
}

// ---------------------------------------------------------------------------

json normalize_response(Capability capability, const json& raw) {
    if (!raw.is_object()) throw malformed(capability, "not a JSON object");
    json out = json::object();
    switch (capability) {
        case Capability::scorer: {
            if (raw.contains("logprobs") && raw["logprobs"].is_array()) {
                out["logprobs"] = raw["logprobs"];
            } else if (const json* lp = find_path(raw, "/choices/0/logprobs/token_logprobs")) {
                json vals = json::array();
                for (std::size_t i = 0; i < lp->size(); ++i) {
                    if ((*lp)[i].is_null()) {
                        if (i != 0) throw malformed(capability, "null logprob after the first position");
                        continue;
                    }
                    vals.push_back((*lp)[i]);
                }
                out["logprobs"] = vals;
                if (const json* toks = find_path(raw, "/choices/0/logprobs/tokens")) {
                    json ids = json::array();
                    for (const auto& t : *toks) ids.push_back(fnv1a64(t.get<std::string>()) & 0xffffffffu);
                    out["token_ids"] = ids;
                }
            } else {
                throw malformed(capability, "no logprobs");
            }
            if (raw.contains("token_ids")) out["token_ids"] = raw["token_ids"];
            for (const auto& v : out["logprobs"]) {
                if (!v.is_number()) throw malformed(capability, "non-numeric logprob");
            }
            return out;
        }
        case Capability::generator: {
            const json* t = nullptr;
            if (raw.contains("text")) t = &raw["text"];
            if (!t) t = find_path(raw, "/choices/0/text");
            if (!t) t = find_path(raw, "/choices/0/message/content");
            if (!t) t = find_path(raw, "/content");
            if (!t || !t->is_string()) throw malformed(capability, "no completion text");
            out["text"] = *t;
            return out;
        }
        case Capability::embedder: {
            const json* e = nullptr;
            if (raw.contains("embedding")) e = &raw["embedding"];
            if (!e) e = find_path(raw, "/data/0/embedding");
            if (!e) e = find_path(raw, "/embeddings/0");
            if (!e || !e->is_array()) throw malformed(capability, "no embedding");
            for (const auto& v : *e) {
                if (!v.is_number()) throw malformed(capability, "non-numeric embedding");
            }
            out["embedding"] = *e;
            return out;
        }
        case Capability::judge: {
            const json* t = nullptr;
            if (raw.contains("text")) t = &raw["text"];
            if (!t) t = find_path(raw, "/choices/0/text");
            if (!t) t = find_path(raw, "/choices/0/message/content");
            out["text"] = t && t->is_string() ? *t : json("");
            if (raw.contains("yes_logit") && raw.contains("no_logit") && raw["yes_logit"].is_number() &&
                raw["no_logit"].is_number()) {
                out["yes_logit"] = raw["yes_logit"];
                out["no_logit"] = raw["no_logit"];
            } else if (const json* top = find_path(raw, "/choices/0/logprobs/top_logprobs/0")) {
                std::optional<double> yes;
                std::optional<double> no;
                if (top->is_object()) {
                    for (const auto& [tok, val] : top->items()) {
                        std::string key(tok);
                        key.erase(std::remove_if(key.begin(), key.end(), [](unsigned char c) { return std::isspace(c); }),
                                  key.end());
                        if (key == "Yes" && val.is_number()) yes = std::max(yes.value_or(-INFINITY), val.get<double>());
                        if (key == "No" && val.is_number()) no = std::max(no.value_or(-INFINITY), val.get<double>());
                    }
                }
                if (yes && no) {
                    out["yes_logit"] = *yes;
                    out["no_logit"] = *no;
                }
            }
            if (!t && !out.contains("yes_logit")) throw malformed(capability, "neither text nor logits");
            return out;
        }
    }
    throw malformed(capability, "unknown capability");
}

// ---------------------------------------------------------------------------

std::uint64_t request_digest(Capability capability, const json& request) {
    const json canon{{"capability", to_string(capability)}, {"request", request}};
    return fnv1a64(canon.dump(-1, ' ', false, json::error_handler_t::replace));
}

std::uint64_t response_digest(const json& response) {
    return fnv1a64(response.dump(-1, ' ', false, json::error_handler_t::replace));
}

json TranscriptEntry::to_json() const {
    return json{{"seq", seq},
                {"endpoint", endpoint},
                {"capability", to_string(capability)},
                {"request_digest", hex64(request_digest)},
                {"response_digest", hex64(response_digest)},
                {"latency_ms", latency_ms},
                {"attempts", attempts},
                {"started_us", started_us},
                {"finished_us", finished_us},
                {"request", request},
                {"response", response}};
}

TranscriptEntry TranscriptEntry::from_json(const json& j) {
    TranscriptEntry e;
    e.seq = j.value("seq", std::uint64_t{0});
    e.endpoint = j.value("endpoint", std::string());
    const auto cap = parse_capability(j.at("capability").get<std::string>());
    if (!cap) throw Error(ErrorCode::malformed_json, "transcript: unknown capability");
    e.capability = *cap;
    e.request_digest = parse_hex(j.at("request_digest").get<std::string>());
    e.response_digest = parse_hex(j.at("response_digest").get<std::string>());
    e.latency_ms = j.value("latency_ms", 0.0);
    e.attempts = j.value("attempts", 0);
    e.started_us = j.value("started_us", std::int64_t{0});
    e.finished_us = j.value("finished_us", std::int64_t{0});
    e.request = j.value("request", json());
    e.response = j.value("response", json());
    return e;
}

struct Transcript::Sink {
    explicit Sink(const std::filesystem::path& p) : writer(p) {}
    io::LineWriter writer;
};

Transcript::Transcript() : origin_(std::chrono::steady_clock::now()) {}

Transcript::Transcript(const std::filesystem::path& path)
    : sink_(std::make_unique<Sink>(path)), origin_(std::chrono::steady_clock::now()) {}

Transcript::~Transcript() {
    if (sink_) {
        try {
            sink_->writer.close();
        } catch (...) {
        }
    }
}

void Transcript::record(TranscriptEntry entry) {
    std::lock_guard lock(mu_);
    entry.seq = entries_.size();
    if (sink_) {
        sink_->writer.write_line(entry.to_json().dump(-1, ' ', false, json::error_handler_t::replace));
        entry.request = json();
        entry.response = json();
    }
    entries_.push_back(std::move(entry));
}

std::vector<TranscriptEntry> Transcript::entries() const {
    std::lock_guard lock(mu_);
    return entries_;
}

std::size_t Transcript::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

std::int64_t Transcript::now_us() const {
    return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - origin_).count();
}

std::vector<TranscriptEntry> Transcript::load(const std::filesystem::path& path) {
    std::vector<TranscriptEntry> out;
    io::LineReader reader(path);
    std::string line;
    while (reader.next(line)) {
        if (line.empty()) continue;
        try {
            out.push_back(TranscriptEntry::from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::malformed_json, std::string("transcript: ") + e.what(), reader.line_number());
        }
    }
    return out;
}

std::size_t Transcript::max_overlap(std::span<const TranscriptEntry> entries) {
    std::vector<std::pair<std::int64_t, int>> events;
    for (const auto& e : entries) {
        events.emplace_back(e.started_us, 1);
        events.emplace_back(e.finished_us, -1);
    }
    // Ends sort before starts at equal timestamps.
    std::sort(events.begin(), events.end());
    std::size_t cur = 0;
    std::size_t best = 0;
    for (const auto& [t, d] : events) {
        if (d > 0) {
            best = std::max(best, ++cur);
        } else {
            --cur;
        }
    }
    return best;
}

namespace {

class ReplayTransport final : public Transport {
public:
    explicit ReplayTransport(const std::filesystem::path& path) {
        for (auto& e : Transcript::load(path)) by_digest_[e.request_digest].push_back(std::move(e.response));
    }

    json send(Capability capability, const json& request) override {
        const auto d = request_digest(capability, request);
        std::lock_guard lock(mu_);
        const auto it = by_digest_.find(d);
        if (it == by_digest_.end()) {
            throw TransportError("replay: request " + hex64(d) + " not in transcript", false);
        }
        auto& cursor = cursors_[d];
        const auto& responses = it->second;
        const json& r = responses[std::min(cursor, responses.size() - 1)];
        ++cursor;
        return r;
    }

private:
    std::mutex mu_;
    std::map<std::uint64_t, std::vector<json>> by_digest_;
    std::map<std::uint64_t, std::size_t> cursors_;
};

}  // namespace

std::unique_ptr<Transport> make_replay_transport(const std::filesystem::path& transcript) {
    return std::make_unique<ReplayTransport>(transcript);
}

// ---------------------------------------------------------------------------

JudgeResult parse_judge(std::string_view text, std::optional<double> yes_logit, std::optional<double> no_logit) {
    JudgeResult r;
    r.text = std::string(text);
    r.yes_logit = yes_logit;
    r.no_logit = no_logit;
    if (yes_logit && no_logit) {
        r.from_logits = true;
        r.verdict = *yes_logit > *no_logit ? Verdict::yes : Verdict::no;
        return r;
    }
    std::size_t i = 0;
    while (i < text.size() && !std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
    std::string word(text.substr(i, j - i));
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
    if (word == "yes") {
        r.verdict = Verdict::yes;
    } else if (word == "no") {
        r.verdict = Verdict::no;
    }
    return r;
}

json DecodingParams::to_json() const { return json{{"greedy", greedy}, {"max_new_tokens", max_new_tokens}}; }

std::string truncate_words(std::string_view text, int n) {
    if (n <= 0) return {};
    int seen = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size()) break;
        if (seen == n) {
            std::size_t end = i;
            while (end > 0 && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
            return std::string(text.substr(0, end));
        }
        ++seen;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    }
    return std::string(text);
}

Endpoint::Endpoint(EndpointConfig config, std::unique_ptr<Transport> transport, std::shared_ptr<Transcript> transcript)
    : config_(std::move(config)), transport_(std::move(transport)), transcript_(std::move(transcript)) {
    config_.validate();
    if (!transport_) throw Error(ErrorCode::invalid_argument, "endpoint without transport");
}

std::shared_ptr<Endpoint> Endpoint::create(const EndpointConfig& config, std::shared_ptr<Transcript> transcript) {
    config.validate();
    return std::make_shared<Endpoint>(config, make_transport(config), std::move(transcript));
}

void Endpoint::require(Capability c) const {
    if (config_.capability != c) {
        throw Error(ErrorCode::invalid_argument, "endpoint " + identity() + " is a " +
                                                     std::string(to_string(config_.capability)) + ", not a " +
                                                     std::string(to_string(c)));
    }
}

std::size_t Endpoint::peak_in_flight() const {
    std::lock_guard lock(mu_);
    return peak_;
}

std::size_t Endpoint::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

json Endpoint::call(const json& request) {
    const auto cap = config_.capability;
    {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return in_flight_ < static_cast<std::size_t>(config_.max_in_flight); });
        ++in_flight_;
        ++calls_;
        peak_ = std::max(peak_, in_flight_);
    }
    struct Release {
        Endpoint* self;
        ~Release() {
            {
                std::lock_guard lock(self->mu_);
                --self->in_flight_;
            }
            self->cv_.notify_one();
        }
    } release{this};

    const auto digest = request_digest(cap, request);
    const auto started = transcript_ ? transcript_->now_us() : 0;
    const auto t0 = std::chrono::steady_clock::now();
    int attempts = 0;
    json response;
    for (;;) {
        ++attempts;
        try {
            response = normalize_response(cap, transport_->send(cap, request));
            break;
        } catch (const TransportError& e) {
            if (!e.retryable() || attempts > config_.retries) {
                throw Error(ErrorCode::gateway_failure, identity() + ": " + e.what() + " (after " +
                                                            std::to_string(attempts) + " attempts)");
            }
        }
        const double jitter = 0.5 + static_cast<double>(mix64(digest ^ static_cast<std::uint64_t>(attempts)) % 1000) / 1000.0;
        const double delay = config_.backoff_base_ms * std::pow(2.0, attempts - 1) * jitter;
        std::this_thread::sleep_for(std::chrono::microseconds(static_cast<std::int64_t>(delay * 1000.0)));
    }
    if (transcript_) {
        TranscriptEntry e;
        e.capability = cap;
        e.endpoint = identity();
        e.request_digest = digest;
        e.response_digest = response_digest(response);
        e.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        e.attempts = attempts;
        e.started_us = started;
        e.finished_us = transcript_->now_us();
        e.request = request;
        e.response = response;
        transcript_->record(std::move(e));
    }
    return response;
}

std::vector<double> Endpoint::score_tokens(std::span<const TokenId> token_ids) {
    require(Capability::scorer);
    if (config_.context_limit > 0 && token_ids.size() > config_.context_limit) {
        throw Error(ErrorCode::invalid_argument, "scorer input of " + std::to_string(token_ids.size()) +
                                                     " tokens exceeds context limit " +
                                                     std::to_string(config_.context_limit));
    }
    if (token_ids.size() <= 1) return {};
    json req{{"op", "score"}, {"model", config_.model_name}, {"token_ids", token_ids}};
    const auto resp = call(req);
    auto lp = resp["logprobs"].get<std::vector<double>>();
    if (lp.size() != token_ids.size() - 1) {
        throw Error(ErrorCode::gateway_failure, identity() + ": expected " + std::to_string(token_ids.size() - 1) +
                                                    " logprobs, got " + std::to_string(lp.size()));
    }
    return lp;
}

TextScore Endpoint::score_text(std::string_view text) {
    require(Capability::scorer);
    json req{{"op", "score"},   {"model", config_.model_name}, {"text", text},
             {"prompt", text},  {"echo", true},                {"max_tokens", 0},
             {"logprobs", 1}};
    const auto resp = call(req);
    TextScore s;
    s.logprobs = resp["logprobs"].get<std::vector<double>>();
    if (resp.contains("token_ids")) s.token_ids = resp["token_ids"].get<std::vector<TokenId>>();
    if (!s.token_ids.empty() && s.logprobs.size() + 1 != s.token_ids.size()) {
        throw Error(ErrorCode::gateway_failure, identity() + ": logprob count does not match token count");
    }
    if (s.token_ids.empty() && !s.logprobs.empty()) s.token_ids.resize(s.logprobs.size() + 1, 0);
    if (config_.context_limit > 0 && s.token_ids.size() > config_.context_limit) {
        throw Error(ErrorCode::invalid_argument, "scorer input exceeds context limit");
    }
    return s;
}

Completion Endpoint::complete(std::string_view prompt, const DecodingParams& decoding) {
    require(Capability::generator);
    Completion c;
    c.decoding = decoding;
    if (decoding.max_new_tokens <= 0) return c;
    json req{{"op", "complete"},
             {"model", config_.model_name},
             {"prompt", prompt},
             {"max_new_tokens", decoding.max_new_tokens},
             {"max_tokens", decoding.max_new_tokens},
             {"greedy", decoding.greedy},
             {"temperature", 0}};
    const auto resp = call(req);
    const auto text = resp["text"].get<std::string>();
    c.text = truncate_words(text, decoding.max_new_tokens);
    c.truncated = c.text.size() != text.size();
    return c;
}

std::vector<double> Endpoint::embed(std::string_view text) {
    require(Capability::embedder);
    json req{{"op", "embed"}, {"model", config_.model_name}, {"text", text}, {"input", text}};
    return call(req)["embedding"].get<std::vector<double>>();
}

JudgeResult Endpoint::judge_binary(std::string_view prompt) {
    require(Capability::judge);
    json req{{"op", "judge"},   {"model", config_.model_name}, {"prompt", prompt},
             {"max_tokens", 1}, {"logprobs", 5},               {"temperature", 0}};
    const auto resp = call(req);
    std::optional<double> yes;
    std::optional<double> no;
    if (resp.contains("yes_logit")) yes = resp["yes_logit"].get<double>();
    if (resp.contains("no_logit")) no = resp["no_logit"].get<double>();
    return parse_judge(resp.value("text", std::string()), yes, no);
}

}  // namespace telekit::gateway
