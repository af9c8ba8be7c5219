#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <set>

#include "telekit/gateway.hpp"
#include "telekit/hash.hpp"
#include "telekit/prompts.hpp"
#include "telekit/text.hpp"

namespace telekit::gateway {

namespace {

const char* const kDefaultLexicon[] = {
    "telecom", "network", "wireless", "5g", "lte", "3gpp", "antenna", "base station", "spectrum",
    "wi-fi", "wifi", "protocol", "router", "bandwidth", "mimo", "ofdm", "signal", "channel", "latency",
    "handover", "modulation", "cellular", "fiber", "optical", "satellite", "radio", "ethernet", "tcp"};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::vector<std::string> content_words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c >= 0x80) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// Text between `prefix` and `suffix` when `s` starts with prefix.
std::optional<std::string_view> between(std::string_view s, std::string_view prefix, std::string_view suffix) {
    if (!s.starts_with(prefix)) return std::nullopt;
    auto rest = s.substr(prefix.size());
    const auto end = suffix.empty() ? rest.size() : rest.rfind(suffix);
    if (end == std::string_view::npos) return std::nullopt;
    return rest.substr(0, end);
}

std::string_view template_prefix(std::string_view tmpl, std::string_view placeholder) {
    return tmpl.substr(0, tmpl.find(placeholder));
}

std::string_view template_suffix(std::string_view tmpl, std::string_view placeholder) {
    return tmpl.substr(tmpl.find(placeholder) + placeholder.size());
}

std::string_view line_value(std::string_view prompt, std::string_view key) {
    const auto pos = prompt.find(key);
    if (pos == std::string_view::npos) return {};
    auto rest = prompt.substr(pos + key.size());
    return rest.substr(0, rest.find('\n'));
}

double overlap_f1(std::string_view a, std::string_view b) {
    const auto wa = content_words(a);
    const auto wb = content_words(b);
    if (wa.empty() || wb.empty()) return wa.empty() && wb.empty() ? 1.0 : 0.0;
    std::multiset<std::string> pool(wb.begin(), wb.end());
    std::size_t common = 0;
    for (const auto& w : wa) {
        const auto it = pool.find(w);
        if (it != pool.end()) {
            ++common;
            pool.erase(it);
        }
    }
    if (common == 0) return 0.0;
    const double p = static_cast<double>(common) / static_cast<double>(wa.size());
    const double r = static_cast<double>(common) / static_cast<double>(wb.size());
    return 2 * p * r / (p + r);
}

// Sentences of at least `min_words` words.
std::vector<std::string> sentences(std::string_view passage, std::size_t min_words) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&]() {
        auto t = std::string(text::trim(cur));
        cur.clear();
        if (text::words(t).size() >= min_words) out.push_back(std::move(t));
    };
    for (std::size_t i = 0; i < passage.size(); ++i) {
        const char c = passage[i];
        if (c == '\n') {
            cur.push_back(' ');
            continue;
        }
        cur.push_back(c);
        if ((c == '.' || c == '?' || c == '!') && (i + 1 == passage.size() || std::isspace(static_cast<unsigned char>(passage[i + 1])))) {
            flush();
        }
    }
    flush();
    return out;
}

class MockTransport final : public Transport {
public:
    explicit MockTransport(json options) : opt_(std::move(options)) {
        if (opt_.contains("lexicon")) {
            for (const auto& t : opt_["lexicon"]) lexicon_.push_back(lower(t.get<std::string>()));
        } else {
            for (const char* t : kDefaultLexicon) lexicon_.emplace_back(t);
        }
        seed_ = opt_.value("seed", std::uint64_t{0});
    }

    json send(Capability capability, const json& request) override {
        const auto n = calls_.fetch_add(1);
        if (n < opt_.value("fail_first", std::uint64_t{0})) {
            throw TransportError("mock: injected transient failure", true);
        }
        if (opt_.value("always_fail", false)) throw TransportError("mock: injected failure", true);
        switch (capability) {
            case Capability::scorer: return score(request);
            case Capability::generator: return generate(request);
            case Capability::embedder: return embed(request);
            case Capability::judge: return judge(request);
        }
        throw TransportError("mock: unknown capability", false);
    }

private:
    json score(const json& req) const {
        std::vector<std::uint32_t> ids;
        if (req.contains("token_ids")) {
            ids = req["token_ids"].get<std::vector<std::uint32_t>>();
        } else {
            for (unsigned char c : req.value("text", std::string())) ids.push_back(c);
        }
        json lp = json::array();
        const bool constant = opt_.contains("constant_logprob");
        const double cval = constant ? opt_["constant_logprob"].get<double>() : 0.0;
        for (std::size_t i = 1; i < ids.size(); ++i) {
            if (constant) {
                lp.push_back(cval);
            } else {
                const auto h = mix64(seed_ ^ (static_cast<std::uint64_t>(ids[i - 1]) << 32 | ids[i]));
                lp.push_back(-(0.05 + static_cast<double>(h % 1000) / 250.0));
            }
        }
        return json{{"token_ids", ids}, {"logprobs", lp}};
    }

    json generate(const json& req) const {
        const auto prompt = req.value("prompt", std::string());
        const int cap = req.value("max_new_tokens", 100);
        std::string out;
        if (opt_.contains("canned") && opt_["canned"].contains(prompt)) {
            out = opt_["canned"][prompt].get<std::string>();
        } else if (auto passage = between(prompt, template_prefix(prompts::kQnaGeneration, "{Passage}"),
                                          template_suffix(prompts::kQnaGeneration, "{Passage}"))) {
            out = qna_completion(*passage);
        } else if (auto question = between(prompt, template_prefix(prompts::kAnswerFormat, "{{statement}}"),
                                           template_suffix(prompts::kAnswerFormat, "{{statement}}"))) {
            out = answer_for(*question);
        } else {
            out = opt_.value("default_completion", std::string("No canned completion."));
        }
        if (opt_.value("ignore_cap", false)) {
            std::string longer = out;
            for (int i = 0; i < 500; ++i) longer += " token";
            return json{{"text", longer}};
        }
        return json{{"text", truncate_words(out, cap)}};
    }

    static std::string qna_completion(std::string_view passage) {
        const auto sents = sentences(passage, 5);
        std::string out;
        int k = 0;
        for (const auto& s : sents) {
            if (k == 5) break;
            ++k;
            auto words = text::words(s);
            std::string subject;
            for (std::size_t w = 0; w < std::min<std::size_t>(words.size(), 6); ++w) {
                if (w) subject.push_back(' ');
                subject += words[w];
            }
            std::string answer(s);
            while (!answer.empty() && (answer.back() == '.' || answer.back() == '!' || answer.back() == '?')) answer.pop_back();
            out += "Question " + std::to_string(k) + ": Which statement concerns \"" + subject + "\"?\n";
            out += "Answer " + std::to_string(k) + ": " + answer + "\n";
        }
        return out;
    }

    static std::string answer_for(std::string_view question) {
        auto q = std::string(text::trim(question));
        const auto open = q.find('"');
        const auto close = q.rfind('"');
        if (open != std::string::npos && close > open) q = q.substr(open + 1, close - open - 1);
        while (!q.empty() && (q.back() == '?' || q.back() == '.')) q.pop_back();
        return "It concerns " + q + ".";
    }

    json embed(const json& req) const {
        const auto textv = req.value("text", std::string());
        if (opt_.contains("vectors") && opt_["vectors"].contains(textv)) {
            return json{{"embedding", opt_["vectors"][textv]}};
        }
        const std::size_t dim = opt_.value("dim", std::size_t{64});
        std::vector<double> v(dim, 0.0);
        for (const auto& w : content_words(textv)) {
            const auto h = mix64(fnv1a64(w) ^ seed_);
            v[h % dim] += (h >> 63) ? -1.0 : 1.0;
        }
        return json{{"embedding", v}};
    }

    json judge(const json& req) const {
        const auto prompt = req.value("prompt", std::string());
        std::optional<bool> yes;
        if (opt_.contains("verdicts") && opt_["verdicts"].contains(prompt)) {
            return json{{"text", opt_["verdicts"][prompt]}};
        }
        if (auto abs = between(prompt, template_prefix(prompts::kAbstractRelevance, "{Abstract}"),
                               template_suffix(prompts::kAbstractRelevance, "{Abstract}"))) {
            yes = mentions_lexicon(*abs);
        } else if (auto web = between(prompt, template_prefix(prompts::kWebRelevance, "{Website}"),
                                      template_suffix(prompts::kWebRelevance, "{Website}"))) {
            yes = mentions_lexicon(*web);
        } else if (auto q = between(prompt, template_prefix(prompts::kAnswerability, "{question}"), "")) {
            const auto rate = opt_.value("answerable_rate", 50);
            yes = static_cast<int>(mix64(fnv1a64(*q) ^ seed_) % 100) < rate;
        } else if (prompt.starts_with(template_prefix(prompts::kJudge, "{question}"))) {
            const auto truth = line_value(prompt, "\nGround Truth Answer: ");
            const auto pred = line_value(prompt, "\nProvided Answer: ");
            yes = overlap_f1(truth, pred) >= opt_.value("judge_threshold", 0.5);
        }
        if (!yes) return json{{"text", "Maybe"}};
        if (opt_.value("expose_logits", false)) {
            return json{{"text", *yes ? "Yes" : "No"}, {"yes_logit", *yes ? 2.0 : -1.0}, {"no_logit", *yes ? -1.0 : 2.0}};
        }
        return json{{"text", *yes ? "Yes." : "No."}};
    }

    bool mentions_lexicon(std::string_view s) const {
        const auto folded = lower(s);
        return std::any_of(lexicon_.begin(), lexicon_.end(),
                           [&](const std::string& t) { return folded.find(t) != std::string::npos; });
    }

    json opt_;
    std::vector<std::string> lexicon_;
    std::uint64_t seed_ = 0;
    std::atomic<std::uint64_t> calls_{0};
};

}  // namespace

std::unique_ptr<Transport> make_mock_transport(const json& options) {
    return std::make_unique<MockTransport>(options.is_object() ? options : json::object());
}

}  // namespace telekit::gateway
