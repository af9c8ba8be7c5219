#include "telekit/relevance.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "telekit/io.hpp"
#include "telekit/parallel.hpp"
#include "telekit/prompts.hpp"
#include "telekit/text.hpp"

namespace telekit::relevance {

using nlohmann::ordered_json;

KeywordList::KeywordList(std::vector<std::string> terms) {
    std::set<std::string> seen;
    for (auto& t : terms) {
        auto folded = text::case_fold(text::nfc(text::trim(t)));
        if (folded.empty()) continue;
        if (!seen.insert(folded).second) {
            throw Error(ErrorCode::config_invalid, "duplicate keyword after case folding: " + t);
        }
        terms_.push_back(std::move(folded));
    }
    if (terms_.empty()) throw Error(ErrorCode::config_invalid, "keyword list is empty");
}

KeywordList KeywordList::parse(std::string_view text) {
    std::vector<std::string> terms;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        const auto t = text::trim(line);
        if (t.empty() || t.front() == '#') continue;
        terms.emplace_back(t);
    }
    return KeywordList(std::move(terms));
}

KeywordList KeywordList::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

std::optional<std::string> KeywordList::first_match(std::string_view content) const {
    const auto folded = text::case_fold(text::nfc(content));
    auto word_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    for (const auto& t : terms_) {
        for (auto pos = folded.find(t); pos != std::string::npos; pos = folded.find(t, pos + 1)) {
            const auto end = pos + t.size();
            const bool left = pos == 0 || !word_char(folded[pos - 1]) || !word_char(t.front());
            const bool right = end == folded.size() || !word_char(folded[end]) || !word_char(t.back());
            if (left && right) return t;
        }
    }
    return std::nullopt;
}

bool KeywordList::matches(std::string_view content) const { return first_match(content).has_value(); }

bool keyword_prefilter(const Document& doc, const KeywordList& keywords) { return keywords.matches(doc.content); }

std::string_view make_excerpt(std::string_view content, PromptKind kind) {
    if (kind == PromptKind::paper_abstract) return content;
    return text::take_scalars(content, kExcerptScalars);
}

ordered_json RelevanceVerdict::to_json() const {
    ordered_json j;
    j["doc_id"] = doc_id.str();
    j["flagged_by_keyword"] = flagged_by_keyword;
    j["classified"] = classified;
    j["llm_relevant"] = llm_relevant;
    j["yes_logit"] = yes_logit ? ordered_json(*yes_logit) : ordered_json(nullptr);
    j["no_logit"] = no_logit ? ordered_json(*no_logit) : ordered_json(nullptr);
    j["decision_basis"] = basis == DecisionBasis::logits ? "logits" : "text";
    j["indeterminate"] = indeterminate;
    return j;
}

RelevanceVerdict classify_relevance(std::string_view excerpt, gateway::Endpoint& judge, PromptKind kind) {
    const auto ex = make_excerpt(excerpt, kind);
    const auto prompt = kind == PromptKind::paper_abstract ? prompts::abstract_relevance(ex) : prompts::web_relevance(ex);
    const auto result = judge.judge_binary(prompt);
    RelevanceVerdict v;
    v.classified = true;
    v.yes_logit = result.yes_logit;
    v.no_logit = result.no_logit;
    v.basis = result.from_logits ? DecisionBasis::logits : DecisionBasis::text;
    v.indeterminate = result.verdict == gateway::Verdict::indeterminate;
    v.llm_relevant = result.verdict == gateway::Verdict::yes;
    return v;
}

FunnelCounts& FunnelCounts::operator+=(const FunnelCounts& o) {
    input += o.input;
    keyword_flagged += o.keyword_flagged;
    classified += o.classified;
    kept += o.kept;
    passthrough += o.passthrough;
    indeterminate += o.indeterminate;
    withheld += o.withheld;
    return *this;
}

ordered_json FunnelCounts::to_json() const {
    ordered_json j;
    j["input"] = input;
    j["keyword_flagged"] = keyword_flagged;
    j["classified"] = classified;
    j["kept"] = kept;
    j["passthrough"] = passthrough;
    j["indeterminate"] = indeterminate;
    j["withheld"] = withheld;
    return j;
}

FilterResult filter_corpus(std::span<const Document> docs, const KeywordList& keywords, gateway::Endpoint& judge,
                           const FilterOptions& options) {
    enum class Outcome { keep, drop, withheld };
    struct Slot {
        Outcome outcome = Outcome::drop;
        std::optional<RelevanceVerdict> verdict;
        bool passthrough = false;
    };
    std::vector<Slot> slots(docs.size());
    parallel_for(docs.size(), options.workers, [&](std::size_t i) {
        const Document& doc = docs[i];
        Slot& slot = slots[i];
        if (doc.category() == Category::standard) {
            slot.outcome = Outcome::keep;
            slot.passthrough = true;
            return;
        }
        RelevanceVerdict v;
        std::string_view excerpt;
        PromptKind kind = PromptKind::web_content;
        if (doc.category() == Category::arxiv) {
            const auto& meta = std::get<ArxivMeta>(doc.metadata);
            kind = PromptKind::paper_abstract;
            excerpt = meta.abstract.empty() ? make_excerpt(doc.content, PromptKind::web_content)
                                            : std::string_view(meta.abstract);
            v.flagged_by_keyword = true;
        } else {
            v.flagged_by_keyword = keyword_prefilter(doc, keywords);
            excerpt = doc.content;
        }
        if (v.flagged_by_keyword) {
            try {
                auto c = classify_relevance(excerpt, judge, kind);
                c.flagged_by_keyword = true;
                v = c;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::gateway_failure) throw;
                slot.outcome = Outcome::withheld;
                return;
            }
        }
        v.doc_id = doc.id;
        slot.outcome = v.llm_relevant ? Outcome::keep : Outcome::drop;
        slot.verdict = v;
    });

    FilterResult r;
    r.funnel.input = docs.size();
    for (std::size_t i = 0; i < docs.size(); ++i) {
        Slot& slot = slots[i];
        if (slot.passthrough) {
            ++r.funnel.passthrough;
            ++r.funnel.kept;
            r.kept.push_back(docs[i]);
            continue;
        }
        if (slot.outcome == Outcome::withheld) {
            ++r.funnel.keyword_flagged;
            ++r.funnel.withheld;
            r.retry.push_back(docs[i].id);
            continue;
        }
        const auto& v = *slot.verdict;
        if (v.flagged_by_keyword) ++r.funnel.keyword_flagged;
        if (v.classified) ++r.funnel.classified;
        if (v.indeterminate) ++r.funnel.indeterminate;
        if (slot.outcome == Outcome::keep) {
            ++r.funnel.kept;
            r.kept.push_back(docs[i]);
        } else {
            ++r.dropped;
        }
        r.verdicts.push_back(v);
    }
    std::sort(r.verdicts.begin(), r.verdicts.end(),
              [](const RelevanceVerdict& a, const RelevanceVerdict& b) { return a.doc_id < b.doc_id; });
    std::sort(r.retry.begin(), r.retry.end());
    return r;
}

PrecisionRecall precision_recall(const ConfusionCounts& c) {
    PrecisionRecall pr;
    if (c.tp + c.fp > 0) pr.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) pr.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (pr.precision && pr.recall) {
        const double p = *pr.precision;
        const double r = *pr.recall;
        pr.f1 = p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    }
    return pr;
}

std::map<DocId, bool> load_labels(const std::filesystem::path& path) {
    std::map<DocId, bool> labels;
    io::LineReader reader(path);
    std::string line;
    while (reader.next(line)) {
        if (text::is_blank(line)) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            labels[DocId::parse(j.at("doc_id").get<std::string>())] = j.at("human_label").get<bool>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::malformed_json, std::string("labels: ") + e.what(), reader.line_number());
        }
    }
    return labels;
}

ConfusionCounts confusion_from_labels(std::span<const RelevanceVerdict> verdicts, const std::map<DocId, bool>& labels) {
    ConfusionCounts c;
    for (const auto& v : verdicts) {
        const auto it = labels.find(v.doc_id);
        if (it == labels.end()) continue;
        const bool predicted = v.classified && v.llm_relevant;
        const bool truth = it->second;
        if (predicted && truth) ++c.tp;
        else if (predicted && !truth) ++c.fp;
        else if (!predicted && truth) ++c.fn;
        else ++c.tn;
    }
    return c;
}

}  // namespace telekit::relevance
