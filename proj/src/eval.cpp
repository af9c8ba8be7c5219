#include "telekit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "telekit/parallel.hpp"
#include "telekit/prompts.hpp"

namespace telekit::eval {

using nlohmann::ordered_json;

void ScoredSequence::validate() const {
    if (length < 2 || answer_start < 2 || answer_start > length) {
        throw Error(ErrorCode::invalid_argument, "scored sequence needs 1 < k <= T (k=" + std::to_string(answer_start) +
                                                     ", T=" + std::to_string(length) + ")");
    }
    if (logprobs.size() != length - 1) {
        throw Error(ErrorCode::invalid_argument, "scored sequence has " + std::to_string(logprobs.size()) +
                                                     " logprobs for length " + std::to_string(length));
    }
}

std::span<const double> ScoredSequence::answer_logprobs() const {
    return std::span<const double>(logprobs).subspan(answer_start - 2);
}

double answer_mean_logprob(const ScoredSequence& s) {
    s.validate();
    double mean = 0;
    std::size_t n = 0;
    for (double lp : s.answer_logprobs()) {
        ++n;
        mean += (lp - mean) / static_cast<double>(n);
    }
    return mean;
}

double ans_ppl(std::span<const ScoredSequence> scored) {
    if (scored.empty()) throw Error(ErrorCode::invalid_argument, "Ans-PPL of an empty set");
    double mean = 0;
    std::size_t n = 0;
    for (const auto& s : scored) {
        ++n;
        mean += (answer_mean_logprob(s) - mean) / static_cast<double>(n);
    }
    return std::exp(-mean);
}

std::optional<double> cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::invalid_argument, "embedding dimensions differ: " + std::to_string(a.size()) + " vs " +
                                                     std::to_string(b.size()));
    }
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return std::nullopt;
    const double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

std::optional<double> sem_score(std::string_view truth, std::string_view answer, gateway::Endpoint& embedder) {
    const auto a = embedder.embed(truth);
    const auto b = embedder.embed(answer);
    return cosine(a, b);
}

std::vector<QnaItem> select_subset(std::span<const QnaItem> items, std::string_view id_prefix) {
    std::vector<QnaItem> out;
    for (const auto& item : items) {
        if (item.source_id.str().starts_with(id_prefix)) out.push_back(item);
    }
    return out;
}

std::vector<GeneratedAnswer> generate_answers(std::span<const QnaItem> items, gateway::Endpoint& generator,
                                              const gateway::DecodingParams& decoding, std::size_t workers) {
    std::vector<GeneratedAnswer> out(items.size());
    parallel_for(items.size(), workers, [&](std::size_t i) {
        try {
            auto c = generator.complete(prompts::answer_format(items[i].statement), decoding);
            out[i].text = std::move(c.text);
            out[i].truncated = c.truncated;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::gateway_failure) throw;
        }
    });
    return out;
}

ScoredSequence score_answer(const QnaItem& item, gateway::Endpoint& scorer) {
    const auto prompt = prompts::answer_format(item.statement);
    const auto prefix = scorer.score_text(prompt);
    const auto full = scorer.score_text(prompt + " " + item.answer);
    ScoredSequence s;
    s.token_ids = full.token_ids;
    s.logprobs = full.logprobs;
    s.length = full.token_ids.size();
    s.answer_start = prefix.token_ids.size() + 1;
    s.validate();
    return s;
}

JudgeOutcome judge_answer(const QnaItem& item, std::string_view prediction, gateway::Endpoint& judge) {
    const auto r = judge.judge_binary(prompts::judge(item.statement, item.answer, prediction));
    return JudgeOutcome{r.verdict == gateway::Verdict::yes, r.verdict == gateway::Verdict::indeterminate};
}

double llm_eval(std::span<const JudgeOutcome> outcomes) {
    if (outcomes.empty()) throw Error(ErrorCode::invalid_argument, "LLM-Eval of an empty set");
    std::size_t yes = 0;
    for (const auto& o : outcomes) yes += o.yes ? 1 : 0;
    return static_cast<double>(yes) / static_cast<double>(outcomes.size());
}

ExclusionCounts& ExclusionCounts::operator+=(const ExclusionCounts& o) {
    generation_failed += o.generation_failed;
    scorer_failed += o.scorer_failed;
    semscore_undefined += o.semscore_undefined;
    embedder_failed += o.embedder_failed;
    judge_indeterminate += o.judge_indeterminate;
    judge_failed += o.judge_failed;
    return *this;
}

std::optional<double> EvalReport::ans_ppl() const {
    if (!ans) return std::nullopt;
    const auto m = ans->mean();
    if (!m) return std::nullopt;
    return std::exp(-*m);
}

std::optional<double> EvalReport::semscore_mean() const { return semscore ? semscore->mean() : std::nullopt; }
std::optional<double> EvalReport::llm_eval_score() const { return llm_eval ? llm_eval->mean() : std::nullopt; }

namespace {

ordered_json opt(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string csv_field(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace

ordered_json EvalReport::to_json() const {
    ordered_json j;
    j["n_items"] = n_items;
    auto metric = [&](const char* name, const std::optional<MetricAccumulator>& acc, std::optional<double> value) {
        if (!acc) {
            j[name] = nullptr;
            return;
        }
        ordered_json m;
        m["value"] = opt(value);
        m["n_scored"] = acc->count;
        m["sum"] = acc->sum;
        j[name] = m;
    };
    metric("ans_ppl", ans, ans_ppl());
    metric("semscore", semscore, semscore_mean());
    metric("llm_eval", llm_eval, llm_eval_score());
    ordered_json eps = ordered_json::object();
    for (const auto& [k, v] : endpoints) eps[k] = v;
    j["endpoints"] = eps;
    if (decoding) {
        ordered_json d;
        d["greedy"] = decoding->greedy;
        d["max_new_tokens"] = decoding->max_new_tokens;
        j["decoding"] = d;
    } else {
        j["decoding"] = nullptr;
    }
    ordered_json ex;
    ex["generation_failed"] = exclusions.generation_failed;
    ex["scorer_failed"] = exclusions.scorer_failed;
    ex["semscore_undefined"] = exclusions.semscore_undefined;
    ex["embedder_failed"] = exclusions.embedder_failed;
    ex["judge_indeterminate"] = exclusions.judge_indeterminate;
    ex["judge_failed"] = exclusions.judge_failed;
    j["exclusions"] = ex;
    ordered_json recs = ordered_json::array();
    for (const auto& r : items) {
        ordered_json o;
        o["index"] = r.index;
        o["ID"] = r.item.source_id.str();
        o["Statement"] = r.item.statement;
        o["Answer"] = r.item.answer;
        o["model_answer"] = r.model_answer ? ordered_json(*r.model_answer) : ordered_json(nullptr);
        o["generation_failed"] = r.generation_failed;
        o["answer_mean_logprob"] = opt(r.answer_mean_logprob);
        o["semscore"] = opt(r.semscore);
        o["judged_yes"] = r.judged_yes ? ordered_json(*r.judged_yes) : ordered_json(nullptr);
        o["flags"] = r.flags;
        recs.push_back(o);
    }
    j["items"] = recs;
    return j;
}

std::string EvalReport::items_csv() const {
    std::ostringstream out;
    out << "index,id,generation_failed,answer_mean_logprob,semscore,judged_yes,flags,statement,answer,model_answer\n";
    for (const auto& r : items) {
        std::string flags;
        for (const auto& f : r.flags) flags += (flags.empty() ? "" : ";") + f;
        out << r.index << ',' << r.item.source_id.str() << ',' << (r.generation_failed ? 1 : 0) << ','
            << (r.answer_mean_logprob ? fixed(*r.answer_mean_logprob, 6) : "") << ','
            << (r.semscore ? fixed(*r.semscore, 6) : "") << ','
            << (r.judged_yes ? (*r.judged_yes ? "1" : "0") : "") << ',' << flags << ','
            << csv_field(r.item.statement) << ',' << csv_field(r.item.answer) << ','
            << (r.model_answer ? csv_field(*r.model_answer) : "") << '\n';
    }
    return out.str();
}

std::string EvalReport::summary_table() const {
    std::ostringstream out;
    auto row = [&](const char* name, std::optional<double> v, int decimals) {
        out << name << '\t' << (v ? fixed(*v, decimals) : "absent") << '\n';
    };
    out << "items\t" << n_items << '\n';
    row("Ans-PPL", ans_ppl(), 2);
    row("SemScore", semscore_mean(), 4);
    row("LLM-Eval", llm_eval_score(), 4);
    return out.str();
}

EvalReport aggregate_report(std::span<const EvalReport> parts) {
    if (parts.empty()) throw Error(ErrorCode::invalid_argument, "no report parts to aggregate");
    EvalReport out;
    auto merge = [](std::optional<MetricAccumulator>& into, const std::optional<MetricAccumulator>& from) {
        if (!from) return;
        if (!into) into = MetricAccumulator{};
        *into += *from;
    };
    for (const auto& p : parts) {
        merge(out.ans, p.ans);
        merge(out.semscore, p.semscore);
        merge(out.llm_eval, p.llm_eval);
        out.n_items += p.n_items;
        for (const auto& [k, v] : p.endpoints) out.endpoints.emplace(k, v);
        if (!out.decoding && p.decoding) out.decoding = p.decoding;
        out.exclusions += p.exclusions;
        out.items.insert(out.items.end(), p.items.begin(), p.items.end());
    }
    if (!out.ans && !out.semscore && !out.llm_eval) {
        throw Error(ErrorCode::invalid_argument, "report parts carry no metric");
    }
    std::stable_sort(out.items.begin(), out.items.end(),
                     [](const ItemRecord& a, const ItemRecord& b) { return a.index < b.index; });
    return out;
}

EvalReport run_eval(std::span<const QnaItem> items, const EvalEndpoints& endpoints, const EvalOptions& options) {
    EvalReport report;
    report.n_items = items.size();
    report.items.resize(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        report.items[i].index = i;
        report.items[i].item = items[i];
    }

    if (endpoints.generator) {
        report.endpoints["generator"] = endpoints.generator->identity();
        report.decoding = options.decoding;
        const auto answers = generate_answers(items, *endpoints.generator, options.decoding, options.workers);
        for (std::size_t i = 0; i < items.size(); ++i) {
            auto& rec = report.items[i];
            if (!answers[i].text) {
                rec.generation_failed = true;
                rec.flags.emplace_back("generation_failed");
                ++report.exclusions.generation_failed;
                continue;
            }
            rec.model_answer = answers[i].text;
            if (answers[i].truncated) rec.flags.emplace_back("truncated");
        }
    }

    auto eligible = [&](std::size_t i) { return !report.items[i].generation_failed; };

    if (endpoints.scorer) {
        report.endpoints["scorer"] = endpoints.scorer->identity();
        std::vector<std::optional<double>> means(items.size());
        parallel_for(items.size(), options.workers, [&](std::size_t i) {
            if (!eligible(i)) return;
            try {
                means[i] = answer_mean_logprob(score_answer(items[i], *endpoints.scorer));
            } catch (const Error& e) {
                if (e.code() != ErrorCode::gateway_failure && e.code() != ErrorCode::invalid_argument) throw;
            }
        });
        report.ans = MetricAccumulator{};
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (!eligible(i)) continue;
            if (!means[i]) {
                report.items[i].flags.emplace_back("scorer_failed");
                ++report.exclusions.scorer_failed;
                continue;
            }
            report.items[i].answer_mean_logprob = means[i];
            report.ans->add(*means[i]);
        }
    }

    if (endpoints.embedder && endpoints.generator) {
        report.endpoints["embedder"] = endpoints.embedder->identity();
        std::vector<std::optional<double>> scores(items.size());
        std::vector<char> failed(items.size(), 0);
        parallel_for(items.size(), options.workers, [&](std::size_t i) {
            if (!eligible(i)) return;
            try {
                scores[i] = sem_score(items[i].answer, *report.items[i].model_answer, *endpoints.embedder);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::gateway_failure && e.code() != ErrorCode::invalid_argument) throw;
                failed[i] = 1;
            }
        });
        report.semscore = MetricAccumulator{};
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (!eligible(i)) continue;
            if (failed[i]) {
                report.items[i].flags.emplace_back("embedder_failed");
                ++report.exclusions.embedder_failed;
            } else if (!scores[i]) {
                report.items[i].flags.emplace_back("semscore_undefined");
                ++report.exclusions.semscore_undefined;
            } else {
                report.items[i].semscore = scores[i];
                report.semscore->add(*scores[i]);
            }
        }
    }

    if (endpoints.judge && endpoints.generator) {
        report.endpoints["judge"] = endpoints.judge->identity();
        std::vector<std::optional<JudgeOutcome>> outcomes(items.size());
        parallel_for(items.size(), options.workers, [&](std::size_t i) {
            if (!eligible(i)) return;
            try {
                outcomes[i] = judge_answer(items[i], *report.items[i].model_answer, *endpoints.judge);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::gateway_failure) throw;
            }
        });
        report.llm_eval = MetricAccumulator{};
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (!eligible(i)) continue;
            auto& rec = report.items[i];
            if (!outcomes[i]) {
                rec.flags.emplace_back("judge_failed");
                ++report.exclusions.judge_failed;
                outcomes[i] = JudgeOutcome{false, true};
            } else if (outcomes[i]->flagged) {
                rec.flags.emplace_back("judge_indeterminate");
                ++report.exclusions.judge_indeterminate;
            }
            rec.judged_yes = outcomes[i]->yes;
            report.llm_eval->add(outcomes[i]->yes ? 1.0 : 0.0);
        }
    }
    return report;
}

}  // namespace telekit::eval
