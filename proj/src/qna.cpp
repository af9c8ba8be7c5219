#include "telekit/qna.hpp"

#include <algorithm>
#include <ostream>
#include <set>
#include <sstream>

#include "telekit/io.hpp"
#include "telekit/parallel.hpp"
#include "telekit/prompts.hpp"
#include "telekit/text.hpp"

namespace telekit::qna {

using nlohmann::ordered_json;

namespace {

std::string squash(std::string_view s) {
    std::string out;
    for (auto w : text::words(s)) {
        if (!out.empty()) out.push_back(' ');
        out.append(w);
    }
    return out;
}

bool is_echo(const QnaPair& p) {
    const auto q = squash(p.statement);
    const auto a = squash(p.answer);
    return std::any_of(prompts::kShotExamples.begin(), prompts::kShotExamples.end(),
                       [&](const auto& shot) { return q == squash(shot.first) && a == squash(shot.second); });
}

}  // namespace

void validate(const QnaItem& item) {
    if (text::is_blank(item.statement)) throw Error(ErrorCode::empty_content, "empty Statement");
    if (text::is_blank(item.answer)) throw Error(ErrorCode::empty_content, "empty Answer");
}

std::string serialize_qna(const QnaItem& item) {
    ordered_json j;
    j["Statement"] = item.statement;
    j["Answer"] = item.answer;
    j["ID"] = item.source_id.str();
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

QnaItem parse_qna(std::string_view line, std::size_t line_number) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::malformed_json, e.what(), line_number);
    }
    if (!j.is_object()) throw Error(ErrorCode::malformed_json, "QnA record is not an object", line_number);
    auto field = [&](const char* name) {
        const auto it = j.find(name);
        if (it == j.end() || !it->is_string()) {
            throw Error(ErrorCode::missing_field, std::string("missing string field ") + name, line_number);
        }
        return it->get<std::string>();
    };
    QnaItem item;
    item.statement = field("Statement");
    item.answer = field("Answer");
    try {
        item.source_id = DocId::parse(field("ID"));
        validate(item);
    } catch (const Error& e) {
        throw Error(e.code(), e.what(), line_number);
    }
    return item;
}

std::size_t write_qna(std::span<const QnaItem> items, std::ostream& sink) {
    std::size_t n = 0;
    for (const auto& item : items) {
        sink << serialize_qna(item) << '\n';
        if (!sink) throw Error(ErrorCode::io_failure, "write failed after " + std::to_string(n) + " QnA items");
        ++n;
    }
    sink.flush();
    return n;
}

std::vector<QnaItem> read_qna_file(const std::filesystem::path& path) {
    std::vector<QnaItem> items;
    io::LineReader reader(path);
    std::string line;
    while (reader.next(line)) {
        if (text::is_blank(line)) continue;
        items.push_back(parse_qna(line, reader.line_number()));
    }
    return items;
}

Segmentation segment_content(const Document& doc, std::size_t limit, std::size_t min_final) {
    if (doc.category() == Category::web) {
        throw Error(ErrorCode::category_excluded, doc.id.str() + ": web content is not segmented for QnA");
    }
    if (limit == 0) throw Error(ErrorCode::invalid_argument, "segment limit must be positive");
    Segmentation out;
    const auto pieces = text::split_scalars(doc.content, limit);
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const bool last = i + 1 == pieces.size();
        if (last) {
            const auto n = text::count_scalars(pieces[i]);
            if (n < min_final) {
                out.short_remainder_dropped = true;
                out.dropped_scalars = n;
                break;
            }
        }
        out.segments.push_back(Segment{doc.id, std::string(pieces[i]), out.segments.size()});
    }
    return out;
}

ParseOutcome parse_completion(std::string_view completion) {
    static const std::regex question_re(R"(^\s*Question\s*(\d+)\s*:\s*(.*)$)", std::regex::icase);
    static const std::regex answer_re(R"(^\s*Answer\s*(\d+)\s*:\s*(.*)$)", std::regex::icase);

    ParseOutcome out;
    enum class State { idle, question, answer } state = State::idle;
    int qnum = 0;
    std::string q, a;

    auto finish = [&]() {
        if (state == State::question) {
            out.warnings.push_back("Question " + std::to_string(qnum) + " has no answer");
        } else if (state == State::answer) {
            QnaPair p{squash(q), squash(a)};
            if (p.statement.empty() || p.answer.empty()) {
                out.warnings.push_back("pair " + std::to_string(qnum) + " is empty");
            } else if (is_echo(p)) {
                ++out.echoes;
            } else if (out.pairs.size() >= kPairsPerSegment) {
                out.warnings.push_back("pair " + std::to_string(qnum) + " beyond the first five ignored");
            } else {
                out.pairs.push_back(std::move(p));
            }
        }
        state = State::idle;
        q.clear();
        a.clear();
    };

    std::istringstream in{std::string(completion)};
    std::string line;
    std::smatch m;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (std::regex_match(line, m, question_re)) {
            finish();
            state = State::question;
            qnum = std::stoi(m[1].str());
            q = m[2].str();
        } else if (std::regex_match(line, m, answer_re)) {
            const int k = std::stoi(m[1].str());
            if (state != State::question) {
                if (state == State::answer) finish();
                out.warnings.push_back("Answer " + std::to_string(k) + " has no question");
                state = State::idle;
            } else if (k != qnum) {
                out.warnings.push_back("Answer " + std::to_string(k) + " does not match Question " +
                                       std::to_string(qnum));
                state = State::idle;
                q.clear();
            } else {
                state = State::answer;
                a = m[2].str();
            }
        } else if (state == State::question) {
            q += ' ' + line;
        } else if (state == State::answer) {
            a += ' ' + line;
        }
    }
    finish();
    return out;
}

ParseOutcome generate_qna(const Segment& seg, gateway::Endpoint& generator, int max_new_tokens) {
    const auto completion = generator.complete(prompts::qna_generation(seg.text),
                                               gateway::DecodingParams{true, max_new_tokens});
    auto out = parse_completion(completion.text);
    if (out.pairs.empty()) {
        throw Error(ErrorCode::generation_parse,
                    seg.source_id.str() + " segment " + std::to_string(seg.ordinal) + ": no QnA pair parsed");
    }
    return out;
}

ordered_json GenerationRun::to_json() const {
    ordered_json j;
    j["documents"] = documents;
    j["excluded_documents"] = excluded_documents;
    j["short_documents"] = short_documents;
    j["segments"] = segments;
    j["failed_segments"] = failed_segments;
    j["generated"] = candidates.size();
    j["parse_warnings"] = parse_warnings;
    j["echoes_dropped"] = echoes;
    return j;
}

GenerationRun generate_candidates(std::span<const Document> docs, gateway::Endpoint& generator,
                                  const GenerateOptions& options) {
    GenerationRun run;
    std::vector<Segment> segments;
    for (const auto& doc : docs) {
        ++run.documents;
        if (doc.category() == Category::web) {
            ++run.excluded_documents;
            continue;
        }
        auto seg = segment_content(doc, options.limit, options.min_final);
        if (seg.segments.empty()) ++run.short_documents;
        for (auto& s : seg.segments) segments.push_back(std::move(s));
    }
    run.segments = segments.size();

    std::vector<std::optional<ParseOutcome>> results(segments.size());
    parallel_for(segments.size(), options.workers, [&](std::size_t i) {
        try {
            results[i] = generate_qna(segments[i], generator, options.max_new_tokens);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::generation_parse && e.code() != ErrorCode::gateway_failure) throw;
        }
    });

    std::vector<std::size_t> order(segments.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (segments[x].source_id != segments[y].source_id) return segments[x].source_id < segments[y].source_id;
        return segments[x].ordinal < segments[y].ordinal;
    });
    for (const auto i : order) {
        if (!results[i]) {
            ++run.failed_segments;
            continue;
        }
        run.parse_warnings += results[i]->warnings.size();
        run.echoes += results[i]->echoes;
        for (auto& p : results[i]->pairs) {
            run.candidates.push_back(QnaItem{std::move(p.statement), std::move(p.answer), segments[i].source_id});
        }
    }
    return run;
}

FilterBank::FilterBank(std::vector<std::pair<std::string, std::string>> patterns) {
    if (patterns.empty()) throw Error(ErrorCode::config_invalid, "filter bank is empty");
    std::set<std::string> names;
    for (auto& [name, pattern] : patterns) {
        if (name.empty()) throw Error(ErrorCode::config_invalid, "filter pattern without a name");
        if (!names.insert(name).second) throw Error(ErrorCode::config_invalid, "duplicate filter name: " + name);
        try {
            std::regex re(pattern, std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
            patterns_.push_back(FilterPattern{std::move(name), std::move(pattern), std::move(re)});
        } catch (const std::regex_error& e) {
            throw Error(ErrorCode::config_invalid, "filter " + name + ": bad regex: " + e.what());
        }
    }
}

FilterBank FilterBank::parse(std::string_view tsv) {
    std::vector<std::pair<std::string, std::string>> patterns;
    std::istringstream in{std::string(tsv)};
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::is_blank(line) || text::trim(line).front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw Error(ErrorCode::config_invalid, "filter bank: expected name<TAB>pattern", line_number);
        }
        patterns.emplace_back(std::string(text::trim(line.substr(0, tab))), line.substr(tab + 1));
    }
    return FilterBank(std::move(patterns));
}

FilterBank FilterBank::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

std::optional<std::string> FilterBank::first_match(std::string_view s) const {
    for (const auto& p : patterns_) {
        if (std::regex_search(s.begin(), s.end(), p.re)) return p.name;
    }
    return std::nullopt;
}

RegexResult regex_filter(std::span<const QnaItem> items, const FilterBank& bank) {
    RegexResult r;
    for (const auto& item : items) {
        auto reason = bank.first_match(item.statement);
        if (!reason) reason = bank.first_match(item.answer);
        if (reason) {
            r.rejected.push_back(Rejection{item, *reason});
        } else {
            r.kept.push_back(item);
        }
    }
    return r;
}

ordered_json AnswerabilityVerdict::to_json() const {
    ordered_json j;
    j["ID"] = item.source_id.str();
    j["Statement"] = item.statement;
    j["verdict"] = gateway::to_string(verdict);
    j["yes_logit"] = yes_logit ? ordered_json(*yes_logit) : ordered_json(nullptr);
    j["no_logit"] = no_logit ? ordered_json(*no_logit) : ordered_json(nullptr);
    return j;
}

AnswerabilityResult answerability_filter(std::span<const QnaItem> items, gateway::Endpoint& judge,
                                         std::size_t workers) {
    std::vector<std::optional<gateway::JudgeResult>> results(items.size());
    parallel_for(items.size(), workers, [&](std::size_t i) {
        try {
            results[i] = judge.judge_binary(prompts::answerability(items[i].statement));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::gateway_failure) throw;
        }
    });
    AnswerabilityResult r;
    for (std::size_t i = 0; i < items.size(); ++i) {
        AnswerabilityVerdict v{items[i], gateway::Verdict::indeterminate, std::nullopt, std::nullopt};
        if (!results[i]) {
            ++r.gateway_failures;
        } else {
            v.verdict = results[i]->verdict;
            v.yes_logit = results[i]->yes_logit;
            v.no_logit = results[i]->no_logit;
            if (v.verdict == gateway::Verdict::indeterminate) ++r.indeterminate;
        }
        if (v.verdict == gateway::Verdict::yes) {
            r.kept.push_back(items[i]);
        } else {
            r.rejected.push_back(items[i]);
        }
        r.verdicts.push_back(std::move(v));
    }
    return r;
}

RetentionCounts& RetentionCounts::operator+=(const RetentionCounts& o) {
    generated += o.generated;
    regex_rejected += o.regex_rejected;
    llm_rejected += o.llm_rejected;
    retained += o.retained;
    return *this;
}

bool RetentionStats::consistent() const {
    RetentionCounts sum;
    for (const auto& [c, counts] : by_category) {
        if (!counts.consistent()) return false;
        sum += counts;
    }
    return total.consistent() && (by_category.empty() || sum == total);
}

ordered_json RetentionStats::to_json() const {
    auto counts = [](const RetentionCounts& c) {
        ordered_json j;
        j["generated"] = c.generated;
        j["regex_rejected"] = c.regex_rejected;
        j["llm_rejected"] = c.llm_rejected;
        j["retained"] = c.retained;
        j["retention_rate"] = c.rate();
        return j;
    };
    ordered_json j = counts(total);
    ordered_json per = ordered_json::object();
    for (const auto& [c, v] : by_category) per[std::string(to_string(c))] = counts(v);
    j["by_category"] = per;
    return j;
}

QnaFilterRun filter_candidates(std::span<const QnaItem> candidates, const FilterBank& bank,
                               gateway::Endpoint& judge, std::size_t workers) {
    QnaFilterRun run;
    run.regex = regex_filter(candidates, bank);
    run.answerability = answerability_filter(run.regex.kept, judge, workers);
    run.kept = run.answerability.kept;

    auto bump = [&](const QnaItem& item, std::uint64_t RetentionCounts::*field) {
        ++(run.stats.total.*field);
        ++(run.stats.by_category[item.source_id.category].*field);
    };
    for (const auto& item : candidates) bump(item, &RetentionCounts::generated);
    for (const auto& r : run.regex.rejected) bump(r.item, &RetentionCounts::regex_rejected);
    for (const auto& item : run.answerability.rejected) bump(item, &RetentionCounts::llm_rejected);
    for (const auto& item : run.kept) bump(item, &RetentionCounts::retained);
    return run;
}

RetentionStats emit_eval_set(std::span<const QnaItem> kept, std::ostream& sink, RetentionStats stats) {
    if (stats.total.retained != kept.size()) {
        throw Error(ErrorCode::invalid_argument, "retained count " + std::to_string(stats.total.retained) +
                                                     " differs from " + std::to_string(kept.size()) + " kept items");
    }
    if (!stats.consistent()) throw Error(ErrorCode::invalid_argument, "retention counters are inconsistent");
    write_qna(kept, sink);
    return stats;
}

}  // namespace telekit::qna
