#include "telekit/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "telekit/audit.hpp"
#include "telekit/config.hpp"
#include "telekit/corpus.hpp"
#include "telekit/eval.hpp"
#include "telekit/hash.hpp"
#include "telekit/io.hpp"
#include "telekit/latex.hpp"
#include "telekit/packer.hpp"
#include "telekit/parallel.hpp"
#include "telekit/qna.hpp"
#include "telekit/relevance.hpp"
#include "telekit/text.hpp"

namespace telekit::cli {

namespace fs = std::filesystem;
using gateway::Capability;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::size_t> workers;
    std::optional<std::uint64_t> seed;
    std::string tokenizer;
    std::string keywords;
    std::string filter_bank;
    std::string blocklist;
    std::string section_patterns;
    std::string transcript;
    bool mock = false;
    bool dry_run = false;
    bool quiet = false;
};

class Context {
public:
    explicit Context(const Globals& g) : g_(g) {
        cfg = g.config_path.empty() ? config::PipelineConfig::defaults() : config::PipelineConfig::load(g.config_path);
        if (g.workers) cfg.workers = *g.workers;
        if (g.seed) {
            cfg.seed = *g.seed;
            cfg.recipe.seed = *g.seed;
        }
        if (!g.tokenizer.empty()) {
            cfg.tokenizer = g.tokenizer;
            cfg.recipe.tokenizer = g.tokenizer;
        }
        if (!g.keywords.empty()) cfg.keywords = g.keywords;
        if (!g.filter_bank.empty()) cfg.filter_bank = g.filter_bank;
        if (!g.blocklist.empty()) cfg.blocklist = g.blocklist;
        if (!g.section_patterns.empty()) cfg.section_patterns = g.section_patterns;
        if (!g.transcript.empty()) cfg.transcript = g.transcript;
        if (g.mock) cfg.use_mock();
    }

    bool dry_run() const { return g_.dry_run; }
    std::size_t workers() const { return cfg.effective_workers(); }

    template <typename... Args>
    void log(const Args&... args) const {
        if (g_.quiet) return;
        std::ostringstream out;
        out << "telekit: ";
        (out << ... << args);
        std::cerr << out.str() << '\n';
    }

    void require(std::initializer_list<Capability> caps) const {
        cfg.validate(std::span<const Capability>(caps.begin(), caps.size()));
    }

    static void require_file(const fs::path& p, const char* what) {
        if (!fs::exists(p)) throw Error(ErrorCode::config_invalid, std::string(what) + " not found: " + p.string());
    }

    static void require_input(const fs::path& p) {
        if (!fs::exists(p)) throw Error(ErrorCode::io_failure, "input not found: " + p.string());
    }

    gateway::Endpoint& endpoint(Capability cap) {
        auto it = endpoints_.find(cap);
        if (it != endpoints_.end()) return *it->second;
        if (!transcript_ && cfg.transcript) transcript_ = std::make_shared<gateway::Transcript>(*cfg.transcript);
        auto ep = gateway::Endpoint::create(cfg.endpoints.at(cap), transcript_);
        return *endpoints_.emplace(cap, ep).first->second;
    }

    config::PipelineConfig cfg;

private:
    Globals g_;
    std::shared_ptr<gateway::Transcript> transcript_;
    std::map<Capability, std::shared_ptr<gateway::Endpoint>> endpoints_;
};

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::config_invalid: return kConfig;
        case ErrorCode::gateway_failure:
        case ErrorCode::all_chunks_failed: return kGateway;
        case ErrorCode::io_failure: return kIo;
        default: return kInput;
    }
}

void write_json_file(const fs::path& path, const ordered_json& j) { io::write_file(path, j.dump(2) + "\n"); }

// Reads records in batches so no stage holds the whole corpus.
class BatchReader {
public:
    BatchReader(const fs::path& path, std::size_t batch) : reader_(path), batch_(batch) {}

    bool next(std::vector<Document>& out) {
        out.clear();
        std::string line;
        while (out.size() < batch_ && reader_.next(line)) {
            if (text::is_blank(line)) continue;
            out.push_back(parse_record(line, reader_.line_number()));
        }
        return !out.empty();
    }

private:
    io::LineReader reader_;
    std::size_t batch_;
};

// ---------------------------------------------------------------------------
// ingest

struct IngestArgs {
    std::vector<std::string> inputs;
    std::string out;
    std::string category;
    std::uint64_t start = 0;
    std::string dedup = "content";
    std::string errors;
};

std::string raw_content(const json& row) {
    for (const char* k : {"Content", "content"}) {
        if (row.contains(k) && row[k].is_string()) return row[k].get<std::string>();
    }
    return {};
}

int cmd_ingest(Context& ctx, const IngestArgs& a) {
    const auto cat = parse_category(a.category);
    if (!cat) throw Error(ErrorCode::config_invalid, "unknown category: " + a.category);
    std::optional<DedupKey> key;
    if (a.dedup == "content") key = DedupKey::content_hash;
    else if (a.dedup == "url") key = DedupKey::metadata_url;
    else if (a.dedup != "none") throw Error(ErrorCode::config_invalid, "unknown dedup key: " + a.dedup);
    for (const auto& in : a.inputs) Context::require_input(in);
    if (ctx.dry_run()) {
        ctx.log("dry run: ingest of ", a.inputs.size(), " file(s) validated");
        return kOk;
    }

    // Earlier contents are re-read from the inputs on a hash hit.
    struct Origin {
        std::size_t file;
        std::uint64_t offset;
    };
    std::vector<Origin> origins;
    auto fetch = [&](std::uint64_t ordinal) {
        const auto& o = origins.at(ordinal);
        io::LineReader r(a.inputs[o.file]);
        std::string line;
        while (r.next(line)) {
            if (r.line_offset() == o.offset) break;
        }
        return text::sanitize_utf8(raw_content(json::parse(line)));
    };
    std::optional<Deduplicator> dedup;
    if (key) dedup.emplace(*key, fetch);

    io::LineWriter out(a.out);
    std::unique_ptr<io::LineWriter> errors;
    if (!a.errors.empty()) errors = std::make_unique<io::LineWriter>(a.errors);
    std::uint64_t next = a.start;
    std::size_t written = 0, rejected = 0;
    for (std::size_t f = 0; f < a.inputs.size(); ++f) {
        io::LineReader reader(a.inputs[f]);
        std::string line;
        while (reader.next(line)) {
            if (text::is_blank(line)) continue;
            try {
                json row;
                try {
                    row = json::parse(text::sanitize_utf8(line));
                } catch (const json::exception& e) {
                    throw Error(ErrorCode::malformed_json, e.what(), reader.line_number());
                }
                Document doc;
                const bool has_id = row.is_object() && row.contains("ID");
                if (has_id) {
                    doc = parse_record(row.dump(), reader.line_number());
                } else {
                    ordered_json rec;
                    rec["ID"] = std::string(to_string(*cat)) + "_0";
                    rec["Category"] = to_string(*cat);
                    rec["Content"] = text::sanitize_utf8(raw_content(row));
                    rec["Metadata"] = row.contains("Metadata") ? row["Metadata"] : row.value("metadata", json::object());
                    doc = parse_record(rec.dump(), reader.line_number());
                }
                if (dedup) {
                    origins.push_back(Origin{f, reader.line_offset()});
                    if (dedup->offer(doc) == DedupOutcome::drop) continue;
                }
                if (!has_id) doc.id = DocId{*cat, next++};
                out.write_line(serialize_record(doc));
                ++written;
            } catch (const Error& e) {
                if (e.code() == ErrorCode::io_failure) throw;
                ++rejected;
                if (errors) {
                    ordered_json j;
                    j["file"] = a.inputs[f];
                    j["line"] = reader.line_number();
                    j["code"] = to_string(e.code());
                    j["message"] = e.what();
                    errors->write_line(j.dump());
                }
            }
        }
    }
    out.close();
    if (errors) errors->close();
    ctx.log("ingest: ", written, " written, ", rejected, " rejected, ", dedup ? dedup->dropped() : 0,
            " duplicates dropped, ", dedup ? dedup->flagged() : 0, " flagged");
    return kOk;
}

// ---------------------------------------------------------------------------
// clean

struct CleanArgs {
    std::string in;
    std::string out;
    std::string category = "arxiv";
    std::uint64_t start = 0;
    std::string report;
};

std::string entry_stem(const fs::path& p) {
    auto name = p.filename().string();
    for (const char* ext : {".tar.gz", ".tgz", ".tar", ".tex"}) {
        if (name.size() > std::strlen(ext) && name.ends_with(ext)) return name.substr(0, name.size() - std::strlen(ext));
    }
    return name;
}

bool is_project_entry(const fs::directory_entry& e) {
    if (e.is_directory()) return true;
    const auto name = e.path().filename().string();
    return name.ends_with(".tar") || name.ends_with(".tar.gz") || name.ends_with(".tgz") || name.ends_with(".tex");
}

latex::LatexProject load_project(const fs::path& p) {
    if (fs::is_directory(p)) return latex::LatexProject::from_directory(p);
    if (p.extension() == ".tex") return latex::LatexProject::single(p.filename().string(), io::read_file(p));
    return latex::LatexProject::from_tar(p);
}

// 3GPP file names such as 29161-c00: series = leading two digits, release
// from the first version character (digits 0-9, then a=10, b=11, ...).
StandardMeta standard_meta(const std::string& stem) {
    StandardMeta m;
    m.file_name = stem;
    std::size_t digits = 0;
    while (digits < stem.size() && std::isdigit(static_cast<unsigned char>(stem[digits]))) ++digits;
    if (digits >= 2) m.series = std::stoll(stem.substr(0, 2));
    const auto dash = stem.find('-');
    if (dash != std::string::npos && dash + 1 < stem.size()) {
        const char v = static_cast<char>(std::tolower(static_cast<unsigned char>(stem[dash + 1])));
        if (v >= '0' && v <= '9') m.release = v - '0';
        else if (v >= 'a' && v <= 'z') m.release = 10 + (v - 'a');
    }
    return m;
}

// First paragraph that reads like prose: skips the title and one-line headings.
std::string first_paragraph(std::string_view text, bool has_title, std::size_t limit) {
    std::string_view fallback;
    std::size_t pos = 0;
    bool first = true;
    while (pos < text.size()) {
        const auto end = std::min(text.find("\n\n", pos), text.size());
        const auto para = text::trim(text.substr(pos, end - pos));
        pos = end + 2;
        if (para.empty() || (first && has_title)) {
            first = false;
            continue;
        }
        first = false;
        if (fallback.empty()) fallback = para;
        const bool heading = para.find('\n') == std::string_view::npos && !para.ends_with('.') &&
                             !para.ends_with('?') && !para.ends_with('!') && !para.ends_with(':');
        if (!heading) return std::string(text::take_scalars(para, limit));
    }
    return std::string(text::take_scalars(fallback.empty() ? text::trim(text) : fallback, limit));
}

int cmd_clean(Context& ctx, const CleanArgs& a) {
    const auto cat = parse_category(a.category);
    if (!cat || (*cat != Category::arxiv && *cat != Category::standard)) {
        throw Error(ErrorCode::config_invalid, "clean produces arxiv or standard documents, not " + a.category);
    }
    Context::require_file(ctx.cfg.blocklist, "blocklist");
    Context::require_file(ctx.cfg.section_patterns, "section patterns");
    Context::require_input(a.in);
    latex::CleanOptions options{latex::Blocklist::load(ctx.cfg.blocklist),
                                latex::SectionPatterns::load(ctx.cfg.section_patterns)};
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(a.in)) {
        if (is_project_entry(e)) entries.push_back(e.path());
    }
    std::sort(entries.begin(), entries.end());
    if (ctx.dry_run()) {
        ctx.log("dry run: ", entries.size(), " LaTeX project(s) found");
        return kOk;
    }

    struct Outcome {
        std::optional<Document> doc;
        std::optional<latex::CleanResult> result;
        std::string error;
        ErrorCode code = ErrorCode::invalid_argument;
    };
    io::LineWriter out(a.out);
    std::unique_ptr<io::LineWriter> report;
    if (!a.report.empty()) report = std::make_unique<io::LineWriter>(a.report);
    std::uint64_t next = a.start;
    std::size_t written = 0, failed = 0;
    latex::CleanReport totals;
    const std::size_t batch = std::max<std::size_t>(1, ctx.workers() * 4);
    for (std::size_t base = 0; base < entries.size(); base += batch) {
        const std::size_t n = std::min(batch, entries.size() - base);
        std::vector<Outcome> outcomes(n);
        parallel_for(n, ctx.workers(), [&](std::size_t i) {
            const auto& path = entries[base + i];
            auto& o = outcomes[i];
            try {
                auto r = latex::clean_document(load_project(path), options);
                const auto stem = entry_stem(path);
                Document doc;
                doc.id = DocId{*cat, 0};
                doc.content = r.text;
                if (*cat == Category::arxiv) {
                    ArxivMeta m;
                    m.arxiv_id = stem;
                    m.title = r.title.value_or(stem);
                    m.abstract = r.abstract ? *r.abstract : first_paragraph(r.text, r.title.has_value(), 2000);
                    doc.metadata = m;
                } else {
                    doc.metadata = standard_meta(stem);
                }
                validate(doc);
                o.doc = std::move(doc);
                o.result = std::move(r);
            } catch (const Error& e) {
                o.error = e.what();
                o.code = e.code();
            } catch (const std::exception& e) {
                o.error = e.what();
            }
        });
        for (std::size_t i = 0; i < n; ++i) {
            auto& o = outcomes[i];
            ordered_json rj;
            rj["entry"] = entries[base + i].filename().string();
            if (o.doc) {
                o.doc->id.index = next++;
                out.write_line(serialize_record(*o.doc));
                ++written;
                totals.merge(o.result->report);
                rj["ID"] = o.doc->id.str();
                rj["report"] = ordered_json::parse(o.result->report.to_json());
            } else {
                ++failed;
                rj["ID"] = nullptr;
                rj["code"] = to_string(o.code);
                rj["error"] = o.error;
                ctx.log("clean: ", entries[base + i].filename().string(), ": ", o.error);
            }
            if (report) report->write_line(rj.dump());
        }
    }
    out.close();
    if (report) report->close();
    ctx.log("clean: ", written, " documents written, ", failed, " failed, ", totals.macros_expanded,
            " macro expansions, ", totals.environments_removed, " environments and ", totals.commands_removed,
            " commands removed");
    return kOk;
}

// ---------------------------------------------------------------------------
// filter

struct FilterArgs {
    std::string in;
    std::string out;
    std::string verdicts;
    std::string retry;
    std::string funnel;
    std::string labels;
};

int cmd_filter(Context& ctx, const FilterArgs& a) {
    ctx.require({Capability::judge});
    Context::require_file(ctx.cfg.keywords, "keyword list");
    Context::require_input(a.in);
    if (!a.labels.empty()) Context::require_input(a.labels);
    const auto keywords = relevance::KeywordList::load(ctx.cfg.keywords);
    if (ctx.dry_run()) {
        ctx.log("dry run: filter configuration valid, ", keywords.terms().size(), " keywords");
        return kOk;
    }
    auto& judge = ctx.endpoint(Capability::judge);
    io::LineWriter out(a.out);
    std::unique_ptr<io::LineWriter> verdicts, retry;
    if (!a.verdicts.empty()) verdicts = std::make_unique<io::LineWriter>(a.verdicts);
    if (!a.retry.empty()) retry = std::make_unique<io::LineWriter>(a.retry);
    std::optional<std::map<DocId, bool>> labels;
    if (!a.labels.empty()) labels = relevance::load_labels(a.labels);
    relevance::ConfusionCounts confusion;

    relevance::FunnelCounts funnel;
    BatchReader reader(a.in, 1024);
    std::vector<Document> docs;
    while (reader.next(docs)) {
        auto r = relevance::filter_corpus(docs, keywords, judge, relevance::FilterOptions{ctx.workers()});
        funnel += r.funnel;
        for (const auto& d : r.kept) out.write_line(serialize_record(d));
        for (const auto& v : r.verdicts) {
            if (verdicts) verdicts->write_line(v.to_json().dump());
        }
        for (const auto& id : r.retry) {
            if (retry) retry->write_line(id.str());
        }
        if (labels) {
            const auto c = relevance::confusion_from_labels(r.verdicts, *labels);
            confusion.tp += c.tp;
            confusion.fp += c.fp;
            confusion.fn += c.fn;
            confusion.tn += c.tn;
        }
        ctx.log("filter: ", funnel.input, " read, ", funnel.kept, " kept");
    }
    out.close();
    if (verdicts) verdicts->close();
    if (retry) retry->close();

    ordered_json summary;
    summary["funnel"] = funnel.to_json();
    if (labels) {
        const auto pr = relevance::precision_recall(confusion);
        ordered_json m;
        m["tp"] = confusion.tp;
        m["fp"] = confusion.fp;
        m["fn"] = confusion.fn;
        m["tn"] = confusion.tn;
        m["precision"] = pr.precision ? ordered_json(*pr.precision) : ordered_json(nullptr);
        m["recall"] = pr.recall ? ordered_json(*pr.recall) : ordered_json(nullptr);
        m["f1"] = pr.f1 ? ordered_json(*pr.f1) : ordered_json(nullptr);
        summary["labeled"] = m;
        ctx.log("filter: labeled sample precision/recall/F1 = ", m["precision"].dump(), "/", m["recall"].dump(), "/",
                m["f1"].dump());
    }
    if (!a.funnel.empty()) write_json_file(a.funnel, summary);
    ctx.log("filter: funnel ", funnel.to_json().dump());
    return funnel.withheld > 0 ? kGateway : kOk;
}

// ---------------------------------------------------------------------------
// audit

struct AuditArgs {
    std::string in;
    std::string compare;
    std::string out;
    std::string hist;
    std::size_t T = audit::kDefaultChunkTokens;
};

audit::AuditResult audit_corpus(Context& ctx, const fs::path& path, const Tokenizer& tok, std::size_t T) {
    auto& scorer = ctx.endpoint(Capability::scorer);
    audit::LossPool pool;
    std::uint64_t discarded = 0;
    BatchReader reader(path, 256);
    std::vector<Document> docs;
    while (reader.next(docs)) {
        audit::ChunkedCorpus corpus;
        corpus.T = T;
        corpus.tokenizer_name = tok.name();
        for (const auto& d : docs) audit::append_chunks(corpus, d.content, tok);
        discarded += corpus.discarded_tokens;
        audit::score_chunks(corpus, scorer, pool, ctx.workers());
    }
    audit::AuditResult r;
    r.report = audit::make_report(pool, tok.name(), T, scorer.identity(), discarded);
    r.losses = std::move(pool.losses);
    return r;
}

int cmd_audit(Context& ctx, const AuditArgs& a) {
    ctx.require({Capability::scorer});
    Context::require_input(a.in);
    if (!a.compare.empty()) Context::require_input(a.compare);
    if (a.T < 2) throw Error(ErrorCode::config_invalid, "--T must be at least 2");
    if (ctx.dry_run()) {
        ctx.log("dry run: audit configuration valid");
        return kOk;
    }
    const auto tok = make_tokenizer(ctx.cfg.tokenizer);
    const auto raw = audit_corpus(ctx, a.in, *tok, a.T);
    ordered_json j;
    if (a.compare.empty()) {
        j = raw.report.to_json();
    } else {
        const auto clean = audit_corpus(ctx, a.compare, *tok, a.T);
        const auto v = audit::compare_tails(raw.report, clean.report);
        j["raw"] = raw.report.to_json();
        j["clean"] = clean.report.to_json();
        j["verdict"] = v.to_json();
        ctx.log("audit: cleaner=", v.cleaner ? "true" : "false", " delta_mean=", v.delta_mean,
                " delta_std=", v.delta_std);
        if (!a.hist.empty()) io::write_file(fs::path(a.hist).replace_extension(".clean.csv"), audit::histogram_csv(clean.losses));
    }
    write_json_file(a.out, j);
    if (!a.hist.empty()) io::write_file(a.hist, audit::histogram_csv(raw.losses));
    ctx.log("audit: tau=", raw.report.tail.tau, " tail_mean=", raw.report.tail.tail_mean,
            " tail_std=", raw.report.tail.tail_std);
    return kOk;
}

// ---------------------------------------------------------------------------
// qna-gen / qna-filter

struct QnaGenArgs {
    std::string in;
    std::string out;
    std::string stats;
    int max_new_tokens = 1024;
};

int cmd_qna_gen(Context& ctx, const QnaGenArgs& a) {
    ctx.require({Capability::generator});
    Context::require_input(a.in);
    if (ctx.dry_run()) {
        ctx.log("dry run: qna-gen configuration valid");
        return kOk;
    }
    auto& gen = ctx.endpoint(Capability::generator);
    qna::GenerateOptions opt;
    opt.max_new_tokens = a.max_new_tokens;
    opt.workers = ctx.workers();
    io::LineWriter out(a.out);
    qna::GenerationRun total;
    std::size_t generated = 0;
    BatchReader reader(a.in, 64);
    std::vector<Document> docs;
    while (reader.next(docs)) {
        auto run = qna::generate_candidates(docs, gen, opt);
        for (const auto& item : run.candidates) out.write_line(qna::serialize_qna(item));
        generated += run.candidates.size();
        total.documents += run.documents;
        total.excluded_documents += run.excluded_documents;
        total.short_documents += run.short_documents;
        total.segments += run.segments;
        total.failed_segments += run.failed_segments;
        total.parse_warnings += run.parse_warnings;
        total.echoes += run.echoes;
        ctx.log("qna-gen: ", total.documents, " documents, ", generated, " candidates");
    }
    out.close();
    auto j = total.to_json();
    j["generated"] = generated;
    if (!a.stats.empty()) write_json_file(a.stats, j);
    ctx.log("qna-gen: ", j.dump());
    return kOk;
}

struct QnaFilterArgs {
    std::string in;
    std::string out;
    std::string stats;
    std::string rejections;
    std::string verdicts;
};

int cmd_qna_filter(Context& ctx, const QnaFilterArgs& a) {
    ctx.require({Capability::judge});
    Context::require_file(ctx.cfg.filter_bank, "filter bank");
    Context::require_input(a.in);
    const auto bank = qna::FilterBank::load(ctx.cfg.filter_bank);
    if (ctx.dry_run()) {
        ctx.log("dry run: qna-filter configuration valid, ", bank.size(), " patterns");
        return kOk;
    }
    const auto candidates = qna::read_qna_file(a.in);
    auto run = qna::filter_candidates(candidates, bank, ctx.endpoint(Capability::judge), ctx.workers());
    {
        std::ofstream out(a.out, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::io_failure, "cannot write " + a.out);
        run.stats = qna::emit_eval_set(run.kept, out, run.stats);
    }
    if (!a.rejections.empty()) {
        io::LineWriter w(a.rejections);
        for (const auto& r : run.regex.rejected) {
            ordered_json j;
            j["ID"] = r.item.source_id.str();
            j["Statement"] = r.item.statement;
            j["stage"] = "regex";
            j["reason"] = r.reason;
            w.write_line(j.dump());
        }
        for (const auto& item : run.answerability.rejected) {
            ordered_json j;
            j["ID"] = item.source_id.str();
            j["Statement"] = item.statement;
            j["stage"] = "answerability";
            j["reason"] = "not answerable without the source";
            w.write_line(j.dump());
        }
        w.close();
    }
    if (!a.verdicts.empty()) {
        io::LineWriter w(a.verdicts);
        for (const auto& v : run.answerability.verdicts) w.write_line(v.to_json().dump());
        w.close();
    }
    auto stats = run.stats.to_json();
    stats["indeterminate"] = run.answerability.indeterminate;
    stats["gateway_failures"] = run.answerability.gateway_failures;
    if (!a.stats.empty()) write_json_file(a.stats, stats);
    ctx.log("qna-filter: generated ", run.stats.total.generated, ", regex rejected ", run.stats.total.regex_rejected,
            ", llm rejected ", run.stats.total.llm_rejected, ", retained ", run.stats.total.retained);
    return kOk;
}

// ---------------------------------------------------------------------------
// pack

struct PackArgs {
    std::string in;
    std::string general;
    std::string out;
    std::string manifest;
    std::optional<std::size_t> context_length;
    std::optional<double> fraction;
    std::optional<int> epochs;
    std::size_t shard_sequences = 1024;
};

// Token store: documents tokenized once into a flat file, read back by offset.
struct TokenStore {
    fs::path path;
    std::vector<std::uint64_t> offsets;
    std::vector<std::uint64_t> lengths;
    std::vector<std::string> ids;

    std::vector<TokenId> read(std::ifstream& in, std::size_t i) const {
        std::vector<TokenId> out(lengths[i]);
        in.seekg(static_cast<std::streamoff>(offsets[i] * sizeof(TokenId)));
        in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * sizeof(TokenId)));
        if (!in) throw Error(ErrorCode::io_failure, "cannot read token store " + path.string());
        return out;
    }
};

TokenStore tokenize_to_store(const fs::path& input, const fs::path& store_path, const Tokenizer& tok,
                             std::size_t workers, bool general) {
    TokenStore store;
    store.path = store_path;
    std::ofstream out(store_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_failure, "cannot create " + store_path.string());
    std::uint64_t offset = 0;
    io::LineReader reader(input);
    std::string line;
    std::vector<std::pair<std::string, std::string>> batch;  // id, text
    std::size_t general_index = 0;
    auto flush = [&]() {
        std::vector<std::vector<TokenId>> toks(batch.size());
        parallel_for(batch.size(), workers, [&](std::size_t i) { toks[i] = tok.encode(batch[i].second); });
        for (std::size_t i = 0; i < batch.size(); ++i) {
            out.write(reinterpret_cast<const char*>(toks[i].data()),
                      static_cast<std::streamsize>(toks[i].size() * sizeof(TokenId)));
            store.offsets.push_back(offset);
            store.lengths.push_back(toks[i].size());
            store.ids.push_back(std::move(batch[i].first));
            offset += toks[i].size();
        }
        batch.clear();
    };
    while (reader.next(line)) {
        if (text::is_blank(line)) continue;
        if (general) {
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw Error(ErrorCode::malformed_json, e.what(), reader.line_number());
            }
            if (j.contains("ID")) {
                auto d = parse_record(line, reader.line_number());
                batch.emplace_back("general:" + d.id.str(), std::move(d.content));
            } else {
                const auto t = j.value("text", raw_content(j));
                batch.emplace_back("general_" + std::to_string(general_index), t);
            }
            ++general_index;
        } else {
            auto d = parse_record(line, reader.line_number());
            batch.emplace_back(d.id.str(), std::move(d.content));
        }
        if (batch.size() >= 256) flush();
    }
    flush();
    out.close();
    if (!out) throw Error(ErrorCode::io_failure, "cannot write " + store_path.string());
    return store;
}

int cmd_pack(Context& ctx, const PackArgs& a) {
    auto recipe = ctx.cfg.recipe;
    if (a.context_length) recipe.context_length = *a.context_length;
    if (a.fraction) recipe.mix_fraction = *a.fraction;
    if (a.epochs) recipe.epochs = *a.epochs;
    recipe.seed = ctx.cfg.seed;
    recipe.tokenizer = ctx.cfg.tokenizer;
    recipe.validate();
    ctx.require({});
    Context::require_input(a.in);
    if (!a.general.empty()) Context::require_input(a.general);
    if (recipe.mix_fraction > 0 && a.general.empty()) {
        ctx.log("pack: no --general input; mix fraction ", recipe.mix_fraction, " cannot be met");
    }
    if (ctx.dry_run()) {
        ctx.log("dry run: pack configuration valid");
        return kOk;
    }
    const fs::path dir = a.out;
    fs::create_directories(dir);
    const auto tok = make_tokenizer(ctx.cfg.tokenizer);
    auto domain = tokenize_to_store(a.in, dir / ".domain.tokens", *tok, ctx.workers(), false);
    TokenStore general;
    if (!a.general.empty()) general = tokenize_to_store(a.general, dir / ".general.tokens", *tok, ctx.workers(), true);

    std::vector<packer::ShardInfo> shards;
    std::ifstream din(domain.path, std::ios::binary);
    std::ifstream gin;
    if (!general.path.empty()) gin.open(general.path, std::ios::binary);
    for (int e = 0; e < recipe.epochs; ++e) {
        const auto epoch = static_cast<std::uint32_t>(e);
        const auto dorder = packer::epoch_order(domain.lengths.size(), recipe.seed, epoch);
        const auto gorder = packer::epoch_order(general.lengths.size(), mix64(recipe.seed), epoch);
        std::vector<std::uint64_t> dl, gl;
        for (auto i : dorder) dl.push_back(domain.lengths[i]);
        for (auto i : gorder) gl.push_back(general.lengths[i]);
        const auto plan = packer::mix_general(dl, gl, recipe.mix_fraction, mix64(recipe.seed ^ (0x100000000ULL + epoch)));
        if (plan.general_exhausted) {
            ctx.log("pack: warning: general data exhausted in epoch ", e, ", actual fraction ", plan.actual_fraction());
        }
        packer::ShardWriter writer(dir, "shard", epoch, a.shard_sequences);
        packer::SequencePacker packer(recipe.context_length, [&](packer::PackedSequence&& s) { writer.write(s); });
        for (const auto& m : plan.order) {
            if (m.general) {
                const auto i = gorder[m.index];
                packer.add(general.ids[i], general.read(gin, i));
            } else {
                const auto i = dorder[m.index];
                packer.add(domain.ids[i], domain.read(din, i));
            }
        }
        packer.finish();
        auto written = writer.finish();
        ctx.log("pack: epoch ", e, ": ", packer.sequences(), " sequences, ", packer.pad_tokens(), " pad tokens, general share ",
                plan.actual_fraction());
        shards.insert(shards.end(), written.begin(), written.end());
    }
    din.close();
    gin.close();
    fs::remove(domain.path);
    if (!general.path.empty()) fs::remove(general.path);

    const auto manifest = packer::build_recipe(recipe, shards);
    for (const auto& w : manifest.warnings) ctx.log("pack: warning: ", w);
    const fs::path manifest_path = a.manifest.empty() ? dir / "recipe.json" : fs::path(a.manifest);
    packer::emit_recipe(manifest, manifest_path);
    ctx.log("pack: ", manifest.summary());
    return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string qna;
    std::string out;
    std::string csv;
    std::string subset;
    std::vector<std::string> metrics{"ans_ppl", "semscore", "llm_eval"};
    int max_new_tokens = 100;
};

int cmd_eval(Context& ctx, const EvalArgs& a) {
    bool ppl = false, sem = false, judge = false;
    for (const auto& m : a.metrics) {
        if (m == "ans_ppl") ppl = true;
        else if (m == "semscore") sem = true;
        else if (m == "llm_eval") judge = true;
        else throw Error(ErrorCode::config_invalid, "unknown metric: " + m);
    }
    std::vector<Capability> caps;
    if (ppl) caps.push_back(Capability::scorer);
    if (sem || judge) caps.push_back(Capability::generator);
    if (sem) caps.push_back(Capability::embedder);
    if (judge) caps.push_back(Capability::judge);
    ctx.cfg.validate(caps);
    Context::require_input(a.qna);
    if (ctx.dry_run()) {
        ctx.log("dry run: eval configuration valid");
        return kOk;
    }
    auto items = qna::read_qna_file(a.qna);
    if (!a.subset.empty()) items = eval::select_subset(items, a.subset);
    if (items.empty()) throw Error(ErrorCode::invalid_argument, "no QnA items to evaluate");
    eval::EvalEndpoints eps;
    if (ppl) eps.scorer = &ctx.endpoint(Capability::scorer);
    if (sem || judge) eps.generator = &ctx.endpoint(Capability::generator);
    if (sem) eps.embedder = &ctx.endpoint(Capability::embedder);
    if (judge) eps.judge = &ctx.endpoint(Capability::judge);
    eval::EvalOptions opt;
    opt.decoding.max_new_tokens = a.max_new_tokens;
    opt.workers = ctx.workers();
    const auto report = eval::run_eval(items, eps, opt);
    write_json_file(a.out, report.to_json());
    if (!a.csv.empty()) io::write_file(a.csv, report.items_csv());
    std::istringstream table(report.summary_table());
    for (std::string line; std::getline(table, line);) ctx.log("eval: ", line);
    return kOk;
}

// ---------------------------------------------------------------------------
// stats

struct StatsArgs {
    std::vector<std::string> inputs;
    std::string json_out;
};

int cmd_stats(Context& ctx, const StatsArgs& a) {
    for (const auto& in : a.inputs) Context::require_input(in);
    ctx.require({});
    if (ctx.dry_run()) {
        ctx.log("dry run: stats inputs present");
        return kOk;
    }
    const auto tok = make_tokenizer(ctx.cfg.tokenizer);
    CorpusStats stats;
    stats.tokenizer_name = tok->name();
    for (const auto& in : a.inputs) {
        BatchReader reader(in, 1024);
        std::vector<Document> docs;
        while (reader.next(docs)) {
            std::vector<CorpusStats> parts(docs.size());
            parallel_for(docs.size(), ctx.workers(), [&](std::size_t i) {
                parts[i].tokenizer_name = tok->name();
                parts[i].add(docs[i], *tok);
            });
            for (const auto& p : parts) stats.merge(p);
        }
    }
    std::cout << format_stats_table(stats);
    if (!a.json_out.empty()) {
        ordered_json j;
        j["tokenizer"] = stats.tokenizer_name;
        ordered_json per = ordered_json::object();
        auto row = [](const CategoryStats& c) {
            ordered_json r;
            r["items"] = c.items;
            r["bytes"] = c.bytes;
            r["tokens"] = c.tokens;
            r["token_failures"] = c.token_failures;
            return r;
        };
        for (const auto cat : kAllCategories) {
            const auto it = stats.per_category.find(cat);
            per[std::string(to_string(cat))] = row(it == stats.per_category.end() ? CategoryStats{} : it->second);
        }
        j["categories"] = per;
        j["total"] = row(stats.totals());
        j["partial"] = stats.partial();
        write_json_file(a.json_out, j);
    }
    return kOk;
}

}  // namespace

int dispatch(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

int run(const std::vector<std::string>& args) {
    CLI::App app{"Telecom corpus curation and evaluation toolkit", "telekit"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("-c,--config", g.config_path, "JSON pipeline configuration");
    app.add_option("-j,--workers", g.workers, "worker threads (default: available cores)");
    app.add_option("--seed", g.seed, "random seed");
    app.add_option("--tokenizer", g.tokenizer, "local tokenizer: byte or word");
    app.add_option("--keywords", g.keywords, "keyword list");
    app.add_option("--filter-bank", g.filter_bank, "QnA regex filter bank (TSV)");
    app.add_option("--blocklist", g.blocklist, "LaTeX noise rules");
    app.add_option("--section-patterns", g.section_patterns, "section titles to drop");
    app.add_option("--transcript", g.transcript, "append gateway calls to this JSONL file");
    app.add_flag("--mock", g.mock, "use the built-in mock for every endpoint");
    app.add_flag("--dry-run", g.dry_run, "validate only, write nothing");
    app.add_flag("-q,--quiet", g.quiet, "no progress output");

    IngestArgs ingest;
    auto* s_ingest = app.add_subcommand("ingest", "raw JSONL rows to corpus records");
    s_ingest->add_option("--in", ingest.inputs, "input JSONL file(s)")->required();
    s_ingest->add_option("--out", ingest.out, "output corpus JSONL")->required();
    s_ingest->add_option("--category", ingest.category, "arxiv, standard, wiki or web")->required();
    s_ingest->add_option("--start", ingest.start, "first id index");
    s_ingest->add_option("--dedup", ingest.dedup, "content, url or none");
    s_ingest->add_option("--errors", ingest.errors, "JSONL log of rejected rows");

    CleanArgs clean;
    auto* s_clean = app.add_subcommand("clean", "LaTeX projects to clean corpus records");
    s_clean->add_option("--in", clean.in, "directory of projects (dirs, .tar, .tar.gz, .tex)")->required();
    s_clean->add_option("--out", clean.out, "output corpus JSONL")->required();
    s_clean->add_option("--category", clean.category, "arxiv or standard");
    s_clean->add_option("--start", clean.start, "first id index");
    s_clean->add_option("--report", clean.report, "per-document cleaning report JSONL");

    FilterArgs filter;
    auto* s_filter = app.add_subcommand("filter", "keyword and LLM relevance filter");
    s_filter->add_option("--in", filter.in, "input corpus JSONL")->required();
    s_filter->add_option("--out", filter.out, "kept documents JSONL")->required();
    s_filter->add_option("--verdicts", filter.verdicts, "verdict log JSONL");
    s_filter->add_option("--retry", filter.retry, "ids withheld after gateway failures");
    s_filter->add_option("--funnel", filter.funnel, "funnel counts JSON");
    s_filter->add_option("--labels", filter.labels, "human labels JSONL for precision/recall");

    AuditArgs aud;
    auto* s_audit = app.add_subcommand("audit", "cross-entropy tail report");
    s_audit->add_option("--in", aud.in, "corpus JSONL (raw side when comparing)")->required();
    s_audit->add_option("--compare", aud.compare, "cleaned corpus JSONL to compare against");
    s_audit->add_option("--out", aud.out, "report JSON")->required();
    s_audit->add_option("--hist", aud.hist, "loss histogram CSV");
    s_audit->add_option("--T", aud.T, "chunk length in tokens");

    QnaGenArgs qgen;
    auto* s_qgen = app.add_subcommand("qna-gen", "generate candidate QnA pairs");
    s_qgen->add_option("--in", qgen.in, "corpus JSONL")->required();
    s_qgen->add_option("--out", qgen.out, "candidate QnA JSONL")->required();
    s_qgen->add_option("--stats", qgen.stats, "generation counters JSON");
    s_qgen->add_option("--max-new-tokens", qgen.max_new_tokens, "generation cap");

    QnaFilterArgs qfil;
    auto* s_qfil = app.add_subcommand("qna-filter", "regex and answerability filters");
    s_qfil->add_option("--in", qfil.in, "candidate QnA JSONL")->required();
    s_qfil->add_option("--out", qfil.out, "evaluation set JSONL")->required();
    s_qfil->add_option("--stats", qfil.stats, "retention statistics JSON");
    s_qfil->add_option("--rejections", qfil.rejections, "rejected pairs with reasons JSONL");
    s_qfil->add_option("--verdicts", qfil.verdicts, "answerability verdicts JSONL");

    PackArgs pack;
    auto* s_pack = app.add_subcommand("pack", "packed training shards and recipe manifest");
    s_pack->add_option("--in", pack.in, "corpus JSONL")->required();
    s_pack->add_option("--general", pack.general, "general-purpose JSONL (records or {\"text\": ...})");
    s_pack->add_option("--out", pack.out, "shard directory")->required();
    s_pack->add_option("--manifest", pack.manifest, "manifest path (default <out>/recipe.json)");
    s_pack->add_option("-L,--context-length", pack.context_length, "sequence length");
    s_pack->add_option("--fraction", pack.fraction, "general data fraction");
    s_pack->add_option("--epochs", pack.epochs, "epochs");
    s_pack->add_option("--shard-sequences", pack.shard_sequences, "sequences per shard");

    EvalArgs ev;
    auto* s_eval = app.add_subcommand("eval", "Ans-PPL, SemScore and LLM-Eval");
    s_eval->add_option("--qna", ev.qna, "QnA JSONL")->required();
    s_eval->add_option("--out", ev.out, "report JSON")->required();
    s_eval->add_option("--csv", ev.csv, "per-item CSV");
    s_eval->add_option("--subset", ev.subset, "only items whose ID starts with this prefix");
    s_eval->add_option("--metrics", ev.metrics, "ans_ppl, semscore, llm_eval")->delimiter(',');
    s_eval->add_option("--max-new-tokens", ev.max_new_tokens, "generation cap");

    StatsArgs st;
    auto* s_stats = app.add_subcommand("stats", "per-category corpus statistics");
    s_stats->add_option("--in", st.inputs, "corpus JSONL file(s)")->required();
    s_stats->add_option("--json", st.json_out, "also write the statistics as JSON");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        Context ctx(g);
        if (s_ingest->parsed()) return cmd_ingest(ctx, ingest);
        if (s_clean->parsed()) return cmd_clean(ctx, clean);
        if (s_filter->parsed()) return cmd_filter(ctx, filter);
        if (s_audit->parsed()) return cmd_audit(ctx, aud);
        if (s_qgen->parsed()) return cmd_qna_gen(ctx, qgen);
        if (s_qfil->parsed()) return cmd_qna_filter(ctx, qfil);
        if (s_pack->parsed()) return cmd_pack(ctx, pack);
        if (s_eval->parsed()) return cmd_eval(ctx, ev);
        if (s_stats->parsed()) return cmd_stats(ctx, st);
    } catch (const Error& e) {
        std::cerr << "telekit: error [" << to_string(e.code()) << "]: " << e.what();
        if (e.line()) std::cerr << " (line " << *e.line() << ")";
        std::cerr << '\n';
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "telekit: error [io_failure]: " << e.what() << '\n';
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "telekit: error: " << e.what() << '\n';
        return kFailure;
    }
    return kUsage;
}

}  // namespace telekit::cli
