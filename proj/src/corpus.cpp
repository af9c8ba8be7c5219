#include "telekit/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "telekit/hash.hpp"
#include "telekit/io.hpp"
#include "telekit/text.hpp"

namespace telekit {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Category c) {
    switch (c) {
        case Category::arxiv: return "arxiv";
        case Category::standard: return "standard";
        case Category::wiki: return "wiki";
        case Category::web: return "web";
    }
    return "unknown";
}

std::optional<Category> parse_category(std::string_view s) {
    for (Category c : kAllCategories) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

std::string DocId::str() const {
    std::string out(to_string(category));
    out.push_back('_');
    out += std::to_string(index);
    return out;
}

bool DocId::is_valid(std::string_view s) {
    const auto us = s.rfind('_');
    if (us == std::string_view::npos || us + 1 >= s.size()) return false;
    if (!parse_category(s.substr(0, us))) return false;
    const std::string_view digits = s.substr(us + 1);
    if (digits.size() > 19) return false;
    return std::all_of(digits.begin(), digits.end(),
                       [](char ch) { return ch >= '0' && ch <= '9'; });
}

DocId DocId::parse(std::string_view s) {
    if (!is_valid(s)) {
        throw Error(ErrorCode::invalid_id, "identifier does not match <category>_<index>: " +
                                               std::string(s));
    }
    const auto us = s.rfind('_');
    DocId id;
    id.category = *parse_category(s.substr(0, us));
    const std::string_view digits = s.substr(us + 1);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id.index);
    if (ec != std::errc{}) {
        throw Error(ErrorCode::invalid_id, "identifier index out of range: " + std::string(s));
    }
    return id;
}

Category category_of(const Metadata& m) {
    return static_cast<Category>(m.index());
}

std::optional<std::string_view> metadata_url(const Metadata& m) {
    if (const auto* w = std::get_if<WikiMeta>(&m)) return std::string_view(w->url);
    if (const auto* w = std::get_if<WebMeta>(&m)) return std::string_view(w->url);
    return std::nullopt;
}

namespace {

void require_non_empty(const std::string& value, std::string_view key) {
    if (text::is_blank(value)) {
        throw Error(ErrorCode::invalid_metadata, "metadata field " + std::string(key) + " is empty");
    }
}

std::vector<std::string_view> mandated_keys(Category c) {
    switch (c) {
        case Category::arxiv: return {"Arxiv_id", "Title", "Abstract"};
        case Category::standard: return {"Series", "Release", "File_name"};
        case Category::wiki: return {"Title", "Url"};
        case Category::web: return {"Url"};
    }
    return {};
}

std::string metadata_string(const json& meta, std::string_view key) {
    const auto it = meta.find(key);
    if (it == meta.end()) {
        throw Error(ErrorCode::missing_field, "metadata field missing: " + std::string(key));
    }
    if (!it->is_string()) {
        throw Error(ErrorCode::invalid_metadata, "metadata field must be a string: " + std::string(key));
    }
    return it->get<std::string>();
}

std::int64_t metadata_integer(const json& meta, std::string_view key) {
    const auto it = meta.find(key);
    if (it == meta.end()) {
        throw Error(ErrorCode::missing_field, "metadata field missing: " + std::string(key));
    }
    if (it->is_number_integer()) return it->get<std::int64_t>();
    if (it->is_string()) {
        // Some exports carry series/release as decimal strings.
        const std::string s = it->get<std::string>();
        std::int64_t v = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec == std::errc{} && ptr == s.data() + s.size() && !s.empty()) return v;
    }
    throw Error(ErrorCode::invalid_metadata, "metadata field must be an integer: " + std::string(key));
}

Metadata parse_metadata(Category c, const json& meta) {
    if (!meta.is_object()) throw Error(ErrorCode::invalid_metadata, "Metadata must be an object");
    const auto keys = mandated_keys(c);
    for (const auto& [k, v] : meta.items()) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
            throw Error(ErrorCode::invalid_metadata,
                        "unexpected metadata field for " + std::string(to_string(c)) + ": " + k);
        }
    }
    switch (c) {
        case Category::arxiv:
            return ArxivMeta{metadata_string(meta, "Arxiv_id"), metadata_string(meta, "Title"),
                             metadata_string(meta, "Abstract")};
        case Category::standard:
            return StandardMeta{metadata_integer(meta, "Series"), metadata_integer(meta, "Release"),
                                metadata_string(meta, "File_name")};
        case Category::wiki:
            return WikiMeta{metadata_string(meta, "Title"), metadata_string(meta, "Url")};
        case Category::web:
            return WebMeta{metadata_string(meta, "Url")};
    }
    throw Error(ErrorCode::unknown_category, "unknown category");
}

ordered_json metadata_json(const Metadata& m) {
    ordered_json j = ordered_json::object();
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, ArxivMeta>) {
                j["Arxiv_id"] = v.arxiv_id;
                j["Title"] = v.title;
                j["Abstract"] = v.abstract;
            } else if constexpr (std::is_same_v<T, StandardMeta>) {
                j["Series"] = v.series;
                j["Release"] = v.release;
                j["File_name"] = v.file_name;
            } else if constexpr (std::is_same_v<T, WikiMeta>) {
                j["Title"] = v.title;
                j["Url"] = v.url;
            } else {
                j["Url"] = v.url;
            }
        },
        m);
    return j;
}

const json& require_field(const json& obj, std::string_view key) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw Error(ErrorCode::missing_field, "missing field: " + std::string(key));
    return *it;
}

}  // namespace

void validate(const Document& doc) {
    if (category_of(doc.metadata) != doc.id.category) {
        throw Error(ErrorCode::invalid_metadata, "metadata shape does not match category " +
                                                     std::string(to_string(doc.id.category)));
    }
    if (text::is_blank(doc.content)) {
        throw Error(ErrorCode::empty_content, "content is empty: " + doc.id.str());
    }
    std::visit(
        [](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, ArxivMeta>) {
                require_non_empty(v.arxiv_id, "Arxiv_id");
                require_non_empty(v.title, "Title");
                require_non_empty(v.abstract, "Abstract");
            } else if constexpr (std::is_same_v<T, StandardMeta>) {
                if (v.series < 0 || v.release < 0) {
                    throw Error(ErrorCode::invalid_metadata, "series/release must be non-negative");
                }
                require_non_empty(v.file_name, "File_name");
            } else if constexpr (std::is_same_v<T, WikiMeta>) {
                require_non_empty(v.title, "Title");
                require_non_empty(v.url, "Url");
            } else {
                require_non_empty(v.url, "Url");
            }
        },
        doc.metadata);
}

Document parse_record(std::string_view line, std::size_t line_number) {
    try {
        const std::string clean = text::sanitize_utf8(line);
        json j = json::parse(clean, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded() || !j.is_object()) {
            throw Error(ErrorCode::malformed_json, "not a JSON object");
        }
        const json& id_field = require_field(j, "ID");
        const json& cat_field = require_field(j, "Category");
        const json& content_field = require_field(j, "Content");
        const json& meta_field = require_field(j, "Metadata");
        if (!cat_field.is_string()) throw Error(ErrorCode::unknown_category, "Category must be a string");
        const auto category = parse_category(cat_field.get<std::string>());
        if (!category) {
            throw Error(ErrorCode::unknown_category, "unknown category: " + cat_field.get<std::string>());
        }
        if (!id_field.is_string()) throw Error(ErrorCode::invalid_id, "ID must be a string");
        Document doc;
        doc.id = DocId::parse(id_field.get<std::string>());
        if (doc.id.category != *category) {
            throw Error(ErrorCode::id_category_mismatch,
                        "ID " + id_field.get<std::string>() + " does not match category " +
                            std::string(to_string(*category)));
        }
        if (!content_field.is_string()) throw Error(ErrorCode::empty_content, "Content must be a string");
        doc.content = content_field.get<std::string>();
        doc.metadata = parse_metadata(*category, meta_field);
        validate(doc);
        return doc;
    } catch (const Error& e) {
        if (line_number == 0) throw;
        throw Error(e.code(), e.what(), line_number);
    }
}

std::string serialize_record(const Document& doc) {
    ordered_json j = ordered_json::object();
    j["ID"] = doc.id.str();
    j["Category"] = std::string(to_string(doc.id.category));
    j["Content"] = doc.content;
    j["Metadata"] = metadata_json(doc.metadata);
    return j.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
}

std::size_t write_records(std::span<const Document> docs, std::ostream& sink) {
    std::size_t written = 0;
    for (const Document& doc : docs) {
        const std::string row = serialize_record(doc);
        sink.write(row.data(), static_cast<std::streamsize>(row.size()));
        sink.put('\n');
        if (!sink) throw WriteError("write failed after " + std::to_string(written) + " records", written);
        ++written;
    }
    sink.flush();
    if (!sink) throw WriteError("flush failed", written);
    return written;
}

void read_records(const std::filesystem::path& path,
                  const std::function<void(Document&&)>& on_record,
                  const std::function<void(const RecordError&)>& on_error) {
    io::LineReader reader(path);
    std::string line;
    while (reader.next(line)) {
        if (text::is_blank(line)) continue;
        try {
            on_record(parse_record(line, reader.line_number()));
        } catch (const Error& e) {
            if (!on_error) throw;
            on_error(RecordError{reader.line_number(), e.code(), e.what()});
        }
    }
}

std::vector<Document> read_all_records(const std::filesystem::path& path) {
    std::vector<Document> docs;
    read_records(path, [&](Document&& d) { docs.push_back(std::move(d)); });
    return docs;
}

void write_records_file(const std::filesystem::path& path, std::span<const Document> docs) {
    io::LineWriter w(path);
    for (const Document& d : docs) w.write_line(serialize_record(d));
    w.close();
}

// ---------------------------------------------------------------------------

Deduplicator::Deduplicator(DedupKey key, ContentFetcher fetcher)
    : key_(key), fetcher_(std::move(fetcher)) {}

DedupOutcome Deduplicator::offer(const Document& doc) {
    const std::uint64_t ordinal = ordinal_++;
    if (key_ == DedupKey::metadata_url) {
        const auto url = metadata_url(doc.metadata);
        if (!url) {
            ++flagged_;
            return DedupOutcome::flagged_keep;
        }
        if (!urls_.emplace(std::string(*url), ordinal).second) {
            ++dropped_;
            return DedupOutcome::drop;
        }
        return DedupOutcome::keep;
    }

    std::string normalized = text::nfc(doc.content);
    const std::uint64_t h = fnv1a64(normalized);
    auto& bucket = by_hash_[h];
    for (std::uint64_t earlier : bucket) {
        const std::string other = fetcher_ ? text::nfc(fetcher_(earlier)) : retained_.at(earlier);
        if (other == normalized) {
            ++dropped_;
            return DedupOutcome::drop;
        }
    }
    bucket.push_back(ordinal);
    if (!fetcher_) retained_.emplace(ordinal, std::move(normalized));
    return DedupOutcome::keep;
}

DedupResult dedup_by_key(std::span<const Document> docs, DedupKey key) {
    DedupResult result;
    Deduplicator dedup(key);
    for (const Document& d : docs) {
        switch (dedup.offer(d)) {
            case DedupOutcome::keep: result.kept.push_back(d); break;
            case DedupOutcome::flagged_keep:
                result.kept.push_back(d);
                result.flagged.push_back(d.id);
                break;
            case DedupOutcome::drop: break;
        }
    }
    result.dropped = dedup.dropped();
    return result;
}

// ---------------------------------------------------------------------------

CategoryStats& CategoryStats::operator+=(const CategoryStats& o) {
    items += o.items;
    bytes += o.bytes;
    tokens += o.tokens;
    token_failures += o.token_failures;
    return *this;
}

CategoryStats CorpusStats::totals() const {
    CategoryStats t;
    for (const auto& [c, s] : per_category) t += s;
    return t;
}

bool CorpusStats::partial() const { return totals().token_failures > 0; }

void CorpusStats::add(const Document& doc, const Tokenizer& tokenizer) {
    CategoryStats& s = per_category[doc.category()];
    ++s.items;
    s.bytes += doc.content.size();
    try {
        s.tokens += tokenizer.encode(doc.content).size();
    } catch (const std::exception&) {
        ++s.token_failures;
    }
}

CorpusStats& CorpusStats::merge(const CorpusStats& other) {
    for (const auto& [c, s] : other.per_category) per_category[c] += s;
    return *this;
}

CorpusStats corpus_stats(std::span<const Document> docs, const Tokenizer& tokenizer) {
    CorpusStats stats;
    stats.tokenizer_name = tokenizer.name();
    for (Category c : kAllCategories) stats.per_category[c];
    for (const Document& d : docs) stats.add(d, tokenizer);
    return stats;
}

namespace {

std::string trim_decimal(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s = buf;
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

}  // namespace

std::string humanize_count(std::uint64_t n) {
    const double v = static_cast<double>(n);
    if (n < 1000) return std::to_string(n);
    if (n < 1000000) return trim_decimal(v / 1e3) + "k";
    if (n < 1000000000) return trim_decimal(v / 1e6) + "M";
    return trim_decimal(v / 1e9) + "B";
}

std::string humanize_bytes(std::uint64_t n) {
    const double v = static_cast<double>(n);
    if (n < 1000) return std::to_string(n) + " Bs";
    if (n < 1000000) return trim_decimal(v / 1e3) + " KBs";
    if (n < 1000000000) return trim_decimal(v / 1e6) + " MBs";
    return trim_decimal(v / 1e9) + " GBs";
}

std::string format_stats_table(const CorpusStats& stats) {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-10s %10s %12s %12s\n", "", "Items", "Size", "Tokens");
    out << buf;
    const auto row = [&](std::string_view name, const CategoryStats& s) {
        std::string tokens = humanize_count(s.tokens);
        if (s.token_failures > 0) tokens += "*";
        std::snprintf(buf, sizeof buf, "%-10s %10s %12s %12s\n", std::string(name).c_str(),
                      humanize_count(s.items).c_str(), humanize_bytes(s.bytes).c_str(),
                      tokens.c_str());
        out << buf;
    };
    for (Category c : kAllCategories) {
        const auto it = stats.per_category.find(c);
        row(to_string(c), it == stats.per_category.end() ? CategoryStats{} : it->second);
    }
    row("total", stats.totals());
    out << "tokenizer: " << stats.tokenizer_name;
    if (stats.partial()) out << " (* partial: tokenizer failed on some records)";
    out << "\n";
    return out.str();
}

}  // namespace telekit
