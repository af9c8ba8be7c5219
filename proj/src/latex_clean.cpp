#include <algorithm>

#include <json.hpp>

#include "latex_scan.hpp"
#include "telekit/latex.hpp"

namespace telekit::latex {

using namespace detail;

namespace {

void append_unique(std::vector<std::string>& into, const std::vector<std::string>& from) {
    for (const auto& v : from) {
        if (std::find(into.begin(), into.end(), v) == into.end()) into.push_back(v);
    }
}

std::string title_text(std::string_view raw) {
    std::string t;
    std::size_t i = 0;
    while (i < raw.size()) {
        if (raw[i] == '\\') {
            const auto cs = read_control(raw, i);
            if (!cs.word && cs.name == "\\") {
                t.push_back(' ');
            } else if (cs.word && (cs.name == "newline" || cs.name == "linebreak")) {
                t.push_back(' ');
            } else {
                t.append(raw.substr(i, cs.end - i));
            }
            i = cs.end;
            continue;
        }
        t.push_back(raw[i++]);
    }
    return squash_spaces(t);
}

}  // namespace

CleanReport& CleanReport::merge(const CleanReport& o) {
    if (root.empty()) root = o.root;
    comments_stripped += o.comments_stripped;
    includes_resolved += o.includes_resolved;
    macro_definitions_removed += o.macro_definitions_removed;
    macros_expanded += o.macros_expanded;
    environments_removed += o.environments_removed;
    commands_removed += o.commands_removed;
    citations_unified += o.citations_unified;
    sections_dropped += o.sections_dropped;
    unbalanced_environments += o.unbalanced_environments;
    append_unique(unexpanded_macros, o.unexpanded_macros);
    append_unique(missing_includes, o.missing_includes);
    append_unique(flags, o.flags);
    return *this;
}

std::string CleanReport::to_json() const {
    nlohmann::ordered_json j;
    j["root"] = root;
    j["comments_stripped"] = comments_stripped;
    j["includes_resolved"] = includes_resolved;
    j["macro_definitions_removed"] = macro_definitions_removed;
    j["macros_expanded"] = macros_expanded;
    j["environments_removed"] = environments_removed;
    j["commands_removed"] = commands_removed;
    j["citations_unified"] = citations_unified;
    j["sections_dropped"] = sections_dropped;
    j["unbalanced_environments"] = unbalanced_environments;
    j["unexpanded_macros"] = unexpanded_macros;
    j["missing_includes"] = missing_includes;
    j["flags"] = flags;
    return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

PreambleResult remove_preamble(std::string_view s) {
    PreambleResult r;
    // Pull every \title out of the text; the first one names the document.
    std::string rest;
    rest.reserve(s.size());
    std::size_t i = 0;
    std::optional<std::size_t> doc_begin;
    std::optional<std::size_t> doc_end;
    while (i < s.size()) {
        if (s[i] == '$') {
            const auto m = math_span_end(s, i);
            const auto stop = m == npos ? i + 1 : m;
            rest.append(s.substr(i, stop - i));
            i = stop;
            continue;
        }
        if (s[i] != '\\') {
            rest.push_back(s[i++]);
            continue;
        }
        auto skip = verbatim_span_end(s, i);
        if (skip == npos) skip = math_span_end(s, i);
        if (skip != npos) {
            rest.append(s.substr(i, skip - i));
            i = skip;
            continue;
        }
        const auto cs = read_control(s, i);
        if (cs.word && cs.name == "title") {
            std::size_t p = cs.end;
            if (p < s.size() && s[p] == '*') ++p;
            p = skip_spaces(s, p);
            if (p < s.size() && s[p] == '[') {
                const auto close = match_bracket(s, p);
                if (close != npos) p = skip_spaces(s, close + 1);
            }
            if (p < s.size() && s[p] == '{') {
                const auto close = match_group(s, p);
                if (close != npos) {
                    if (!r.title) {
                        auto t = title_text(s.substr(p + 1, close - p - 1));
                        if (!t.empty()) r.title = std::move(t);
                    }
                    const bool whole = line_is_blank_so_far(rest);
                    i = eat_line_end(s, close + 1, rest, whole);
                    continue;
                }
            }
        }
        if (cs.word && (cs.name == "begin" || cs.name == "end")) {
            const auto tag = read_env_name(s, cs.end);
            if (tag && tag->name == "document") {
                if (cs.name == "begin" && !doc_begin) {
                    rest.append(s.substr(i, tag->end - i));
                    doc_begin = rest.size();
                    i = tag->end;
                    continue;
                }
                if (cs.name == "end" && doc_begin && !doc_end) doc_end = rest.size();
            }
        }
        rest.append(s.substr(i, cs.end - i));
        i = cs.end;
    }
    std::string_view body = rest;
    if (doc_begin) {
        const std::size_t stop = doc_end ? *doc_end : rest.size();
        body = std::string_view(rest).substr(*doc_begin, stop - *doc_begin);
    }
    if (r.title) {
        r.text = *r.title + "\n\n";
        r.text.append(body);
    } else {
        r.text = std::string(body);
    }
    return r;
}

std::string normalize_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool space = false;
    int newlines = 0;
    auto flush = [&]() {
        if (!out.empty()) {
            if (newlines > 0) {
                out.append(static_cast<std::size_t>(std::min(newlines, 2)), '\n');
            } else if (space) {
                out.push_back(' ');
            }
        }
        space = false;
        newlines = 0;
    };
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
            space = true;
            ++i;
            continue;
        }
        if (c == '\n') {
            ++newlines;
            space = false;
            ++i;
            continue;
        }
        std::size_t span = npos;
        if (c == '$') {
            span = math_span_end(s, i);
        } else if (c == '\\') {
            span = verbatim_span_end(s, i);
            if (span == npos) span = math_span_end(s, i);
            if (span == npos) span = read_control(s, i).end;
        }
        flush();
        if (span == npos) {
            out.push_back(c);
            ++i;
        } else {
            out.append(s.substr(i, span - i));
            i = span;
        }
    }
    return out;
}

CleanResult clean_document(const LatexProject& project, const CleanOptions& options) {
    CleanResult result;
    CleanReport& rep = result.report;

    auto flat = resolve_and_flatten(project);
    rep.root = flat.root;
    rep.comments_stripped = flat.comments;
    rep.includes_resolved = flat.order.empty() ? 0 : flat.order.size() - 1;
    rep.missing_includes = flat.missing;

    auto macros = expand_macros(flat.text, options.macro_depth_bound);
    rep.macro_definitions_removed = macros.definitions_removed;
    rep.macros_expanded = macros.expansions;
    rep.unexpanded_macros = macros.unexpanded;

    auto sections = drop_sections(macros.text, options.section_patterns);
    rep.sections_dropped = sections.dropped;

    {
        const std::string_view src = sections.text;
        const auto open = src.find("\\begin{abstract}");
        const auto close = open == std::string_view::npos ? open : src.find("\\end{abstract}", open);
        if (close != std::string_view::npos) {
            const auto body = src.substr(open + 16, close - open - 16);
            auto abs = normalize_whitespace(unify_refs(strip_noise(body, options.blocklist).text).text);
            if (!abs.empty()) result.abstract = std::move(abs);
        }
    }

    auto noise = strip_noise(sections.text, options.blocklist);
    rep.environments_removed = noise.environments_removed;
    rep.commands_removed = noise.commands_removed;
    rep.unbalanced_environments = noise.unbalanced;

    auto refs = unify_refs(noise.text);
    rep.citations_unified = refs.rewritten;

    auto pre = remove_preamble(refs.text);
    result.text = normalize_whitespace(pre.text);
    result.title = pre.title;

    if (!flat.missing.empty()) rep.flags.push_back("missing-include");
    if (!macros.unexpanded.empty()) rep.flags.push_back("unexpanded-macro");
    if (noise.unbalanced > 0) rep.flags.push_back("unbalanced-environment");
    if (!pre.title) rep.flags.push_back("no-title");
    if (find_residue(result.text, options.blocklist)) rep.flags.push_back("residue");
    return result;
}

}  // namespace telekit::latex
