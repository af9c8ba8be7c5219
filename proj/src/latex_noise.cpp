#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <sstream>

#include "latex_scan.hpp"
#include "telekit/error.hpp"
#include "telekit/io.hpp"
#include "telekit/latex.hpp"
#include "telekit/text.hpp"

namespace telekit::latex {

using namespace detail;

namespace {

const std::set<std::string, std::less<>> kDefinitionCommands = {
    "newcommand", "renewcommand", "providecommand", "DeclareRobustCommand", "def", "gdef", "edef",
    "xdef", "let", "DeclareMathOperator", "newenvironment", "renewenvironment"};

const std::set<std::string, std::less<>> kCiteCommands = {
    "cite", "citep", "citet", "citealp", "citealt", "citeauthor", "citeyear", "citeyearpar",
    "citenum", "parencite", "textcite", "autocite", "footcite", "smartcite", "supercite",
    "fullcite", "Cite", "Citep", "Citet", "Citealp", "Citealt", "Parencite", "Textcite", "Autocite"};

const std::set<std::string, std::less<>> kRefCommands = {
    "ref", "eqref", "cref", "Cref", "autoref", "Autoref", "pageref", "vref", "Vref", "nameref",
    "cpageref", "Cpageref", "labelcref", "subref", "fref", "Fref"};

const std::set<std::string, std::less<>> kLabelCommands = {"label", "zlabel", "ltxlabel"};

const std::map<std::string, int, std::less<>> kSectionLevels = {
    {"part", -1}, {"chapter", 0}, {"section", 1}, {"subsection", 2},
    {"subsubsection", 3}, {"paragraph", 4}, {"subparagraph", 5}};

std::vector<std::string> split_ws(std::string_view line) {
    std::vector<std::string> out;
    for (auto w : text::words(line)) out.emplace_back(w);
    return out;
}

int parse_count(const std::string& tok, std::size_t line_no) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size() || v < 0 || v > 9) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::config_invalid, "blocklist: bad argument count '" + tok + "'", line_no);
    }
}

// Star, then optional [..] arguments and up to `nargs` {..} groups.
struct CommandArgs {
    std::size_t end = 0;
    std::vector<std::pair<std::size_t, std::size_t>> groups;  // inner [begin, end)
    std::optional<std::pair<std::size_t, std::size_t>> option;  // first [..], inner
};

CommandArgs read_command_args(std::string_view s, std::size_t pos, int nargs, std::size_t limit) {
    CommandArgs a;
    std::size_t p = pos;
    if (p < limit && s[p] == '*') ++p;
    a.end = p;
    int taken = 0;
    while (true) {
        const std::size_t q = std::min(skip_spaces(s, p), limit);
        if (q >= limit) break;
        if (s[q] == '[') {
            const auto close = match_bracket(s, q, limit);
            if (close == npos) break;
            if (!a.option) a.option.emplace(q + 1, close);
            p = a.end = close + 1;
            continue;
        }
        if (s[q] == '{' && taken < nargs) {
            const auto close = match_group(s, q, limit);
            if (close == npos) break;
            a.groups.emplace_back(q + 1, close);
            ++taken;
            p = a.end = close + 1;
            continue;
        }
        break;
    }
    return a;
}

class NoiseStripper {
public:
    NoiseStripper(std::string_view s, const Blocklist& bl, NoiseResult& r) : s_(s), bl_(bl), r_(r) {}

    std::string process(std::size_t begin, std::size_t end) {
        std::string out;
        out.reserve(end - begin);
        std::size_t i = begin;
        while (i < end) {
            const char c = s_[i];
            if (c == '$') {
                const auto m = math_span_end(s_, i, end);
                if (m != npos) {
                    out.append(s_.substr(i, m - i));
                    i = m;
                } else {
                    out.push_back(c);
                    ++i;
                }
                continue;
            }
            if (c == '~') {
                out.push_back(' ');
                ++i;
                continue;
            }
            if (c == '{') {
                const auto close = match_group(s_, i, end);
                if (close == npos) {
                    out.push_back(c);
                    ++i;
                    continue;
                }
                const bool bound = !out.empty() && (out.back() == ']' || out.back() == '}' ||
                                                    ends_with_control_word(out) || ends_with_control_symbol(out));
                if (bound) {
                    out.push_back('{');
                    out += process(i + 1, close);
                    out.push_back('}');
                } else {
                    out += process(i + 1, close);
                }
                i = close + 1;
                continue;
            }
            if (c != '\\') {
                out.push_back(c);
                ++i;
                continue;
            }
            i = control(out, i, end);
        }
        return out;
    }

private:
    static bool ends_with_control_symbol(const std::string& out) {
        if (out.size() < 2) return false;
        const char last = out.back();
        if (is_letter(last)) return false;
        std::size_t slashes = 0;
        for (std::size_t k = out.size() - 1; k > 0 && out[k - 1] == '\\'; --k) ++slashes;
        return slashes % 2 == 1;
    }

    std::size_t control(std::string& out, std::size_t i, std::size_t end) {
        const auto verb = verbatim_span_end(s_, i, end);
        if (verb != npos) {
            out.append(s_.substr(i, verb - i));
            return verb;
        }
        const auto math = math_span_end(s_, i, end);
        if (math != npos) {
            out.append(s_.substr(i, math - i));
            return math;
        }
        const auto cs = read_control(s_, i);
        if (cs.word && (cs.name == "begin" || cs.name == "end")) {
            const auto tag = read_env_name(s_, cs.end);
            if (tag && tag->end <= end) {
                const NoiseRule* rule = bl_.find_env(tag->name);
                if (!rule) {
                    out.append(s_.substr(i, tag->end - i));
                    return tag->end;
                }
                if (cs.name == "end") {  // stray closer of a noise environment
                    ++r_.unbalanced;
                    return tag->end;
                }
                return environment(out, *tag, *rule, end);
            }
        }
        if (!cs.word) {
            const std::string_view sym = cs.name;
            if (sym == "," || sym == ";" || sym == ":" || sym == " " || sym == "\n") {
                out.push_back(' ');
                return cs.end;
            }
            if (sym == "!" || sym == "/" || sym == "@" || sym == "-") return cs.end;
        }
        const NoiseRule* rule = bl_.find_command(cs.name);
        if (!rule) {
            out.append(s_.substr(i, cs.end - i));
            return cs.end;
        }
        return command(out, cs, *rule, end);
    }

    std::size_t environment(std::string& out, const EnvTag& tag, const NoiseRule& rule,
                            std::size_t end) {
        const bool whole = line_is_blank_so_far(out);
        const std::string name(tag.name);
        const auto close = find_env_end(s_, tag.end, name, end);
        ++r_.environments_removed;
        if (rule.kind == RuleKind::env_drop) {
            if (!close) {
                ++r_.unbalanced;
                return end;
            }
            if (whole) trim_line_tail(out);
            return eat_line_end(s_, close->end, out, whole);
        }
        const auto args = read_command_args(s_, tag.end, rule.nargs, end);
        const std::size_t body_end = close ? close->begin : end;
        if (!close) ++r_.unbalanced;
        if (rule.kind == RuleKind::env_heading) out += "\n\n" + rule.title + "\n\n";
        out += process(std::min(args.end, body_end), body_end);
        return close ? close->end : end;
    }

    std::size_t command(std::string& out, const ControlSeq& cs, const NoiseRule& rule,
                        std::size_t end) {
        ++r_.commands_removed;
        switch (rule.kind) {
            case RuleKind::cmd_newline: {
                const auto args = read_command_args(s_, cs.end, 0, end);
                std::size_t next = args.end;
                while (next < end && (s_[next] == ' ' || s_[next] == '\t')) ++next;
                if (next < end && s_[next] == '\n') ++next;
                auto tail = out.find_last_not_of(" \t");
                if (tail != std::string::npos && out[tail] != '\n') out.push_back('\n');
                if (rule.keep == 1 && args.option) {
                    auto label = squash_spaces(process(args.option->first, args.option->second));
                    if (!label.empty()) out += label + " ";
                }
                return next;
            }
            case RuleKind::cmd_heading: {
                const auto args = read_command_args(s_, cs.end, 1, end);
                if (args.groups.empty()) return args.end;
                out += "\n\n";
                out += squash_spaces(process(args.groups[0].first, args.groups[0].second));
                out += "\n\n";
                return args.end;
            }
            case RuleKind::cmd_keep: {
                const auto args = read_command_args(s_, cs.end, rule.nargs, end);
                for (std::size_t g = 0; g < args.groups.size(); ++g) {
                    if (rule.keep == 0 || static_cast<int>(g) + 1 == rule.keep) {
                        if (rule.keep == 0 && g > 0) out.push_back(' ');
                        out += process(args.groups[g].first, args.groups[g].second);
                    }
                }
                return args.end;
            }
            default: {
                const bool whole = line_is_blank_so_far(out);
                const auto args = read_command_args(s_, cs.end, rule.nargs, end);
                std::size_t next = args.end;
                if (whole) {
                    const auto eaten = eat_line_end(s_, next, out, true);
                    if (eaten != next) return eaten;
                }
                if (cs.word && rule.nargs == 0 && args.end == cs.end) {
                    while (next < end && (s_[next] == ' ' || s_[next] == '\t')) ++next;
                    if (next > args.end && next < end && !out.empty() &&
                        !std::isspace(static_cast<unsigned char>(out.back())) &&
                        std::isalnum(static_cast<unsigned char>(s_[next]))) {
                        out.push_back(' ');
                    }
                }
                return next;
            }
        }
    }

    std::string_view s_;
    const Blocklist& bl_;
    NoiseResult& r_;
};

// Applies `fn` to every control word outside math and verbatim spans.
// fn returns the replacement end position (or npos to copy the word as is).
template <typename Fn>
std::string rewrite_controls(std::string_view s, Fn&& fn) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (c == '$') {
            const auto m = math_span_end(s, i);
            const auto stop = m == npos ? i + 1 : m;
            out.append(s.substr(i, stop - i));
            i = stop;
            continue;
        }
        if (c != '\\') {
            out.push_back(c);
            ++i;
            continue;
        }
        auto skip = verbatim_span_end(s, i);
        if (skip == npos) skip = math_span_end(s, i);
        if (skip != npos) {
            out.append(s.substr(i, skip - i));
            i = skip;
            continue;
        }
        const auto cs = read_control(s, i);
        const auto next = cs.word ? fn(out, i, cs) : npos;
        if (next == npos) {
            out.append(s.substr(i, cs.end - i));
            i = cs.end;
        } else {
            i = next;
        }
    }
    return out;
}

std::string join_keys(std::string_view raw) {
    std::string keys;
    std::size_t start = 0;
    while (start <= raw.size()) {
        auto comma = raw.find(',', start);
        if (comma == std::string_view::npos) comma = raw.size();
        const auto key = text::trim(raw.substr(start, comma - start));
        if (!key.empty()) {
            if (!keys.empty()) keys.push_back(',');
            keys += key;
        }
        start = comma + 1;
    }
    return keys;
}

struct Heading {
    std::size_t begin = 0;
    int level = 0;
    std::string title;
    bool appendix = false;
};

std::vector<Heading> find_headings(std::string_view s) {
    std::vector<Heading> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '$') {
            const auto m = math_span_end(s, i);
            i = m == npos ? i + 1 : m;
            continue;
        }
        if (s[i] != '\\') {
            ++i;
            continue;
        }
        auto skip = verbatim_span_end(s, i);
        if (skip == npos) skip = math_span_end(s, i);
        if (skip != npos) {
            i = skip;
            continue;
        }
        const auto cs = read_control(s, i);
        if (cs.word) {
            if (const auto it = kSectionLevels.find(cs.name); it != kSectionLevels.end()) {
                const auto args = read_command_args(s, cs.end, 1, s.size());
                if (!args.groups.empty()) {
                    const auto [b, e] = args.groups[0];
                    out.push_back({i, it->second, squash_spaces(s.substr(b, e - b)), false});
                    i = args.end;
                    continue;
                }
            } else if (cs.name == "appendix") {
                out.push_back({i, -2, "Appendix", true});
            } else if (cs.name == "end") {
                const auto tag = read_env_name(s, cs.end);
                if (tag && tag->name == "document") out.push_back({i, -3, "", false});
            }
        }
        i = cs.end;
    }
    return out;
}

}  // namespace

Blocklist Blocklist::parse(std::string_view text) {
    Blocklist bl;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = text::trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        auto tok = split_ws(trimmed);
        NoiseRule rule;
        const std::string& kind = tok[0];
        if (tok.size() < 2) throw Error(ErrorCode::config_invalid, "blocklist: missing name", line_no);
        std::string name = tok[1];
        const bool is_cmd = kind.starts_with("cmd-");
        if (is_cmd) {
            if (name.size() < 2 || name[0] != '\\') {
                throw Error(ErrorCode::config_invalid, "blocklist: command must start with '\\': " + name, line_no);
            }
            name.erase(0, 1);
        }
        rule.name = name;
        if (kind == "env-drop") {
            rule.kind = RuleKind::env_drop;
        } else if (kind == "env-unwrap") {
            rule.kind = RuleKind::env_unwrap;
            if (tok.size() > 2) rule.nargs = parse_count(tok[2], line_no);
        } else if (kind == "env-heading") {
            rule.kind = RuleKind::env_heading;
            if (tok.size() < 3) throw Error(ErrorCode::config_invalid, "blocklist: env-heading needs a title", line_no);
            for (std::size_t k = 2; k < tok.size(); ++k) {
                if (k > 2) rule.title.push_back(' ');
                rule.title += tok[k];
            }
        } else if (kind == "cmd-drop") {
            rule.kind = RuleKind::cmd_drop;
            if (tok.size() > 2) rule.nargs = parse_count(tok[2], line_no);
        } else if (kind == "cmd-keep") {
            rule.kind = RuleKind::cmd_keep;
            if (tok.size() < 4) throw Error(ErrorCode::config_invalid, "blocklist: cmd-keep needs NARGS KEEP", line_no);
            rule.nargs = parse_count(tok[2], line_no);
            rule.keep = tok[3] == "all" ? 0 : parse_count(tok[3], line_no);
            if (rule.keep > rule.nargs || (rule.keep == 0 && tok[3] != "all")) {
                throw Error(ErrorCode::config_invalid, "blocklist: KEEP out of range", line_no);
            }
        } else if (kind == "cmd-heading") {
            rule.kind = RuleKind::cmd_heading;
            rule.nargs = 1;
        } else if (kind == "cmd-newline") {
            rule.kind = RuleKind::cmd_newline;
            if (tok.size() > 2) {
                if (tok[2] != "label") throw Error(ErrorCode::config_invalid, "blocklist: cmd-newline takes only 'label'", line_no);
                rule.keep = 1;
            }
        } else {
            throw Error(ErrorCode::config_invalid, "blocklist: unknown rule kind '" + kind + "'", line_no);
        }
        auto& table = is_cmd ? bl.commands_ : bl.envs_;
        table.insert_or_assign(rule.name, std::move(rule));
    }
    return bl;
}

Blocklist Blocklist::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

const NoiseRule* Blocklist::find_env(std::string_view name) const {
    const auto it = envs_.find(name);
    return it == envs_.end() ? nullptr : &it->second;
}

const NoiseRule* Blocklist::find_command(std::string_view name) const {
    const auto it = commands_.find(name);
    return it == commands_.end() ? nullptr : &it->second;
}

SectionPatterns SectionPatterns::parse(std::string_view text) {
    SectionPatterns sp;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = text::trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        try {
            sp.patterns_.emplace_back(std::string(trimmed), std::regex::ECMAScript | std::regex::icase);
        } catch (const std::regex_error& e) {
            throw Error(ErrorCode::config_invalid, "section pattern: " + std::string(e.what()), line_no);
        }
    }
    return sp;
}

SectionPatterns SectionPatterns::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

bool SectionPatterns::matches(std::string_view title) const {
    const std::string t(title);
    return std::any_of(patterns_.begin(), patterns_.end(),
                       [&](const std::regex& re) { return std::regex_search(t, re); });
}

NoiseResult strip_noise(std::string_view source, const Blocklist& blocklist) {
    NoiseResult r;
    NoiseStripper stripper(source, blocklist, r);
    r.text = stripper.process(0, source.size());
    return r;
}

RefResult unify_refs(std::string_view source) {
    RefResult r;
    r.text = rewrite_controls(source, [&](std::string& out, std::size_t i, const ControlSeq& cs) -> std::size_t {
        const bool cite = kCiteCommands.contains(cs.name);
        const bool ref = !cite && kRefCommands.contains(cs.name);
        const bool label = !cite && !ref && kLabelCommands.contains(cs.name);
        if (!cite && !ref && !label) return npos;
        const auto args = read_command_args(source, cs.end, 1, source.size());
        if (args.groups.empty()) return npos;
        const auto [b, e] = args.groups[0];
        const std::string canon = std::string(cite ? "\\cite{" : ref ? "\\ref{" : "\\label{") +
                                  join_keys(source.substr(b, e - b)) + "}";
        if (canon != source.substr(i, args.end - i)) ++r.rewritten;
        out += canon;
        return args.end;
    });
    return r;
}

SectionDropResult drop_sections(std::string_view source, const SectionPatterns& patterns) {
    SectionDropResult r;
    if (patterns.empty()) {
        r.text = std::string(source);
        return r;
    }
    const auto headings = find_headings(source);
    std::vector<std::pair<std::size_t, std::size_t>> cuts;
    std::size_t covered = 0;
    for (std::size_t h = 0; h < headings.size(); ++h) {
        const Heading& head = headings[h];
        if (head.level == -3 || head.begin < covered) continue;
        if (!patterns.matches(head.title)) continue;
        std::size_t stop = source.size();
        for (std::size_t k = h + 1; k < headings.size(); ++k) {
            const Heading& next = headings[k];
            if (next.level == -3 || (!head.appendix && !next.appendix && next.level <= head.level) ||
                (!head.appendix && next.appendix)) {
                stop = next.begin;
                break;
            }
        }
        cuts.emplace_back(head.begin, stop);
        covered = stop;
        ++r.dropped;
    }
    std::size_t last = 0;
    for (const auto& [b, e] : cuts) {
        r.text.append(source.substr(last, b - last));
        last = e;
    }
    r.text.append(source.substr(last));
    return r;
}

std::vector<std::string> extract_math_spans(std::string_view s) {
    std::vector<std::string> spans;
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (c != '$' && c != '\\') {
            ++i;
            continue;
        }
        if (c == '\\') {
            const auto verb = verbatim_span_end(s, i);
            if (verb != npos) {
                i = verb;
                continue;
            }
        }
        const auto m = math_span_end(s, i);
        if (m != npos) {
            spans.emplace_back(s.substr(i, m - i));
            i = m;
        } else {
            i = c == '\\' ? read_control(s, i).end : i + 1;
        }
    }
    return spans;
}

std::optional<std::string> find_residue(std::string_view s, const Blocklist& blocklist) {
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (c == '%') return std::string("%");
        if (c == '$') {
            const auto m = math_span_end(s, i);
            i = m == npos ? i + 1 : m;
            continue;
        }
        if (c != '\\') {
            ++i;
            continue;
        }
        auto skip = verbatim_span_end(s, i);
        if (skip == npos) skip = math_span_end(s, i);
        if (skip != npos) {
            i = skip;
            continue;
        }
        const auto cs = read_control(s, i);
        if (cs.word && kDefinitionCommands.contains(cs.name)) return "\\" + std::string(cs.name);
        if (cs.word && cs.name == "begin") {
            const auto tag = read_env_name(s, cs.end);
            if (tag && blocklist.find_env(tag->name)) return "\\begin{" + std::string(tag->name) + "}";
        }
        if (blocklist.find_command(cs.name)) return "\\" + std::string(cs.name);
        i = cs.end;
    }
    return std::nullopt;
}

}  // namespace telekit::latex
