#include <algorithm>
#include <set>

#include "latex_scan.hpp"
#include "telekit/latex.hpp"
#include "telekit/text.hpp"

namespace telekit::latex {

using namespace detail;

namespace {

struct Macro {
    int nargs = 0;
    std::optional<std::string> default_arg;  // first argument is optional when set
    std::string body;
};

struct Environment {
    int nargs = 0;
    std::optional<std::string> default_arg;
    std::string begin;
    std::string end;
};

struct Definitions {
    std::map<std::string, Macro, std::less<>> macros;
    std::map<std::string, Environment, std::less<>> envs;
    std::set<std::string> unexpandable;  // delimited \def parameter text
};

constexpr std::size_t kGrowthFactor = 8;
constexpr std::size_t kGrowthSlack = 1 << 20;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

// Reads "{\name}" or "\name"; returns name and one past it.
std::optional<std::pair<std::string, std::size_t>> read_defined_name(std::string_view s, std::size_t pos) {
    pos = skip_spaces(s, pos);
    if (pos >= s.size()) return std::nullopt;
    if (s[pos] == '{') {
        const auto close = match_group(s, pos);
        if (close == npos) return std::nullopt;
        auto inner = s.substr(pos + 1, close - pos - 1);
        std::size_t a = 0;
        while (a < inner.size() && is_space(inner[a])) ++a;
        if (a >= inner.size() || inner[a] != '\\') return std::nullopt;
        const auto cs = read_control(inner, a);
        std::size_t b = cs.end;
        while (b < inner.size() && is_space(inner[b])) ++b;
        if (b != inner.size() || cs.name.empty()) return std::nullopt;
        return std::make_pair(std::string(cs.name), close + 1);
    }
    if (s[pos] != '\\') return std::nullopt;
    const auto cs = read_control(s, pos);
    if (cs.name.empty()) return std::nullopt;
    return std::make_pair(std::string(cs.name), cs.end);
}

// "[n]" -> n, at pos (after optional spaces).
std::optional<std::pair<int, std::size_t>> read_arg_count(std::string_view s, std::size_t pos) {
    const auto p = skip_spaces(s, pos);
    if (p >= s.size() || s[p] != '[') return std::make_pair(0, pos);
    const auto close = match_bracket(s, p);
    if (close == npos) return std::nullopt;
    const auto inner = s.substr(p + 1, close - p - 1);
    if (inner.size() != 1 || inner[0] < '0' || inner[0] > '9') return std::nullopt;
    return std::make_pair(inner[0] - '0', close + 1);
}

std::optional<std::pair<std::string, std::size_t>> read_group(std::string_view s, std::size_t pos) {
    pos = skip_spaces(s, pos);
    if (pos >= s.size() || s[pos] != '{') return std::nullopt;
    const auto close = match_group(s, pos);
    if (close == npos) return std::nullopt;
    return std::make_pair(std::string(s.substr(pos + 1, close - pos - 1)), close + 1);
}

struct Parsed {
    std::size_t end = 0;
};

// \newcommand-style definition starting after the command word.
std::optional<Parsed> parse_newcommand(std::string_view s, std::size_t pos, std::string_view cmd,
                                       Definitions& defs) {
    if (pos < s.size() && s[pos] == '*') ++pos;
    const auto name = read_defined_name(s, pos);
    if (!name) return std::nullopt;
    const auto count = read_arg_count(s, name->second);
    if (!count) return std::nullopt;
    Macro m;
    m.nargs = count->first;
    std::size_t p = count->second;
    if (m.nargs > 0) {
        const auto q = skip_spaces(s, p);
        if (q < s.size() && s[q] == '[') {
            const auto close = match_bracket(s, q);
            if (close == npos) return std::nullopt;
            m.default_arg = std::string(s.substr(q + 1, close - q - 1));
            p = close + 1;
        }
    }
    const auto body = read_group(s, p);
    if (!body) return std::nullopt;
    m.body = body->first;
    if (cmd != "providecommand" || !defs.macros.contains(name->first)) {
        defs.macros.insert_or_assign(name->first, std::move(m));
    }
    defs.unexpandable.erase(name->first);
    return Parsed{body->second};
}

std::optional<Parsed> parse_def(std::string_view s, std::size_t pos, Definitions& defs) {
    const auto p = skip_spaces(s, pos);
    if (p >= s.size() || s[p] != '\\') return std::nullopt;
    const auto cs = read_control(s, p);
    if (cs.name.empty()) return std::nullopt;
    std::string name(cs.name);
    std::size_t q = cs.end;
    std::size_t open = q;
    while (open < s.size() && s[open] != '{') {
        if (s[open] == '\\') {
            open = read_control(s, open).end;
        } else {
            ++open;
        }
    }
    if (open >= s.size()) return std::nullopt;
    const auto close = match_group(s, open);
    if (close == npos) return std::nullopt;
    const auto params = s.substr(q, open - q);
    int nargs = 0;
    bool simple = true;
    for (std::size_t k = 0; k < params.size(); k += 2) {
        if (k + 1 < params.size() && params[k] == '#' && params[k + 1] == '1' + nargs) {
            ++nargs;
        } else {
            simple = false;
            break;
        }
    }
    if (!simple) {
        defs.macros.erase(name);
        defs.unexpandable.insert(name);
    } else {
        Macro m;
        m.nargs = nargs;
        m.body = std::string(s.substr(open + 1, close - open - 1));
        defs.macros.insert_or_assign(name, std::move(m));
        defs.unexpandable.erase(name);
    }
    return Parsed{close + 1};
}

std::optional<Parsed> parse_let(std::string_view s, std::size_t pos, Definitions& defs) {
    auto p = skip_spaces(s, pos);
    if (p >= s.size() || s[p] != '\\') return std::nullopt;
    const auto lhs = read_control(s, p);
    if (lhs.name.empty()) return std::nullopt;
    p = lhs.end;
    while (p < s.size() && (s[p] == ' ' || s[p] == '\t')) ++p;
    if (p < s.size() && s[p] == '=') ++p;
    while (p < s.size() && (s[p] == ' ' || s[p] == '\t')) ++p;
    if (p >= s.size()) return std::nullopt;
    std::size_t end;
    if (s[p] == '\\') {
        end = read_control(s, p).end;
    } else if (s[p] == '{' || s[p] == '}' || s[p] == '\n') {
        return std::nullopt;
    } else {
        end = p + 1;
    }
    Macro m;
    m.body = std::string(s.substr(p, end - p));
    if (std::string(lhs.name) != m.body.substr(m.body[0] == '\\' ? 1 : 0)) {
        defs.macros.insert_or_assign(std::string(lhs.name), std::move(m));
    }
    return Parsed{end};
}

std::optional<Parsed> parse_math_operator(std::string_view s, std::size_t pos, Definitions& defs) {
    bool star = false;
    if (pos < s.size() && s[pos] == '*') {
        star = true;
        ++pos;
    }
    const auto name = read_defined_name(s, pos);
    if (!name) return std::nullopt;
    const auto body = read_group(s, name->second);
    if (!body) return std::nullopt;
    Macro m;
    m.body = std::string(star ? "\\operatorname*{" : "\\operatorname{") + body->first + "}";
    defs.macros.insert_or_assign(name->first, std::move(m));
    return Parsed{body->second};
}

std::optional<Parsed> parse_newenvironment(std::string_view s, std::size_t pos, Definitions& defs) {
    if (pos < s.size() && s[pos] == '*') ++pos;
    const auto name = read_group(s, pos);
    if (!name || name->first.empty()) return std::nullopt;
    const auto count = read_arg_count(s, name->second);
    if (!count) return std::nullopt;
    Environment env;
    env.nargs = count->first;
    std::size_t p = count->second;
    if (env.nargs > 0) {
        const auto q = skip_spaces(s, p);
        if (q < s.size() && s[q] == '[') {
            const auto close = match_bracket(s, q);
            if (close == npos) return std::nullopt;
            env.default_arg = std::string(s.substr(q + 1, close - q - 1));
            p = close + 1;
        }
    }
    const auto begin = read_group(s, p);
    if (!begin) return std::nullopt;
    const auto end = read_group(s, begin->second);
    if (!end) return std::nullopt;
    env.begin = begin->first;
    env.end = end->first;
    defs.envs.insert_or_assign(std::string(text::trim(name->first)), std::move(env));
    return Parsed{end->second};
}

std::optional<Parsed> try_definition(std::string_view s, std::size_t pos, Definitions& defs) {
    const auto cs = read_control(s, pos);
    if (!cs.word) return std::nullopt;
    const std::string_view n = cs.name;
    if (n == "newcommand" || n == "renewcommand" || n == "providecommand" || n == "DeclareRobustCommand") {
        return parse_newcommand(s, cs.end, n, defs);
    }
    if (n == "def" || n == "gdef" || n == "edef" || n == "xdef") return parse_def(s, cs.end, defs);
    if (n == "let") return parse_let(s, cs.end, defs);
    if (n == "DeclareMathOperator") return parse_math_operator(s, cs.end, defs);
    if (n == "newenvironment" || n == "renewenvironment") return parse_newenvironment(s, cs.end, defs);
    if (n == "long" || n == "global" || n == "protected" || n == "outer") {
        const auto p = skip_spaces(s, cs.end);
        if (p < s.size() && s[p] == '\\') return try_definition(s, p, defs);
    }
    return std::nullopt;
}

struct Collected {
    std::string text;
    std::size_t removed = 0;
};

Collected collect(std::string_view s, Definitions& defs) {
    Collected r;
    std::string& out = r.text;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] != '\\') {
            out.push_back(s[i++]);
            continue;
        }
        const auto verb = verbatim_span_end(s, i);
        if (verb != npos) {
            out.append(s.substr(i, verb - i));
            i = verb;
            continue;
        }
        if (const auto def = try_definition(s, i, defs)) {
            ++r.removed;
            const bool whole = line_is_blank_so_far(out);
            i = eat_line_end(s, def->end, out, whole);
            continue;
        }
        const auto cs = read_control(s, i);
        out.append(s.substr(i, cs.end - i));
        i = cs.end;
    }
    return r;
}

std::size_t utf8_len(unsigned char b) {
    if (b >= 0xF0) return 4;
    if (b >= 0xE0) return 3;
    if (b >= 0xC0) return 2;
    return 1;
}

// Undelimited arguments, the first optional when a default exists.
std::optional<std::pair<std::vector<std::string>, std::size_t>> read_args(
    std::string_view s, std::size_t pos, int nargs, const std::optional<std::string>& default_arg) {
    std::vector<std::string> args;
    std::size_t p = pos;
    int remaining = nargs;
    if (default_arg && nargs > 0) {
        const auto q = skip_spaces(s, p);
        if (q < s.size() && s[q] == '[') {
            const auto close = match_bracket(s, q);
            if (close == npos) return std::nullopt;
            args.emplace_back(s.substr(q + 1, close - q - 1));
            p = close + 1;
        } else {
            args.push_back(*default_arg);
        }
        --remaining;
    }
    for (; remaining > 0; --remaining) {
        const auto q = skip_spaces(s, p);
        if (q >= s.size()) return std::nullopt;
        const char c = s[q];
        if (c == '{') {
            const auto close = match_group(s, q);
            if (close == npos) return std::nullopt;
            args.emplace_back(s.substr(q + 1, close - q - 1));
            p = close + 1;
        } else if (c == '\\') {
            const auto end = read_control(s, q).end;
            args.emplace_back(s.substr(q, end - q));
            p = end;
        } else if (c == '}' || c == '\n') {
            return std::nullopt;
        } else {
            const auto len = std::min(utf8_len(static_cast<unsigned char>(c)), s.size() - q);
            args.emplace_back(s.substr(q, len));
            p = q + len;
        }
    }
    return std::make_pair(std::move(args), p);
}

std::string substitute(std::string_view body, const std::vector<std::string>& args) {
    std::string out;
    out.reserve(body.size());
    for (std::size_t i = 0; i < body.size(); ++i) {
        const char c = body[i];
        if (c == '#' && i + 1 < body.size()) {
            const char d = body[i + 1];
            if (d == '#') {
                out.push_back('#');
                ++i;
                continue;
            }
            if (d >= '1' && d <= '9') {
                const auto k = static_cast<std::size_t>(d - '1');
                if (k < args.size()) out += args[k];
                ++i;
                continue;
            }
        }
        out.push_back(c);
    }
    return out;
}

// Spaces (and one non-paragraph line break) after a control word, as TeX skips them.
std::size_t gobble_after_word(std::string_view s, std::size_t p) {
    while (p < s.size() && (s[p] == ' ' || s[p] == '\t')) ++p;
    if (p < s.size() && s[p] == '\n') {
        std::size_t k = p + 1;
        while (k < s.size() && (s[k] == ' ' || s[k] == '\t')) ++k;
        if (k < s.size() && s[k] == '\n') return p;
        return k;
    }
    return p;
}

void emit(std::string& out, std::string_view piece) {
    if (!piece.empty() && is_letter(piece.front()) && ends_with_control_word(out)) out.push_back(' ');
    out.append(piece);
}

void separate_from_next(std::string& out, std::string_view s, std::size_t next) {
    if (next < s.size() && is_letter(s[next]) && ends_with_control_word(out)) out.push_back(' ');
}

struct PassResult {
    std::string text;
    std::size_t expansions = 0;
};

PassResult expand_once(std::string_view s, const Definitions& defs) {
    PassResult r;
    std::string& out = r.text;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] != '\\') {
            out.push_back(s[i++]);
            continue;
        }
        const auto verb = verbatim_span_end(s, i);
        if (verb != npos) {
            out.append(s.substr(i, verb - i));
            i = verb;
            continue;
        }
        const auto cs = read_control(s, i);
        if (cs.word && (cs.name == "begin" || cs.name == "end") && !defs.envs.empty()) {
            const auto tag = read_env_name(s, cs.end);
            if (tag) {
                const auto it = defs.envs.find(tag->name);
                if (it != defs.envs.end()) {
                    const Environment& env = it->second;
                    if (cs.name == "end") {
                        emit(out, env.end);
                        separate_from_next(out, s, tag->end);
                        ++r.expansions;
                        i = tag->end;
                        continue;
                    }
                    if (auto args = read_args(s, tag->end, env.nargs, env.default_arg)) {
                        emit(out, substitute(env.begin, args->first));
                        separate_from_next(out, s, args->second);
                        ++r.expansions;
                        i = args->second;
                        continue;
                    }
                }
            }
        }
        const auto it = defs.macros.find(cs.name);
        if (it == defs.macros.end() || cs.name.empty()) {
            out.append(s.substr(i, cs.end - i));
            i = cs.end;
            continue;
        }
        const Macro& m = it->second;
        if (m.nargs == 0) {
            std::size_t next = cs.end;
            bool control_space = false;
            if (cs.word) {
                next = gobble_after_word(s, next);
                if (s.substr(next).starts_with("{}")) {
                    next += 2;
                } else if (next == cs.end && s.substr(next).starts_with("\\ ")) {
                    next += 2;
                    control_space = true;
                }
            }
            emit(out, m.body);
            if (control_space) {
                if (ends_with_control_word(out)) out.push_back('\\');
                out.push_back(' ');
            } else {
                separate_from_next(out, s, next);
            }
            ++r.expansions;
            i = next;
            continue;
        }
        auto args = read_args(s, cs.end, m.nargs, m.default_arg);
        if (!args) {
            out.append(s.substr(i, cs.end - i));
            i = cs.end;
            continue;
        }
        // only defaults used: nothing consumed after the name
        if (args->second == cs.end && cs.word) args->second = gobble_after_word(s, cs.end);
        emit(out, substitute(m.body, args->first));
        separate_from_next(out, s, args->second);
        ++r.expansions;
        i = args->second;
    }
    return r;
}

void find_call_sites(std::string_view s, const Definitions& defs, std::set<std::string>& names) {
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] != '\\') {
            ++i;
            continue;
        }
        const auto verb = verbatim_span_end(s, i);
        if (verb != npos) {
            i = verb;
            continue;
        }
        const auto cs = read_control(s, i);
        if (!cs.name.empty() && (defs.macros.contains(cs.name) || defs.unexpandable.contains(std::string(cs.name)))) {
            names.emplace(cs.name);
        }
        if (cs.word && cs.name == "begin") {
            if (const auto tag = read_env_name(s, cs.end); tag && defs.envs.contains(tag->name)) {
                names.insert("begin{" + std::string(tag->name) + "}");
            }
        }
        i = cs.end;
    }
}

}  // namespace

MacroExpansion expand_macros(std::string_view source, int depth_bound) {
    MacroExpansion r;
    Definitions defs;
    std::string text(source);
    const std::size_t growth_cap = source.size() * kGrowthFactor + kGrowthSlack;
    bool converged = false;
    for (int pass = 0; pass < std::max(depth_bound, 1); ++pass) {
        auto collected = collect(text, defs);
        r.definitions_removed += collected.removed;
        if (defs.macros.empty() && defs.envs.empty()) {
            text = std::move(collected.text);
            converged = true;
            break;
        }
        auto expanded = expand_once(collected.text, defs);
        r.expansions += expanded.expansions;
        const bool changed = collected.removed > 0 || expanded.expansions > 0;
        text = std::move(expanded.text);
        if (!changed) {
            converged = true;
            break;
        }
        if (text.size() > growth_cap) break;
    }
    if (!converged) {
        auto collected = collect(text, defs);
        r.definitions_removed += collected.removed;
        text = std::move(collected.text);
    }
    std::set<std::string> names;
    find_call_sites(text, defs, names);
    r.unexpanded.assign(names.begin(), names.end());
    r.text = std::move(text);
    return r;
}

}  // namespace telekit::latex
