#include "latex_scan.hpp"

#include <array>
#include <cctype>

namespace telekit::latex::detail {

namespace {

constexpr std::array<std::string_view, 9> kVerbatimEnvs = {
    "verbatim", "verbatim*", "Verbatim", "BVerbatim", "LVerbatim",
    "lstlisting", "minted", "filecontents", "filecontents*"};

constexpr std::array<std::string_view, 23> kMathEnvs = {
    "equation", "equation*", "align", "align*", "alignat", "alignat*",
    "flalign", "flalign*", "gather", "gather*", "multline", "multline*",
    "eqnarray", "eqnarray*", "displaymath", "math", "dmath", "dmath*",
    "IEEEeqnarray", "IEEEeqnarray*", "split", "aligned", "cases"};

std::size_t clamp_limit(std::string_view s, std::size_t limit) {
    return limit == npos || limit > s.size() ? s.size() : limit;
}

}  // namespace

ControlSeq read_control(std::string_view s, std::size_t pos) {
    ControlSeq cs;
    if (pos + 1 >= s.size()) {
        cs.end = s.size();
        return cs;
    }
    if (is_letter(s[pos + 1])) {
        std::size_t j = pos + 1;
        while (j < s.size() && is_letter(s[j])) ++j;
        cs.name = s.substr(pos + 1, j - pos - 1);
        cs.end = j;
        cs.word = true;
        return cs;
    }
    // Control symbol; keep multi-byte UTF-8 characters whole.
    std::size_t len = 1;
    const auto b = static_cast<unsigned char>(s[pos + 1]);
    if (b >= 0xF0) len = 4;
    else if (b >= 0xE0) len = 3;
    else if (b >= 0xC0) len = 2;
    len = std::min(len, s.size() - pos - 1);
    cs.name = s.substr(pos + 1, len);
    cs.end = pos + 1 + len;
    return cs;
}

std::size_t skip_spaces(std::string_view s, std::size_t pos) {
    bool newline_seen = false;
    while (pos < s.size()) {
        const char c = s[pos];
        if (c == ' ' || c == '\t' || c == '\r') {
            ++pos;
        } else if (c == '\n' && !newline_seen) {
            newline_seen = true;
            ++pos;
        } else {
            break;
        }
    }
    return pos;
}

std::size_t match_group(std::string_view s, std::size_t open, std::size_t limit) {
    limit = clamp_limit(s, limit);
    if (open >= limit || s[open] != '{') return npos;
    int depth = 0;
    std::size_t i = open;
    while (i < limit) {
        const char c = s[i];
        if (c == '\\') {
            i = read_control(s, i).end;
            continue;
        }
        if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i;
        }
        ++i;
    }
    return npos;
}

std::size_t match_bracket(std::string_view s, std::size_t open, std::size_t limit) {
    limit = clamp_limit(s, limit);
    if (open >= limit || s[open] != '[') return npos;
    std::size_t i = open + 1;
    while (i < limit) {
        const char c = s[i];
        if (c == '\\') {
            i = read_control(s, i).end;
        } else if (c == '{') {
            const std::size_t close = match_group(s, i, limit);
            if (close == npos) return npos;
            i = close + 1;
        } else if (c == ']') {
            return i;
        } else {
            ++i;
        }
    }
    return npos;
}

std::optional<EnvTag> read_env_name(std::string_view s, std::size_t pos) {
    std::size_t i = pos;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    if (i >= s.size() || s[i] != '{') return std::nullopt;
    const std::size_t close = s.find('}', i + 1);
    if (close == npos) return std::nullopt;
    std::string_view name = s.substr(i + 1, close - i - 1);
    while (!name.empty() && name.front() == ' ') name.remove_prefix(1);
    while (!name.empty() && name.back() == ' ') name.remove_suffix(1);
    if (name.empty() || name.find_first_of("{\\\n") != std::string_view::npos) return std::nullopt;
    return EnvTag{name, close + 1};
}

bool is_verbatim_env(std::string_view name) {
    for (auto v : kVerbatimEnvs) {
        if (v == name) return true;
    }
    return false;
}

bool is_math_env(std::string_view name) {
    for (auto m : kMathEnvs) {
        if (m == name) return true;
    }
    return false;
}

std::optional<EnvEnd> find_env_end(std::string_view s, std::size_t from, std::string_view name,
                                   std::size_t limit) {
    limit = clamp_limit(s, limit);
    int depth = 1;
    std::size_t i = from;
    while (i < limit) {
        if (s[i] != '\\') {
            ++i;
            continue;
        }
        const std::size_t verb = verbatim_span_end(s, i, limit);
        if (verb != npos && !is_verbatim_env(name)) {
            i = verb;
            continue;
        }
        const ControlSeq cs = read_control(s, i);
        if (cs.word && (cs.name == "begin" || cs.name == "end")) {
            const auto tag = read_env_name(s, cs.end);
            if (tag && tag->end <= limit) {
                if (tag->name == name) {
                    if (cs.name == "begin") {
                        ++depth;
                    } else if (--depth == 0) {
                        return EnvEnd{i, tag->end};
                    }
                }
                i = tag->end;
                continue;
            }
        }
        i = cs.end;
    }
    return std::nullopt;
}

std::size_t math_span_end(std::string_view s, std::size_t pos, std::size_t limit) {
    limit = clamp_limit(s, limit);
    if (pos >= limit) return npos;
    if (s[pos] == '$') {
        const bool display = pos + 1 < limit && s[pos + 1] == '$';
        std::size_t i = pos + (display ? 2 : 1);
        while (i < limit) {
            const char c = s[i];
            if (c == '\\') {
                i = read_control(s, i).end;
                continue;
            }
            if (c == '$') {
                if (!display) return i + 1;
                if (i + 1 < limit && s[i + 1] == '$') return i + 2;
                return npos;
            }
            if (!display && c == '\n' && i + 1 < limit && s[i + 1] == '\n') return npos;
            ++i;
        }
        return npos;
    }
    if (s[pos] != '\\') return npos;
    const ControlSeq cs = read_control(s, pos);
    if (!cs.word && (cs.name == "(" || cs.name == "[")) {
        const std::string_view closer = cs.name == "(" ? ")" : "]";
        std::size_t i = cs.end;
        while (i < limit) {
            if (s[i] == '\\') {
                const ControlSeq inner = read_control(s, i);
                if (!inner.word && inner.name == closer) return inner.end;
                i = inner.end;
            } else {
                ++i;
            }
        }
        return npos;
    }
    if (cs.word && cs.name == "begin") {
        const auto tag = read_env_name(s, cs.end);
        if (tag && is_math_env(tag->name)) {
            const auto end = find_env_end(s, tag->end, tag->name, limit);
            if (end) return end->end;
        }
    }
    return npos;
}

std::size_t verbatim_span_end(std::string_view s, std::size_t pos, std::size_t limit) {
    limit = clamp_limit(s, limit);
    if (pos >= limit || s[pos] != '\\') return npos;
    const ControlSeq cs = read_control(s, pos);
    if (!cs.word) return npos;
    if (cs.name == "verb") {
        std::size_t i = cs.end;
        if (i < limit && s[i] == '*') ++i;
        if (i >= limit || std::isalpha(static_cast<unsigned char>(s[i])) || s[i] == ' ' ||
            s[i] == '\n') {
            return npos;
        }
        const char delim = s[i];
        const std::size_t close = s.find(delim, i + 1);
        if (close == npos || close >= limit) return npos;
        if (s.substr(i + 1, close - i - 1).find('\n') != std::string_view::npos) return npos;
        return close + 1;
    }
    if (cs.name == "begin") {
        const auto tag = read_env_name(s, cs.end);
        if (!tag || !is_verbatim_env(tag->name)) return npos;
        const std::string closer = "\\end{" + std::string(tag->name) + "}";
        const std::size_t close = s.find(closer, tag->end);
        if (close == npos || close + closer.size() > limit) return npos;
        return close + closer.size();
    }
    return npos;
}

std::string squash_spaces(std::string_view s) {
    std::string out;
    bool pending = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending = !out.empty();
        } else {
            if (pending) out.push_back(' ');
            pending = false;
            out.push_back(c);
        }
    }
    return out;
}

bool ends_with_control_word(std::string_view text) {
    std::size_t i = text.size();
    while (i > 0 && is_letter(text[i - 1])) --i;
    if (i == text.size() || i == 0 || text[i - 1] != '\\') return false;
    std::size_t slashes = 0;
    std::size_t k = i;
    while (k > 0 && text[k - 1] == '\\') {
        ++slashes;
        --k;
    }
    return slashes % 2 == 1;
}

}  // namespace telekit::latex::detail
