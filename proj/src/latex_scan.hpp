#pragma once

// Low-level LaTeX scanning shared by the cleaning stages. Positions are byte
// offsets; `npos` means "not found".

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace telekit::latex::detail {

inline constexpr std::size_t npos = std::string_view::npos;

inline bool is_letter(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

struct ControlSeq {
    std::string_view name;  // letters of a control word, or the single symbol
    std::size_t end = 0;    // one past the sequence
    bool word = false;
};

// s[pos] must be '\\'.
ControlSeq read_control(std::string_view s, std::size_t pos);

// Skips spaces and tabs, and at most one newline.
std::size_t skip_spaces(std::string_view s, std::size_t pos);

// s[open] == '{' -> index of the matching '}' before `limit`, else npos.
std::size_t match_group(std::string_view s, std::size_t open, std::size_t limit = npos);
// s[open] == '[' -> index of the matching ']' (brace-aware), else npos.
std::size_t match_bracket(std::string_view s, std::size_t open, std::size_t limit = npos);

struct EnvTag {
    std::string_view name;
    std::size_t end = 0;  // one past the closing '}'
};
// At a control word "begin"/"end" ending at `pos`: reads "{name}".
std::optional<EnvTag> read_env_name(std::string_view s, std::size_t pos);

bool is_verbatim_env(std::string_view name);
bool is_math_env(std::string_view name);

struct EnvEnd {
    std::size_t begin = 0;  // position of the '\' of \end
    std::size_t end = 0;    // one past "\end{name}"
};
// Matching \end{name} for a body starting at `from`, honouring nesting of the
// same environment. Verbatim content is skipped.
std::optional<EnvEnd> find_env_end(std::string_view s, std::size_t from, std::string_view name,
                                   std::size_t limit = npos);

// If a math span starts at pos, returns one past its end; npos otherwise
// (including when the closer is missing).
std::size_t math_span_end(std::string_view s, std::size_t pos, std::size_t limit = npos);

// If a verbatim span (\begin{verbatim}..., \verb|..|) starts at pos,
// returns one past its end; npos otherwise.
std::size_t verbatim_span_end(std::string_view s, std::size_t pos, std::size_t limit = npos);

// Next unit boundary after pos: control sequences are one unit.
inline std::size_t next_unit(std::string_view s, std::size_t pos) {
    if (s[pos] == '\\') return read_control(s, pos).end;
    return pos + 1;
}

// True when the output's current line holds only spaces/tabs.
inline bool line_is_blank_so_far(const std::string& out) {
    for (auto it = out.rbegin(); it != out.rend(); ++it) {
        if (*it == '\n') return true;
        if (*it != ' ' && *it != '\t') return false;
    }
    return true;
}

inline void trim_line_tail(std::string& out) {
    while (!out.empty() && (out.back() == ' ' || out.back() == '\t')) out.pop_back();
}

// After removing a construct that filled its whole line, also consumes the
// rest of that line (trailing blanks and the newline).
inline std::size_t eat_line_end(std::string_view s, std::size_t i, std::string& out, bool whole_line) {
    if (!whole_line) return i;
    std::size_t j = i;
    while (j < s.size() && (s[j] == ' ' || s[j] == '\t')) ++j;
    if (j < s.size() && s[j] == '\n') {
        trim_line_tail(out);
        return j + 1;
    }
    return i;
}

// Collapses runs of whitespace into single spaces and trims.
std::string squash_spaces(std::string_view s);

// True when `text` ends in a control word (e.g. "\alpha").
bool ends_with_control_word(std::string_view text);

}  // namespace telekit::latex::detail
