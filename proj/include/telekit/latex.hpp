#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace telekit::latex {

// A multi-file LaTeX source tree. Keys are '/'-separated paths relative to
// the project directory.
struct LatexProject {
    std::map<std::string, std::string> files;
    std::optional<std::string> root;

    void validate() const;  // throws Error(invalid_argument)

    static LatexProject from_directory(const std::filesystem::path& dir);
    static LatexProject from_tar(const std::filesystem::path& archive);  // .tar or .tar.gz
    static LatexProject single(std::string name, std::string source);
};

// Regular files of a ustar/GNU tar archive (gzip accepted), keyed by path.
std::map<std::string, std::string> read_tar(const std::filesystem::path& archive);

struct CleanReport {
    std::string root;
    std::size_t comments_stripped = 0;
    std::size_t includes_resolved = 0;
    std::size_t macro_definitions_removed = 0;
    std::size_t macros_expanded = 0;
    std::size_t environments_removed = 0;
    std::size_t commands_removed = 0;
    std::size_t citations_unified = 0;
    std::size_t sections_dropped = 0;
    std::size_t unbalanced_environments = 0;
    std::vector<std::string> unexpanded_macros;
    std::vector<std::string> missing_includes;
    std::vector<std::string> flags;

    CleanReport& merge(const CleanReport& other);
    std::string to_json() const;
};

// ---------------------------------------------------------------------------
// Noise rules ("blocklist"), loaded from a line-oriented text file:
//
//   env-drop    NAME              delete the environment with its content
//   env-unwrap  NAME [NARGS]      delete \begin/\end (and NARGS args), keep content
//   env-heading NAME TITLE...     replace \begin with a TITLE paragraph, keep content
//   cmd-drop    \NAME [NARGS]     delete command, optional args and NARGS groups
//   cmd-keep    \NAME NARGS KEEP  delete command, keep group KEEP (1-based or "all")
//   cmd-heading \NAME             \NAME{Title} becomes a "Title" paragraph
//   cmd-newline \NAME [label]     start a new line; with "label", keep the [..] text
//
// '#' starts a comment line.

enum class RuleKind { env_drop, env_unwrap, env_heading, cmd_drop, cmd_keep, cmd_heading, cmd_newline };

struct NoiseRule {
    RuleKind kind = RuleKind::cmd_drop;
    std::string name;  // without backslash
    int nargs = 0;
    int keep = 0;      // 1-based group index for cmd-keep; 0 means all groups
    std::string title; // env-heading
};

class Blocklist {
public:
    static Blocklist parse(std::string_view text);
    static Blocklist load(const std::filesystem::path& path);

    const NoiseRule* find_env(std::string_view name) const;
    const NoiseRule* find_command(std::string_view name) const;
    std::size_t size() const noexcept { return envs_.size() + commands_.size(); }

private:
    std::map<std::string, NoiseRule, std::less<>> envs_;
    std::map<std::string, NoiseRule, std::less<>> commands_;
};

// Case-insensitive section-title patterns, one regex per line.
class SectionPatterns {
public:
    static SectionPatterns parse(std::string_view text);
    static SectionPatterns load(const std::filesystem::path& path);
    bool matches(std::string_view title) const;
    bool empty() const noexcept { return patterns_.empty(); }

private:
    std::vector<std::regex> patterns_;
};

// ---------------------------------------------------------------------------
// Pipeline stages

struct CommentStripResult {
    std::string text;
    std::size_t comments = 0;
};
// Removes %-comments (except \%), comment environments and \iffalse blocks.
// Verbatim-like environments and \verb are left untouched.
CommentStripResult strip_comments(std::string_view source);

// Rewrites \include, \subfile, \import, \subimport and brace-less \input
// into the canonical \input{path} form.
std::string normalize_includes(std::string_view source);

// Project files that declare a document class and are not included by any
// other file; the chosen root per the tie-break rule.
std::string find_root(const LatexProject& project);

struct FlattenResult {
    std::string text;
    std::string root;
    std::vector<std::string> order;    // depth-first inclusion order
    std::vector<std::string> missing;  // unresolved inclusions (replaced by "")
    std::size_t comments = 0;          // comments stripped from the included files
};
// Throws Error(no_root) or Error(include_cycle).
FlattenResult resolve_and_flatten(const LatexProject& project);

inline constexpr int kMacroDepthBound = 32;

struct MacroExpansion {
    std::string text;
    std::vector<std::string> unexpanded;
    std::size_t definitions_removed = 0;
    std::size_t expansions = 0;
};
MacroExpansion expand_macros(std::string_view source, int depth_bound = kMacroDepthBound);

struct NoiseResult {
    std::string text;
    std::size_t environments_removed = 0;
    std::size_t commands_removed = 0;
    std::size_t unbalanced = 0;
};
NoiseResult strip_noise(std::string_view source, const Blocklist& blocklist);

struct RefResult {
    std::string text;
    std::size_t rewritten = 0;
};
// Citation variants become \cite{k1,k2}; reference variants become \ref{k}.
RefResult unify_refs(std::string_view source);

struct SectionDropResult {
    std::string text;
    std::size_t dropped = 0;
};
SectionDropResult drop_sections(std::string_view source, const SectionPatterns& patterns);

struct PreambleResult {
    std::string text;
    std::optional<std::string> title;
};
// Keeps the document body; the title (if any) becomes the first line.
PreambleResult remove_preamble(std::string_view source);

std::string normalize_whitespace(std::string_view source);

struct CleanOptions {
    Blocklist blocklist;
    SectionPatterns section_patterns;
    int macro_depth_bound = kMacroDepthBound;
};

struct CleanResult {
    std::string text;
    CleanReport report;
    std::optional<std::string> title;
    std::optional<std::string> abstract;  // cleaned body of the abstract environment
};

// strip_comments -> resolve_and_flatten -> expand_macros -> drop_sections ->
// strip_noise -> unify_refs -> remove_preamble -> normalize_whitespace.
// Root-resolution failures throw; everything else is reported.
CleanResult clean_document(const LatexProject& project, const CleanOptions& options);

// Inline and display math spans ($..$, $$..$$, \(..\), \[..\], math
// environments) in document order, byte-exact.
std::vector<std::string> extract_math_spans(std::string_view source);

// First leftover that a clean document must not contain: an unescaped '%',
// a macro-definition command, or a blocklisted command/environment.
// Math and verbatim spans are exempt.
std::optional<std::string> find_residue(std::string_view text, const Blocklist& blocklist);

}  // namespace telekit::latex
