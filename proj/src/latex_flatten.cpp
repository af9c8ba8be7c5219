#include <algorithm>
#include <cctype>
#include <functional>
#include <set>

#include "latex_scan.hpp"
#include "telekit/error.hpp"
#include "telekit/io.hpp"
#include "telekit/latex.hpp"
#include "telekit/text.hpp"

namespace telekit::latex {

using namespace detail;

namespace {

bool is_source_file(const std::string& name) {
    static const std::set<std::string> kExt = {".tex", ".ltx", ".bbl", ".sty", ".cls", ".inc", ".txt"};
    const auto ext = std::filesystem::path(name).extension().string();
    return kExt.contains(ext);
}

bool is_tex(const std::string& name) {
    const auto ext = std::filesystem::path(name).extension().string();
    return ext == ".tex" || ext == ".ltx";
}

std::string normal_path(const std::string& p) {
    auto s = std::filesystem::path(p).lexically_normal().generic_string();
    while (s.starts_with("./")) s.erase(0, 2);
    return s;
}

std::string parent_dir(const std::string& p) {
    const auto slash = p.rfind('/');
    return slash == std::string::npos ? std::string() : p.substr(0, slash + 1);
}

// Skips an \iffalse ... \fi block starting at pos (the backslash of \iffalse).
std::size_t iffalse_end(std::string_view s, std::size_t pos) {
    int depth = 0;
    std::size_t i = pos;
    while (i < s.size()) {
        if (s[i] != '\\') {
            ++i;
            continue;
        }
        const auto cs = read_control(s, i);
        if (cs.word) {
            if (cs.name.starts_with("if") && cs.name != "ifthenelse") {
                ++depth;
            } else if (cs.name == "fi") {
                if (--depth == 0) return cs.end;
            }
        }
        i = cs.end;
    }
    return npos;
}

struct IncludeRef {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::string target;
};

std::vector<IncludeRef> find_inputs(std::string_view s) {
    std::vector<IncludeRef> refs;
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
        if (cs.word && cs.name == "input" && cs.end < s.size() && s[cs.end] == '{') {
            const auto close = match_group(s, cs.end);
            if (close != npos) {
                refs.push_back({i, close + 1, std::string(text::trim(s.substr(cs.end + 1, close - cs.end - 1)))});
                i = close + 1;
                continue;
            }
        }
        i = cs.end;
    }
    return refs;
}

struct Graph {
    std::map<std::string, std::string> prepared;  // comment-stripped, includes normalized
    std::map<std::string, std::size_t> comments;
    std::map<std::string, std::vector<std::string>> edges;
    std::map<std::string, std::size_t> in_degree;
};

std::optional<std::string> resolve_target(const LatexProject& project, const std::string& from,
                                          const std::string& target) {
    const std::string dir = parent_dir(from);
    for (const auto& base : {std::string(), dir}) {
        for (const auto& suffix : {std::string(), std::string(".tex")}) {
            const auto candidate = normal_path(base + target + suffix);
            if (project.files.contains(candidate)) return candidate;
        }
    }
    return std::nullopt;
}

Graph build_graph(const LatexProject& project) {
    Graph g;
    for (const auto& [name, source] : project.files) {
        auto stripped = strip_comments(source);
        g.comments[name] = stripped.comments;
        g.prepared[name] = normalize_includes(stripped.text);
        g.in_degree.emplace(name, 0);
    }
    for (const auto& [name, text] : g.prepared) {
        auto& out = g.edges[name];
        for (const auto& ref : find_inputs(text)) {
            if (auto target = resolve_target(project, name, ref.target)) {
                out.push_back(*target);
                ++g.in_degree[*target];
            }
        }
    }
    return g;
}

void check_cycles(const Graph& g) {
    enum Color { white, grey, black };
    std::map<std::string, Color> color;
    std::vector<std::string> stack;
    std::function<void(const std::string&)> visit = [&](const std::string& node) {
        color[node] = grey;
        stack.push_back(node);
        for (const auto& next : g.edges.at(node)) {
            if (color[next] == grey) {
                std::string path;
                auto it = std::find(stack.begin(), stack.end(), next);
                for (; it != stack.end(); ++it) path += *it + " -> ";
                throw Error(ErrorCode::include_cycle, "inclusion cycle: " + path + next);
            }
            if (color[next] == white) visit(next);
        }
        stack.pop_back();
        color[node] = black;
    };
    for (const auto& [name, _] : g.edges) {
        if (color[name] == white) visit(name);
    }
}

std::size_t reach_count(const Graph& g, const std::string& root) {
    std::set<std::string> seen;
    std::vector<std::string> todo{root};
    while (!todo.empty()) {
        auto node = todo.back();
        todo.pop_back();
        if (!seen.insert(node).second) continue;
        for (const auto& next : g.edges.at(node)) todo.push_back(next);
    }
    return seen.size();
}

bool declares_class(std::string_view s) {
    std::size_t i = 0;
    while ((i = s.find('\\', i)) != npos) {
        const auto cs = read_control(s, i);
        if (cs.word && (cs.name == "documentclass" || cs.name == "documentstyle")) return true;
        i = cs.end;
    }
    return false;
}

std::string choose_root(const LatexProject& project, const Graph& g) {
    if (project.root) return *project.root;
    std::vector<std::string> candidates;
    std::vector<std::string> orphans;
    for (const auto& [name, text] : g.prepared) {
        if (!is_tex(name) || g.in_degree.at(name) != 0) continue;
        orphans.push_back(name);
        if (declares_class(text)) candidates.push_back(name);
    }
    if (candidates.empty()) {
        if (orphans.size() == 1) return orphans.front();
        throw Error(ErrorCode::no_root, "no root file: no unincluded .tex file declares a document class");
    }
    std::string best;
    std::size_t best_reach = 0;
    for (const auto& c : candidates) {  // lexicographic order already
        const auto r = reach_count(g, c);
        if (r > best_reach) {
            best = c;
            best_reach = r;
        }
    }
    return best;
}

}  // namespace

void LatexProject::validate() const {
    if (files.empty()) throw Error(ErrorCode::invalid_argument, "latex project has no files");
    if (root && !files.contains(*root)) {
        throw Error(ErrorCode::invalid_argument, "root file not in project: " + *root);
    }
}

LatexProject LatexProject::from_directory(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error(ErrorCode::io_failure, "not a directory: " + dir.string());
    LatexProject project;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = entry.path().lexically_relative(dir).generic_string();
        if (!is_source_file(rel)) continue;
        project.files[rel] = text::sanitize_utf8(io::read_file(entry.path()));
    }
    project.validate();
    return project;
}

LatexProject LatexProject::from_tar(const std::filesystem::path& archive) {
    LatexProject project;
    for (auto& [name, data] : read_tar(archive)) {
        const auto rel = normal_path(name);
        if (!is_source_file(rel)) continue;
        project.files[rel] = text::sanitize_utf8(data);
    }
    // Archives often wrap everything in one top-level directory.
    if (!project.files.empty()) {
        const auto first = project.files.begin()->first;
        const auto slash = first.find('/');
        if (slash != std::string::npos) {
            const auto prefix = first.substr(0, slash + 1);
            const bool shared = std::all_of(project.files.begin(), project.files.end(),
                                            [&](const auto& kv) { return kv.first.starts_with(prefix); });
            if (shared) {
                std::map<std::string, std::string> stripped;
                for (auto& [k, v] : project.files) stripped[k.substr(prefix.size())] = std::move(v);
                project.files = std::move(stripped);
            }
        }
    }
    project.validate();
    return project;
}

LatexProject LatexProject::single(std::string name, std::string source) {
    LatexProject project;
    project.files.emplace(std::move(name), std::move(source));
    return project;
}

CommentStripResult strip_comments(std::string_view s) {
    CommentStripResult r;
    std::string& out = r.text;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (c == '%') {
            std::size_t eol = s.find('\n', i);
            if (eol == npos) eol = s.size();
            ++r.comments;
            if (line_is_blank_so_far(out)) {
                trim_line_tail(out);
                i = eol < s.size() ? eol + 1 : eol;
            } else {
                i = eol;
            }
            continue;
        }
        if (c != '\\') {
            out.push_back(c);
            ++i;
            continue;
        }
        const auto verb = verbatim_span_end(s, i);
        if (verb != npos) {
            out.append(s.substr(i, verb - i));
            i = verb;
            continue;
        }
        const auto cs = read_control(s, i);
        if (cs.word && cs.name == "begin") {
            const auto tag = read_env_name(s, cs.end);
            if (tag && tag->name == "comment") {
                const auto close = s.find("\\end{comment}", tag->end);
                const bool whole = line_is_blank_so_far(out);
                const std::size_t end = close == npos ? s.size() : close + 13;
                ++r.comments;
                if (whole) trim_line_tail(out);
                i = eat_line_end(s, end, out, whole);
                continue;
            }
        }
        if (cs.word && cs.name == "iffalse") {
            const auto end = iffalse_end(s, i);
            if (end != npos) {
                const bool whole = line_is_blank_so_far(out);
                ++r.comments;
                if (whole) trim_line_tail(out);
                i = eat_line_end(s, end, out, whole);
                continue;
            }
        }
        out.append(s.substr(i, cs.end - i));
        i = cs.end;
    }
    return r;
}

std::string normalize_includes(std::string_view s) {
    std::string out;
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
        if (!cs.word) {
            out.append(s.substr(i, cs.end - i));
            i = cs.end;
            continue;
        }
        const std::string_view name = cs.name;
        if (name == "include" || name == "subfile" || name == "input") {
            std::size_t j = cs.end;
            while (j < s.size() && (s[j] == ' ' || s[j] == '\t')) ++j;
            if (j < s.size() && s[j] == '{') {
                const auto close = match_group(s, j);
                if (close != npos) {
                    out += "\\input{";
                    out += text::trim(s.substr(j + 1, close - j - 1));
                    out += '}';
                    i = close + 1;
                    continue;
                }
            } else if (name == "input" && j > cs.end && j < s.size()) {
                std::size_t k = j;
                while (k < s.size() && !std::isspace(static_cast<unsigned char>(s[k])) && s[k] != '}' &&
                       s[k] != '\\' && s[k] != '{') {
                    ++k;
                }
                if (k > j) {
                    out += "\\input{";
                    out += s.substr(j, k - j);
                    out += '}';
                    i = k;
                    continue;
                }
            }
        } else if (name == "import" || name == "subimport" || name == "inputfrom" || name == "includefrom" ||
                   name == "subinputfrom" || name == "subincludefrom") {
            std::size_t j = cs.end;
            if (j < s.size() && s[j] == '*') ++j;
            j = skip_spaces(s, j);
            const auto c1 = j < s.size() && s[j] == '{' ? match_group(s, j) : npos;
            if (c1 != npos) {
                const auto k = skip_spaces(s, c1 + 1);
                const auto c2 = k < s.size() && s[k] == '{' ? match_group(s, k) : npos;
                if (c2 != npos) {
                    std::string dir(text::trim(s.substr(j + 1, c1 - j - 1)));
                    if (!dir.empty() && dir.back() != '/') dir.push_back('/');
                    out += "\\input{" + dir;
                    out += text::trim(s.substr(k + 1, c2 - k - 1));
                    out += '}';
                    i = c2 + 1;
                    continue;
                }
            }
        }
        out.append(s.substr(i, cs.end - i));
        i = cs.end;
    }
    return out;
}

std::string find_root(const LatexProject& project) {
    project.validate();
    const auto g = build_graph(project);
    check_cycles(g);
    return choose_root(project, g);
}

FlattenResult resolve_and_flatten(const LatexProject& project) {
    project.validate();
    const auto g = build_graph(project);
    check_cycles(g);
    FlattenResult r;
    r.root = choose_root(project, g);

    std::function<std::string(const std::string&)> flatten = [&](const std::string& name) {
        r.order.push_back(name);
        r.comments += g.comments.at(name);
        const std::string& text = g.prepared.at(name);
        std::string out;
        std::size_t last = 0;
        for (const auto& ref : find_inputs(text)) {
            out.append(text, last, ref.begin - last);
            if (auto target = resolve_target(project, name, ref.target)) {
                // drop the included file's final line break
                auto body = flatten(*target);
                if (body.ends_with('\n')) body.pop_back();
                if (body.ends_with('\r')) body.pop_back();
                out += body;
            } else {
                r.missing.push_back(ref.target);
            }
            last = ref.end;
        }
        out.append(text, last, std::string::npos);
        return out;
    };
    r.text = flatten(r.root);
    return r;
}

}  // namespace telekit::latex
