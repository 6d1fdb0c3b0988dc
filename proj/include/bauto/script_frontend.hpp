#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "bauto/api_map.hpp"
#include "bauto/classifier.hpp"
#include "bauto/event.hpp"

namespace bauto {

struct ScriptSyntaxError : std::runtime_error {
    int line = 0;
    ScriptSyntaxError(int line_, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line_) + ": " + msg), line(line_) {}
};

struct ExplorationBudgetExceeded : std::runtime_error {
    explicit ExplorationBudgetExceeded(const std::string& msg) : std::runtime_error(msg) {}
};

struct UnsupportedCipher : std::runtime_error {
    explicit UnsupportedCipher(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Tokens

namespace script {

struct Tok {
    enum class Kind { ident, number, str, punct };
    Kind kind = Kind::ident;
    std::string text;
    int64_t num = 0;

    bool is_word() const { return kind != Kind::punct; }
    bool is(const char* p) const { return kind == Kind::punct && text == p; }
    bool is_kw(const char* kw) const { return kind == Kind::ident && lowercase(text) == kw; }
};

inline std::vector<Tok> tokenize_line(const std::string& line, int lineno) {
    std::vector<Tok> out;
    size_t i = 0;
    while (i < line.size()) {
        char c = line[i];
        if (c == ' ' || c == '\t') {
            ++i;
            continue;
        }
        if (c == '\'') break;  // comment to end of line
        if (c == '"') {
            ++i;
            std::string s;
            while (i < line.size()) {
                if (line[i] == '"') {
                    if (i + 1 < line.size() && line[i + 1] == '"') {
                        s += '"';
                        i += 2;
                        continue;
                    }
                    break;
                }
                s += line[i++];
            }
            if (i >= line.size()) throw ScriptSyntaxError(lineno, "unterminated string");
            ++i;
            Tok t;
            t.kind = Tok::Kind::str;
            t.text = std::move(s);
            out.push_back(std::move(t));
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            int64_t v = 0;
            while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i])))
                v = v * 10 + (line[i++] - '0');
            Tok t;
            t.kind = Tok::Kind::number;
            t.num = v;
            t.text = std::to_string(v);
            out.push_back(std::move(t));
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::string w;
            while (i < line.size() &&
                   (std::isalnum(static_cast<unsigned char>(line[i])) || line[i] == '_'))
                w += line[i++];
            Tok t;
            t.kind = Tok::Kind::ident;
            t.text = std::move(w);
            out.push_back(std::move(t));
            continue;
        }
        static const char* two_char[] = {"<>", "<=", ">="};
        bool matched = false;
        for (const char* tc : two_char) {
            if (line.compare(i, 2, tc) == 0) {
                Tok t;
                t.kind = Tok::Kind::punct;
                t.text = tc;
                out.push_back(std::move(t));
                i += 2;
                matched = true;
                break;
            }
        }
        if (matched) continue;
        static const std::string singles = "&.,()=:<>+-*/\\";
        if (singles.find(c) != std::string::npos) {
            Tok t;
            t.kind = Tok::Kind::punct;
            t.text = std::string(1, c);
            out.push_back(std::move(t));
            ++i;
            continue;
        }
        throw ScriptSyntaxError(lineno, std::string("unexpected character '") + c + "'");
    }
    return out;
}

inline std::string render(const std::vector<Tok>& toks) {
    std::string out;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i > 0 && toks[i - 1].is_word() && toks[i].is_word()) out += ' ';
        if (toks[i].kind == Tok::Kind::str) {
            out += '"';
            for (char c : toks[i].text) {
                out += c;
                if (c == '"') out += '"';
            }
            out += '"';
        } else {
            out += toks[i].text;
        }
    }
    return out;
}

}  // namespace script

// ---------------------------------------------------------------------------
// Normalization

enum class LineTag { code, declaration, comment };

struct NormLine {
    std::string text;
    std::vector<script::Tok> toks;
    int source_line = 0;
    LineTag tag = LineTag::code;
};

/// Normalizes a script: decodes Chr(n) literals, folds adjacent string
/// concatenations, dispatches ':'-joined statements onto separate lines,
/// expands With blocks by prefixing the subject, and tags declaration and
/// comment lines. Idempotent.
inline std::vector<NormLine> normalize(const std::string& text) {
    using script::Tok;
    std::vector<NormLine> out;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    std::vector<std::vector<Tok>> with_stack;
    while (std::getline(in, raw)) {
        ++lineno;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        std::vector<Tok> toks = script::tokenize_line(raw, lineno);

        // statements joined with ':' become separate lines
        std::vector<std::vector<Tok>> stmts;
        stmts.emplace_back();
        for (auto& t : toks) {
            if (t.is(":")) {
                stmts.emplace_back();
                continue;
            }
            stmts.back().push_back(std::move(t));
        }

        for (auto& stmt : stmts) {
            NormLine nl;
            nl.source_line = lineno;
            if (stmt.empty()) {
                nl.tag = LineTag::comment;
                out.push_back(std::move(nl));
                continue;
            }
            // With handling
            if (stmt[0].is_kw("with")) {
                with_stack.emplace_back(stmt.begin() + 1, stmt.end());
                nl.tag = LineTag::comment;
                out.push_back(std::move(nl));
                continue;
            }
            if (stmt.size() >= 2 && stmt[0].is_kw("end") && stmt[1].is_kw("with")) {
                if (with_stack.empty()) throw ScriptSyntaxError(lineno, "End With without With");
                with_stack.pop_back();
                nl.tag = LineTag::comment;
                out.push_back(std::move(nl));
                continue;
            }
            if (!with_stack.empty() && stmt[0].is(".")) {
                std::vector<Tok> prefixed = with_stack.back();
                prefixed.insert(prefixed.end(), stmt.begin(), stmt.end());
                stmt = std::move(prefixed);
            }

            // Chr(n) -> one-character string literal
            std::vector<Tok> folded;
            for (size_t i = 0; i < stmt.size();) {
                if (i + 3 < stmt.size() && stmt[i].is_kw("chr") && stmt[i + 1].is("(") &&
                    stmt[i + 2].kind == Tok::Kind::number && stmt[i + 3].is(")")) {
                    Tok s;
                    s.kind = Tok::Kind::str;
                    s.text = std::string(1, static_cast<char>(stmt[i + 2].num));
                    folded.push_back(std::move(s));
                    i += 4;
                    continue;
                }
                folded.push_back(stmt[i]);
                ++i;
            }
            // "a" & "b" -> "ab", repeatedly
            std::vector<Tok> merged;
            for (size_t i = 0; i < folded.size(); ++i) {
                if (folded[i].kind == Tok::Kind::str && merged.size() >= 2 &&
                    merged.back().is("&") && merged[merged.size() - 2].kind == Tok::Kind::str) {
                    merged.pop_back();
                    merged.back().text += folded[i].text;
                    continue;
                }
                merged.push_back(folded[i]);
            }

            nl.toks = std::move(merged);
            if (nl.toks[0].is_kw("dim") || nl.toks[0].is_kw("const")) nl.tag = LineTag::declaration;
            nl.text = script::render(nl.toks);
            out.push_back(std::move(nl));
        }
    }
    if (!with_stack.empty()) throw ScriptSyntaxError(lineno, "unterminated With block");
    return out;
}

inline std::string render_lines(const std::vector<NormLine>& lines) {
    std::string out;
    for (const auto& l : lines) {
        out += l.text;
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Static structure

enum class ManagerKind { file, shell, network, mail };

struct FunctionInfo {
    std::vector<std::string> params;  // lowercased
    int body_begin = 0, body_end = 0;  // [begin, end) line indexes
    bool returns_value = false;
};

/// What the static pass knows about a script: declared names, recognized
/// managers, function signatures and spans, and the normalized code.
struct ScriptStructure {
    std::vector<NormLine> lines;
    std::set<std::string> variables;
    std::map<std::string, std::string> constants;
    std::map<std::string, ManagerKind> managers;
    std::map<std::string, FunctionInfo> functions;
};

namespace script {

inline std::optional<ManagerKind> manager_for_progid(const std::string& progid) {
    std::string p = lowercase(progid);
    if (p == "scripting.filesystemobject") return ManagerKind::file;
    if (p == "wscript.shell") return ManagerKind::shell;
    if (p == "wscript.network") return ManagerKind::network;
    if (p == "outlook.application" || p.rfind("cdo", 0) == 0) return ManagerKind::mail;
    return std::nullopt;
}

}  // namespace script

inline ScriptStructure static_scan(std::vector<NormLine> lines) {
    using script::Tok;
    ScriptStructure st;
    st.lines = std::move(lines);
    for (size_t i = 0; i < st.lines.size(); ++i) {
        const auto& l = st.lines[i];
        if (l.toks.empty()) continue;
        const auto& t = l.toks;
        if (l.tag == LineTag::declaration) {
            if (t[0].is_kw("dim")) {
                for (size_t k = 1; k < t.size(); ++k)
                    if (t[k].kind == Tok::Kind::ident) st.variables.insert(lowercase(t[k].text));
            } else if (t[0].is_kw("const") && t.size() >= 4 && t[1].kind == Tok::Kind::ident &&
                       t[2].is("=")) {
                st.variables.insert(lowercase(t[1].text));
                if (t[3].kind == Tok::Kind::str) st.constants[lowercase(t[1].text)] = t[3].text;
            }
            continue;
        }
        // Set x = CreateObject("progid")
        if (t.size() >= 7 && t[0].is_kw("set") && t[1].kind == Tok::Kind::ident && t[2].is("=") &&
            t[3].is_kw("createobject") && t[4].is("(") && t[5].kind == Tok::Kind::str) {
            if (auto mk = script::manager_for_progid(t[5].text))
                st.managers[lowercase(t[1].text)] = *mk;
        }
        // function / sub signatures and spans
        if (t[0].is_kw("function") || t[0].is_kw("sub")) {
            if (t.size() < 2 || t[1].kind != Tok::Kind::ident)
                throw ScriptSyntaxError(l.source_line, "missing function name");
            FunctionInfo fi;
            fi.returns_value = t[0].is_kw("function");
            for (size_t k = 2; k < t.size(); ++k)
                if (t[k].kind == Tok::Kind::ident) fi.params.push_back(lowercase(t[k].text));
            fi.body_begin = static_cast<int>(i) + 1;
            int depth = 1;
            size_t j = i + 1;
            for (; j < st.lines.size(); ++j) {
                const auto& lt = st.lines[j].toks;
                if (lt.empty()) continue;
                if (lt[0].is_kw("function") || lt[0].is_kw("sub")) ++depth;
                if (lt.size() >= 2 && lt[0].is_kw("end") &&
                    (lt[1].is_kw("function") || lt[1].is_kw("sub"))) {
                    if (--depth == 0) break;
                }
            }
            if (j >= st.lines.size())
                throw ScriptSyntaxError(l.source_line, "unterminated function body");
            fi.body_end = static_cast<int>(j);
            st.functions[lowercase(t[1].text)] = std::move(fi);
        }
    }
    return st;
}

// ---------------------------------------------------------------------------
// Exploration

struct PathTrace {
    int path_id = 0;
    std::vector<Event> events;
};

struct ScriptAnalysis {
    std::vector<PathTrace> paths;
    std::vector<std::string> warnings;
};

struct ExploreOptions {
    int path_cap = 256;
    int execute_depth_cap = 8;
    int call_budget = 4096;  // hard stop against pathological nesting
};

/// Partial interpreter: walks the normalized code line by line, tracking
/// object references and constant values through affectations, exploring
/// both arms of every conditional, unrolling loop bodies once (events inside
/// carry the loop mark), interpreting local calls with aliased parameters and
/// blocked recursion, and emitting events for the monitored calls.
class ScriptExplorer {
public:
    ScriptExplorer(const ResourceConfig& cfg, const ApiCatalog& catalog, ExploreOptions opts = {})
        : cfg_(cfg), catalog_(catalog), opts_(opts), registry_(cfg) {}

    DescriptorRegistry& registry() { return registry_; }

    ScriptAnalysis explore(const ScriptStructure& st, const std::string& script_path) {
        st_ = &st;
        analysis_ = ScriptAnalysis{};
        self_path_ = canonical_path(script_path);
        registry_.add_self_path(self_path_);
        auto slash = self_path_.find_last_of('\\');
        self_name_ = slash == std::string::npos ? self_path_ : self_path_.substr(slash + 1);

        Env env;
        for (const auto& [alias, kind] : st.managers) env.names[alias] = Binding::manager(kind);
        for (const auto& [name, value] : st.constants) env.names[name] = Binding::text(value);

        walk(0, static_cast<int>(st.lines.size()), env, {}, 0, 1);
        return std::move(analysis_);
    }

private:
    struct Binding {
        std::optional<ObjectId> object;
        std::optional<std::string> value;  // known constant text
        std::string iface;
        std::optional<ManagerKind> mgr;

        static Binding manager(ManagerKind k) {
            Binding b;
            b.mgr = k;
            return b;
        }
        static Binding text(std::string v) {
            Binding b;
            b.value = std::move(v);
            return b;
        }
    };

    struct Env {
        std::map<std::string, Binding> names;
    };

    /// Expression result: a bound object, a known text value, or both; probe
    /// carries the object whose existence the value reports.
    struct Value {
        std::optional<ObjectId> object;
        std::optional<std::string> text;
        std::string iface;
        std::optional<ManagerKind> mgr;
        std::optional<ObjectId> probe;
        bool negated = false;
    };

    struct Frame {
        std::vector<Event> events;
        std::vector<std::string> call_stack;
    };

    // -- statement walking ---------------------------------------------------

    // Walks [begin, end); at forks the remainder is explored once per arm.
    void walk(int begin, int end, Env env, std::vector<std::string> call_stack, int loop_depth,
              uint64_t seq) {
        std::vector<Event> events;
        walk_into(begin, end, env, call_stack, loop_depth, seq, events, true);
    }

    void walk_into(int begin, int end, Env& env, std::vector<std::string>& call_stack,
                   int loop_depth, uint64_t& seq, std::vector<Event>& events, bool top_level) {
        if (++calls_ > opts_.call_budget)
            throw ExplorationBudgetExceeded("statement budget exhausted");
        int i = begin;
        while (i < end) {
            const NormLine& line = st_->lines[i];
            if (line.tag != LineTag::code || line.toks.empty()) {
                ++i;
                continue;
            }
            const auto& t = line.toks;
            if (t[0].is_kw("function") || t[0].is_kw("sub")) {
                // definitions execute only when called
                std::string name = lowercase(t[1].text);
                i = st_->functions.at(name).body_end + 1;
                continue;
            }
            if (t[0].is_kw("if")) {
                int split = fork(i, end, env, call_stack, loop_depth, seq, events, top_level);
                if (split < 0) return;  // forked: both arms already walked to completion
                i = split;
                continue;
            }
            if (t[0].is_kw("while")) {
                int wend = matching(i, end, "while", "wend");
                Value cond = eval_tokens(t, 1, t.size(), env, call_stack, loop_depth, seq, events);
                (void)cond;
                walk_into(i + 1, wend, env, call_stack, loop_depth + 1, seq, events, false);
                i = wend + 1;
                continue;
            }
            if (t[0].is_kw("for")) {
                // for each x in <expr> ... next  (one unrolled pass)
                int next = matching(i, end, "for", "next");
                if (t.size() >= 5 && t[1].is_kw("each") && t[2].kind == script::Tok::Kind::ident) {
                    size_t in_pos = 3;
                    while (in_pos < t.size() && !t[in_pos].is_kw("in")) ++in_pos;
                    Value coll = eval_tokens(t, in_pos + 1, t.size(), env, call_stack, loop_depth,
                                             seq, events);
                    Binding item;
                    Nature n = Nature::other;
                    ObjectType ty = ObjectType::obj_any;
                    if (coll.object) {
                        if (const auto* d = registry_.find(*coll.object)) {
                            n = d->nature;
                            ty = d->otype;
                        }
                    }
                    item.object = registry_.fresh(n, ty).id;
                    env.names[lowercase(t[2].text)] = item;
                }
                walk_into(i + 1, next, env, call_stack, loop_depth + 1, seq, events, false);
                i = next + 1;
                continue;
            }
            if (t.size() >= 2 && t[0].is_kw("end") &&
                (t[1].is_kw("if") || t[1].is_kw("function") || t[1].is_kw("sub")))
                throw ScriptSyntaxError(line.source_line, "unmatched end");
            if (t[0].is_kw("wend") || t[0].is_kw("next") || t[0].is_kw("else"))
                throw ScriptSyntaxError(line.source_line, "unmatched block keyword");
            if (t[0].is_kw("execute")) {
                Value v = eval_tokens(t, 1, t.size(), env, call_stack, loop_depth, seq, events);
                if (v.text && execute_depth_ < opts_.execute_depth_cap) {
                    ++execute_depth_;
                    auto sub = normalize(*v.text);
                    // splice the synthesized lines in as a nested walk
                    ScriptStructure nested = static_scan(sub);
                    const ScriptStructure* saved = st_;
                    st_ = &nested_store_.emplace_back(std::move(nested));
                    for (const auto& [alias, kind] : st_->managers)
                        if (!env.names.count(alias)) env.names[alias] = Binding::manager(kind);
                    walk_into(0, static_cast<int>(st_->lines.size()), env, call_stack, loop_depth,
                              seq, events, false);
                    st_ = saved;
                    --execute_depth_;
                } else if (!v.text) {
                    analysis_.warnings.push_back(
                        "line " + std::to_string(line.source_line) +
                        ": unresolved execute argument (possible whole-body ciphering)");
                }
                ++i;
                continue;
            }
            process_statement(line, env, call_stack, loop_depth, seq, events);
            ++i;
        }
        if (top_level) emit_path(events);
    }

    // Returns -1 when the statement forked (arms consumed the remainder), or
    // the line index to continue from (single-line If with no fork needed is
    // still forked for both arms, so this always forks).
    int fork(int i, int end, Env& env, std::vector<std::string>& call_stack, int loop_depth,
             uint64_t& seq, std::vector<Event>& events, bool top_level) {
        const NormLine& line = st_->lines[i];
        const auto& t = line.toks;
        size_t then_pos = 1;
        while (then_pos < t.size() && !t[then_pos].is_kw("then")) ++then_pos;
        if (then_pos >= t.size()) throw ScriptSyntaxError(line.source_line, "if without then");

        Value cond = eval_tokens(t, 1, then_pos, env, call_stack, loop_depth, seq, events);

        bool inline_if = then_pos + 1 < t.size();
        int else_line = -1, endif_line = -1;
        if (!inline_if) {
            int depth = 0;
            for (int j = i + 1; j < end; ++j) {
                const auto& lt = st_->lines[j].toks;
                if (lt.empty()) continue;
                if (lt[0].is_kw("if")) {
                    size_t tp = 1;
                    while (tp < lt.size() && !lt[tp].is_kw("then")) ++tp;
                    bool nested_inline = tp + 1 < lt.size();
                    if (!nested_inline) ++depth;
                    continue;
                }
                if (lt.size() >= 2 && lt[0].is_kw("end") && lt[1].is_kw("if")) {
                    if (depth == 0) {
                        endif_line = j;
                        break;
                    }
                    --depth;
                }
                if (lt[0].is_kw("else") && depth == 0 && else_line < 0) else_line = j;
            }
            if (endif_line < 0) throw ScriptSyntaxError(line.source_line, "if without end if");
        }

        if (++paths_forked_ > opts_.path_cap)
            throw ExplorationBudgetExceeded("path cap exceeded at line " +
                                            std::to_string(line.source_line));

        auto arm_branch = [&](bool cond_true) {
            Event b;
            b.seq = 0;  // assigned by the arm's walker
            b.cls = InteractionClass::Branch;
            if (cond.probe) {
                bool exists = cond.negated ? !cond_true : cond_true;
                b.arm = exists;
                if (const auto* d = registry_.find(*cond.probe))
                    b.objects = {EventObject{d->id, d->nature, d->otype, d->name}};
            } else {
                b.arm = cond_true;
            }
            return b;
        };

        // THEN arm
        {
            Env arm_env = env;
            auto arm_stack = call_stack;
            auto arm_events = events;
            uint64_t arm_seq = seq;
            Event b = arm_branch(true);
            b.seq = arm_seq++;
            arm_events.push_back(std::move(b));
            if (inline_if) {
                NormLine synth;
                synth.source_line = line.source_line;
                synth.toks.assign(t.begin() + static_cast<long>(then_pos) + 1, t.end());
                synth.text = script::render(synth.toks);
                process_statement(synth, arm_env, arm_stack, loop_depth, arm_seq, arm_events);
                walk_rest(i + 1, end, arm_env, arm_stack, loop_depth, arm_seq, arm_events,
                          top_level);
            } else {
                int then_end = else_line >= 0 ? else_line : endif_line;
                ArmCont cont{endif_line + 1, end};
                walk_arm(i + 1, then_end, cont, arm_env, arm_stack, loop_depth, arm_seq,
                         arm_events, top_level);
            }
        }
        // ELSE arm
        {
            Env arm_env = env;
            auto arm_stack = call_stack;
            auto arm_events = events;
            uint64_t arm_seq = seq;
            Event b = arm_branch(false);
            b.seq = arm_seq++;
            arm_events.push_back(std::move(b));
            if (inline_if) {
                walk_rest(i + 1, end, arm_env, arm_stack, loop_depth, arm_seq, arm_events,
                          top_level);
            } else if (else_line >= 0) {
                ArmCont cont{endif_line + 1, end};
                walk_arm(else_line + 1, endif_line, cont, arm_env, arm_stack, loop_depth, arm_seq,
                         arm_events, top_level);
            } else {
                walk_rest(endif_line + 1, end, arm_env, arm_stack, loop_depth, arm_seq,
                          arm_events, top_level);
            }
        }
        return -1;
    }

    struct ArmCont {
        int begin, end;
    };

    void walk_arm(int begin, int end, ArmCont cont, Env env, std::vector<std::string> call_stack,
                  int loop_depth, uint64_t seq, std::vector<Event> events, bool top_level) {
        walk_into(begin, end, env, call_stack, loop_depth, seq, events, false);
        walk_rest(cont.begin, cont.end, env, call_stack, loop_depth, seq, events, top_level);
    }

    void walk_rest(int begin, int end, Env& env, std::vector<std::string>& call_stack,
                   int loop_depth, uint64_t& seq, std::vector<Event>& events, bool top_level) {
        walk_into(begin, end, env, call_stack, loop_depth, seq, events, top_level);
    }

    void emit_path(std::vector<Event>& events) {
        int id = static_cast<int>(analysis_.paths.size());
        PathTrace pt;
        pt.path_id = id;
        pt.events = events;
        for (auto& e : pt.events) e.path = id;
        analysis_.paths.push_back(std::move(pt));
    }

    int matching(int i, int end, const char* open_kw, const char* close_kw) {
        int depth = 0;
        for (int j = i + 1; j < end; ++j) {
            const auto& lt = st_->lines[j].toks;
            if (lt.empty()) continue;
            if (lt[0].is_kw(open_kw)) ++depth;
            if (lt[0].is_kw(close_kw)) {
                if (depth == 0) return j;
                --depth;
            }
        }
        throw ScriptSyntaxError(st_->lines[i].source_line,
                                std::string("missing ") + close_kw);
    }

    // -- statements ----------------------------------------------------------

    void process_statement(const NormLine& line, Env& env, std::vector<std::string>& call_stack,
                           int loop_depth, uint64_t& seq, std::vector<Event>& events) {
        using script::Tok;
        const auto& t = line.toks;
        size_t start = 0;
        bool is_set = t[0].is_kw("set");
        if (is_set) start = 1;
        if (t.size() > start + 1 && t[start].kind == Tok::Kind::ident && t[start + 1].is("=")) {
            // affectation: name = expr
            Value v = eval_tokens(t, start + 2, t.size(), env, call_stack, loop_depth, seq, events);
            env.names[lowercase(t[start].text)] = to_binding(v);
            return;
        }
        size_t from = 0;
        if (t[0].is_kw("call")) from = 1;
        eval_tokens(t, from, t.size(), env, call_stack, loop_depth, seq, events);
    }

    Binding to_binding(const Value& v) {
        Binding b;
        b.iface = v.iface;
        b.mgr = v.mgr;
        b.value = v.text;
        if (v.object) {
            b.object = v.object;  // several names may refer to one descriptor
        } else if (v.text) {
            // a constant lands in a plain variable; its descriptor is a var
            // regardless of what the text names (a variable can not be typed
            // as the self-reference)
            b.object = registry_.fresh(Nature::variable, ObjectType::var).id;
        }
        return b;
    }

    // -- expressions ---------------------------------------------------------

    // Evaluates toks[from, to): concatenations keep the part with the
    // greater type; nested calls are decomposed through intermediates.
    Value eval_tokens(const std::vector<script::Tok>& t, size_t from, size_t to, Env& env,
                      std::vector<std::string>& call_stack, int loop_depth, uint64_t& seq,
                      std::vector<Event>& events) {
        using script::Tok;
        // split at top-level '&'
        std::vector<std::pair<size_t, size_t>> parts;
        size_t depth = 0, start = from;
        for (size_t i = from; i < to; ++i) {
            if (t[i].is("(")) ++depth;
            if (t[i].is(")")) --depth;
            if (depth == 0 && t[i].is("&")) {
                parts.emplace_back(start, i);
                start = i + 1;
            }
        }
        parts.emplace_back(start, to);
        if (parts.size() > 1) {
            std::vector<Value> vals;
            for (auto [b, e] : parts)
                vals.push_back(eval_tokens(t, b, e, env, call_stack, loop_depth, seq, events));
            bool all_text = true;
            for (const auto& v : vals)
                if (!v.text) all_text = false;
            if (all_text) {
                Value v;
                std::string s;
                for (const auto& p : vals) s += *p.text;
                v.text = std::move(s);
                return v;
            }
            // keep only the element with the greater type
            Value best;
            ObjectType best_type = ObjectType::obj_any;
            for (const auto& v : vals) {
                if (!v.object) continue;
                const auto* d = registry_.find(*v.object);
                if (!d) continue;
                if (!best.object || (poset_leq(best_type, d->otype) && best_type != d->otype)) {
                    best = v;
                    best_type = d->otype;
                }
            }
            return best.object ? best : vals.front();
        }

        size_t i = from;
        if (i < to && t[i].is_kw("not")) {
            Value v = eval_tokens(t, i + 1, to, env, call_stack, loop_depth, seq, events);
            v.negated = !v.negated;
            return v;
        }
        // comparison operators at top level: evaluate both sides for their
        // effects; the probe (if any) survives from the left side
        for (size_t j = from; j < to; ++j) {
            if (t[j].is("(")) ++depth;
            if (t[j].is(")")) --depth;
            if (depth == 0 && j > from &&
                (t[j].is("=") || t[j].is("<>") || t[j].is("<") || t[j].is(">"))) {
                Value l = eval_tokens(t, from, j, env, call_stack, loop_depth, seq, events);
                eval_tokens(t, j + 1, to, env, call_stack, loop_depth, seq, events);
                return l;
            }
        }
        if (i >= to) return Value{};
        if (t[i].kind == Tok::Kind::str) {
            Value v;
            v.text = t[i].text;
            return v;
        }
        if (t[i].kind == Tok::Kind::number) {
            Value v;
            v.text = t[i].text;
            return v;
        }
        if (t[i].is("(")) {
            size_t close = match_paren(t, i, to);
            return eval_tokens(t, i + 1, close, env, call_stack, loop_depth, seq, events);
        }
        if (t[i].kind == Tok::Kind::ident) return eval_call_chain(t, i, to, env, call_stack,
                                                                  loop_depth, seq, events);
        return Value{};
    }

    static size_t match_paren(const std::vector<script::Tok>& t, size_t open, size_t to) {
        size_t depth = 0;
        for (size_t i = open; i < to; ++i) {
            if (t[i].is("(")) ++depth;
            if (t[i].is(")")) {
                if (--depth == 0) return i;
            }
        }
        return to;
    }

    // ident(.ident)* with optional arguments; receivers chain through
    // intermediate objects
    Value eval_call_chain(const std::vector<script::Tok>& t, size_t i, size_t to, Env& env,
                          std::vector<std::string>& call_stack, int loop_depth, uint64_t& seq,
                          std::vector<Event>& events) {
        using script::Tok;
        // collect the dotted segments
        std::vector<std::string> segs{lowercase(t[i].text)};
        size_t j = i + 1;
        while (j + 1 < to && t[j].is(".") && t[j + 1].kind == Tok::Kind::ident) {
            segs.push_back(lowercase(t[j + 1].text));
            j += 2;
        }
        // arguments: parenthesized or the rest of the statement
        std::vector<Value> args;
        if (j < to && t[j].is("(")) {
            size_t close = match_paren(t, j, to);
            args = eval_args(t, j + 1, close, env, call_stack, loop_depth, seq, events);
        } else if (j < to) {
            args = eval_args(t, j, to, env, call_stack, loop_depth, seq, events);
        }

        // special self-reference constants
        if (segs.size() == 2 && segs[0] == "wscript") {
            std::string key = segs[0] + "." + segs[1];
            auto sc = cfg_.special_constants.find(key);
            if (sc != cfg_.special_constants.end()) {
                Value v;
                v.text = sc->second == "self_name" ? self_name_ : self_path_;
                return v;
            }
        }

        // plain name or single builtin/function call
        if (segs.size() == 1) {
            auto it = env.names.find(segs[0]);
            if (it != env.names.end() && args.empty()) return from_binding(it->second);
            return dispatch_call("", segs[0], std::nullopt, args, env, call_stack, loop_depth,
                                 seq, events);
        }

        // resolve the receiver chain
        Value recv;
        {
            auto it = env.names.find(segs[0]);
            if (it != env.names.end()) {
                recv = from_binding(it->second);
            } else if (segs[0] == "wscript") {
                recv.iface = "WScript";
            } else {
                recv = Value{};
            }
        }
        for (size_t k = 1; k + 1 < segs.size(); ++k)
            recv = accessor(recv, segs[k], env, call_stack, loop_depth, seq, events);
        return dispatch_call(receiver_iface(recv), segs.back(), recv.object, args, env,
                             call_stack, loop_depth, seq, events);
    }

    std::vector<Value> eval_args(const std::vector<script::Tok>& t, size_t from, size_t to,
                                 Env& env, std::vector<std::string>& call_stack, int loop_depth,
                                 uint64_t& seq, std::vector<Event>& events) {
        std::vector<Value> out;
        size_t depth = 0, start = from;
        for (size_t i = from; i < to; ++i) {
            if (t[i].is("(")) ++depth;
            if (t[i].is(")")) --depth;
            if (depth == 0 && t[i].is(",")) {
                out.push_back(eval_tokens(t, start, i, env, call_stack, loop_depth, seq, events));
                start = i + 1;
            }
        }
        if (start < to)
            out.push_back(eval_tokens(t, start, to, env, call_stack, loop_depth, seq, events));
        return out;
    }

    std::string receiver_iface(const Value& recv) const {
        if (!recv.iface.empty()) return recv.iface;
        if (recv.mgr) {
            switch (*recv.mgr) {
                case ManagerKind::file: return "FileSystemObject";
                case ManagerKind::shell: return "Shell";
                case ManagerKind::network: return "Network";
                case ManagerKind::mail: return "Outlook";
            }
        }
        return "";
    }

    Value from_binding(const Binding& b) {
        Value v;
        v.object = b.object;
        v.text = b.value;
        v.iface = b.iface;
        v.mgr = b.mgr;
        return v;
    }

    /// Unmonitored method access: a new intermediate object stores the
    /// result, inheriting the receiver's nature and type.
    Value accessor(const Value& recv, const std::string& method, Env&,
                   std::vector<std::string>&, int, uint64_t&, std::vector<Event>&) {
        Nature n = Nature::other;
        ObjectType ty = ObjectType::obj_any;
        if (recv.mgr == ManagerKind::mail) {
            n = Nature::mail;
            ty = ObjectType::obj_com;
        } else if (recv.object) {
            if (const auto* d = registry_.find(*recv.object)) {
                n = d->nature;
                ty = d->otype;
            }
        }
        Value out;
        out.object = registry_.fresh(n, ty).id;
        out.iface = method;
        out.iface[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out.iface[0])));
        return out;
    }

    // -- monitored calls -----------------------------------------------------

    Value dispatch_call(const std::string& iface, const std::string& method,
                        std::optional<ObjectId> receiver, const std::vector<Value>& args,
                        Env& env, std::vector<std::string>& call_stack, int loop_depth,
                        uint64_t& seq, std::vector<Event>& events) {
        // string builtins preserve data flow as affectations
        static const std::set<std::string> string_builtins{
            "mid", "left", "right", "ltrim", "rtrim", "ucase", "lcase", "replace", "trim"};
        if (iface.empty() && string_builtins.count(method)) {
            return args.empty() ? Value{} : args.front();
        }
        if (iface.empty() && method == "len") return Value{};
        if (iface.empty() && method == "createobject" && !args.empty() && args[0].text) {
            Value v;
            if (auto mk = script::manager_for_progid(*args[0].text)) v.mgr = mk;
            return v;
        }

        // user functions: parameters alias the argument objects, recursion is
        // blocked via the call stack
        if (iface.empty()) {
            auto fn = st_->functions.find(method);
            if (fn != st_->functions.end()) {
                for (const auto& active : call_stack)
                    if (active == method) return Value{};  // recursion blocked
                call_stack.push_back(method);
                std::vector<std::pair<std::string, std::optional<Binding>>> saved;
                const FunctionInfo& fi = fn->second;
                for (size_t k = 0; k < fi.params.size(); ++k) {
                    auto prev = env.names.find(fi.params[k]);
                    saved.emplace_back(fi.params[k],
                                       prev == env.names.end()
                                           ? std::nullopt
                                           : std::optional<Binding>(prev->second));
                    if (k < args.size()) env.names[fi.params[k]] = to_binding(args[k]);
                }
                auto prev_ret = env.names.find(method);
                std::optional<Binding> saved_ret =
                    prev_ret == env.names.end() ? std::nullopt
                                                : std::optional<Binding>(prev_ret->second);
                env.names.erase(method);

                walk_into(fi.body_begin, fi.body_end, env, call_stack, loop_depth, seq, events,
                          false);

                Value result;
                auto ret = env.names.find(method);
                if (ret != env.names.end()) result = from_binding(ret->second);
                // the added references are removed once the body has run
                for (auto& [name, prev] : saved) {
                    if (prev)
                        env.names[name] = *prev;
                    else
                        env.names.erase(name);
                }
                if (saved_ret)
                    env.names[method] = *saved_ret;
                else
                    env.names.erase(method);
                call_stack.pop_back();
                return result;
            }
        }

        // catalog lookup: interface-qualified first, then the bare name
        const ApiCatalogEntry* entry = nullptr;
        std::vector<ApiParam> params;
        for (const auto& a : args) params.emplace_back(a.text ? *a.text : std::string());
        if (!iface.empty()) entry = catalog_.map_call(iface + "." + method, params);
        if (!entry && iface.empty()) entry = catalog_.map_call(method, params);
        if (!entry && !iface.empty() && method == "quit") entry = catalog_.map_call("WScript.Quit", params);
        if (!entry) {
            // unmonitored call on an object: intermediate result object
            if (receiver) {
                Value recv;
                recv.object = receiver;
                return accessor(recv, method, env, call_stack, loop_depth, seq, events);
            }
            return Value{};
        }
        return emit_call(*entry, receiver, args, loop_depth, seq, events);
    }

    ObjectDescriptor* role_object(const ApiCatalogEntry::Role& role,
                                  std::optional<ObjectId> receiver,
                                  const std::vector<Value>& args) {
        if (role.param == -1) return receiver ? registry_.find(*receiver) : nullptr;
        if (role.param >= static_cast<int>(args.size())) return nullptr;
        const Value& v = args[role.param];
        if (role.role == "name") {
            // object-position parameter: a known text names the object
            if (v.text) return &registry_.for_name(*v.text);
            if (v.object) return registry_.find(*v.object);
            return nullptr;
        }
        if (role.role == "buffer") {
            // data parameter: the reference, not what its content names
            if (v.object) return registry_.find(*v.object);
            if (v.text) return &registry_.fresh(Nature::variable, ObjectType::var);
            return nullptr;
        }
        if (v.object) return registry_.find(*v.object);
        if (v.text) return &registry_.for_name(*v.text);
        return nullptr;
    }

    Value emit_call(const ApiCatalogEntry& entry, std::optional<ObjectId> receiver,
                    const std::vector<Value>& args, int loop_depth, uint64_t& seq,
                    std::vector<Event>& events) {
        Event e;
        e.seq = seq;
        e.cls = entry.cls;
        e.loop = loop_depth > 0;
        Value result;

        auto obj_of = [&](const ObjectDescriptor& d) {
            return EventObject{d.id, d.nature, d.otype, d.name};
        };
        auto find_role = [&](const char* r) -> ObjectDescriptor* {
            const auto* role = entry.role(r);
            return role ? role_object(*role, receiver, args) : nullptr;
        };

        switch (entry.cls) {
            case InteractionClass::Create:
            case InteractionClass::Open: {
                ObjectDescriptor* obj = find_role("name");
                if (!obj) obj = find_role("subject");
                if (!obj) return result;
                e.objects = {obj_of(*obj)};
                result.object = obj->id;
                result.iface = entry.result_iface;
                result.probe = obj->id;  // existence probes branch on this
                break;
            }
            case InteractionClass::Close:
            case InteractionClass::Delete: {
                ObjectDescriptor* obj = find_role("subject");
                if (!obj) obj = find_role("name");
                if (!obj) return result;
                e.objects = {obj_of(*obj)};
                break;
            }
            case InteractionClass::Read: {
                ObjectDescriptor* src = find_role("source");
                if (!src) return result;
                ObjectDescriptor& var = registry_.fresh(Nature::variable, ObjectType::var);
                e.objects = {obj_of(var), obj_of(*src)};
                result.object = var.id;
                break;
            }
            case InteractionClass::Write: {
                ObjectDescriptor* targ = find_role("target");
                ObjectDescriptor* value = find_role("buffer");
                if (!value) value = find_role("name");
                if (!targ || !value) return result;
                e.objects = {obj_of(*value), obj_of(*targ)};
                break;
            }
            case InteractionClass::FormatOp: {
                ObjectDescriptor* src = find_role("source");
                if (!src) return result;
                ObjectDescriptor& outv = registry_.fresh(Nature::variable, ObjectType::var);
                e.objects = {obj_of(*src), obj_of(outv)};
                result.object = outv.id;
                break;
            }
            case InteractionClass::Execute: {
                ObjectDescriptor* obj = find_role("name");
                if (!obj) obj = find_role("subject");
                if (!obj) return result;
                e.objects = {obj_of(*obj)};
                break;
            }
            case InteractionClass::Signal:
            case InteractionClass::Wait: {
                ObjectDescriptor* obj = find_role("subject");
                if (!obj) obj = &registry_.for_name(self_path_);  // e.g. WScript.Quit
                e.objects = {obj_of(*obj)};
                break;
            }
            case InteractionClass::Branch:
                return result;  // branches are emitted by the explorer itself
        }
        ++seq;
        events.push_back(std::move(e));
        return result;
    }

    const ResourceConfig& cfg_;
    const ApiCatalog& catalog_;
    ExploreOptions opts_;
    DescriptorRegistry registry_;
    const ScriptStructure* st_ = nullptr;
    ScriptAnalysis analysis_;
    std::string self_path_, self_name_;
    int paths_forked_ = 0;
    int execute_depth_ = 0;
    int calls_ = 0;
    std::vector<ScriptStructure> nested_store_;
};

// ---------------------------------------------------------------------------
// String decryption

namespace script {

/// Concrete evaluator for decryption routines written in the mini language.
/// Supports integer/string values, Mid/Len/Chr/Asc, arithmetic, comparisons,
/// assignment, If blocks, For i = a To b and While loops.
class ConcreteInterp {
public:
    using Val = std::variant<int64_t, std::string>;

    ConcreteInterp(const ScriptStructure& st, const FunctionInfo& fi) : st_(st), fi_(fi) {}

    std::string call(const std::string& fname, const std::string& arg) {
        vars_.clear();
        if (fi_.params.size() != 1) throw UnsupportedCipher("routine must take one parameter");
        vars_[fi_.params[0]] = arg;
        run_block(fi_.body_begin, fi_.body_end);
        auto it = vars_.find(fname);
        if (it == vars_.end()) throw UnsupportedCipher("routine sets no return value");
        const auto* s = std::get_if<std::string>(&it->second);
        if (!s) throw UnsupportedCipher("routine returns a non-string");
        return *s;
    }

private:
    void run_block(int begin, int end) {
        if (++steps_ > 200000) throw UnsupportedCipher("routine runs too long");
        int i = begin;
        while (i < end) {
            const NormLine& line = st_.lines[i];
            if (line.tag != LineTag::code || line.toks.empty()) {
                ++i;
                continue;
            }
            const auto& t = line.toks;
            if (t[0].is_kw("if")) {
                size_t then_pos = 1;
                while (then_pos < t.size() && !t[then_pos].is_kw("then")) ++then_pos;
                if (then_pos >= t.size()) throw UnsupportedCipher("if without then");
                bool cond = truthy(eval(t, 1, then_pos));
                if (then_pos + 1 < t.size()) {  // single line
                    if (cond) exec_simple(t, then_pos + 1, t.size(), line.source_line);
                    ++i;
                    continue;
                }
                int else_line = -1, endif_line = -1, depth = 0;
                for (int j = i + 1; j < end; ++j) {
                    const auto& lt = st_.lines[j].toks;
                    if (lt.empty()) continue;
                    if (lt[0].is_kw("if")) {
                        size_t tp = 1;
                        while (tp < lt.size() && !lt[tp].is_kw("then")) ++tp;
                        if (tp + 1 >= lt.size()) ++depth;
                        continue;
                    }
                    if (lt.size() >= 2 && lt[0].is_kw("end") && lt[1].is_kw("if")) {
                        if (depth == 0) {
                            endif_line = j;
                            break;
                        }
                        --depth;
                    }
                    if (lt[0].is_kw("else") && depth == 0 && else_line < 0) else_line = j;
                }
                if (endif_line < 0) throw UnsupportedCipher("if without end if");
                if (cond)
                    run_block(i + 1, else_line >= 0 ? else_line : endif_line);
                else if (else_line >= 0)
                    run_block(else_line + 1, endif_line);
                i = endif_line + 1;
                continue;
            }
            if (t[0].is_kw("for")) {
                // for <v> = <a> to <b> [step <s>]
                if (t.size() < 6 || t[1].kind != Tok::Kind::ident || !t[2].is("="))
                    throw UnsupportedCipher("unsupported for loop");
                size_t to_pos = 3;
                while (to_pos < t.size() && !t[to_pos].is_kw("to")) ++to_pos;
                if (to_pos >= t.size()) throw UnsupportedCipher("for without to");
                size_t step_pos = to_pos + 1;
                while (step_pos < t.size() && !t[step_pos].is_kw("step")) ++step_pos;
                int64_t lo = num(eval(t, 3, to_pos));
                int64_t hi = num(eval(t, to_pos + 1, std::min(step_pos, t.size())));
                int64_t step = 1;
                if (step_pos < t.size()) step = num(eval(t, step_pos + 1, t.size()));
                if (step == 0) throw UnsupportedCipher("zero step");
                int next_line = find_close(i, end, "for", "next");
                std::string v = lowercase(t[1].text);
                for (int64_t x = lo; step > 0 ? x <= hi : x >= hi; x += step) {
                    vars_[v] = x;
                    run_block(i + 1, next_line);
                    if (++steps_ > 200000) throw UnsupportedCipher("routine runs too long");
                }
                i = next_line + 1;
                continue;
            }
            if (t[0].is_kw("while")) {
                int wend = find_close(i, end, "while", "wend");
                while (truthy(eval(t, 1, t.size()))) {
                    run_block(i + 1, wend);
                    if (++steps_ > 200000) throw UnsupportedCipher("routine runs too long");
                }
                i = wend + 1;
                continue;
            }
            if (t[0].is_kw("exit")) {
                return;
            }
            exec_simple(t, 0, t.size(), line.source_line);
            ++i;
        }
    }

    int find_close(int i, int end, const char* open_kw, const char* close_kw) {
        int depth = 0;
        for (int j = i + 1; j < end; ++j) {
            const auto& lt = st_.lines[j].toks;
            if (lt.empty()) continue;
            if (lt[0].is_kw(open_kw)) ++depth;
            if (lt[0].is_kw(close_kw)) {
                if (depth == 0) return j;
                --depth;
            }
        }
        throw UnsupportedCipher(std::string("missing ") + close_kw);
    }

    void exec_simple(const std::vector<Tok>& t, size_t from, size_t to, int lineno) {
        if (to - from >= 3 && t[from].kind == Tok::Kind::ident && t[from + 1].is("="))
            vars_[lowercase(t[from].text)] = eval(t, from + 2, to);
        else if (!(to - from == 0))
            throw UnsupportedCipher("unsupported statement at line " + std::to_string(lineno));
    }

    static bool is_cmp(const Tok& t) {
        return t.is("=") || t.is("<>") || t.is("<") || t.is(">") || t.is("<=") || t.is(">=");
    }

    Val eval(const std::vector<Tok>& t, size_t from, size_t to) {
        // comparisons < concat < additive < multiplicative < unary
        int depth = 0;
        for (size_t i = from; i < to; ++i) {
            if (t[i].is("(")) ++depth;
            if (t[i].is(")")) --depth;
            if (depth == 0 && i > from && is_cmp(t[i])) {
                Val l = eval(t, from, i);
                Val r = eval(t, i + 1, to);
                bool res;
                if (t[i].is("="))
                    res = l == r;
                else if (t[i].is("<>"))
                    res = !(l == r);
                else {
                    int64_t a = num(l), b = num(r);
                    res = t[i].is("<") ? a < b : t[i].is(">") ? a > b : t[i].is("<=") ? a <= b : a >= b;
                }
                return static_cast<int64_t>(res ? -1 : 0);  // VB truth
            }
        }
        for (size_t i = to; i-- > from;) {
            if (t[i].is(")")) ++depth;
            if (t[i].is("(")) --depth;
            if (depth == 0 && i > from && t[i].is("&")) {
                return str(eval(t, from, i)) + str(eval(t, i + 1, to));
            }
        }
        for (size_t i = to; i-- > from;) {
            if (t[i].is(")")) ++depth;
            if (t[i].is("(")) --depth;
            if (depth == 0 && i > from && (t[i].is("+") || t[i].is("-"))) {
                int64_t l = num(eval(t, from, i)), r = num(eval(t, i + 1, to));
                return t[i].is("+") ? l + r : l - r;
            }
        }
        for (size_t i = to; i-- > from;) {
            if (t[i].is(")")) ++depth;
            if (t[i].is("(")) --depth;
            if (depth == 0 && i > from && (t[i].is("*") || t[i].is("/") || t[i].is_kw("mod"))) {
                int64_t l = num(eval(t, from, i)), r = num(eval(t, i + 1, to));
                if (t[i].is("*")) return l * r;
                if (r == 0) throw UnsupportedCipher("division by zero");
                return t[i].is("/") ? l / r : l % r;
            }
        }
        if (from >= to) throw UnsupportedCipher("empty expression");
        if (t[from].kind == Tok::Kind::number) return t[from].num;
        if (t[from].kind == Tok::Kind::str) return t[from].text;
        if (t[from].is("(")) {
            return eval(t, from + 1, to - 1);
        }
        if (t[from].kind == Tok::Kind::ident) {
            std::string name = lowercase(t[from].text);
            if (from + 1 < to && t[from + 1].is("(")) {
                // builtin call
                std::vector<Val> args;
                size_t depth2 = 0, start = from + 2;
                for (size_t i = from + 1; i < to; ++i) {
                    if (t[i].is("(")) ++depth2;
                    if (t[i].is(")")) {
                        if (--depth2 == 0) {
                            if (start < i) args.push_back(eval(t, start, i));
                            break;
                        }
                    }
                    if (depth2 == 1 && t[i].is(",")) {
                        args.push_back(eval(t, start, i));
                        start = i + 1;
                    }
                }
                if (name == "mid" && args.size() >= 2) {
                    const std::string& s = str(args[0]);
                    int64_t pos = num(args[1]);
                    int64_t len = args.size() >= 3 ? num(args[2]) : static_cast<int64_t>(s.size());
                    if (pos < 1 || pos > static_cast<int64_t>(s.size())) return std::string();
                    return s.substr(static_cast<size_t>(pos - 1),
                                    static_cast<size_t>(std::max<int64_t>(len, 0)));
                }
                if (name == "len" && args.size() == 1)
                    return static_cast<int64_t>(str(args[0]).size());
                if (name == "chr" && args.size() == 1)
                    return std::string(1, static_cast<char>(num(args[0]) & 0xff));
                if (name == "asc" && args.size() == 1) {
                    const std::string& s = str(args[0]);
                    if (s.empty()) throw UnsupportedCipher("asc of empty string");
                    return static_cast<int64_t>(static_cast<unsigned char>(s[0]));
                }
                throw UnsupportedCipher("unsupported construct: " + name);
            }
            auto it = vars_.find(name);
            if (it == vars_.end()) throw UnsupportedCipher("unknown variable " + name);
            return it->second;
        }
        throw UnsupportedCipher("unsupported expression token");
    }

    static int64_t num(const Val& v) {
        if (const auto* i = std::get_if<int64_t>(&v)) return *i;
        try {
            return std::stoll(std::get<std::string>(v));
        } catch (const std::exception&) {
            throw UnsupportedCipher("expected a number");
        }
    }
    static std::string str(const Val& v) {
        if (const auto* s = std::get_if<std::string>(&v)) return *s;
        return std::to_string(std::get<int64_t>(v));
    }
    static bool truthy(const Val& v) {
        if (const auto* i = std::get_if<int64_t>(&v)) return *i != 0;
        return !std::get<std::string>(v).empty();
    }

    const ScriptStructure& st_;
    const FunctionInfo& fi_;
    std::map<std::string, Val> vars_;
    int steps_ = 0;
};

}  // namespace script

/// Replaces encrypted literals passed to a permutation-cipher routine by
/// their decrypted values, computed by interpreting the routine over the
/// printable alphabet. The permutation must be charwise and injective.
inline std::string decrypt_strings(const std::string& script_text, const std::string& routine) {
    ScriptStructure st = static_scan(normalize(script_text));
    std::string rname = lowercase(routine);
    auto fn = st.functions.find(rname);
    if (fn == st.functions.end()) throw UnsupportedCipher("no such routine: " + routine);

    script::ConcreteInterp interp(st, fn->second);
    std::map<char, char> table;
    std::set<char> outputs;
    for (int c = 32; c < 127; ++c) {
        std::string out = interp.call(rname, std::string(1, static_cast<char>(c)));
        if (out.size() != 1) throw UnsupportedCipher("routine is not a charwise permutation");
        table[static_cast<char>(c)] = out[0];
        if (!outputs.insert(out[0]).second)
            throw UnsupportedCipher("routine is not injective on printables");
    }

    auto lines = normalize(script_text);
    for (auto& line : lines) {
        if (line.tag != LineTag::code) continue;
        std::vector<script::Tok> out;
        const auto& t = line.toks;
        for (size_t i = 0; i < t.size();) {
            if (i + 3 < t.size() && t[i].kind == script::Tok::Kind::ident &&
                lowercase(t[i].text) == rname && t[i + 1].is("(") &&
                t[i + 2].kind == script::Tok::Kind::str && t[i + 3].is(")")) {
                script::Tok s;
                s.kind = script::Tok::Kind::str;
                for (char c : t[i + 2].text) {
                    auto it = table.find(c);
                    s.text += it == table.end() ? c : it->second;
                }
                out.push_back(std::move(s));
                i += 4;
                continue;
            }
            out.push_back(t[i]);
            ++i;
        }
        line.toks = std::move(out);
        line.text = script::render(line.toks);
    }
    return render_lines(lines);
}

}  // namespace bauto
