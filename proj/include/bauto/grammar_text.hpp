#pragma once

#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bauto/grammar.hpp"

namespace bauto {

/// Syntax error in a behavior-definition file.
struct ParseError : GrammarError {
    int line = 0, col = 0;
    ParseError(int line_, int col_, const std::string& msg)
        : GrammarError("line " + std::to_string(line_) + ":" + std::to_string(col_) + ": " + msg),
          line(line_),
          col(col_) {}
};

namespace text_detail {

struct Cursor {
    const std::string& s;
    size_t i = 0;
    int line;

    void skip_ws() {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    }
    bool eof() {
        skip_ws();
        return i >= s.size();
    }
    char peek() {
        skip_ws();
        return i < s.size() ? s[i] : '\0';
    }
    [[noreturn]] void fail(const std::string& msg) { throw ParseError(line, static_cast<int>(i) + 1, msg); }

    std::string word() {
        skip_ws();
        size_t start = i;
        while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_' ||
                                s[i] == '*' || s[i] == '!'))
            ++i;
        if (i == start) fail("expected a word");
        return s.substr(start, i - start);
    }
    void expect(char c) {
        skip_ws();
        if (i >= s.size() || s[i] != c) fail(std::string("expected '") + c + "'");
        ++i;
    }
    bool try_consume(char c) {
        skip_ws();
        if (i < s.size() && s[i] == c) {
            ++i;
            return true;
        }
        return false;
    }
    std::string quoted() {
        expect('"');
        std::string out;
        while (i < s.size() && s[i] != '"') out += s[i++];
        if (i >= s.size()) fail("unterminated string");
        ++i;
        return out;
    }
};

inline int parse_int(Cursor& c) {
    std::string num = c.word();
    try {
        return std::stoi(num);
    } catch (const std::exception&) {
        c.fail("expected a number, got '" + num + "'");
    }
}

// <Sym[k]>.attr where attr may be a dotted operand path
inline AttrRef parse_ref(Cursor& c) {
    AttrRef ref;
    c.expect('<');
    ref.symbol = c.word();
    if (c.try_consume('[')) {
        ref.occurrence = parse_int(c);
        c.expect(']');
    }
    c.expect('>');
    c.expect('.');
    ref.attr = c.word();
    while (c.i < c.s.size() && c.s[c.i] == '.') {
        ++c.i;
        ref.attr += "." + c.word();
    }
    return ref;
}

inline Expr parse_atom(Cursor& c) {
    char p = c.peek();
    if (p == '"') return Expr::make_const(AttrValue{c.quoted()});
    if (p == '<') return Expr::make_ref(parse_ref(c));
    std::string w = c.word();
    if (w == "fact") {
        c.expect('(');
        std::string behavior = c.word();
        c.expect('.');
        std::string attr = c.word();
        c.expect(')');
        return Expr::make_fact(behavior, attr);
    }
    if (auto t = object_type_from_string(w)) return Expr::make_const(AttrValue{*t});
    if (auto n = nature_from_string(w)) return Expr::make_const(AttrValue{*n});
    c.fail("unknown literal '" + w + "'");
}

inline Expr parse_expr(Cursor& c) {
    std::vector<Expr> alts;
    alts.push_back(parse_atom(c));
    while (c.try_consume('|')) alts.push_back(parse_atom(c));
    if (alts.size() == 1) return alts.front();
    return Expr::make_disj(std::move(alts));
}

inline Symbol parse_symbol(Cursor& c) {
    if (c.try_consume('<')) {
        std::string name = c.word();
        c.expect('>');
        return Symbol::nonterminal(name);
    }
    std::string tok = c.word();
    auto t = terminal_from_token(tok);
    if (!t) c.fail("unknown terminal '" + tok + "'");
    Symbol s;
    s.term = *t;
    return s;
}

inline bool rule_applies(const Production& p, const SemanticRule& r) {
    if (!resolve_position(p, r.target)) return false;
    std::vector<AttrRef> refs;
    r.expr.collect_refs(refs);
    for (const auto& ref : refs)
        if (!resolve_position(p, ref)) return false;
    return true;
}

}  // namespace text_detail

/// Parses the behavior-definition format:
///   behavior <Name>
///   rule <NT> ::= sym ... | sym ...
///   sem <Sym[k]>.attr = expr
///   variant <NT> <k> "label"
/// `sem` lines attach to the alternatives of the preceding rule's nonterminal
/// in which every referenced symbol occurs. `#` starts a comment.
inline AttributeGrammar parse_behavior_text(const std::string& text) {
    using namespace text_detail;
    AttributeGrammar g;
    // Pending sem rules per nonterminal, applied after all rules are read.
    std::vector<std::pair<std::string, SemanticRule>> pending;
    std::vector<std::tuple<std::string, int, std::string>> labels;

    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    std::string current_nt;
    while (std::getline(in, raw)) {
        ++lineno;
        auto hash = raw.find('#');
        std::string line = hash == std::string::npos ? raw : raw.substr(0, hash);
        Cursor c{line, 0, lineno};
        if (c.eof()) continue;
        std::string kw = c.word();
        if (kw == "behavior") {
            g.name = c.word();
        } else if (kw == "rule") {
            c.expect('<');
            std::string head = c.word();
            c.expect('>');
            c.expect(':');
            c.expect(':');
            c.expect('=');
            current_nt = head;
            if (g.start.empty()) g.start = head;
            Production p;
            p.head = head;
            while (!c.eof()) {
                if (c.try_consume('|')) {
                    if (p.rhs.empty()) c.fail("empty alternative");
                    g.productions.push_back(std::move(p));
                    p = Production{};
                    p.head = head;
                    continue;
                }
                p.rhs.push_back(parse_symbol(c));
            }
            g.productions.push_back(std::move(p));
        } else if (kw == "sem") {
            if (current_nt.empty()) c.fail("sem before any rule");
            SemanticRule r;
            r.target = parse_ref(c);
            c.expect('=');
            r.expr = parse_expr(c);
            if (!c.eof()) c.fail("trailing text after expression");
            pending.emplace_back(current_nt, std::move(r));
        } else if (kw == "variant") {
            c.expect('<');
            std::string head = c.word();
            c.expect('>');
            int k = parse_int(c);
            std::string label = c.quoted();
            labels.emplace_back(head, k, label);
        } else {
            c.fail("unknown directive '" + kw + "'");
        }
    }
    if (g.start.empty()) throw ParseError(lineno, 1, "no start symbol: file defines no rules");

    std::vector<std::string> findings;
    for (auto& [nt, rule] : pending) {
        bool applied = false;
        for (int pi : g.alternatives_of(nt)) {
            Production& p = g.productions[pi];
            if (rule_applies(p, rule)) {
                p.rules.push_back(rule);
                applied = true;
            }
        }
        if (!applied)
            findings.push_back("sem rule " + rule.target.display() +
                               " matches no alternative of <" + nt + ">");
    }
    for (auto& [head, k, label] : labels) {
        auto alts = g.alternatives_of(head);
        if (k < 0 || k >= static_cast<int>(alts.size()))
            findings.push_back("variant index " + std::to_string(k) + " out of range for <" +
                               head + ">");
        else
            g.productions[alts[k]].variant_label = label;
    }
    if (!findings.empty()) throw ValidationError(std::move(findings));
    return g;
}

/// Loads and validates a behavior definition; the grammar is additionally
/// checked for single-pass parsability.
inline AttributeGrammar load_behavior_file(const std::string& text) {
    AttributeGrammar g = parse_behavior_text(text);
    auto structural = validate(g);
    if (!structural.empty()) throw ValidationError(std::move(structural));
    auto report = ll1_check(g);
    if (!report.ok()) {
        std::vector<std::string> findings = report.conflicts;
        findings.insert(findings.end(), report.l_violations.begin(), report.l_violations.end());
        throw ValidationError(std::move(findings));
    }
    return g;
}

/// Serializes a grammar to the behavior-definition format. Alternatives of a
/// nonterminal share one rule line; sem lines are the union of the
/// alternatives' rules and re-attach by symbol presence on reload.
inline std::string serialize_behavior(const AttributeGrammar& g) {
    std::ostringstream os;
    os << "behavior " << g.name << "\n";
    std::vector<std::string> order;
    order.push_back(g.start);
    for (const auto& nt : g.nonterminals())
        if (nt != g.start) order.push_back(nt);
    for (const auto& nt : order) {
        auto alts = g.alternatives_of(nt);
        if (alts.empty()) continue;
        os << "\nrule <" << nt << "> ::= ";
        for (size_t ai = 0; ai < alts.size(); ++ai) {
            if (ai) os << " | ";
            const Production& p = g.productions[alts[ai]];
            for (size_t si = 0; si < p.rhs.size(); ++si) {
                if (si) os << ' ';
                const Symbol& s = p.rhs[si];
                os << (s.is_terminal() ? terminal_token(s.term) : "<" + s.nt + ">");
            }
        }
        os << "\n";
        std::vector<SemanticRule> emitted;
        for (int pi : alts) {
            for (const auto& r : g.productions[pi].rules) {
                if (std::find(emitted.begin(), emitted.end(), r) != emitted.end()) continue;
                emitted.push_back(r);
                os << "sem " << r.target.display() << " = " << r.expr.display() << "\n";
            }
        }
        for (size_t ai = 0; ai < alts.size(); ++ai) {
            const Production& p = g.productions[alts[ai]];
            if (!p.variant_label.empty())
                os << "variant <" << nt << "> " << ai << " \"" << p.variant_label << "\"\n";
        }
    }
    return os.str();
}

}  // namespace bauto
