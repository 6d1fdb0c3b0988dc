#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bauto/attr.hpp"
#include "bauto/event.hpp"
#include "bauto/types.hpp"

namespace bauto {

struct GrammarError : std::runtime_error {
    explicit GrammarError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Structural problems found while building or loading a grammar.
struct ValidationError : GrammarError {
    std::vector<std::string> findings;
    explicit ValidationError(std::vector<std::string> f)
        : GrammarError(f.empty() ? "validation failed" : f.front()), findings(std::move(f)) {}
};

/// Raised when a parse table is requested for a grammar with unresolved
/// lookahead conflicts.
struct ConflictError : GrammarError {
    explicit ConflictError(const std::string& msg) : GrammarError(msg) {}
};

/// Loop requirement of a terminal: `any` matches either, `yes` only
/// loop-marked events, `no` only plain ones.
enum class LoopReq : uint8_t { any, yes, no };

struct TerminalSym {
    InteractionClass cls = InteractionClass::Signal;
    LoopReq loop = LoopReq::any;

    friend bool operator==(const TerminalSym& a, const TerminalSym& b) {
        return a.cls == b.cls && a.loop == b.loop;
    }
};

/// Token form: lowercase class name, `*` suffix = loop-marked only,
/// `!` suffix = non-loop only.
inline std::string terminal_token(const TerminalSym& t) {
    std::string s(to_string(t.cls));
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (t.cls == InteractionClass::FormatOp) s = "format";
    if (t.loop == LoopReq::yes) s += '*';
    if (t.loop == LoopReq::no) s += '!';
    return s;
}

inline std::optional<TerminalSym> terminal_from_token(std::string_view tok) {
    TerminalSym t;
    if (!tok.empty() && (tok.back() == '*' || tok.back() == '!')) {
        t.loop = tok.back() == '*' ? LoopReq::yes : LoopReq::no;
        tok.remove_suffix(1);
    }
    std::string lowered(tok);
    if (lowered == "format") lowered = "FormatOp";
    for (int i = 0; i < kInteractionClassCount; ++i) {
        auto c = static_cast<InteractionClass>(i);
        std::string name(to_string(c));
        std::string lname = name;
        for (auto& ch : lname) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        if (lowered == lname || lowered == name) {
            t.cls = c;
            return t;
        }
    }
    return std::nullopt;
}

/// Grammar symbol: a nonterminal (by name) or a terminal pattern.
struct Symbol {
    std::string nt;      // empty for terminals
    TerminalSym term{};

    bool is_terminal() const { return nt.empty(); }

    static Symbol nonterminal(std::string name) {
        Symbol s;
        s.nt = std::move(name);
        return s;
    }
    static Symbol terminal(InteractionClass cls, LoopReq loop = LoopReq::any) {
        Symbol s;
        s.term = TerminalSym{cls, loop};
        return s;
    }

    std::string display() const { return is_terminal() ? terminal_token(term) : "<" + nt + ">"; }

    friend bool operator==(const Symbol& a, const Symbol& b) {
        return a.nt == b.nt && (!a.nt.empty() || a.term == b.term);
    }
};

/// Reference to an attribute of a symbol occurrence within one production.
/// `symbol` is the head name or an RHS symbol name/token; `occurrence`
/// disambiguates repeated RHS symbols. For terminals `attr` is an operand
/// path such as "object1.objId", or "arm" on branch.
struct AttrRef {
    std::string symbol;
    int occurrence = 0;
    std::string attr;

    std::string display() const {
        std::string s = "<" + symbol;
        if (occurrence != 0) s += "[" + std::to_string(occurrence) + "]";
        return s + ">." + attr;
    }

    friend bool operator==(const AttrRef& a, const AttrRef& b) {
        return a.symbol == b.symbol && a.occurrence == b.occurrence && a.attr == b.attr;
    }
};

struct Expr {
    enum class Kind { constant, ref, fact, disj };
    Kind kind = Kind::constant;
    AttrValue constant = ObjectId{};
    AttrRef ref;
    std::string fact_behavior, fact_attr;
    std::vector<Expr> disjuncts;

    static Expr make_const(AttrValue v) {
        Expr e;
        e.kind = Kind::constant;
        e.constant = std::move(v);
        return e;
    }
    static Expr make_ref(AttrRef r) {
        Expr e;
        e.kind = Kind::ref;
        e.ref = std::move(r);
        return e;
    }
    static Expr make_fact(std::string behavior, std::string attr) {
        Expr e;
        e.kind = Kind::fact;
        e.fact_behavior = std::move(behavior);
        e.fact_attr = std::move(attr);
        return e;
    }
    static Expr make_disj(std::vector<Expr> alts) {
        Expr e;
        e.kind = Kind::disj;
        e.disjuncts = std::move(alts);
        return e;
    }

    void collect_refs(std::vector<AttrRef>& out) const {
        if (kind == Kind::ref) out.push_back(ref);
        for (const auto& d : disjuncts) d.collect_refs(out);
    }
    bool contains_fact() const {
        if (kind == Kind::fact) return true;
        for (const auto& d : disjuncts)
            if (d.contains_fact()) return true;
        return false;
    }
    bool contains_disj() const { return kind == Kind::disj; }

    std::string display() const {
        switch (kind) {
            case Kind::constant: {
                if (const auto* t = std::get_if<ObjectType>(&constant)) return std::string(to_string(*t));
                if (const auto* n = std::get_if<Nature>(&constant)) return std::string(to_string(*n));
                if (const auto* s = std::get_if<std::string>(&constant)) return "\"" + *s + "\"";
                return to_display(constant);
            }
            case Kind::ref: return ref.display();
            case Kind::fact: return "fact(" + fact_behavior + "." + fact_attr + ")";
            case Kind::disj: {
                std::string s;
                for (size_t i = 0; i < disjuncts.size(); ++i) {
                    if (i) s += " | ";
                    s += disjuncts[i].display();
                }
                return s;
            }
        }
        return "";
    }

    friend bool operator==(const Expr& a, const Expr& b) {
        if (a.kind != b.kind) return false;
        switch (a.kind) {
            case Kind::constant: return a.constant == b.constant;
            case Kind::ref: return a.ref == b.ref;
            case Kind::fact: return a.fact_behavior == b.fact_behavior && a.fact_attr == b.fact_attr;
            case Kind::disj: return a.disjuncts == b.disjuncts;
        }
        return false;
    }
};

/// One semantic rule of a production. A rule targeting a nonterminal
/// attribute defines it (a consequence); a rule targeting a terminal operand
/// attribute is a prerequisite checked when the event is matched.
struct SemanticRule {
    AttrRef target;
    Expr expr;

    friend bool operator==(const SemanticRule& a, const SemanticRule& b) {
        return a.target == b.target && a.expr == b.expr;
    }
};

struct Production {
    std::string head;
    std::vector<Symbol> rhs;
    std::vector<SemanticRule> rules;
    std::string variant_label;
};

struct AttributeGrammar {
    std::string name;
    std::string start;
    std::vector<Production> productions;

    std::vector<int> alternatives_of(const std::string& nt) const {
        std::vector<int> out;
        for (size_t i = 0; i < productions.size(); ++i)
            if (productions[i].head == nt) out.push_back(static_cast<int>(i));
        return out;
    }
    std::vector<std::string> nonterminals() const {
        std::vector<std::string> out;
        for (const auto& p : productions)
            if (std::find(out.begin(), out.end(), p.head) == out.end()) out.push_back(p.head);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Reference resolution

/// Resolved variable of a production: position 0 is the head.
struct VarKey {
    int pos = 0;
    std::string attr;

    friend bool operator==(const VarKey& a, const VarKey& b) {
        return a.pos == b.pos && a.attr == b.attr;
    }
    friend bool operator<(const VarKey& a, const VarKey& b) {
        return a.pos != b.pos ? a.pos < b.pos : a.attr < b.attr;
    }
};

enum class TermField : uint8_t { obj_id, obj_tp, obj_nat, arm };

/// Parsed terminal attr path: operand slot plus field; operand -1 is the
/// statement-level `arm` attribute.
struct TermAttr {
    int operand = 0;
    TermField field = TermField::obj_id;
};

inline std::optional<TermAttr> parse_term_attr(const std::string& attr, InteractionClass cls) {
    TermAttr out;
    std::string field = attr;
    if (attr == "arm") {
        if (cls != InteractionClass::Branch) return std::nullopt;
        out.operand = -1;
        out.field = TermField::arm;
        return out;
    }
    auto dot = attr.find('.');
    if (dot == std::string::npos) return std::nullopt;
    std::string op = attr.substr(0, dot);
    field = attr.substr(dot + 1);
    int nops = operand_count(cls);
    if (op == "object" && nops == 1)
        out.operand = 0;
    else if (op == "object1" && nops == 2)
        out.operand = 0;
    else if (op == "object2" && nops == 2)
        out.operand = 1;
    else
        return std::nullopt;
    if (field == "objId")
        out.field = TermField::obj_id;
    else if (field == "objTp")
        out.field = TermField::obj_tp;
    else if (field == "objNat")
        out.field = TermField::obj_nat;
    else
        return std::nullopt;
    return out;
}

inline std::optional<int> resolve_position(const Production& p, const AttrRef& ref) {
    if (ref.symbol == p.head && ref.occurrence == 0) return 0;
    int seen = 0;
    for (size_t i = 0; i < p.rhs.size(); ++i) {
        const Symbol& s = p.rhs[i];
        std::string name = s.is_terminal() ? terminal_token(s.term) : s.nt;
        if (name == ref.symbol) {
            if (seen == ref.occurrence) return static_cast<int>(i) + 1;
            ++seen;
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Declarations (inferred) and validation

struct NtDecls {
    std::set<std::string> syn, inh;
};

using DeclMap = std::map<std::string, NtDecls>;

namespace detail {

inline void infer_decls_pass(const AttributeGrammar& g, DeclMap& decls,
                             std::vector<std::string>& findings) {
    // Targets decide: head target => synthesized, RHS nonterminal target =>
    // inherited.
    for (const auto& p : g.productions) {
        for (const auto& r : p.rules) {
            auto pos = resolve_position(p, r.target);
            if (!pos) continue;  // reported elsewhere
            if (*pos == 0) {
                decls[p.head].syn.insert(r.target.attr);
            } else {
                const Symbol& s = p.rhs[*pos - 1];
                if (!s.is_terminal()) decls[s.nt].inh.insert(r.target.attr);
            }
        }
    }
    // References to an attribute of the head from inside its own productions
    // mean the value is supplied from outside: inherited.
    for (const auto& p : g.productions) {
        for (const auto& r : p.rules) {
            std::vector<AttrRef> refs;
            r.expr.collect_refs(refs);
            for (const auto& ref : refs) {
                auto pos = resolve_position(p, ref);
                if (!pos || *pos != 0) continue;
                if (!decls[p.head].syn.count(ref.attr)) decls[p.head].inh.insert(ref.attr);
            }
        }
    }
    for (auto& [nt, d] : decls) {
        for (const auto& a : d.syn)
            if (d.inh.count(a))
                findings.push_back("attribute '" + a + "' of <" + nt +
                                   "> is both synthesized and inherited");
    }
}

}  // namespace detail

inline DeclMap infer_declarations(const AttributeGrammar& g) {
    DeclMap decls;
    std::vector<std::string> findings;
    detail::infer_decls_pass(g, decls, findings);
    return decls;
}

/// Structural validation. Returns human-readable findings; empty means the
/// grammar is well-formed enough for ll1_check and table construction.
inline std::vector<std::string> validate(const AttributeGrammar& g) {
    std::vector<std::string> out;
    if (g.start.empty() || g.alternatives_of(g.start).empty()) {
        out.push_back("no start symbol");
        return out;
    }
    std::set<std::string> defined;
    for (const auto& p : g.productions) defined.insert(p.head);

    for (const auto& p : g.productions) {
        std::string where = "<" + p.head + ">";
        if (p.rhs.empty()) {
            out.push_back(where + ": empty right-hand side");
            continue;
        }
        for (const auto& s : p.rhs) {
            if (!s.is_terminal() && !defined.count(s.nt))
                out.push_back(where + ": undefined nonterminal <" + s.nt + ">");
            if (!s.is_terminal() && s.nt == p.head)
                out.push_back(where + ": head recurs in its own right-hand side");
        }
        for (const auto& r : p.rules) {
            auto pos = resolve_position(p, r.target);
            if (!pos) {
                out.push_back(where + ": unresolvable rule target " + r.target.display());
                continue;
            }
            if (*pos > 0 && p.rhs[*pos - 1].is_terminal()) {
                if (!parse_term_attr(r.target.attr, p.rhs[*pos - 1].term.cls))
                    out.push_back(where + ": bad terminal attribute '" + r.target.attr + "'");
            } else {
                // Consequence rules must evaluate to a single value.
                if (r.expr.contains_fact() || r.expr.contains_disj())
                    out.push_back(where + ": rule for " + r.target.display() +
                                  " uses fact/disjunction outside a prerequisite");
            }
            std::vector<AttrRef> refs;
            r.expr.collect_refs(refs);
            for (const auto& ref : refs) {
                auto rp = resolve_position(p, ref);
                if (!rp)
                    out.push_back(where + ": unresolvable reference " + ref.display());
                else if (*rp > 0 && p.rhs[*rp - 1].is_terminal() &&
                         !parse_term_attr(ref.attr, p.rhs[*rp - 1].term.cls))
                    out.push_back(where + ": bad terminal reference " + ref.display());
            }
        }
    }
    if (!out.empty()) return out;

    DeclMap decls;
    detail::infer_decls_pass(g, decls, out);
    if (!out.empty()) return out;

    // Def-1 discipline: every inner variable has exactly one defining rule.
    for (const auto& p : g.productions) {
        std::string where = "<" + p.head + ">";
        std::map<VarKey, int> def_count;
        for (const auto& r : p.rules) {
            auto pos = resolve_position(p, r.target);
            ++def_count[VarKey{*pos, r.target.attr}];
        }
        for (const auto& [k, n] : def_count)
            if (n > 1)
                out.push_back(where + ": inner variable at position " + std::to_string(k.pos) +
                              " attr '" + k.attr + "' has " + std::to_string(n) + " rules");
        for (const auto& a : decls[p.head].syn)
            if (!def_count.count(VarKey{0, a}))
                out.push_back(where + ": synthesized attribute '" + a + "' never defined here");
        for (size_t i = 0; i < p.rhs.size(); ++i) {
            const Symbol& s = p.rhs[i];
            if (s.is_terminal()) continue;
            for (const auto& a : decls[s.nt].inh)
                if (!def_count.count(VarKey{static_cast<int>(i) + 1, a}))
                    out.push_back(where + ": inherited attribute '" + a + "' of <" + s.nt +
                                  "> position " + std::to_string(i + 1) + " not defined");
        }
    }
    // Referenced synthesized attributes must be definable by the child.
    for (const auto& p : g.productions) {
        for (const auto& r : p.rules) {
            std::vector<AttrRef> refs;
            r.expr.collect_refs(refs);
            for (const auto& ref : refs) {
                auto rp = resolve_position(p, ref);
                if (*rp == 0 || p.rhs[*rp - 1].is_terminal()) continue;
                const std::string& child = p.rhs[*rp - 1].nt;
                if (!decls[child].syn.count(ref.attr) && !decls[child].inh.count(ref.attr))
                    out.push_back("<" + p.head + ">: reference " + ref.display() +
                                  " names an attribute <" + child + "> never defines");
            }
        }
    }
    return out;
}

/// Splits the variables of a production into inner (defined by this
/// production's semantic rules) and outer, per the inferred declarations.
struct VarPartition {
    std::set<VarKey> inner, outer;
};

inline VarPartition partition_variables(const AttributeGrammar& g, const Production& p) {
    DeclMap decls = infer_declarations(g);
    VarPartition out;
    std::set<VarKey> all;
    auto add_nt = [&](const std::string& nt, int pos) {
        for (const auto& a : decls[nt].syn) all.insert(VarKey{pos, a});
        for (const auto& a : decls[nt].inh) all.insert(VarKey{pos, a});
    };
    add_nt(p.head, 0);
    for (size_t i = 0; i < p.rhs.size(); ++i) {
        const Symbol& s = p.rhs[i];
        int pos = static_cast<int>(i) + 1;
        if (s.is_terminal()) {
            int nops = operand_count(s.term.cls);
            static const char* fields[] = {"objId", "objTp", "objNat"};
            for (int op = 0; op < nops; ++op) {
                std::string prefix = nops == 1 ? "object" : (op == 0 ? "object1" : "object2");
                for (const char* f : fields) all.insert(VarKey{pos, prefix + "." + f});
            }
            if (s.term.cls == InteractionClass::Branch) all.insert(VarKey{pos, "arm"});
        } else {
            add_nt(s.nt, pos);
        }
    }
    for (const auto& a : decls[p.head].syn) out.inner.insert(VarKey{0, a});
    for (size_t i = 0; i < p.rhs.size(); ++i) {
        const Symbol& s = p.rhs[i];
        int pos = static_cast<int>(i) + 1;
        if (s.is_terminal()) {
            for (const auto& r : p.rules) {
                auto rp = resolve_position(p, r.target);
                if (rp && *rp == pos) out.inner.insert(VarKey{pos, r.target.attr});
            }
        } else {
            for (const auto& a : decls[s.nt].inh) out.inner.insert(VarKey{pos, a});
        }
    }
    for (const auto& v : all)
        if (!out.inner.count(v)) out.outer.insert(v);
    return out;
}

// ---------------------------------------------------------------------------
// Single-pass evaluation order

/// Per-production evaluation plan. Positions run 1..n; 0 means "at entry".
/// Consequence rules are scheduled at the earliest position where their
/// dependencies are available; inherited definitions run when their symbol is
/// expanded; prerequisites run when their terminal is matched.
struct ProductionPlan {
    std::vector<int> consequence_at;   // rule index -> position, -1 if not a consequence
    std::vector<int> inherited_for;    // rule index -> rhs position, -1 otherwise
    std::vector<int> prereq_for;       // rule index -> rhs position, -1 otherwise
    std::vector<std::string> l_violations;
};

inline ProductionPlan analyze_production(const AttributeGrammar& g, const Production& p,
                                         const DeclMap& decls) {
    ProductionPlan plan;
    int n = static_cast<int>(p.rhs.size());
    plan.consequence_at.assign(p.rules.size(), -1);
    plan.inherited_for.assign(p.rules.size(), -1);
    plan.prereq_for.assign(p.rules.size(), -1);

    std::set<VarKey> avail;
    const auto& head_decls = decls.count(p.head) ? decls.at(p.head) : NtDecls{};
    for (const auto& a : head_decls.inh) avail.insert(VarKey{0, a});

    auto deps_ok = [&](const Expr& e, int self_pos) {
        std::vector<AttrRef> refs;
        e.collect_refs(refs);
        for (const auto& ref : refs) {
            auto rp = resolve_position(p, ref);
            if (!rp) return false;
            if (self_pos > 0 && *rp == self_pos) continue;  // own-event attributes
            if (!avail.count(VarKey{*rp, ref.attr})) return false;
        }
        return true;
    };
    auto run_consequences = [&](int at_pos) {
        bool changed = true;
        while (changed) {
            changed = false;
            for (size_t ri = 0; ri < p.rules.size(); ++ri) {
                const auto& r = p.rules[ri];
                auto tp = resolve_position(p, r.target);
                if (!tp || *tp != 0) continue;
                if (plan.consequence_at[ri] >= 0) continue;
                if (deps_ok(r.expr, 0)) {
                    plan.consequence_at[ri] = at_pos;
                    avail.insert(VarKey{0, r.target.attr});
                    changed = true;
                }
            }
        }
    };

    run_consequences(0);
    for (int i = 1; i <= n; ++i) {
        const Symbol& s = p.rhs[i - 1];
        for (size_t ri = 0; ri < p.rules.size(); ++ri) {
            const auto& r = p.rules[ri];
            auto tp = resolve_position(p, r.target);
            if (!tp || *tp != i) continue;
            if (s.is_terminal()) {
                plan.prereq_for[ri] = i;
                if (!deps_ok(r.expr, i))
                    plan.l_violations.push_back("<" + p.head + ">: prerequisite " +
                                                r.target.display() +
                                                " depends on attributes of symbols to its right");
            } else {
                plan.inherited_for[ri] = i;
                if (!deps_ok(r.expr, 0))
                    plan.l_violations.push_back("<" + p.head + ">: inherited definition " +
                                                r.target.display() +
                                                " depends on attributes of symbols to its right");
                else
                    avail.insert(VarKey{i, r.target.attr});
            }
        }
        // Everything the symbol yields becomes available after it completes.
        if (s.is_terminal()) {
            int nops = operand_count(s.term.cls);
            static const char* fields[] = {"objId", "objTp", "objNat"};
            for (int op = 0; op < nops; ++op) {
                std::string prefix = nops == 1 ? "object" : (op == 0 ? "object1" : "object2");
                for (const char* f : fields) avail.insert(VarKey{i, prefix + std::string(".") + f});
            }
            if (s.term.cls == InteractionClass::Branch) avail.insert(VarKey{i, "arm"});
        } else {
            auto it = decls.find(s.nt);
            if (it != decls.end())
                for (const auto& a : it->second.syn) avail.insert(VarKey{i, a});
        }
        run_consequences(i);
    }
    for (size_t ri = 0; ri < p.rules.size(); ++ri) {
        auto tp = resolve_position(p, p.rules[ri].target);
        if (tp && *tp == 0 && plan.consequence_at[ri] < 0)
            plan.l_violations.push_back("<" + p.head + ">: rule for " +
                                        p.rules[ri].target.display() +
                                        " is never evaluable in a left-to-right pass");
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Refined lookahead keys

/// Lookahead key: interaction class, loop requirement, and the operand
/// requirements that constant-fold at table-construction time.
struct TerminalKey {
    InteractionClass cls = InteractionClass::Signal;
    LoopReq loop = LoopReq::any;
    struct Req {
        int operand = 0;  // -1 = arm
        TermField field = TermField::obj_id;
        AttrValue value = ObjectId{};
    };
    std::vector<Req> reqs;

    bool matches(const Event& e) const {
        if (e.cls != cls) return false;
        if (loop == LoopReq::yes && !e.loop) return false;
        if (loop == LoopReq::no && e.loop) return false;
        for (const auto& r : reqs) {
            if (r.operand == -1) {
                const auto* txt = std::get_if<std::string>(&r.value);
                if (!e.arm || !txt) return false;
                if ((*e.arm ? "true" : "false") != *txt) return false;
                continue;
            }
            if (r.operand >= static_cast<int>(e.objects.size())) return false;
            const EventObject& o = e.objects[r.operand];
            switch (r.field) {
                case TermField::obj_tp: {
                    const auto* t = std::get_if<ObjectType>(&r.value);
                    if (!t || !poset_leq(*t, o.type)) return false;
                    break;
                }
                case TermField::obj_nat: {
                    const auto* nn = std::get_if<Nature>(&r.value);
                    if (!nn || *nn != o.nature) return false;
                    break;
                }
                default:
                    break;  // identity requirements are runtime-only
            }
        }
        return true;
    }

    /// Whether some event could satisfy both keys.
    bool overlaps(const TerminalKey& o) const {
        if (cls != o.cls) return false;
        if ((loop == LoopReq::yes && o.loop == LoopReq::no) ||
            (loop == LoopReq::no && o.loop == LoopReq::yes))
            return false;
        for (const auto& a : reqs) {
            for (const auto& b : o.reqs) {
                if (a.operand != b.operand || a.field != b.field) continue;
                if (a.field == TermField::obj_tp) {
                    const auto* ta = std::get_if<ObjectType>(&a.value);
                    const auto* tb = std::get_if<ObjectType>(&b.value);
                    if (ta && tb && !type_lub(*ta, *tb)) return false;
                } else if (!(a.value == b.value)) {
                    return false;
                }
            }
        }
        return true;
    }

    std::string display() const {
        std::string s = terminal_token(TerminalSym{cls, loop});
        for (const auto& r : reqs) {
            s += " [";
            s += r.operand == -1 ? "arm" : "op" + std::to_string(r.operand + 1);
            s += "=" + to_display(r.value) + "]";
        }
        return s;
    }
};

// ---------------------------------------------------------------------------
// Factored alternatives (parse table)

/// Per-nonterminal decision trie. Alternatives sharing a symbol prefix share a
/// path; an entry of the public table maps a lookahead key to the family of
/// alternatives reachable through one root edge.
struct NtTrie {
    struct Edge {
        Symbol sym;
        std::vector<TerminalKey> keys;
        int next = -1;
        std::vector<int> alts;  // production indexes reachable via this edge
    };
    struct Node {
        std::vector<Edge> edges;
        int complete_alt = -1;
    };
    std::vector<Node> nodes;  // 0 = root
};

struct Ll1Report {
    std::vector<std::string> conflicts;
    std::vector<std::string> l_violations;

    bool ok() const { return conflicts.empty() && l_violations.empty(); }
    std::string summary() const {
        std::string s;
        for (const auto& c : conflicts) s += "conflict: " + c + "\n";
        for (const auto& v : l_violations) s += "l-attr: " + v + "\n";
        return s;
    }
};

namespace detail {

using ConstEnv = std::map<std::string, AttrValue>;  // head attr -> folded value

inline std::optional<AttrValue> const_eval(const Production& p, const Expr& e,
                                           const ConstEnv& env) {
    switch (e.kind) {
        case Expr::Kind::constant: return e.constant;
        case Expr::Kind::ref: {
            auto pos = resolve_position(p, e.ref);
            if (!pos || *pos != 0) return std::nullopt;
            auto it = env.find(e.ref.attr);
            if (it != env.end()) return it->second;
            return std::nullopt;
        }
        default: return std::nullopt;
    }
}

/// Folds the head attributes of `p` that reduce to constants at entry, given
/// constant inherited attributes.
inline ConstEnv fold_entry(const Production& p, const ConstEnv& inherited) {
    ConstEnv env = inherited;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& r : p.rules) {
            auto pos = resolve_position(p, r.target);
            if (!pos || *pos != 0 || env.count(r.target.attr)) continue;
            if (auto v = const_eval(p, r.expr, env)) {
                env[r.target.attr] = *v;
                changed = true;
            }
        }
    }
    return env;
}

struct KeyComputer {
    const AttributeGrammar& g;
    std::vector<std::string>& conflicts;
    std::vector<std::string> active;  // cycle guard

    std::vector<TerminalKey> terminal_keys(const Production& p, int pos, const ConstEnv& entry) {
        const TerminalSym& t = p.rhs[pos - 1].term;
        TerminalKey key;
        key.cls = t.cls;
        key.loop = t.loop;
        for (const auto& r : p.rules) {
            auto rp = resolve_position(p, r.target);
            if (!rp || *rp != pos) continue;
            auto ta = parse_term_attr(r.target.attr, t.cls);
            if (!ta) continue;
            if (auto v = const_eval(p, r.expr, entry))
                key.reqs.push_back(TerminalKey::Req{ta->operand, ta->field, *v});
        }
        // Canonical order so fingerprints do not depend on rule order.
        std::sort(key.reqs.begin(), key.reqs.end(), [](const auto& a, const auto& b) {
            if (a.operand != b.operand) return a.operand < b.operand;
            return static_cast<int>(a.field) < static_cast<int>(b.field);
        });
        return {key};
    }

    std::vector<TerminalKey> first_keys(const std::string& nt, const ConstEnv& inherited) {
        if (std::find(active.begin(), active.end(), nt) != active.end()) {
            conflicts.push_back("left recursion through <" + nt + ">");
            return {};
        }
        active.push_back(nt);
        std::vector<TerminalKey> out;
        for (int pi : g.alternatives_of(nt)) {
            const Production& p = g.productions[pi];
            ConstEnv entry = fold_entry(p, inherited);
            auto keys = symbol_keys(p, 1, entry);
            out.insert(out.end(), keys.begin(), keys.end());
        }
        active.pop_back();
        return out;
    }

    std::vector<TerminalKey> symbol_keys(const Production& p, int pos, const ConstEnv& entry) {
        const Symbol& s = p.rhs[pos - 1];
        if (s.is_terminal()) return terminal_keys(p, pos, entry);
        ConstEnv child_inh;
        for (const auto& r : p.rules) {
            auto rp = resolve_position(p, r.target);
            if (!rp || *rp != pos) continue;
            if (auto v = const_eval(p, r.expr, entry)) child_inh[r.target.attr] = *v;
        }
        return first_keys(s.nt, child_inh);
    }
};

/// Rules that take effect within the first `len` symbols: rules targeting a
/// position in 1..len, and head rules whose dependencies all lie there. Two
/// alternatives sharing a prefix must agree on these for the factored parse
/// to evaluate attributes identically along the shared path.
inline bool rules_up_to_equal(const Production& a, const Production& b, int len) {
    auto collect = [&](const Production& p) {
        std::vector<SemanticRule> out;
        for (const auto& r : p.rules) {
            auto rp = resolve_position(p, r.target);
            if (!rp) continue;
            if (*rp >= 1 && *rp <= len) {
                out.push_back(r);
                continue;
            }
            if (*rp == 0) {
                std::vector<AttrRef> refs;
                r.expr.collect_refs(refs);
                bool within = true;
                for (const auto& ref : refs) {
                    auto dp = resolve_position(p, ref);
                    if (!dp || *dp > len) within = false;
                }
                if (within) out.push_back(r);
            }
        }
        return out;
    };
    auto ra = collect(a), rb = collect(b);
    if (ra.size() != rb.size()) return false;
    for (const auto& r : ra)
        if (std::find(rb.begin(), rb.end(), r) == rb.end()) return false;
    return true;
}

}  // namespace detail

/// Deterministic parse table over refined lookahead keys. Alternatives with a
/// common prefix occupy one trie path, so a root lookup yields the family of
/// alternatives compatible with the key.
class ParseTable {
public:
    const AttributeGrammar* grammar = nullptr;
    std::map<std::string, NtTrie> tries;

    struct LookupResult {
        std::vector<int> alternatives;  // production indexes, original order
    };

    /// Root-level table query: which alternatives of `nt` can begin with
    /// event `e`. Empty optional when the key is in no FIRST set.
    std::optional<LookupResult> lookup(const std::string& nt, const Event& e) const {
        auto it = tries.find(nt);
        if (it == tries.end()) return std::nullopt;
        for (const auto& edge : it->second.nodes[0].edges) {
            for (const auto& k : edge.keys)
                if (k.matches(e)) return LookupResult{edge.alts};
        }
        return std::nullopt;
    }

    /// Canonical structural dump; two tables describing the same automaton
    /// fingerprint identically.
    std::string fingerprint() const {
        std::ostringstream os;
        for (const auto& [nt, trie] : tries) {
            os << nt << "\n";
            for (size_t ni = 0; ni < trie.nodes.size(); ++ni) {
                const auto& node = trie.nodes[ni];
                os << "  n" << ni;
                if (node.complete_alt >= 0) os << " accept#" << alt_ordinal(nt, node.complete_alt);
                os << "\n";
                for (const auto& e : node.edges) {
                    os << "    " << e.sym.display() << " ->n" << e.next << " keys{";
                    for (const auto& k : e.keys) os << k.display() << ";";
                    os << "}\n";
                }
            }
        }
        return os.str();
    }

private:
    int alt_ordinal(const std::string& nt, int prod_index) const {
        auto alts = grammar->alternatives_of(nt);
        auto it = std::find(alts.begin(), alts.end(), prod_index);
        return it == alts.end() ? -1 : static_cast<int>(it - alts.begin());
    }
};

namespace detail {

inline NtTrie build_trie(const AttributeGrammar& g, const std::string& nt,
                         std::vector<std::string>& conflicts) {
    NtTrie trie;
    trie.nodes.emplace_back();
    for (int pi : g.alternatives_of(nt)) {
        const Production& p = g.productions[pi];
        int node = 0;
        for (size_t si = 0; si < p.rhs.size(); ++si) {
            const Symbol& s = p.rhs[si];
            int next = -1;
            for (auto& e : trie.nodes[node].edges) {
                // Alternatives share a path only while both the symbols and
                // the semantics agree; otherwise they get parallel edges and
                // the lookahead keys decide whether that is a conflict.
                if (e.sym == s &&
                    rules_up_to_equal(p, g.productions[e.alts.front()],
                                      static_cast<int>(si) + 1)) {
                    e.alts.push_back(pi);
                    next = e.next;
                    break;
                }
            }
            if (next == -1) {
                NtTrie::Edge e;
                e.sym = s;
                e.alts.push_back(pi);
                e.next = static_cast<int>(trie.nodes.size());
                trie.nodes.emplace_back();
                next = e.next;
                trie.nodes[node].edges.push_back(std::move(e));
            }
            node = next;
        }
        if (trie.nodes[node].complete_alt >= 0)
            conflicts.push_back("<" + nt + ">: alternatives " +
                                std::to_string(trie.nodes[node].complete_alt) + " and " +
                                std::to_string(pi) + " are identical");
        else
            trie.nodes[node].complete_alt = pi;
    }
    for (const auto& node : trie.nodes)
        if (node.complete_alt >= 0 && !node.edges.empty())
            conflicts.push_back("<" + nt + ">: one alternative is a proper prefix of another");
    return trie;
}

inline void fill_keys(const AttributeGrammar& g, const std::string& nt, NtTrie& trie,
                      std::vector<std::string>& conflicts) {
    KeyComputer kc{g, conflicts, {}};
    std::vector<int> depth(trie.nodes.size(), -1);
    depth[0] = 0;
    for (bool changed = true; changed;) {
        changed = false;
        for (size_t ni = 0; ni < trie.nodes.size(); ++ni) {
            if (depth[ni] < 0) continue;
            for (const auto& e : trie.nodes[ni].edges)
                if (depth[e.next] < 0) depth[e.next] = depth[ni] + 1, changed = true;
        }
    }
    for (size_t ni = 0; ni < trie.nodes.size(); ++ni) {
        auto& node = trie.nodes[ni];
        for (auto& edge : node.edges) {
            // Shared prefixes agree on semantics, so any alternative through
            // the edge supplies the folding context.
            const Production& p = g.productions[edge.alts.front()];
            ConstEnv entry = fold_entry(p, {});
            edge.keys = kc.symbol_keys(p, depth[ni] + 1, entry);
        }
        for (size_t i = 0; i < node.edges.size(); ++i) {
            for (size_t j = i + 1; j < node.edges.size(); ++j) {
                for (const auto& ka : node.edges[i].keys)
                    for (const auto& kb : node.edges[j].keys)
                        if (ka.overlaps(kb))
                            conflicts.push_back("<" + nt + ">: lookahead overlap between " +
                                                node.edges[i].sym.display() + " and " +
                                                node.edges[j].sym.display() + " on key " +
                                                ka.display());
            }
        }
    }
}

}  // namespace detail

/// Checks the hypotheses required for single-pass top-down parsing with
/// attribute evaluation: deterministic refined lookahead after factoring
/// common prefixes, and left-to-right attribute dependencies. An empty report
/// means build_parse_table will succeed.
inline Ll1Report ll1_check(const AttributeGrammar& g) {
    Ll1Report report;
    auto structural = validate(g);
    if (!structural.empty()) {
        report.conflicts = structural;
        return report;
    }
    DeclMap decls = infer_declarations(g);
    for (const auto& p : g.productions) {
        auto plan = analyze_production(g, p, decls);
        report.l_violations.insert(report.l_violations.end(), plan.l_violations.begin(),
                                   plan.l_violations.end());
    }
    for (const auto& nt : g.nonterminals()) {
        NtTrie trie = detail::build_trie(g, nt, report.conflicts);
        detail::fill_keys(g, nt, trie, report.conflicts);
    }
    return report;
}

inline ParseTable build_parse_table(const AttributeGrammar& g) {
    auto report = ll1_check(g);
    if (!report.ok()) throw ConflictError(g.name + ": " + report.summary());
    ParseTable table;
    table.grammar = &g;
    std::vector<std::string> ignored;
    for (const auto& nt : g.nonterminals()) {
        NtTrie trie = detail::build_trie(g, nt, ignored);
        detail::fill_keys(g, nt, trie, ignored);
        table.tries[nt] = std::move(trie);
    }
    return table;
}

}  // namespace bauto
