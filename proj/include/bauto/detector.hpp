#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "bauto/event.hpp"
#include "bauto/grammar.hpp"

namespace bauto {

/// Attribute bindings published by completed behaviors, readable by other
/// behaviors' prerequisites through fact(...) expressions. Append-only within
/// a run; publication happens at event boundaries.
class FactsBoard {
public:
    void publish(const std::string& behavior, const std::string& attr, AttrValue v) {
        board_[behavior][attr].push_back(std::move(v));
    }
    const std::vector<AttrValue>* values(const std::string& behavior,
                                         const std::string& attr) const {
        auto b = board_.find(behavior);
        if (b == board_.end()) return nullptr;
        auto a = b->second.find(attr);
        return a == b->second.end() ? nullptr : &a->second;
    }

private:
    std::map<std::string, std::map<std::string, std::vector<AttrValue>>> board_;
};

struct Verdict {
    std::string behavior;
    std::string variant;
    std::vector<uint64_t> events;  // seq numbers of the consumed events
    struct Binding {
        std::string attr;
        AttrValue value;
        std::string name;  // canonical name when the value is a named object
    };
    std::vector<Binding> objects;
    int path = 0;
};

struct Metrics {
    uint64_t n_events = 0;
    uint64_t n_ambiguities = 0;
    uint64_t parse_calls = 0;
    uint64_t dedup_removed = 0;
    uint64_t pruned = 0;
    size_t max_derivations = 0;
    int max_parse_stack = 0;
    int max_sem_stack = 0;

    double alpha() const {
        return static_cast<double>(n_ambiguities) / static_cast<double>(std::max<uint64_t>(n_events, 1));
    }
};

struct DetectionReport {
    std::vector<Verdict> verdicts;
    Metrics metrics;
    std::optional<double> alpha_threshold;

    bool alpha_alert() const { return alpha_threshold && metrics.alpha() >= *alpha_threshold; }
};

// ---------------------------------------------------------------------------
// Compiled automaton

enum class StepKind { ignored, advanced, accepted };

struct StepOutcome {
    StepKind kind = StepKind::ignored;
    bool duplicated = false;
};

namespace rt {

struct CompiledExpr {
    enum class Kind { constant, slot, event_field, fact, disj };
    Kind kind = Kind::constant;
    AttrValue constant = ObjectId{};
    int slot = -1;
    TermAttr event_attr{};
    std::string fact_behavior, fact_attr;
    std::vector<CompiledExpr> disjuncts;
};

struct CompiledRule {
    int slot = -1;  // target slot in this activation
    CompiledExpr expr;
};

struct Prereq {
    int operand = 0;  // -1 = arm
    CompiledExpr expr;
};

struct Capture {
    int slot = -1;
    TermAttr from{};
};

struct CEdge {
    bool terminal = true;
    TerminalSym term{};
    int child_nt = -1;
    std::vector<TerminalKey> keys;
    int next = -1;
    std::vector<CompiledRule> pre_rules;  // consequences due before this symbol
    // terminal edges
    std::vector<Prereq> prereqs;
    std::vector<Capture> captures;
    // nonterminal edges
    std::vector<CompiledRule> inherited;                // child slot <- expr over my slots
    std::vector<std::pair<int, int>> inherited_mirror;  // (my slot, child slot)
    std::vector<std::pair<int, int>> syn_captures;      // (my slot, child slot)
};

struct CNode {
    std::vector<CEdge> edges;
    int complete_alt = -1;                  // production index in the grammar
    std::vector<CompiledRule> final_rules;  // consequences due at reduction
    std::string label;
    int remaining = 0;  // deepest symbol count from here to completion
};

struct CNt {
    std::string name;
    std::vector<CNode> nodes;
    std::map<std::pair<int, std::string>, int> slot_of;
    std::vector<std::pair<int, std::string>> slot_keys;
};

}  // namespace rt

struct Activation {
    int nt = -1;
    int node = 0;
    int parent_node = -1;  // where the parent stood when it descended
    int parent_edge = -1;
    std::vector<std::optional<AttrValue>> slots;

    friend bool operator==(const Activation& a, const Activation& b) {
        return a.nt == b.nt && a.node == b.node && a.parent_node == b.parent_node &&
               a.parent_edge == b.parent_edge && a.slots == b.slots;
    }
};

/// One in-flight parse: the state is the activation stack, which carries both
/// the parsing progress (nodes) and the semantic bindings (slots).
struct Derivation {
    std::vector<Activation> stack;
    std::vector<uint64_t> consumed;
    InteractionClass first_cls = InteractionClass::Signal;
    ObjectId first_obj{};
    uint64_t first_seq = 0;

    bool is_root() const { return stack.empty(); }

    std::string identity_key() const {
        std::ostringstream os;
        for (const auto& a : stack) {
            os << a.nt << ':' << a.node << ':' << a.parent_node << ':' << a.parent_edge << '[';
            for (const auto& s : a.slots) {
                if (!s) {
                    os << "_,";
                    continue;
                }
                os << s->index() << '=' << to_display(*s) << ',';
            }
            os << ']';
        }
        return os.str();
    }
};

/// LL parser for one behavior grammar, compiled to a pushdown automaton whose
/// transitions carry the semantic routines: prerequisite checks on terminal
/// matches and consequence evaluation on reductions.
class Automaton {
public:
    explicit Automaton(const AttributeGrammar& g) : grammar_(g) {
        ParseTable table = build_parse_table(g);  // throws ConflictError on bad grammars
        decls_ = infer_declarations(g);
        auto nts = g.nonterminals();
        for (size_t i = 0; i < nts.size(); ++i) nt_index_[nts[i]] = static_cast<int>(i);
        for (const auto& name : nts) compile_nt(name, table.tries.at(name));
        start_nt_ = nt_index_.at(g.start);
    }

    const AttributeGrammar& grammar() const { return grammar_; }
    const std::string& name() const { return grammar_.name; }

    struct StepResult {
        StepOutcome outcome;
        Derivation advanced;             // valid when kind != ignored
        std::vector<std::string> labels;
        int commit_sem_depth = 0;
        int commit_parse_stack = 0;
    };

    /// Attempts to advance a copy of `d` with event `e`. The input derivation
    /// is never modified; on a match the advanced copy is returned and the
    /// caller decides whether to retain the original (ambiguity duplication).
    StepResult step(const Derivation& d, const Event& e, const FactsBoard& facts) const {
        StepResult res;
        Derivation nd = d;
        if (nd.is_root()) {
            Activation root;
            root.nt = start_nt_;
            root.node = 0;
            root.slots.assign(nts_[start_nt_].slot_keys.size(), std::nullopt);
            nd.stack.push_back(std::move(root));
        }
        if (!advance(nd, e, facts, res)) return res;  // ignored
        if (nd.consumed.size() == 1) {
            nd.first_cls = e.cls;
            nd.first_seq = e.seq;
            nd.first_obj = e.objects.empty() ? ObjectId{} : e.objects[0].id;
        }
        bool accepted = nd.stack.size() == 1 && nts_[nd.stack[0].nt]
                                                        .nodes[nd.stack[0].node]
                                                        .complete_alt >= 0;
        res.outcome.kind = accepted ? StepKind::accepted : StepKind::advanced;
        // A match that binds object identities may also belong to a later
        // behavior instance, so the pre-match derivation is worth keeping.
        res.outcome.duplicated = !e.objects.empty();
        res.advanced = std::move(nd);
        return res;
    }

    std::vector<Verdict::Binding> root_bindings(const Derivation& d) const {
        std::vector<Verdict::Binding> out;
        if (d.stack.empty()) return out;
        const Activation& root = d.stack.front();
        const rt::CNt& nt = nts_[root.nt];
        for (size_t i = 0; i < nt.slot_keys.size(); ++i) {
            if (nt.slot_keys[i].first != 0 || !root.slots[i]) continue;
            out.push_back(Verdict::Binding{nt.slot_keys[i].second, *root.slots[i], ""});
        }
        return out;
    }

    int parse_stack_size(const Derivation& d) const {
        if (d.stack.empty()) return 1;
        int total = 1;
        for (size_t i = 0; i < d.stack.size(); ++i) {
            int rem = nts_[d.stack[i].nt].nodes[d.stack[i].node].remaining;
            bool top = i + 1 == d.stack.size();
            total += top ? rem : std::max(rem - 1, 0);
        }
        return total;
    }

private:
    const AttributeGrammar& grammar_;
    DeclMap decls_;
    std::map<std::string, int> nt_index_;
    std::vector<rt::CNt> nts_;
    int start_nt_ = 0;

    // -- compilation -------------------------------------------------------

    int slot(rt::CNt& nt, int pos, const std::string& attr) {
        auto key = std::make_pair(pos, attr);
        auto it = nt.slot_of.find(key);
        if (it != nt.slot_of.end()) return it->second;
        int idx = static_cast<int>(nt.slot_keys.size());
        nt.slot_of[key] = idx;
        nt.slot_keys.push_back(key);
        return idx;
    }

    rt::CompiledExpr compile_expr(rt::CNt& nt, const Production& p, const Expr& e, int self_pos) {
        rt::CompiledExpr ce;
        switch (e.kind) {
            case Expr::Kind::constant:
                ce.kind = rt::CompiledExpr::Kind::constant;
                ce.constant = e.constant;
                break;
            case Expr::Kind::ref: {
                int pos = *resolve_position(p, e.ref);
                if (self_pos > 0 && pos == self_pos) {
                    ce.kind = rt::CompiledExpr::Kind::event_field;
                    ce.event_attr = *parse_term_attr(e.ref.attr, p.rhs[pos - 1].term.cls);
                } else {
                    ce.kind = rt::CompiledExpr::Kind::slot;
                    ce.slot = slot(nt, pos, e.ref.attr);
                }
                break;
            }
            case Expr::Kind::fact:
                ce.kind = rt::CompiledExpr::Kind::fact;
                ce.fact_behavior = e.fact_behavior;
                ce.fact_attr = e.fact_attr;
                break;
            case Expr::Kind::disj:
                ce.kind = rt::CompiledExpr::Kind::disj;
                for (const auto& dj : e.disjuncts)
                    ce.disjuncts.push_back(compile_expr(nt, p, dj, self_pos));
                break;
        }
        return ce;
    }

    void compile_nt(const std::string& name, const NtTrie& trie) {
        nts_.emplace_back();
        rt::CNt& nt = nts_.back();
        nt.name = name;
        // Head attributes always get slots so verdicts can report them.
        if (decls_.count(name)) {
            for (const auto& a : decls_.at(name).syn) slot(nt, 0, a);
            for (const auto& a : decls_.at(name).inh) slot(nt, 0, a);
        }
        std::vector<int> depth(trie.nodes.size(), 0);
        nt.nodes.resize(trie.nodes.size());
        for (size_t ni = 0; ni < trie.nodes.size(); ++ni)
            for (const auto& e : trie.nodes[ni].edges) depth[e.next] = depth[ni] + 1;

        for (size_t ni = 0; ni < trie.nodes.size(); ++ni) {
            const auto& tnode = trie.nodes[ni];
            rt::CNode& cnode = nt.nodes[ni];
            cnode.complete_alt = tnode.complete_alt;
            if (tnode.complete_alt >= 0) {
                const Production& p = grammar_.productions[tnode.complete_alt];
                cnode.label = p.variant_label;
                auto plan = analyze_production(grammar_, p, decls_);
                for (size_t ri = 0; ri < p.rules.size(); ++ri) {
                    if (plan.consequence_at[ri] != static_cast<int>(p.rhs.size())) continue;
                    rt::CompiledRule cr;
                    cr.slot = slot(nt, 0, p.rules[ri].target.attr);
                    cr.expr = compile_expr(nt, p, p.rules[ri].expr, 0);
                    cnode.final_rules.push_back(std::move(cr));
                }
            }
            for (const auto& tedge : tnode.edges) {
                rt::CEdge ce;
                ce.keys = tedge.keys;
                ce.next = tedge.next;
                int pos = depth[ni] + 1;
                const Production& p = grammar_.productions[tedge.alts.front()];
                auto plan = analyze_production(grammar_, p, decls_);
                for (size_t ri = 0; ri < p.rules.size(); ++ri) {
                    if (plan.consequence_at[ri] == pos - 1) {
                        rt::CompiledRule cr;
                        cr.slot = slot(nt, 0, p.rules[ri].target.attr);
                        cr.expr = compile_expr(nt, p, p.rules[ri].expr, 0);
                        ce.pre_rules.push_back(std::move(cr));
                    }
                }
                if (tedge.sym.is_terminal()) {
                    ce.terminal = true;
                    ce.term = tedge.sym.term;
                    for (size_t ri = 0; ri < p.rules.size(); ++ri) {
                        if (plan.prereq_for[ri] != pos) continue;
                        auto ta = parse_term_attr(p.rules[ri].target.attr, ce.term.cls);
                        rt::Prereq pr;
                        pr.operand = ta->operand;
                        pr.expr = compile_expr(nt, p, p.rules[ri].expr, pos);
                        ce.prereqs.push_back(std::move(pr));
                    }
                } else {
                    ce.terminal = false;
                    ce.child_nt = nt_index_.at(tedge.sym.nt);
                    for (size_t ri = 0; ri < p.rules.size(); ++ri) {
                        if (plan.inherited_for[ri] != pos) continue;
                        rt::CompiledRule cr;
                        // child slot indexes resolve after all NTs compile;
                        // store the attr name via a placeholder slot keyed on
                        // the child side later. We keep the target attr here.
                        cr.slot = -1;
                        cr.expr = compile_expr(nt, p, p.rules[ri].expr, 0);
                        ce.inherited.push_back(std::move(cr));
                        inherited_attr_names_.push_back(p.rules[ri].target.attr);
                    }
                }
                nt.nodes[ni].edges.push_back(std::move(ce));
            }
        }
        // captures and child links are wired in a second pass once every
        // nonterminal has its slot map
        if (nts_.size() == grammar_.nonterminals().size()) wire_all();
    }

    std::vector<std::string> inherited_attr_names_;

    void wire_all() {
        size_t inh_cursor = 0;
        for (const auto& name : grammar_.nonterminals()) {
            int nti = nt_index_.at(name);
            rt::CNt& nt = nts_[nti];
            // recompute per-node positions
            std::vector<int> depth(nt.nodes.size(), 0);
            for (size_t ni = 0; ni < nt.nodes.size(); ++ni)
                for (const auto& e : nt.nodes[ni].edges) depth[e.next] = depth[ni] + 1;
            for (size_t ni = 0; ni < nt.nodes.size(); ++ni) {
                for (auto& edge : nt.nodes[ni].edges) {
                    int pos = depth[ni] + 1;
                    if (edge.terminal) {
                        for (const auto& [key, sidx] : nt.slot_of) {
                            if (key.first != pos) continue;
                            auto ta = parse_term_attr(key.second, edge.term.cls);
                            if (!ta) continue;
                            edge.captures.push_back(rt::Capture{sidx, *ta});
                        }
                    } else {
                        rt::CNt& child = nts_[edge.child_nt];
                        for (auto& cr : edge.inherited) {
                            const std::string& attr = inherited_attr_names_[inh_cursor++];
                            auto it = child.slot_of.find({0, attr});
                            cr.slot = it == child.slot_of.end() ? -1 : it->second;
                            auto mine = nt.slot_of.find({pos, attr});
                            if (mine != nt.slot_of.end() && cr.slot >= 0)
                                edge.inherited_mirror.emplace_back(mine->second, cr.slot);
                        }
                        for (const auto& [key, sidx] : nt.slot_of) {
                            if (key.first != pos) continue;
                            auto cit = child.slot_of.find({0, key.second});
                            if (cit != child.slot_of.end())
                                edge.syn_captures.emplace_back(sidx, cit->second);
                        }
                    }
                }
            }
            // deepest remaining symbol count per node
            for (bool changed = true; changed;) {
                changed = false;
                for (size_t ni = nt.nodes.size(); ni-- > 0;) {
                    int best = nt.nodes[ni].complete_alt >= 0 ? 0 : -1;
                    for (const auto& e : nt.nodes[ni].edges)
                        best = std::max(best, 1 + nt.nodes[e.next].remaining);
                    if (best >= 0 && best != nt.nodes[ni].remaining) {
                        nt.nodes[ni].remaining = best;
                        changed = true;
                    }
                }
            }
        }
    }

    // -- runtime -----------------------------------------------------------

    static std::optional<AttrValue> event_field_value(const Event& e, const TermAttr& ta) {
        if (ta.operand == -1)
            return e.arm ? std::optional<AttrValue>(AttrValue{std::string(*e.arm ? "true" : "false")})
                         : std::nullopt;
        if (ta.operand >= static_cast<int>(e.objects.size())) return std::nullopt;
        const EventObject& o = e.objects[ta.operand];
        switch (ta.field) {
            case TermField::obj_id: return AttrValue{o.id};
            case TermField::obj_tp: return AttrValue{o.type};
            case TermField::obj_nat: return AttrValue{o.nature};
            default: return std::nullopt;
        }
    }

    std::optional<AttrValue> eval_value(const rt::CompiledExpr& ce, const Activation& act,
                                        const Event* e) const {
        switch (ce.kind) {
            case rt::CompiledExpr::Kind::constant: return ce.constant;
            case rt::CompiledExpr::Kind::slot:
                return ce.slot >= 0 && act.slots[ce.slot] ? act.slots[ce.slot] : std::nullopt;
            case rt::CompiledExpr::Kind::event_field:
                return e ? event_field_value(*e, ce.event_attr) : std::nullopt;
            default: return std::nullopt;
        }
    }

    static bool value_matches_object(const AttrValue& v, const EventObject& o) {
        if (const auto* t = std::get_if<ObjectType>(&v)) return poset_leq(*t, o.type);
        if (const auto* id = std::get_if<ObjectId>(&v)) return *id == o.id;
        if (const auto* n = std::get_if<Nature>(&v)) return *n == o.nature;
        if (const auto* s = std::get_if<std::string>(&v)) return *s == o.name;
        return false;
    }

    bool prereq_holds(const rt::Prereq& pr, const Activation& act, const Event& e,
                      const FactsBoard& facts) const {
        return expr_satisfied(pr.expr, pr.operand, act, e, facts);
    }

    bool expr_satisfied(const rt::CompiledExpr& ce, int operand, const Activation& act,
                        const Event& e, const FactsBoard& facts) const {
        if (ce.kind == rt::CompiledExpr::Kind::disj) {
            for (const auto& dj : ce.disjuncts)
                if (expr_satisfied(dj, operand, act, e, facts)) return true;
            return false;
        }
        std::vector<AttrValue> candidates;
        if (ce.kind == rt::CompiledExpr::Kind::fact) {
            const auto* vs = facts.values(ce.fact_behavior, ce.fact_attr);
            if (vs) candidates = *vs;
        } else if (auto v = eval_value(ce, act, &e)) {
            candidates.push_back(*v);
        }
        if (operand == -1) {
            if (!e.arm) return false;
            std::string armtext = *e.arm ? "true" : "false";
            for (const auto& v : candidates)
                if (const auto* s = std::get_if<std::string>(&v); s && *s == armtext) return true;
            return false;
        }
        if (operand >= static_cast<int>(e.objects.size())) return false;
        const EventObject& obj = e.objects[operand];
        for (const auto& v : candidates)
            if (value_matches_object(v, obj)) return true;
        return false;
    }

    void run_rules(const std::vector<rt::CompiledRule>& rules, Activation& act) const {
        for (const auto& r : rules) {
            if (r.slot < 0) continue;
            if (auto v = eval_value(r.expr, act, nullptr)) act.slots[r.slot] = *v;
        }
    }

    bool advance(Derivation& d, const Event& e, const FactsBoard& facts, StepResult& res) const {
        // Descend through nonterminal edges whose FIRST keys admit the event,
        // then match the terminal edge. All mutation happens on the caller's
        // copy, so a failed probe simply discards it.
        while (true) {
            Activation& act = d.stack.back();
            const rt::CNode& node = nts_[act.nt].nodes[act.node];
            const rt::CEdge* chosen = nullptr;
            for (const auto& edge : node.edges) {
                for (const auto& k : edge.keys) {
                    if (k.matches(e)) {
                        chosen = &edge;
                        break;
                    }
                }
                if (chosen) break;
            }
            if (!chosen) return false;
            run_rules(chosen->pre_rules, act);
            if (chosen->terminal) {
                for (const auto& pr : chosen->prereqs)
                    if (!prereq_holds(pr, act, e, facts)) return false;
                for (const auto& cap : chosen->captures) {
                    if (auto v = event_field_value(e, cap.from)) act.slots[cap.slot] = *v;
                }
                act.node = chosen->next;
                d.consumed.push_back(e.seq);
                res.commit_sem_depth = static_cast<int>(d.stack.size());
                res.commit_parse_stack = parse_stack_size(d);
                reduce(d, res);
                return true;
            }
            Activation child;
            child.nt = chosen->child_nt;
            child.node = 0;
            child.parent_node = act.node;
            child.parent_edge = static_cast<int>(chosen - node.edges.data());
            child.slots.assign(nts_[chosen->child_nt].slot_keys.size(), std::nullopt);
            for (const auto& cr : chosen->inherited) {
                if (cr.slot < 0) continue;
                if (auto v = eval_value(cr.expr, act, nullptr)) child.slots[cr.slot] = *v;
            }
            for (const auto& [mine, theirs] : chosen->inherited_mirror)
                act.slots[mine] = child.slots[theirs];
            d.stack.push_back(std::move(child));
        }
    }

    void reduce(Derivation& d, StepResult& res) const {
        while (true) {
            Activation& top = d.stack.back();
            const rt::CNode& node = nts_[top.nt].nodes[top.node];
            if (node.complete_alt < 0) return;
            // evaluate the last consequences of the completed production
            run_rules(node.final_rules, top);
            if (!node.label.empty()) res.labels.push_back(node.label);
            if (d.stack.size() == 1) return;  // root completed: acceptance
            Activation finished = std::move(d.stack.back());
            d.stack.pop_back();
            Activation& parent = d.stack.back();
            const rt::CEdge& via =
                nts_[parent.nt].nodes[finished.parent_node].edges[finished.parent_edge];
            for (const auto& [mine, theirs] : via.syn_captures)
                parent.slots[mine] = finished.slots[theirs];
            parent.node = via.next;
        }
    }
};

inline Automaton compile(const AttributeGrammar& g) { return Automaton(g); }

// ---------------------------------------------------------------------------
// Engine

struct EngineOptions {
    bool dedup = true;
    bool prune = true;
};

/// Runs one automaton per selected behavior in parallel over the event
/// stream. Each automaton keeps a set of live derivations plus an immortal
/// root, duplicated on potentially ambiguous matches and collapsed again by
/// dedup; close/delete pruning drops derivations whose only progress was
/// opening the now-closed object.
class Engine {
public:
    Engine(std::vector<const AttributeGrammar*> behaviors, EngineOptions opts = {})
        : opts_(opts) {
        for (const auto* g : behaviors) {
            lanes_.emplace_back();
            lanes_.back().grammar = std::make_unique<AttributeGrammar>(*g);
            lanes_.back().automaton = std::make_unique<Automaton>(*lanes_.back().grammar);
            lanes_.back().derivations.push_back(Derivation{});  // the pristine root
        }
    }

    std::vector<Verdict> feed(const Event& e) {
        ++metrics_.n_events;
        for (const auto& o : e.objects)
            if (!o.name.empty()) names_[o.id.value] = o.name;

        std::vector<Verdict> verdicts;
        for (auto& lane : lanes_) {
            size_t live = lane.derivations.size();
            std::vector<Derivation> added;
            std::vector<size_t> completed;
            for (size_t di = 0; di < live; ++di) {
                ++metrics_.parse_calls;
                auto res = lane.automaton->step(lane.derivations[di], e, facts_);
                if (res.outcome.kind == StepKind::ignored) continue;
                metrics_.max_sem_stack = std::max(metrics_.max_sem_stack, res.commit_sem_depth);
                metrics_.max_parse_stack =
                    std::max(metrics_.max_parse_stack, res.commit_parse_stack);
                if (res.outcome.duplicated) ++metrics_.n_ambiguities;

                if (res.outcome.kind == StepKind::accepted) {
                    verdicts.push_back(make_verdict(lane, res, e));
                    if (!res.outcome.duplicated) completed.push_back(di);
                } else if (res.outcome.duplicated) {
                    added.push_back(std::move(res.advanced));
                } else {
                    lane.derivations[di] = std::move(res.advanced);
                }
            }
            for (auto it = completed.rbegin(); it != completed.rend(); ++it)
                lane.derivations.erase(lane.derivations.begin() + static_cast<long>(*it));
            for (auto& a : added) lane.derivations.push_back(std::move(a));
        }

        if (opts_.prune && (e.cls == InteractionClass::Close || e.cls == InteractionClass::Delete))
            prune_on_close(e);
        for (const auto& o : e.objects) last_touch_[o.id.value] = e.seq;
        if (opts_.dedup) dedup();

        size_t total = 0;
        for (const auto& lane : lanes_) total += lane.derivations.size();
        metrics_.max_derivations = std::max(metrics_.max_derivations, total);

        for (const auto& v : verdicts)
            for (const auto& b : v.objects) facts_.publish(v.behavior, b.attr, b.value);
        return verdicts;
    }

    std::vector<Verdict> run(const std::vector<Event>& events) {
        std::vector<Verdict> out;
        for (const auto& e : events) {
            auto vs = feed(e);
            out.insert(out.end(), vs.begin(), vs.end());
        }
        return out;
    }

    /// Collapses derivations with identical state and stacks.
    uint64_t dedup() {
        uint64_t removed = 0;
        for (auto& lane : lanes_) {
            std::unordered_set<std::string> seen;
            std::vector<Derivation> kept;
            kept.reserve(lane.derivations.size());
            for (auto& d : lane.derivations) {
                std::string key = d.identity_key();
                if (seen.insert(std::move(key)).second)
                    kept.push_back(std::move(d));
                else
                    ++removed;
            }
            lane.derivations = std::move(kept);
        }
        metrics_.dedup_removed += removed;
        return removed;
    }

    /// Destroys derivations whose only progress is the opening or creation of
    /// the object closed by `e`, with nothing having touched it in between.
    void prune_on_close(const Event& e) {
        if (e.objects.empty()) return;
        ObjectId closed = e.objects[0].id;
        for (auto& lane : lanes_) {
            auto& ds = lane.derivations;
            ds.erase(std::remove_if(ds.begin(), ds.end(),
                                    [&](const Derivation& d) {
                                        if (d.consumed.size() != 1) return false;
                                        if (d.first_cls != InteractionClass::Open &&
                                            d.first_cls != InteractionClass::Create)
                                            return false;
                                        if (!(d.first_obj == closed)) return false;
                                        auto it = last_touch_.find(closed.value);
                                        bool untouched =
                                            it == last_touch_.end() || it->second <= d.first_seq;
                                        if (untouched) ++metrics_.pruned;
                                        return untouched;
                                    }),
                     ds.end());
        }
    }

    const Metrics& metrics() const { return metrics_; }
    const FactsBoard& facts() const { return facts_; }

    size_t live_derivations() const {
        size_t n = 0;
        for (const auto& lane : lanes_) n += lane.derivations.size();
        return n;
    }
    size_t live_derivations(size_t lane) const { return lanes_[lane].derivations.size(); }
    size_t lane_count() const { return lanes_.size(); }

private:
    struct Lane {
        std::unique_ptr<AttributeGrammar> grammar;  // owned; the automaton refers to it
        std::unique_ptr<Automaton> automaton;
        std::vector<Derivation> derivations;
    };

    Verdict make_verdict(const Lane& lane, const Automaton::StepResult& res, const Event& e) {
        Verdict v;
        v.behavior = lane.automaton->name();
        std::string variant;
        for (const auto& l : res.labels) {
            if (!variant.empty()) variant += " + ";
            variant += l;
        }
        v.variant = variant;
        v.events = res.advanced.consumed;
        v.objects = lane.automaton->root_bindings(res.advanced);
        for (auto& b : v.objects)
            if (const auto* id = std::get_if<ObjectId>(&b.value)) {
                auto it = names_.find(id->value);
                if (it != names_.end()) b.name = it->second;
            }
        v.path = e.path;
        return v;
    }

    EngineOptions opts_;
    std::vector<Lane> lanes_;
    FactsBoard facts_;
    Metrics metrics_;
    std::unordered_map<uint64_t, std::string> names_;
    std::unordered_map<uint64_t, uint64_t> last_touch_;
};

// ---------------------------------------------------------------------------
// Report serialization

inline nlohmann::json report_to_json(const DetectionReport& r) {
    nlohmann::json verdicts = nlohmann::json::array();
    for (const auto& v : r.verdicts) {
        nlohmann::json objs = nlohmann::json::array();
        for (const auto& b : v.objects) {
            nlohmann::json jb{{"attr", b.attr}, {"value", to_display(b.value)}};
            if (!b.name.empty()) jb["name"] = b.name;
            objs.push_back(std::move(jb));
        }
        nlohmann::json jv{{"behavior", v.behavior},
                          {"variant", v.variant},
                          {"events", v.events},
                          {"objects", std::move(objs)}};
        if (v.path != 0) jv["path"] = v.path;
        verdicts.push_back(std::move(jv));
    }
    nlohmann::json metrics{{"n_events", r.metrics.n_events},
                           {"n_ambiguities", r.metrics.n_ambiguities},
                           {"alpha", r.metrics.alpha()},
                           {"max_derivations", r.metrics.max_derivations},
                           {"parse_calls", r.metrics.parse_calls},
                           {"max_parse_stack", r.metrics.max_parse_stack},
                           {"max_sem_stack", r.metrics.max_sem_stack}};
    nlohmann::json out{{"verdicts", std::move(verdicts)}, {"metrics", std::move(metrics)}};
    if (r.alpha_threshold) {
        out["alpha_threshold"] = *r.alpha_threshold;
        out["alpha_alert"] = r.alpha_alert();
    }
    return out;
}

}  // namespace bauto
