#pragma once

#include <string>
#include <vector>

#include "bauto/grammar.hpp"

namespace bauto {

namespace builder {

inline AttrRef ref(std::string sym, std::string attr, int k = 0) {
    return AttrRef{std::move(sym), k, std::move(attr)};
}
inline Expr r(std::string sym, std::string attr, int k = 0) {
    return Expr::make_ref(ref(std::move(sym), std::move(attr), k));
}
inline Expr ty(ObjectType t) { return Expr::make_const(AttrValue{t}); }
inline Expr txt(std::string s) { return Expr::make_const(AttrValue{std::move(s)}); }
inline Expr fact(std::string behavior, std::string attr) {
    return Expr::make_fact(std::move(behavior), std::move(attr));
}
inline Expr any_of(std::vector<Expr> es) { return Expr::make_disj(std::move(es)); }
inline SemanticRule sem(AttrRef target, Expr e) { return SemanticRule{std::move(target), std::move(e)}; }

inline Symbol nt(std::string name) { return Symbol::nonterminal(std::move(name)); }
inline Symbol t_create() { return Symbol::terminal(InteractionClass::Create); }
inline Symbol t_open() { return Symbol::terminal(InteractionClass::Open); }
inline Symbol t_read(LoopReq l = LoopReq::any) { return Symbol::terminal(InteractionClass::Read, l); }
inline Symbol t_write(LoopReq l = LoopReq::any) { return Symbol::terminal(InteractionClass::Write, l); }
inline Symbol t_format() { return Symbol::terminal(InteractionClass::FormatOp); }
inline Symbol t_branch() { return Symbol::terminal(InteractionClass::Branch); }
inline Symbol t_signal() { return Symbol::terminal(InteractionClass::Signal); }

}  // namespace builder

/// Duplication: data copied from the self-reference to a newly created
/// permanent object. Six alternatives: three single read/write orderings, two
/// interleaved read/write orderings, and direct copy.
inline AttributeGrammar duplication_grammar() {
    using namespace builder;
    AttributeGrammar g;
    g.name = "Duplication";
    g.start = "Duplicate";

    // Shared rule block of the read/write orderings; rules referencing a
    // symbol absent from an alternative simply do not apply there.
    auto block = [&](const std::vector<Symbol>& rhs) {
        std::vector<SemanticRule> rules;
        auto has = [&](const char* name) {
            for (const auto& s : rhs)
                if (!s.is_terminal() && s.nt == name) return true;
            return false;
        };
        rules.push_back(sem(ref("Duplicate", "srcTp"), ty(ObjectType::this_ref)));
        rules.push_back(sem(ref("Duplicate", "targTp"), ty(ObjectType::obj_perm)));
        rules.push_back(sem(ref("Open", "objTp"), r("Duplicate", "srcTp")));
        rules.push_back(sem(ref("Create", "objTp"), r("Duplicate", "targTp")));
        rules.push_back(sem(ref("Duplicate", "srcId"), r("Open", "objId")));
        rules.push_back(sem(ref("Duplicate", "targId"), r("Create", "objId")));
        if (has("Read")) {
            rules.push_back(sem(ref("Read", "objId"), r("Duplicate", "srcId")));
            rules.push_back(sem(ref("Read", "objTp"), r("Duplicate", "srcTp")));
        }
        if (has("Write")) {
            rules.push_back(sem(ref("Write", "objId"), r("Duplicate", "targId")));
            rules.push_back(sem(ref("Write", "objTp"), r("Duplicate", "targTp")));
            rules.push_back(sem(ref("Write", "varId"), r("Read", "varId")));
        }
        if (has("IntrlvRW")) {
            rules.push_back(sem(ref("IntrlvRW", "obj1Id"), r("Duplicate", "srcId")));
            rules.push_back(sem(ref("IntrlvRW", "obj1Tp"), r("Duplicate", "srcTp")));
            rules.push_back(sem(ref("IntrlvRW", "obj2Id"), r("Duplicate", "targId")));
            rules.push_back(sem(ref("IntrlvRW", "obj2Tp"), r("Duplicate", "targTp")));
        }
        return rules;
    };
    auto add_alt = [&](std::vector<Symbol> rhs, std::string label) {
        Production p;
        p.head = "Duplicate";
        p.rules = block(rhs);
        p.rhs = std::move(rhs);
        p.variant_label = std::move(label);
        g.productions.push_back(std::move(p));
    };
    const std::string single = "by single read/write";
    const std::string interleaved = "by interleaved read/write";
    add_alt({nt("Create"), nt("Open"), nt("Read"), nt("Write")}, single);
    add_alt({nt("Open"), nt("Create"), nt("Read"), nt("Write")}, single);
    add_alt({nt("Open"), nt("Read"), nt("Create"), nt("Write")}, single);
    add_alt({nt("Open"), nt("Create"), nt("IntrlvRW")}, interleaved);
    add_alt({nt("Create"), nt("Open"), nt("IntrlvRW")}, interleaved);
    {
        Production p;
        p.head = "Duplicate";
        p.rhs = {nt("DrctCopy")};
        p.variant_label = "by direct copy";
        p.rules = {sem(ref("Duplicate", "srcTp"), ty(ObjectType::this_ref)),
                   sem(ref("Duplicate", "targTp"), ty(ObjectType::obj_perm)),
                   sem(ref("DrctCopy", "obj1Tp"), r("Duplicate", "srcTp")),
                   sem(ref("DrctCopy", "obj2Tp"), r("Duplicate", "targTp")),
                   sem(ref("Duplicate", "srcId"), r("DrctCopy", "obj1Id")),
                   sem(ref("Duplicate", "targId"), r("DrctCopy", "obj2Id"))};
        g.productions.push_back(std::move(p));
    }

    {
        Production p;
        p.head = "Create";
        p.rhs = {t_create()};
        p.rules = {sem(ref("Create", "objId"), r("create", "object.objId")),
                   sem(ref("create", "object.objTp"), r("Create", "objTp"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "Open";
        p.rhs = {t_open()};
        p.rules = {sem(ref("Open", "objId"), r("open", "object.objId")),
                   sem(ref("open", "object.objTp"), r("Open", "objTp"))};
        g.productions.push_back(std::move(p));
    }
    {
        // Single-block reads and writes are distinct from the loop-marked
        // interleaved pattern.
        Production p;
        p.head = "Read";
        p.rhs = {t_read(LoopReq::no)};
        p.rules = {sem(ref("Read", "varId"), r("read!", "object1.objId")),
                   sem(ref("read!", "object1.objTp"), ty(ObjectType::var)),
                   sem(ref("read!", "object2.objId"), r("Read", "objId")),
                   sem(ref("read!", "object2.objTp"), r("Read", "objTp"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "Write";
        p.rhs = {t_write(LoopReq::no)};
        p.rules = {sem(ref("write!", "object1.objId"), r("Write", "varId")),
                   sem(ref("write!", "object1.objTp"), ty(ObjectType::var)),
                   sem(ref("write!", "object2.objId"), r("Write", "objId")),
                   sem(ref("write!", "object2.objTp"), r("Write", "objTp"))};
        g.productions.push_back(std::move(p));
    }
    {
        // while(receive object1 <- object2) { send object3 -> object4 }
        // consumed as a loop-marked read/write pair.
        Production p;
        p.head = "IntrlvRW";
        p.rhs = {t_read(LoopReq::yes), t_write(LoopReq::yes)};
        p.rules = {sem(ref("read*", "object1.objTp"), ty(ObjectType::var)),
                   sem(ref("read*", "object2.objId"), r("IntrlvRW", "obj1Id")),
                   sem(ref("read*", "object2.objTp"), r("IntrlvRW", "obj1Tp")),
                   sem(ref("write*", "object1.objId"), r("read*", "object1.objId")),
                   sem(ref("write*", "object1.objTp"), ty(ObjectType::var)),
                   sem(ref("write*", "object2.objId"), r("IntrlvRW", "obj2Id")),
                   sem(ref("write*", "object2.objTp"), r("IntrlvRW", "obj2Tp"))};
        g.productions.push_back(std::move(p));
    }
    {
        // send object1 -> object2 where object1 is the self-reference itself.
        Production p;
        p.head = "DrctCopy";
        p.rhs = {t_write()};
        p.rules = {sem(ref("DrctCopy", "obj1Id"), r("write", "object1.objId")),
                   sem(ref("write", "object1.objTp"), r("DrctCopy", "obj1Tp")),
                   sem(ref("DrctCopy", "obj2Id"), r("write", "object2.objId")),
                   sem(ref("write", "object2.objTp"), r("DrctCopy", "obj2Tp"))};
        g.productions.push_back(std::move(p));
    }
    return g;
}

/// Propagation: data copied from the self-reference (or from a completed
/// duplication's target) to a communicating object, with an optional format
/// step before the write.
inline AttributeGrammar propagation_grammar() {
    using namespace builder;
    AttributeGrammar g;
    g.name = "Propagation";
    g.start = "Propagate";

    Expr src_check = any_of({ty(ObjectType::this_ref), fact("Duplication", "targId")});

    {
        Production p;
        p.head = "Propagate";
        p.rhs = {nt("SrcOpen"), nt("Read"), nt("Transmit")};
        p.rules = {sem(ref("Propagate", "targTp"), ty(ObjectType::obj_com)),
                   sem(ref("Propagate", "srcId"), r("SrcOpen", "objId")),
                   sem(ref("Read", "objId"), r("Propagate", "srcId")),
                   sem(ref("Transmit", "varId"), r("Read", "varId")),
                   sem(ref("Transmit", "objTp"), r("Propagate", "targTp")),
                   sem(ref("Propagate", "targId"), r("Transmit", "targId"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "Propagate";
        p.rhs = {nt("SrcRead"), nt("Open"), nt("Transmit")};
        p.rules = {sem(ref("Propagate", "targTp"), ty(ObjectType::obj_com)),
                   sem(ref("Propagate", "srcId"), r("SrcRead", "objId")),
                   sem(ref("Open", "objId"), r("Propagate", "srcId")),
                   sem(ref("Transmit", "varId"), r("SrcRead", "varId")),
                   sem(ref("Transmit", "objTp"), r("Propagate", "targTp")),
                   sem(ref("Propagate", "targId"), r("Transmit", "targId"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "SrcOpen";
        p.rhs = {t_open()};
        p.rules = {sem(ref("open", "object.objTp"), src_check),
                   sem(ref("SrcOpen", "objId"), r("open", "object.objId"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "SrcRead";
        p.rhs = {t_read()};
        p.rules = {sem(ref("read", "object1.objTp"), ty(ObjectType::var)),
                   sem(ref("read", "object2.objTp"), src_check),
                   sem(ref("SrcRead", "objId"), r("read", "object2.objId")),
                   sem(ref("SrcRead", "varId"), r("read", "object1.objId"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "Read";
        p.rhs = {t_read()};
        p.rules = {sem(ref("read", "object1.objTp"), ty(ObjectType::var)),
                   sem(ref("read", "object2.objId"), r("Read", "objId")),
                   sem(ref("Read", "varId"), r("read", "object1.objId"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "Open";
        p.rhs = {t_open()};
        p.rules = {sem(ref("open", "object.objId"), r("Open", "objId"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "Transmit";
        p.rhs = {nt("Format"), nt("FmtWrite")};
        p.variant_label = "by formatted write";
        p.rules = {sem(ref("Format", "varId"), r("Transmit", "varId")),
                   sem(ref("FmtWrite", "varId"), r("Format", "outId")),
                   sem(ref("FmtWrite", "objTp"), r("Transmit", "objTp")),
                   sem(ref("Transmit", "targId"), r("FmtWrite", "objId"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "Transmit";
        p.rhs = {nt("Write")};
        p.variant_label = "by single write";
        p.rules = {sem(ref("Write", "varId"), r("Transmit", "varId")),
                   sem(ref("Write", "objTp"), r("Transmit", "objTp")),
                   sem(ref("Transmit", "targId"), r("Write", "objId"))};
        g.productions.push_back(std::move(p));
    }
    {
        // format object1 -> object2; the formatted buffer carries the flow.
        Production p;
        p.head = "Format";
        p.rhs = {t_format()};
        p.rules = {sem(ref("format", "object1.objId"), r("Format", "varId")),
                   sem(ref("Format", "outId"), r("format", "object2.objId"))};
        g.productions.push_back(std::move(p));
    }
    auto write_production = [&](const char* head) {
        Production p;
        p.head = head;
        p.rhs = {t_write()};
        p.rules = {sem(ref("write", "object1.objId"), r(head, "varId")),
                   sem(ref("write", "object2.objTp"), r(head, "objTp")),
                   sem(ref(head, "objId"), r("write", "object2.objId"))};
        return p;
    };
    g.productions.push_back(write_production("Write"));
    g.productions.push_back(write_production("FmtWrite"));
    return g;
}

/// Residency: a booting object is opened or created and a value referring to
/// the program itself, or to one of its duplicated versions, is written to it.
inline AttributeGrammar residency_grammar() {
    using namespace builder;
    AttributeGrammar g;
    g.name = "Residency";
    g.start = "Resident";

    auto head_rules = [&](const char* opener) {
        return std::vector<SemanticRule>{
            sem(ref("Resident", "targTp"), ty(ObjectType::obj_boot)),
            sem(ref(opener, "objTp"), r("Resident", "targTp")),
            sem(ref("Resident", "targId"), r(opener, "objId")),
            sem(ref("BootWrite", "objId"), r("Resident", "targId"))};
    };
    {
        Production p;
        p.head = "Resident";
        p.rhs = {nt("BootOpen"), nt("BootWrite")};
        p.variant_label = "by open";
        p.rules = head_rules("BootOpen");
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "Resident";
        p.rhs = {nt("BootCreate"), nt("BootWrite")};
        p.variant_label = "by create";
        p.rules = head_rules("BootCreate");
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "BootOpen";
        p.rhs = {t_open()};
        p.rules = {sem(ref("open", "object.objTp"), r("BootOpen", "objTp")),
                   sem(ref("BootOpen", "objId"), r("open", "object.objId"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "BootCreate";
        p.rhs = {t_create()};
        p.rules = {sem(ref("create", "object.objTp"), r("BootCreate", "objTp")),
                   sem(ref("BootCreate", "objId"), r("create", "object.objId"))};
        g.productions.push_back(std::move(p));
    }
    {
        // The written value must be bound to the self-reference or to a
        // published duplication target.
        Production p;
        p.head = "BootWrite";
        p.rhs = {t_write()};
        p.rules = {sem(ref("write", "object2.objId"), r("BootWrite", "objId")),
                   sem(ref("write", "object1.objTp"),
                       any_of({ty(ObjectType::this_ref), fact("Duplication", "targId")}))};
        g.productions.push_back(std::move(p));
    }
    return g;
}

/// Overinfection test: probe an object bound to the self path or a known
/// duplication target, then branch on its existence. Variant 1 recreates the
/// object when absent; variant 2 stops when it is present.
inline AttributeGrammar overinfection_grammar() {
    using namespace builder;
    AttributeGrammar g;
    g.name = "Overinfection";
    g.start = "Overinfect";

    {
        Production p;
        p.head = "Overinfect";
        p.rhs = {nt("Probe"), nt("BranchAbsent"), nt("ReCreate")};
        p.variant_label = "by conditional 1";
        p.rules = {sem(ref("Overinfect", "probeId"), r("Probe", "objId")),
                   sem(ref("BranchAbsent", "objId"), r("Overinfect", "probeId")),
                   sem(ref("ReCreate", "objId"), r("Overinfect", "probeId"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "Overinfect";
        p.rhs = {nt("Probe"), nt("BranchPresent"), nt("SelfQuit")};
        p.variant_label = "by inverse conditional 2";
        p.rules = {sem(ref("Overinfect", "probeId"), r("Probe", "objId")),
                   sem(ref("BranchPresent", "objId"), r("Overinfect", "probeId"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "Probe";
        p.rhs = {t_open()};
        p.rules = {sem(ref("open", "object.objTp"),
                       any_of({ty(ObjectType::this_ref), fact("Duplication", "targId")})),
                   sem(ref("Probe", "objId"), r("open", "object.objId"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "BranchAbsent";
        p.rhs = {t_branch()};
        p.rules = {sem(ref("branch", "arm"), txt("false")),
                   sem(ref("branch", "object.objId"), r("BranchAbsent", "objId"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "BranchPresent";
        p.rhs = {t_branch()};
        p.rules = {sem(ref("branch", "arm"), txt("true")),
                   sem(ref("branch", "object.objId"), r("BranchPresent", "objId"))};
        g.productions.push_back(std::move(p));
    }
    {
        Production p;
        p.head = "ReCreate";
        p.rhs = {t_create()};
        p.rules = {sem(ref("create", "object.objId"), r("ReCreate", "objId"))};
        g.productions.push_back(std::move(p));
    }
    {
        // The observable act-if-present step: the script signals itself
        // (terminates) once it finds a prior infection.
        Production p;
        p.head = "SelfQuit";
        p.rhs = {t_signal()};
        p.rules = {sem(ref("signal", "object.objTp"), ty(ObjectType::this_ref))};
        g.productions.push_back(std::move(p));
    }
    return g;
}

/// Named, validated set of behavior grammars.
struct BehaviorCatalog {
    std::vector<AttributeGrammar> entries;

    const AttributeGrammar* find(const std::string& name) const {
        for (const auto& g : entries)
            if (g.name == name) return &g;
        return nullptr;
    }
};

inline BehaviorCatalog builtin_catalog() {
    BehaviorCatalog cat;
    cat.entries.push_back(duplication_grammar());
    cat.entries.push_back(propagation_grammar());
    cat.entries.push_back(residency_grammar());
    cat.entries.push_back(overinfection_grammar());
    return cat;
}

}  // namespace bauto
