#include <catch2/catch_amalgamated.hpp>

#include "bauto/behaviors.hpp"
#include "bauto/detector.hpp"

using namespace bauto;
using namespace bauto::builder;

namespace {

struct StreamBuilder {
    std::vector<Event> events;
    uint64_t seq = 0;

    EventObject self() { return EventObject{ObjectId{1}, Nature::file, ObjectType::this_ref, "c:\\self.exe"}; }
    EventObject file(uint64_t id, const std::string& name = "") {
        return EventObject{ObjectId{id}, Nature::file, ObjectType::obj_perm, name};
    }
    EventObject boot(uint64_t id, const std::string& name = "") {
        return EventObject{ObjectId{id}, Nature::registry_key, ObjectType::obj_boot, name};
    }
    EventObject sock(uint64_t id) { return EventObject{ObjectId{id}, Nature::socket, ObjectType::obj_com, ""}; }
    EventObject var(uint64_t id) { return EventObject{ObjectId{id}, Nature::variable, ObjectType::var, ""}; }

    Event& push(InteractionClass cls, std::vector<EventObject> objs, bool loop = false) {
        Event e;
        e.seq = ++seq;
        e.cls = cls;
        e.loop = loop;
        e.objects = std::move(objs);
        events.push_back(std::move(e));
        return events.back();
    }
};

std::vector<Verdict> detect(const std::vector<Event>& events,
                            const std::vector<AttributeGrammar>& grammars,
                            EngineOptions opts = {}) {
    std::vector<const AttributeGrammar*> ptrs;
    for (const auto& g : grammars) ptrs.push_back(&g);
    Engine engine(ptrs, opts);
    return engine.run(events);
}

}  // namespace

TEST_CASE("duplication: paper's four-event sequence is accepted") {
    StreamBuilder sb;
    sb.push(InteractionClass::Open, {sb.self()});
    sb.push(InteractionClass::Create, {sb.file(2, "c:\\x.exe")});
    sb.push(InteractionClass::Read, {sb.var(10), sb.self()});
    sb.push(InteractionClass::Write, {sb.var(10), sb.file(2)});
    auto verdicts = detect(sb.events, {duplication_grammar()});
    REQUIRE(verdicts.size() == 1);
    CHECK(verdicts[0].behavior == "Duplication");
    CHECK(verdicts[0].variant == "by single read/write");
    CHECK(verdicts[0].events == std::vector<uint64_t>{1, 2, 3, 4});
}

TEST_CASE("duplication rejects a non-self source") {
    StreamBuilder sb;
    sb.push(InteractionClass::Open, {sb.file(5)});  // not the self-reference
    sb.push(InteractionClass::Create, {sb.file(2)});
    sb.push(InteractionClass::Read, {sb.var(10), sb.file(5)});
    sb.push(InteractionClass::Write, {sb.var(10), sb.file(2)});
    CHECK(detect(sb.events, {duplication_grammar()}).empty());
}

TEST_CASE("duplication rejects a variable mismatch") {
    StreamBuilder sb;
    sb.push(InteractionClass::Open, {sb.self()});
    sb.push(InteractionClass::Create, {sb.file(2)});
    sb.push(InteractionClass::Read, {sb.var(10), sb.self()});
    sb.push(InteractionClass::Write, {sb.var(11), sb.file(2)});  // different variable
    CHECK(detect(sb.events, {duplication_grammar()}).empty());
}

TEST_CASE("ambiguity: two consecutive creations, write to either") {
    auto dup = duplication_grammar();
    for (uint64_t target : {2ULL, 3ULL}) {
        StreamBuilder sb;
        sb.push(InteractionClass::Open, {sb.self()});
        sb.push(InteractionClass::Create, {sb.file(2, "f1")});
        sb.push(InteractionClass::Create, {sb.file(3, "f2")});
        sb.push(InteractionClass::Read, {sb.var(10), sb.self()});
        sb.push(InteractionClass::Write, {sb.var(10), sb.file(target)});
        auto verdicts = detect(sb.events, {dup});
        REQUIRE(verdicts.size() == 1);
        bool found = false;
        for (const auto& b : verdicts[0].objects)
            if (b.attr == "targId" && b.value == AttrValue{ObjectId{target}}) found = true;
        CHECK(found);
    }
}

TEST_CASE("unrelated events leave one root derivation per automaton") {
    StreamBuilder sb;
    for (int i = 0; i < 6; ++i) {
        sb.push(InteractionClass::Wait, {sb.file(7)});
        sb.push(InteractionClass::Signal, {sb.file(8)});
    }
    std::vector<const AttributeGrammar*> gs;
    auto dup = duplication_grammar();
    auto prop = propagation_grammar();
    gs = {&dup, &prop};
    Engine engine(gs);
    for (const auto& e : sb.events) CHECK(engine.feed(e).empty());
    CHECK(engine.live_derivations(0) == 1);
    CHECK(engine.live_derivations(1) == 1);
    CHECK(engine.metrics().parse_calls == 2 * sb.events.size());
    CHECK(engine.metrics().n_ambiguities == 0);
    CHECK(engine.metrics().alpha() == 0.0);
}

TEST_CASE("interleaved read/write consumes the loop-marked pair") {
    StreamBuilder sb;
    sb.push(InteractionClass::Open, {sb.self()});
    sb.push(InteractionClass::Create, {sb.file(2)});
    sb.push(InteractionClass::Read, {sb.var(10), sb.self()}, true);
    sb.push(InteractionClass::Write, {sb.var(10), sb.file(2)}, true);
    auto verdicts = detect(sb.events, {duplication_grammar()});
    REQUIRE(verdicts.size() == 1);
    CHECK(verdicts[0].variant == "by interleaved read/write");
}

TEST_CASE("direct copy accepts in one event") {
    StreamBuilder sb;
    sb.push(InteractionClass::Write, {sb.self(), sb.file(2, "c:\\a.exe")});
    auto verdicts = detect(sb.events, {duplication_grammar()});
    REQUIRE(verdicts.size() == 1);
    CHECK(verdicts[0].variant == "by direct copy");
}

TEST_CASE("propagation requires a communicating target") {
    auto prop = propagation_grammar();
    SECTION("socket target accepted") {
        StreamBuilder sb;
        sb.push(InteractionClass::Open, {sb.self()});
        sb.push(InteractionClass::Read, {sb.var(10), sb.self()});
        sb.push(InteractionClass::Write, {sb.var(10), sb.sock(4)});
        auto verdicts = detect(sb.events, {prop});
        REQUIRE(verdicts.size() == 1);
        CHECK(verdicts[0].behavior == "Propagation");
        CHECK(verdicts[0].variant == "by single write");
    }
    SECTION("permanent target rejected") {
        StreamBuilder sb;
        sb.push(InteractionClass::Open, {sb.self()});
        sb.push(InteractionClass::Read, {sb.var(10), sb.self()});
        sb.push(InteractionClass::Write, {sb.var(10), sb.file(4)});
        CHECK(detect(sb.events, {prop}).empty());
    }
    SECTION("formatted transmit accepted") {
        StreamBuilder sb;
        sb.push(InteractionClass::Open, {sb.self()});
        sb.push(InteractionClass::Read, {sb.var(10), sb.self()});
        sb.push(InteractionClass::FormatOp, {sb.var(10), sb.var(11)});
        sb.push(InteractionClass::Write, {sb.var(11), sb.sock(4)});
        auto verdicts = detect(sb.events, {prop});
        REQUIRE(verdicts.size() == 1);
        CHECK(verdicts[0].variant == "by formatted write");
    }
}

TEST_CASE("propagation from a published duplication target") {
    auto dup = duplication_grammar();
    auto prop = propagation_grammar();
    StreamBuilder sb;
    // duplication completes first and publishes its target
    sb.push(InteractionClass::Open, {sb.self()});
    sb.push(InteractionClass::Create, {sb.file(2, "c:\\dup.exe")});
    sb.push(InteractionClass::Read, {sb.var(10), sb.self()});
    sb.push(InteractionClass::Write, {sb.var(10), sb.file(2)});
    // then the duplicate, not the self-reference, is propagated
    sb.push(InteractionClass::Open, {sb.file(2, "c:\\dup.exe")});
    sb.push(InteractionClass::Read, {sb.var(11), sb.file(2)});
    sb.push(InteractionClass::Write, {sb.var(11), sb.sock(4)});
    auto verdicts = detect(sb.events, {dup, prop});
    REQUIRE(verdicts.size() == 2);
    CHECK(verdicts[0].behavior == "Duplication");
    CHECK(verdicts[1].behavior == "Propagation");

    SECTION("without the duplication fact the source check fails") {
        std::vector<Event> tail(sb.events.begin() + 4, sb.events.end());
        CHECK(detect(tail, {prop}).empty());
    }
}

TEST_CASE("facts ordering: propagation source check precedes duplication verdict") {
    auto dup = duplication_grammar();
    auto prop = propagation_grammar();
    StreamBuilder sb;
    // the would-be propagation source is opened and read before the
    // duplication that publishes it completes
    sb.push(InteractionClass::Open, {sb.file(2, "c:\\dup.exe")});
    sb.push(InteractionClass::Read, {sb.var(11), sb.file(2)});
    sb.push(InteractionClass::Open, {sb.self()});
    sb.push(InteractionClass::Create, {sb.file(2, "c:\\dup.exe")});
    sb.push(InteractionClass::Read, {sb.var(10), sb.self()});
    sb.push(InteractionClass::Write, {sb.var(10), sb.file(2)});
    sb.push(InteractionClass::Write, {sb.var(11), sb.sock(4)});
    auto verdicts = detect(sb.events, {dup, prop});
    // only the duplication fires: the source check ran before publication
    REQUIRE(verdicts.size() == 1);
    CHECK(verdicts[0].behavior == "Duplication");
}

TEST_CASE("residency verdicts") {
    auto res = residency_grammar();
    SECTION("write of the self path to a created run key") {
        StreamBuilder sb;
        sb.push(InteractionClass::Create, {sb.boot(3, "hklm\\...\\run")});
        sb.push(InteractionClass::Write, {sb.self(), sb.boot(3)});
        auto verdicts = detect(sb.events, {res});
        REQUIRE(verdicts.size() == 1);
        CHECK(verdicts[0].behavior == "Residency");
        CHECK(verdicts[0].variant == "by create");
    }
    SECTION("unrelated written value rejected") {
        StreamBuilder sb;
        sb.push(InteractionClass::Create, {sb.boot(3)});
        sb.push(InteractionClass::Write, {sb.file(9, "c:\\app.exe"), sb.boot(3)});
        CHECK(detect(sb.events, {res}).empty());
    }
    SECTION("non-boot object rejected") {
        StreamBuilder sb;
        sb.push(InteractionClass::Create, {sb.file(3)});
        sb.push(InteractionClass::Write, {sb.self(), sb.file(3)});
        CHECK(detect(sb.events, {res}).empty());
    }
    SECTION("write of a duplication target path accepted") {
        auto dup = duplication_grammar();
        StreamBuilder sb;
        sb.push(InteractionClass::Open, {sb.self()});
        sb.push(InteractionClass::Create, {sb.file(2, "c:\\dup.exe")});
        sb.push(InteractionClass::Read, {sb.var(10), sb.self()});
        sb.push(InteractionClass::Write, {sb.var(10), sb.file(2)});
        sb.push(InteractionClass::Create, {sb.boot(3, "hklm\\...\\run")});
        sb.push(InteractionClass::Write, {sb.file(2), sb.boot(3)});
        auto verdicts = detect(sb.events, {dup, res});
        REQUIRE(verdicts.size() == 2);
        CHECK(verdicts[1].behavior == "Residency");
    }
}

TEST_CASE("overinfection verdicts") {
    auto ov = overinfection_grammar();
    SECTION("probe, absent branch, recreate") {
        StreamBuilder sb;
        sb.push(InteractionClass::Open, {sb.self()});
        sb.push(InteractionClass::Branch, {sb.self()}).arm = false;
        sb.push(InteractionClass::Create, {sb.self()});
        auto verdicts = detect(sb.events, {ov});
        REQUIRE(verdicts.size() == 1);
        CHECK(verdicts[0].variant == "by conditional 1");
    }
    SECTION("probe, present branch, quit") {
        StreamBuilder sb;
        sb.push(InteractionClass::Open, {sb.self()});
        sb.push(InteractionClass::Branch, {sb.self()}).arm = true;
        sb.push(InteractionClass::Signal, {sb.self()});
        auto verdicts = detect(sb.events, {ov});
        REQUIRE(verdicts.size() == 1);
        CHECK(verdicts[0].variant == "by inverse conditional 2");
    }
    SECTION("probe of an unrelated path rejected") {
        StreamBuilder sb;
        sb.push(InteractionClass::Open, {sb.file(5)});
        sb.push(InteractionClass::Branch, {sb.file(5)}).arm = false;
        sb.push(InteractionClass::Create, {sb.file(5)});
        CHECK(detect(sb.events, {ov}).empty());
    }
    SECTION("empty stream rejected") { CHECK(detect({}, {ov}).empty()); }
}

TEST_CASE("dedup collapses identical derivations") {
    auto dup = duplication_grammar();
    StreamBuilder sb;
    sb.push(InteractionClass::Open, {sb.self()});
    sb.push(InteractionClass::Open, {sb.self()});  // same descriptor again
    Engine engine({&dup});
    engine.feed(sb.events[0]);
    engine.feed(sb.events[1]);
    // one root plus a single post-open derivation; the twin was collapsed
    CHECK(engine.live_derivations() == 2);
    CHECK(engine.metrics().dedup_removed >= 1);
}

TEST_CASE("dedup keeps derivations that differ in bindings") {
    auto dup = duplication_grammar();
    StreamBuilder sb;
    sb.push(InteractionClass::Create, {sb.file(2)});
    sb.push(InteractionClass::Create, {sb.file(3)});  // different object
    Engine engine({&dup});
    engine.feed(sb.events[0]);
    engine.feed(sb.events[1]);
    CHECK(engine.live_derivations() == 3);  // root + two distinct creations
}

TEST_CASE("prune on close") {
    auto dup = duplication_grammar();
    SECTION("open then close destroys the fresh derivation") {
        StreamBuilder sb;
        sb.push(InteractionClass::Open, {sb.self()});
        sb.push(InteractionClass::Close, {sb.self()});
        Engine engine({&dup});
        for (const auto& e : sb.events) engine.feed(e);
        CHECK(engine.live_derivations() == 1);  // only the root survives
        CHECK(engine.metrics().pruned == 1);
    }
    SECTION("intervening interaction keeps the derivation") {
        StreamBuilder sb;
        sb.push(InteractionClass::Open, {sb.self()});
        sb.push(InteractionClass::Read, {sb.var(10), sb.self()});
        sb.push(InteractionClass::Close, {sb.self()});
        Engine engine({&dup});
        for (const auto& e : sb.events) engine.feed(e);
        CHECK(engine.live_derivations() > 1);
    }
    SECTION("close of an unknown handle changes nothing") {
        StreamBuilder sb;
        sb.push(InteractionClass::Open, {sb.self()});
        sb.push(InteractionClass::Close, {sb.file(99)});
        Engine engine({&dup});
        for (const auto& e : sb.events) engine.feed(e);
        CHECK(engine.live_derivations() == 2);
        CHECK(engine.metrics().pruned == 0);
    }
}

TEST_CASE("noise invariance: unrelated events never change verdicts") {
    auto dup = duplication_grammar();
    StreamBuilder sb;
    sb.push(InteractionClass::Open, {sb.self()});
    sb.push(InteractionClass::Wait, {sb.file(7)});
    sb.push(InteractionClass::Create, {sb.file(2)});
    sb.push(InteractionClass::Signal, {sb.file(8)});
    sb.push(InteractionClass::Read, {sb.var(10), sb.self()});
    sb.push(InteractionClass::Wait, {sb.file(7)});
    sb.push(InteractionClass::Write, {sb.var(10), sb.file(2)});
    auto verdicts = detect(sb.events, {dup});
    REQUIRE(verdicts.size() == 1);
    CHECK(verdicts[0].events == std::vector<uint64_t>{1, 3, 5, 7});
}

namespace {

// Every event matches and duplicates every derivation: a chain of
// unconstrained reads longer than the stream.
AttributeGrammar worst_case_grammar(const std::string& name, int length) {
    AttributeGrammar g;
    g.name = name;
    g.start = "Chain";
    Production p;
    p.head = "Chain";
    for (int i = 0; i < length; ++i) p.rhs.push_back(t_read());
    g.productions.push_back(std::move(p));
    return g;
}

}  // namespace

TEST_CASE("proposition 1 counts") {
    SECTION("worst case without dedup: k(2^n - 1) parse calls") {
        const int n = 10;
        const int k = 3;
        std::vector<AttributeGrammar> gs;
        for (int i = 0; i < k; ++i) gs.push_back(worst_case_grammar("W" + std::to_string(i), n + 1));
        std::vector<const AttributeGrammar*> ptrs;
        for (const auto& g : gs) ptrs.push_back(&g);
        EngineOptions opts;
        opts.dedup = false;
        opts.prune = false;
        Engine engine(ptrs, opts);
        StreamBuilder sb;
        for (int i = 0; i < n; ++i)
            sb.push(InteractionClass::Read, {sb.var(100 + i), sb.file(200 + i)});
        for (const auto& e : sb.events) engine.feed(e);
        CHECK(engine.metrics().parse_calls == static_cast<uint64_t>(k) * ((1ULL << n) - 1));
        CHECK(engine.metrics().n_ambiguities == static_cast<uint64_t>(k) * ((1ULL << n) - 1));
        CHECK(engine.live_derivations() == static_cast<size_t>(k) * (1ULL << n));
    }
    SECTION("ambiguity-free streams: k*n parse calls") {
        const int n = 17;
        auto dup = duplication_grammar();
        auto prop = propagation_grammar();
        Engine engine({&dup, &prop});
        StreamBuilder sb;
        for (int i = 0; i < n; ++i) sb.push(InteractionClass::Wait, {sb.file(7)});
        for (const auto& e : sb.events) engine.feed(e);
        CHECK(engine.metrics().parse_calls == 2ULL * n);
    }
}

TEST_CASE("ambiguity target completeness with derivation bound") {
    auto dup = duplication_grammar();
    const int N = 8;
    for (int target = 1; target <= N; ++target) {
        StreamBuilder sb;
        sb.push(InteractionClass::Open, {sb.self()});
        for (int i = 1; i <= N; ++i) sb.push(InteractionClass::Create, {sb.file(10 + i)});
        sb.push(InteractionClass::Read, {sb.var(30), sb.self()});
        sb.push(InteractionClass::Write, {sb.var(30), sb.file(10 + target)});
        Engine engine({&dup});
        std::vector<Verdict> verdicts;
        for (const auto& e : sb.events) {
            auto vs = engine.feed(e);
            verdicts.insert(verdicts.end(), vs.begin(), vs.end());
        }
        REQUIRE(verdicts.size() == 1);
        bool found = false;
        for (const auto& b : verdicts[0].objects)
            if (b.attr == "targId" && b.value == AttrValue{ObjectId{static_cast<uint64_t>(10 + target)}})
                found = true;
        CHECK(found);
        size_t n_events = sb.events.size();
        CHECK(engine.metrics().max_derivations < (1ULL << n_events));
    }
}

TEST_CASE("stack bounds stay within the reported maxima") {
    std::vector<AttributeGrammar> gs = builtin_catalog().entries;
    std::vector<const AttributeGrammar*> ptrs;
    for (const auto& g : gs) ptrs.push_back(&g);
    Engine engine(ptrs);
    StreamBuilder sb;
    sb.push(InteractionClass::Open, {sb.self()});
    sb.push(InteractionClass::Create, {sb.file(2, "c:\\dup.exe")});
    sb.push(InteractionClass::Read, {sb.var(10), sb.self()});
    sb.push(InteractionClass::Write, {sb.var(10), sb.file(2)});
    sb.push(InteractionClass::Open, {sb.self()});
    sb.push(InteractionClass::Read, {sb.var(11), sb.self()});
    sb.push(InteractionClass::FormatOp, {sb.var(11), sb.var(12)});
    sb.push(InteractionClass::Write, {sb.var(12), sb.sock(4)});
    sb.push(InteractionClass::Create, {sb.boot(3, "hklm\\run")});
    sb.push(InteractionClass::Write, {sb.self(), sb.boot(3)});
    for (const auto& e : sb.events) engine.feed(e);
    CHECK(engine.metrics().max_parse_stack <= 7);
    CHECK(engine.metrics().max_sem_stack <= 3);
    CHECK(engine.metrics().max_sem_stack >= 2);
}

TEST_CASE("step outcomes") {
    auto dup = duplication_grammar();
    Automaton a(dup);
    FactsBoard facts;
    Derivation root;

    StreamBuilder sb;
    Event open_self = sb.push(InteractionClass::Open, {sb.self()});
    auto r1 = a.step(root, open_self, facts);
    CHECK(r1.outcome.kind == StepKind::advanced);
    CHECK(r1.outcome.duplicated);

    Event wait = sb.push(InteractionClass::Wait, {sb.file(7)});
    auto r2 = a.step(root, wait, facts);
    CHECK(r2.outcome.kind == StepKind::ignored);

    // binding mismatch: a read on an unrelated object is ignored
    Event read_other = sb.push(InteractionClass::Read, {sb.var(10), sb.file(5)});
    auto r3 = a.step(r1.advanced, read_other, facts);
    CHECK(r3.outcome.kind == StepKind::ignored);
}
