#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "bauto/behaviors.hpp"
#include "bauto/detector.hpp"
#include "generators.hpp"
#include "oracle.hpp"

using namespace bauto;

namespace {

std::set<std::string> engine_keys(const std::vector<Event>& stream,
                                  const std::vector<const AttributeGrammar*>& gs,
                                  EngineOptions opts) {
    Engine engine(gs, opts);
    std::set<std::string> out;
    for (const auto& e : stream) {
        for (const auto& v : engine.feed(e)) {
            oracle::OracleVerdict ov;
            ov.behavior = v.behavior;
            ov.variant = v.variant;
            ov.events = v.events;
            for (const auto& b : v.objects) ov.bindings[b.attr] = b.value;
            out.insert(ov.key());
        }
    }
    return out;
}

std::set<std::string> oracle_keys(const std::vector<Event>& stream,
                                  const std::vector<const AttributeGrammar*>& gs) {
    std::set<std::string> out;
    for (const auto& v : oracle::oracle_detect(stream, gs)) out.insert(v.key());
    return out;
}

std::string dump(const std::vector<Event>& stream) {
    std::string s;
    for (const auto& e : stream) s += event_to_json(e).dump() + "\n";
    return s;
}

}  // namespace

TEST_CASE("template expansion covers every alternative combination") {
    auto dup = duplication_grammar();
    CHECK(oracle::expand_templates(dup).size() == 6);
    auto prop = propagation_grammar();
    CHECK(oracle::expand_templates(prop).size() == 4);  // two orderings x (format or not)
    auto res = residency_grammar();
    CHECK(oracle::expand_templates(res).size() == 2);
    auto ov = overinfection_grammar();
    CHECK(oracle::expand_templates(ov).size() == 2);
}

TEST_CASE("oracle agrees with hand-checked accepts") {
    gen::Universe u;
    auto dup = duplication_grammar();
    std::vector<const AttributeGrammar*> gs{&dup};
    std::vector<Event> stream;
    auto push = [&](InteractionClass c, std::vector<EventObject> objs, bool loop = false) {
        Event e;
        e.seq = stream.size() + 1;
        e.cls = c;
        e.loop = loop;
        e.objects = std::move(objs);
        stream.push_back(e);
    };
    push(InteractionClass::Open, {u.self});
    push(InteractionClass::Create, {u.perm});
    push(InteractionClass::Read, {u.v1, u.self});
    push(InteractionClass::Write, {u.v1, u.perm});
    auto keys = oracle_keys(stream, gs);
    REQUIRE(keys.size() == 1);
    CHECK(keys == engine_keys(stream, gs, EngineOptions{false, false}));
}

TEST_CASE("engine equals oracle on randomized streams") {
    auto catalog = builtin_catalog();
    std::vector<const AttributeGrammar*> gs;
    for (const auto& g : catalog.entries) gs.push_back(&g);
    std::mt19937_64 rng(20260811);
    EngineOptions opts;
    opts.dedup = false;
    opts.prune = false;
    int streams = 1500;
    for (int i = 0; i < streams; ++i) {
        auto stream = gen::random_stream(rng);
        auto ek = engine_keys(stream, gs, opts);
        auto ok = oracle_keys(stream, gs);
        if (ek != ok) {
            INFO("stream:\n" << dump(stream));
            INFO("engine has " << ek.size() << " verdicts, oracle " << ok.size());
            for (const auto& k : ek)
                if (!ok.count(k)) INFO("engine only: " << k);
            for (const auto& k : ok)
                if (!ek.count(k)) INFO("oracle only: " << k);
            REQUIRE(ek == ok);
        }
    }
    SUCCEED();
}

TEST_CASE("dedup and prune preserve verdicts on lifecycle streams") {
    auto catalog = builtin_catalog();
    std::vector<const AttributeGrammar*> gs;
    for (const auto& g : catalog.entries) gs.push_back(&g);
    std::mt19937_64 rng(99821);

    auto binding_keys = [&](const std::vector<Event>& stream, EngineOptions opts) {
        Engine engine(gs, opts);
        std::set<std::string> out;
        for (const auto& e : stream)
            for (const auto& v : engine.feed(e)) {
                std::string k = v.behavior + "|" + v.variant + "|";
                std::map<std::string, AttrValue> sorted;
                for (const auto& b : v.objects) sorted[b.attr] = b.value;
                for (const auto& [a, val] : sorted) k += a + "=" + to_display(val) + ";";
                out.insert(k);
            }
        return out;
    };

    for (int i = 0; i < 300; ++i) {
        auto stream = gen::lifecycle_stream(rng);
        auto base = binding_keys(stream, EngineOptions{false, false});
        for (bool dedup : {false, true}) {
            for (bool prune : {false, true}) {
                auto other = binding_keys(stream, EngineOptions{dedup, prune});
                if (other != base) {
                    INFO("stream:\n" << dump(stream));
                    INFO("dedup=" << dedup << " prune=" << prune);
                    REQUIRE(other == base);
                }
            }
        }
    }
    SUCCEED();
}
