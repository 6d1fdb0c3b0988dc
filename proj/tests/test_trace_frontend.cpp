#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <random>
#include <sstream>

#include "bauto/behaviors.hpp"
#include "bauto/detector.hpp"
#include "bauto/trace_frontend.hpp"

using namespace bauto;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

const ApiCatalog& shipped_catalog() {
    static ApiCatalog cat = load_catalog(read_file(std::string(BAUTO_CONFIG_DIR) + "/api_catalog.json"));
    return cat;
}

ResourceConfig shipped_resources() {
    return ResourceConfig::from_json(
        nlohmann::json::parse(read_file(std::string(BAUTO_CONFIG_DIR) + "/resources.json")));
}

}  // namespace

TEST_CASE("parse_trace_line tokenizes") {
    SECTION("spec'd example line") {
        RawCall c = parse_trace_line("12 NtCreateFile(H:0x1c, S:\"C:\\\\x.exe\", I:3) = SUCCESS");
        CHECK(c.seq == 12);
        CHECK(c.api == "NtCreateFile");
        REQUIRE(c.args.size() == 3);
        CHECK(c.args[0].kind == TraceToken::Kind::handle);
        CHECK(c.args[0].value == 0x1c);
        CHECK(c.args[1].kind == TraceToken::Kind::text);
        CHECK(c.args[1].text == "C:\\x.exe");
        CHECK(c.args[2].kind == TraceToken::Kind::integer);
        CHECK(c.status == "SUCCESS");
    }
    SECTION("close with one handle arg") {
        RawCall c = parse_trace_line("7 NtClose(H:0x1c) = SUCCESS");
        CHECK(c.seq == 7);
        REQUIRE(c.args.size() == 1);
        CHECK(c.args[0].kind == TraceToken::Kind::handle);
    }
    SECTION("address token with span size") {
        RawCall c = parse_trace_line("3 NtReadFile(H:0x4, A:0x5000+128) = SUCCESS");
        CHECK(c.args[1].kind == TraceToken::Kind::address);
        CHECK(c.args[1].value == 0x5000);
        CHECK(c.args[1].size == 128);
    }
    SECTION("missing '=' is a syntax error") {
        CHECK_THROWS_AS(parse_trace_line("3 NtClose(H:0x1) SUCCESS"), TraceSyntaxError);
    }
    SECTION("unknown APIs still parse") {
        RawCall c = parse_trace_line("9 NtSomethingNew(I:5) = SUCCESS");
        CHECK(c.api == "NtSomethingNew");
    }
    SECTION("column is reported") {
        try {
            parse_trace_line("5 NtClose(Q:1) = SUCCESS");
            FAIL("expected TraceSyntaxError");
        } catch (const TraceSyntaxError& e) {
            CHECK(e.column == 11);
        }
    }
}

TEST_CASE("abstract_trace resolves the duplication pattern") {
    auto cfg = shipped_resources();
    std::string text =
        "1 NtOpenFile(H:0x10, S:\"c:\\\\samples\\\\self.exe\") = SUCCESS\n"
        "2 NtCreateFile(H:0x11, S:\"c:\\\\dup.exe\") = SUCCESS\n"
        "3 NtReadFile(H:0x10, A:0x5000+256) = SUCCESS\n"
        "4 NtWriteFile(H:0x11, A:0x5000+256) = SUCCESS\n";
    TraceAbstractor abs(cfg, shipped_catalog());
    auto analysis = abs.run(parse_trace(text));
    REQUIRE(analysis.events.size() == 4);
    CHECK(analysis.events[0].cls == InteractionClass::Open);
    CHECK(analysis.events[0].objects[0].type == ObjectType::this_ref);
    CHECK(analysis.events[2].cls == InteractionClass::Read);
    // read: value side is the buffer variable, object side is the source
    CHECK(analysis.events[2].objects[0].nature == Nature::variable);
    CHECK(analysis.events[2].objects[1].type == ObjectType::this_ref);
    // same buffer address resolves to the same variable in the write
    CHECK(analysis.events[3].objects[0].id == analysis.events[2].objects[0].id);

    // the full pipeline detects the duplication
    auto dup = duplication_grammar();
    Engine engine({&dup});
    auto verdicts = engine.run(analysis.events);
    REQUIRE(verdicts.size() == 1);
    CHECK(verdicts[0].variant == "by single read/write");
}

TEST_CASE("failed calls and unlisted APIs are dropped") {
    auto cfg = shipped_resources();
    std::string text =
        "1 NtOpenFile(H:0x10, S:\"c:\\\\a.txt\") = ACCESS_DENIED\n"
        "2 NtQueryPerformanceCounter(I:1) = SUCCESS\n";
    TraceAbstractor abs(cfg, shipped_catalog());
    auto analysis = abs.run(parse_trace(text));
    CHECK(analysis.events.empty());
    CHECK(analysis.warnings.empty());
}

TEST_CASE("dangling handles warn and drop the event") {
    auto cfg = shipped_resources();
    std::string text =
        "1 NtOpenFile(H:0x10, S:\"c:\\\\a.txt\") = SUCCESS\n"
        "2 NtClose(H:0x10) = SUCCESS\n"
        "3 NtReadFile(H:0x10, A:0x100+8) = SUCCESS\n";
    TraceAbstractor abs(cfg, shipped_catalog());
    auto analysis = abs.run(parse_trace(text));
    REQUIRE(analysis.events.size() == 2);  // open + close only
    REQUIRE(analysis.warnings.size() == 1);
    CHECK(analysis.warnings[0].seq == 3);
    CHECK(analysis.warnings[0].message.find("DanglingHandle") != std::string::npos);
}

TEST_CASE("handle reuse binds to the newest object") {
    auto cfg = shipped_resources();
    std::string text =
        "1 NtOpenFile(H:0x10, S:\"c:\\\\first.txt\") = SUCCESS\n"
        "2 NtClose(H:0x10) = SUCCESS\n"
        "3 NtOpenFile(H:0x10, S:\"c:\\\\second.txt\") = SUCCESS\n"
        "4 NtWriteFile(H:0x10, A:0x100+8) = SUCCESS\n";
    TraceAbstractor abs(cfg, shipped_catalog());
    auto analysis = abs.run(parse_trace(text));
    REQUIRE(analysis.events.size() == 4);
    CHECK(analysis.events[3].objects[1].name == "c:\\second.txt");
    CHECK(analysis.events[3].objects[1].id == analysis.events[2].objects[0].id);
    CHECK(analysis.events[3].objects[1].id != analysis.events[0].objects[0].id);
}

TEST_CASE("written strings resolve through the name correspondence") {
    auto cfg = shipped_resources();
    std::string text =
        "1 NtCreateKey(H:0x20, S:\"hklm\\\\software\\\\microsoft\\\\windows\\\\currentversion\\\\run\\\\u\") = SUCCESS\n"
        "2 NtSetValueKey(H:0x20, S:\"c:\\\\samples\\\\self.exe\") = SUCCESS\n";
    TraceAbstractor abs(cfg, shipped_catalog());
    auto analysis = abs.run(parse_trace(text));
    REQUIRE(analysis.events.size() == 2);
    CHECK(analysis.events[0].objects[0].type == ObjectType::obj_boot);
    CHECK(analysis.events[1].objects[0].type == ObjectType::this_ref);

    auto res = residency_grammar();
    Engine engine({&res});
    auto verdicts = engine.run(analysis.events);
    REQUIRE(verdicts.size() == 1);
    CHECK(verdicts[0].behavior == "Residency");
}

TEST_CASE("socket io maps through the control-code discriminators") {
    auto cfg = shipped_resources();
    std::string text =
        "1 NtCreateFile(H:0x30, S:\"\\\\device\\\\afd\\\\endpoint\") = SUCCESS\n"
        "2 NtDeviceIoControlFile(H:0x30, I:73751, A:0x9000+64) = SUCCESS\n"
        "3 NtDeviceIoControlFile(H:0x30, I:73759, A:0x9000+64) = SUCCESS\n";
    TraceAbstractor abs(cfg, shipped_catalog());
    auto analysis = abs.run(parse_trace(text));
    REQUIRE(analysis.events.size() == 3);
    CHECK(analysis.events[0].objects[0].nature == Nature::socket);
    CHECK(analysis.events[1].cls == InteractionClass::Read);
    CHECK(analysis.events[2].cls == InteractionClass::Write);
    CHECK(analysis.events[2].objects[1].type == ObjectType::obj_com);
}

TEST_CASE("compress_loops") {
    auto mk = [](InteractionClass c, uint64_t seq, uint64_t var, uint64_t obj, bool loop = false) {
        Event e;
        e.seq = seq;
        e.cls = c;
        e.loop = loop;
        e.objects = {EventObject{ObjectId{var}, Nature::variable, ObjectType::var, ""},
                     EventObject{ObjectId{obj}, Nature::file, ObjectType::obj_perm, ""}};
        return e;
    };
    SECTION("repeated pair collapses to a loop-marked pair") {
        std::vector<Event> in{mk(InteractionClass::Read, 1, 10, 2), mk(InteractionClass::Write, 2, 10, 3),
                              mk(InteractionClass::Read, 3, 10, 2), mk(InteractionClass::Write, 4, 10, 3),
                              mk(InteractionClass::Read, 5, 10, 2), mk(InteractionClass::Write, 6, 10, 3)};
        auto out = compress_loops(in);
        REQUIRE(out.size() == 2);
        CHECK(out[0].cls == InteractionClass::Read);
        CHECK(out[0].loop);
        CHECK(out[1].cls == InteractionClass::Write);
        CHECK(out[1].loop);
    }
    SECTION("unstable pattern passes through") {
        std::vector<Event> in{mk(InteractionClass::Read, 1, 10, 2), mk(InteractionClass::Write, 2, 10, 3),
                              mk(InteractionClass::Read, 3, 10, 2), mk(InteractionClass::Write, 4, 10, 4)};
        auto out = compress_loops(in);
        CHECK(out.size() == 4);
        for (const auto& e : out) CHECK_FALSE(e.loop);
    }
    SECTION("single event passes through") {
        std::vector<Event> in{mk(InteractionClass::Read, 1, 10, 2)};
        auto out = compress_loops(in);
        REQUIRE(out.size() == 1);
        CHECK_FALSE(out[0].loop);
    }
    SECTION("runs of one repeated event collapse to one occurrence") {
        std::vector<Event> in{mk(InteractionClass::Open, 1, 10, 2), mk(InteractionClass::Open, 2, 10, 2),
                              mk(InteractionClass::Open, 3, 10, 2)};
        auto out = compress_loops(in);
        REQUIRE(out.size() == 1);
        CHECK_FALSE(out[0].loop);  // a plain repeat is not the interleaved pattern
    }
    SECTION("idempotent") {
        std::vector<Event> in{mk(InteractionClass::Read, 1, 10, 2), mk(InteractionClass::Write, 2, 10, 3),
                              mk(InteractionClass::Read, 3, 10, 2), mk(InteractionClass::Write, 4, 10, 3),
                              mk(InteractionClass::Open, 5, 10, 2)};
        auto once = compress_loops(in);
        auto twice = compress_loops(once);
        REQUIRE(once.size() == twice.size());
        for (size_t i = 0; i < once.size(); ++i) CHECK(once[i].same_shape(twice[i]));
    }
}

TEST_CASE("verdicts agree on compressed and uncompressed streams") {
    auto cfg = shipped_resources();
    // interleaved duplication: the same read/write pair repeated
    std::string text =
        "1 NtOpenFile(H:0x10, S:\"c:\\\\samples\\\\self.exe\") = SUCCESS\n"
        "2 NtCreateFile(H:0x11, S:\"c:\\\\dup.exe\") = SUCCESS\n"
        "3 NtReadFile(H:0x10, A:0x5000+256) = SUCCESS\n"
        "4 NtWriteFile(H:0x11, A:0x5000+256) = SUCCESS\n"
        "5 NtReadFile(H:0x10, A:0x5000+256) = SUCCESS\n"
        "6 NtWriteFile(H:0x11, A:0x5000+256) = SUCCESS\n"
        "7 NtReadFile(H:0x10, A:0x5000+256) = SUCCESS\n"
        "8 NtWriteFile(H:0x11, A:0x5000+256) = SUCCESS\n";
    TraceAbstractor abs(cfg, shipped_catalog());
    auto analysis = abs.run(parse_trace(text));
    auto dup = duplication_grammar();
    auto behaviors_of = [&](const std::vector<Event>& evs) {
        Engine engine({&dup});
        std::set<std::string> out;
        for (const auto& v : engine.run(evs)) out.insert(v.behavior);
        return out;
    };
    auto plain = behaviors_of(analysis.events);
    auto compressed = behaviors_of(compress_loops(analysis.events));
    CHECK(plain == compressed);
    CHECK(plain.count("Duplication") == 1);
}

TEST_CASE("randomized handle reuse never merges distinct objects") {
    auto cfg = shipped_resources();
    std::mt19937_64 rng(4242);
    std::uniform_int_distribution<int> pct(0, 99);
    const std::vector<std::string> names{"c:\\u.bin", "c:\\v.bin", "c:\\w.bin", "c:\\x.bin"};

    for (int trial = 0; trial < 200; ++trial) {
        // reference interpreter: live handle -> name, assigned at open time
        std::map<uint64_t, std::string> live;
        std::ostringstream trace;
        std::vector<std::pair<uint64_t, std::string>> expected;  // seq -> true object name
        uint64_t seq = 0;
        std::vector<uint64_t> handle_pool{0x10, 0x11, 0x12};
        for (int step = 0; step < 30; ++step) {
            int roll = pct(rng);
            if (roll < 35 || live.empty()) {
                uint64_t h = handle_pool[static_cast<size_t>(pct(rng)) % handle_pool.size()];
                if (live.count(h)) continue;  // handle numbers are unique while open
                const std::string& n = names[static_cast<size_t>(pct(rng)) % names.size()];
                trace << ++seq << " NtOpenFile(H:0x" << std::hex << h << std::dec << ", S:\""
                      << "c:\\\\" << n.substr(3) << "\") = SUCCESS\n";
                live[h] = n;
            } else if (roll < 55) {
                auto it = live.begin();
                std::advance(it, static_cast<size_t>(pct(rng)) % live.size());
                trace << ++seq << " NtClose(H:0x" << std::hex << it->first << std::dec
                      << ") = SUCCESS\n";
                live.erase(it);
            } else {
                auto it = live.begin();
                std::advance(it, static_cast<size_t>(pct(rng)) % live.size());
                trace << ++seq << " NtReadFile(H:0x" << std::hex << it->first << std::dec
                      << ", A:0x100+8) = SUCCESS\n";
                expected.emplace_back(seq, it->second);
            }
        }
        TraceAbstractor abs(cfg, shipped_catalog());
        auto analysis = abs.run(parse_trace(trace.str()));
        std::map<uint64_t, std::string> by_seq;
        std::map<std::string, uint64_t> name_to_id;
        for (const auto& e : analysis.events) {
            if (e.cls != InteractionClass::Read) continue;
            by_seq[e.seq] = e.objects[1].name;
            auto [it, fresh] = name_to_id.emplace(e.objects[1].name, e.objects[1].id.value);
            if (!fresh) CHECK(it->second == e.objects[1].id.value);
        }
        for (const auto& [s, name] : expected) {
            REQUIRE(by_seq.count(s) == 1);
            CHECK(by_seq[s] == name);
        }
    }
}
