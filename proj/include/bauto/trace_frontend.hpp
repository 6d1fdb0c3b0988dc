#pragma once

#include <cctype>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "bauto/api_map.hpp"
#include "bauto/classifier.hpp"
#include "bauto/event.hpp"

namespace bauto {

struct TraceSyntaxError : std::runtime_error {
    int column = 0;
    TraceSyntaxError(int col, const std::string& msg)
        : std::runtime_error("col " + std::to_string(col) + ": " + msg), column(col) {}
};

struct TraceToken {
    enum class Kind { handle, address, integer, text };
    Kind kind = Kind::integer;
    uint64_t value = 0;  // handle, address or integer
    uint64_t size = 0;   // optional span size on addresses
    std::string text;
};

/// One parsed trace line: `<seq> <Api>(<tok>{,<tok>}) = <STATUS>` with tokens
/// `H:0x<hex>`, `A:0x<hex>[+<size>]`, `I:<dec>`, `S:"<escaped>"`.
struct RawCall {
    uint64_t seq = 0;
    std::string api;
    std::vector<TraceToken> args;
    std::string status;
};

namespace trace_detail {

struct Scan {
    const std::string& s;
    size_t i = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw TraceSyntaxError(static_cast<int>(i) + 1, msg);
    }
    void ws() {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    }
    bool done() {
        ws();
        return i >= s.size();
    }
    void expect(char c) {
        ws();
        if (i >= s.size() || s[i] != c) fail(std::string("expected '") + c + "'");
        ++i;
    }
    uint64_t decimal() {
        ws();
        if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i]))) fail("expected a number");
        uint64_t v = 0;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])))
            v = v * 10 + static_cast<uint64_t>(s[i++] - '0');
        return v;
    }
    uint64_t hex() {
        if (i + 1 < s.size() && s[i] == '0' && (s[i + 1] == 'x' || s[i + 1] == 'X'))
            i += 2;
        else
            fail("expected 0x");
        if (i >= s.size() || !std::isxdigit(static_cast<unsigned char>(s[i]))) fail("expected hex digits");
        uint64_t v = 0;
        while (i < s.size() && std::isxdigit(static_cast<unsigned char>(s[i]))) {
            char c = s[i++];
            int d = c <= '9' ? c - '0' : (std::tolower(c) - 'a' + 10);
            v = v * 16 + static_cast<uint64_t>(d);
        }
        return v;
    }
    std::string ident() {
        ws();
        size_t start = i;
        while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
        if (i == start) fail("expected an identifier");
        return s.substr(start, i - start);
    }
};

}  // namespace trace_detail

inline RawCall parse_trace_line(const std::string& line) {
    trace_detail::Scan sc{line, 0};
    RawCall call;
    call.seq = sc.decimal();
    call.api = sc.ident();
    sc.expect('(');
    sc.ws();
    if (sc.i < line.size() && line[sc.i] != ')') {
        while (true) {
            sc.ws();
            if (sc.i >= line.size()) sc.fail("unterminated argument list");
            char kind = line[sc.i];
            TraceToken tok;
            if (kind == 'H' || kind == 'A' || kind == 'I' || kind == 'S') {
                ++sc.i;
                sc.expect(':');
                switch (kind) {
                    case 'H':
                        tok.kind = TraceToken::Kind::handle;
                        tok.value = sc.hex();
                        break;
                    case 'A':
                        tok.kind = TraceToken::Kind::address;
                        tok.value = sc.hex();
                        if (sc.i < line.size() && line[sc.i] == '+') {
                            ++sc.i;
                            tok.size = sc.decimal();
                        }
                        break;
                    case 'I': {
                        tok.kind = TraceToken::Kind::integer;
                        tok.value = sc.decimal();
                        break;
                    }
                    case 'S': {
                        tok.kind = TraceToken::Kind::text;
                        sc.expect('"');
                        std::string out;
                        while (sc.i < line.size() && line[sc.i] != '"') {
                            if (line[sc.i] == '\\' && sc.i + 1 < line.size()) {
                                ++sc.i;
                                char e = line[sc.i];
                                out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
                            } else {
                                out += line[sc.i];
                            }
                            ++sc.i;
                        }
                        if (sc.i >= line.size()) sc.fail("unterminated string");
                        ++sc.i;
                        tok.text = std::move(out);
                        break;
                    }
                }
            } else {
                sc.fail("unknown token kind");
            }
            call.args.push_back(std::move(tok));
            sc.ws();
            if (sc.i < line.size() && line[sc.i] == ',') {
                ++sc.i;
                continue;
            }
            break;
        }
    }
    sc.expect(')');
    sc.expect('=');
    call.status = sc.ident();
    if (!sc.done()) sc.fail("trailing characters");
    return call;
}

/// Parses a whole trace document; `#` lines and blank lines are skipped.
/// Sequence numbers must be strictly increasing.
inline std::vector<RawCall> parse_trace(const std::string& text) {
    std::vector<RawCall> out;
    std::istringstream in(text);
    std::string line;
    uint64_t last = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        RawCall c = parse_trace_line(line);
        if (c.seq <= last) throw TraceSyntaxError(1, "sequence numbers must increase");
        last = c.seq;
        out.push_back(std::move(c));
    }
    return out;
}

struct TraceWarning {
    uint64_t seq = 0;
    std::string message;
};

struct TraceAnalysis {
    std::vector<Event> events;
    std::vector<TraceWarning> warnings;
};

/// Name/handle correspondence for one trace: a handle maps to at most one
/// live descriptor and closing removes the entry, so reused handle numbers
/// bind to the object of their latest open.
class HandleTable {
public:
    void bind(uint64_t handle, ObjectId id) { live_[handle] = id; }
    void unbind(uint64_t handle) { live_.erase(handle); }
    std::optional<ObjectId> lookup(uint64_t handle) const {
        auto it = live_.find(handle);
        if (it == live_.end()) return std::nullopt;
        return it->second;
    }
    size_t size() const { return live_.size(); }

private:
    std::unordered_map<uint64_t, ObjectId> live_;
};

namespace trace_detail {

inline std::vector<ApiParam> api_params(const RawCall& call) {
    std::vector<ApiParam> out;
    for (const auto& a : call.args) {
        if (a.kind == TraceToken::Kind::text)
            out.emplace_back(a.text);
        else
            out.emplace_back(static_cast<int64_t>(a.value));
    }
    return out;
}

inline EventObject to_event_object(const ObjectDescriptor& d) {
    return EventObject{d.id, d.nature, d.otype, d.name};
}

}  // namespace trace_detail

/// Translates a parsed trace into the generic event stream, line by line:
/// the catalog classifies each call, the object classifier types the named
/// objects, handles resolve through the correspondence table, buffers through
/// variable spans. Failed calls and unlisted APIs produce nothing.
class TraceAbstractor {
public:
    TraceAbstractor(const ResourceConfig& cfg, const ApiCatalog& catalog,
                    ClassifyContext ctx = {})
        : catalog_(catalog), registry_(cfg, std::move(ctx)) {}

    DescriptorRegistry& registry() { return registry_; }

    TraceAnalysis run(const std::vector<RawCall>& calls) {
        TraceAnalysis out;
        for (const auto& call : calls) process(call, out);
        return out;
    }

private:
    void process(const RawCall& call, TraceAnalysis& out) {
        if (call.status != "SUCCESS") return;
        const ApiCatalogEntry* entry = catalog_.map_call(call.api, trace_detail::api_params(call));
        if (!entry) return;

        auto resolve = [&](const ApiCatalogEntry::Role* role) -> ObjectDescriptor* {
            if (!role || role->param < 0 || role->param >= static_cast<int>(call.args.size()))
                return nullptr;
            const TraceToken& tok = call.args[role->param];
            switch (tok.kind) {
                case TraceToken::Kind::text:
                    return &registry_.for_name(tok.text);
                case TraceToken::Kind::handle: {
                    auto id = handles_.lookup(tok.value);
                    if (!id) {
                        out.warnings.push_back(
                            TraceWarning{call.seq, "DanglingHandle: " + call.api + " references 0x" +
                                                       to_hex(tok.value)});
                        return nullptr;
                    }
                    return registry_.find(*id);
                }
                case TraceToken::Kind::address:
                    return &registry_.for_address(tok.value, tok.size);
                case TraceToken::Kind::integer:
                    return nullptr;  // plain constants are not objects
            }
            return nullptr;
        };

        Event e;
        e.seq = call.seq;
        e.cls = entry->cls;

        switch (entry->cls) {
            case InteractionClass::Create:
            case InteractionClass::Open: {
                ObjectDescriptor* obj = resolve(entry->role("name"));
                if (!obj) obj = resolve(entry->role("subject"));
                if (!obj) return;
                if (const auto* rh = entry->role("result-handle");
                    rh && rh->param < static_cast<int>(call.args.size()) &&
                    call.args[rh->param].kind == TraceToken::Kind::handle)
                    handles_.bind(call.args[rh->param].value, obj->id);
                e.objects = {trace_detail::to_event_object(*obj)};
                break;
            }
            case InteractionClass::Close:
            case InteractionClass::Delete: {
                const auto* sub = entry->role("subject");
                if (!sub) sub = entry->role("name");
                ObjectDescriptor* obj = resolve(sub);
                if (!obj) return;  // closing an unknown handle: warned above
                e.objects = {trace_detail::to_event_object(*obj)};
                if (sub && call.args[sub->param].kind == TraceToken::Kind::handle)
                    pending_unbind_ = call.args[sub->param].value;
                break;
            }
            case InteractionClass::Read: {
                ObjectDescriptor* src = resolve(entry->role("source"));
                ObjectDescriptor* buf = resolve(entry->role("buffer"));
                if (!src || !buf) return;
                e.objects = {trace_detail::to_event_object(*buf),
                             trace_detail::to_event_object(*src)};
                break;
            }
            case InteractionClass::Write: {
                ObjectDescriptor* targ = resolve(entry->role("target"));
                ObjectDescriptor* buf = resolve(entry->role("buffer"));
                if (!targ || !buf) return;
                e.objects = {trace_detail::to_event_object(*buf),
                             trace_detail::to_event_object(*targ)};
                break;
            }
            case InteractionClass::FormatOp: {
                ObjectDescriptor* src = resolve(entry->role("source"));
                ObjectDescriptor* dst = resolve(entry->role("target"));
                if (!src || !dst) return;
                e.objects = {trace_detail::to_event_object(*src),
                             trace_detail::to_event_object(*dst)};
                break;
            }
            case InteractionClass::Execute:
            case InteractionClass::Signal:
            case InteractionClass::Wait: {
                const auto* sub = entry->role("subject");
                if (!sub) sub = entry->role("name");
                ObjectDescriptor* obj = resolve(sub);
                if (!obj) return;
                e.objects = {trace_detail::to_event_object(*obj)};
                break;
            }
            case InteractionClass::Branch:
                return;  // control flow is not observable in call traces
        }

        out.events.push_back(std::move(e));
        if (pending_unbind_) {
            handles_.unbind(*pending_unbind_);
            pending_unbind_.reset();
        }
    }

    static std::string to_hex(uint64_t v) {
        std::ostringstream os;
        os << std::hex << v;
        return os.str();
    }

    const ApiCatalog& catalog_;
    DescriptorRegistry registry_;
    HandleTable handles_;
    std::optional<uint64_t> pending_unbind_;
};

/// Collapses repetition: a run of one repeated event becomes a single
/// occurrence, and two or more repetitions of a two-event pattern with stable
/// descriptors become one loop-marked pair (the shape rule (vi) consumes).
/// Idempotent and order-preserving.
inline std::vector<Event> compress_loops(const std::vector<Event>& events) {
    std::vector<Event> out;
    size_t i = 0;
    while (i < events.size()) {
        size_t single = 1;
        while (i + single < events.size() && events[i].same_shape(events[i + single])) ++single;

        size_t pairs = 0;
        if (i + 1 < events.size() && !events[i].same_shape(events[i + 1])) {
            pairs = 1;
            while (i + 2 * pairs + 1 < events.size() &&
                   events[i].same_shape(events[i + 2 * pairs]) &&
                   events[i + 1].same_shape(events[i + 2 * pairs + 1]))
                ++pairs;
        }

        if (pairs >= 2 && 2 * pairs >= single) {
            Event a = events[i];
            Event b = events[i + 1];
            a.loop = true;
            b.loop = true;
            out.push_back(std::move(a));
            out.push_back(std::move(b));
            i += 2 * pairs;
        } else if (single >= 2) {
            out.push_back(events[i]);
            i += single;
        } else {
            out.push_back(events[i]);
            ++i;
        }
    }
    return out;
}

}  // namespace bauto
