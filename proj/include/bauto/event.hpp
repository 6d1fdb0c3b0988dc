#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bauto/attr.hpp"
#include "bauto/types.hpp"

namespace bauto {

/// Generic interaction classes shared by all abstraction front-ends; these are
/// the terminal alphabet of the behavior grammars.
enum class InteractionClass : uint8_t {
    Create,
    Open,
    Close,
    Delete,
    Read,
    Write,
    Signal,
    Wait,
    Execute,
    FormatOp,
    Branch,
};

inline constexpr int kInteractionClassCount = 11;

constexpr std::string_view to_string(InteractionClass c) {
    switch (c) {
        case InteractionClass::Create: return "Create";
        case InteractionClass::Open: return "Open";
        case InteractionClass::Close: return "Close";
        case InteractionClass::Delete: return "Delete";
        case InteractionClass::Read: return "Read";
        case InteractionClass::Write: return "Write";
        case InteractionClass::Signal: return "Signal";
        case InteractionClass::Wait: return "Wait";
        case InteractionClass::Execute: return "Execute";
        case InteractionClass::FormatOp: return "FormatOp";
        case InteractionClass::Branch: return "Branch";
    }
    return "Signal";
}

inline std::optional<InteractionClass> interaction_class_from_string(std::string_view s) {
    for (int i = 0; i < kInteractionClassCount; ++i) {
        auto c = static_cast<InteractionClass>(i);
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

/// One object involved in an event, as resolved by a front-end.
struct EventObject {
    ObjectId id;
    Nature nature = Nature::other;
    ObjectType type = ObjectType::obj_any;
    std::string name;  // canonical name when one is known

    friend bool operator==(const EventObject& a, const EventObject& b) {
        return a.id == b.id && a.nature == b.nature && a.type == b.type;
    }
};

/// One abstracted interaction. Two-operand classes (Read, Write, FormatOp)
/// put the value side in objects[0] and the object side in objects[1];
/// one-operand classes use objects[0]. Branch events carry the condition's
/// assumed truth in `arm` and, when identifiable, the tested object.
struct Event {
    uint64_t seq = 0;
    InteractionClass cls = InteractionClass::Signal;
    bool loop = false;
    std::vector<EventObject> objects;
    std::optional<bool> arm;
    int path = 0;

    /// Content equality, ignoring seq; used by loop compression.
    bool same_shape(const Event& o) const {
        return cls == o.cls && loop == o.loop && objects == o.objects &&
               arm == o.arm && path == o.path;
    }
};

struct EventFormatError : std::runtime_error {
    explicit EventFormatError(const std::string& msg) : std::runtime_error(msg) {}
};

inline nlohmann::json event_to_json(const Event& e) {
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : e.objects) {
        nlohmann::json j{{"id", o.id.value},
                         {"nature", std::string(to_string(o.nature))},
                         {"type", std::string(to_string(o.type))}};
        if (!o.name.empty()) j["name"] = o.name;
        objs.push_back(std::move(j));
    }
    nlohmann::json j{{"seq", e.seq},
                     {"class", std::string(to_string(e.cls))},
                     {"objects", std::move(objs)},
                     {"loop", e.loop}};
    if (e.arm) j["arm"] = *e.arm;
    if (e.path != 0) j["path"] = e.path;
    return j;
}

inline Event event_from_json(const nlohmann::json& j) {
    Event e;
    try {
        e.seq = j.at("seq").get<uint64_t>();
        auto cls = interaction_class_from_string(j.at("class").get<std::string>());
        if (!cls) throw EventFormatError("unknown interaction class");
        e.cls = *cls;
        e.loop = j.value("loop", false);
        if (j.contains("arm")) e.arm = j.at("arm").get<bool>();
        e.path = j.value("path", 0);
        for (const auto& jo : j.at("objects")) {
            EventObject o;
            o.id.value = jo.at("id").get<uint64_t>();
            auto nat = nature_from_string(jo.at("nature").get<std::string>());
            auto typ = object_type_from_string(jo.at("type").get<std::string>());
            if (!nat || !typ) throw EventFormatError("bad object nature or type");
            o.nature = *nat;
            o.type = *typ;
            o.name = jo.value("name", std::string());
            e.objects.push_back(std::move(o));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw EventFormatError(std::string("malformed event: ") + ex.what());
    }
    return e;
}

/// Serializes a stream as JSON lines.
inline std::string events_to_lines(const std::vector<Event>& events) {
    std::string out;
    for (const auto& e : events) {
        out += event_to_json(e).dump();
        out += '\n';
    }
    return out;
}

inline std::vector<Event> events_from_lines(const std::string& text) {
    std::vector<Event> out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty() || line[0] == '#') continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw EventFormatError("invalid JSON line: " + line);
        out.push_back(event_from_json(j));
    }
    return out;
}

/// Operand count expected for each interaction class; Branch may omit its
/// tested object.
inline int operand_count(InteractionClass c) {
    switch (c) {
        case InteractionClass::Read:
        case InteractionClass::Write:
        case InteractionClass::FormatOp:
            return 2;
        case InteractionClass::Branch:
            return 1;
        default:
            return 1;
    }
}

}  // namespace bauto
