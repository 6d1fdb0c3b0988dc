#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>

#include "bauto/types.hpp"

namespace bauto {

/// Opaque identity token for a system object. Tokens are unique per analysis
/// run; equality is token equality.
struct ObjectId {
    uint64_t value = 0;

    friend bool operator==(ObjectId a, ObjectId b) { return a.value == b.value; }
    friend bool operator!=(ObjectId a, ObjectId b) { return a.value != b.value; }
    friend bool operator<(ObjectId a, ObjectId b) { return a.value < b.value; }
};

/// Value carried by a semantic attribute: an object identity, a type, a
/// nature, or a text constant.
using AttrValue = std::variant<ObjectId, ObjectType, Nature, std::string>;

inline std::string to_display(const AttrValue& v) {
    struct Vis {
        std::string operator()(ObjectId id) const { return "#" + std::to_string(id.value); }
        std::string operator()(ObjectType t) const { return std::string(to_string(t)); }
        std::string operator()(Nature n) const { return std::string(to_string(n)); }
        std::string operator()(const std::string& s) const { return "\"" + s + "\""; }
    };
    return std::visit(Vis{}, v);
}

}  // namespace bauto

template <>
struct std::hash<bauto::ObjectId> {
    size_t operator()(bauto::ObjectId id) const noexcept {
        return std::hash<uint64_t>{}(id.value);
    }
};
