#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace bauto {

/// Object types order the potential roles of a system object in the malware
/// lifecycle. The order is a fixed seven-element poset: obj_any is the unique
/// bottom, obj_perm specializes into obj_boot and this_ref, and var, obj_temp,
/// obj_com sit on their own branches.
enum class ObjectType : uint8_t {
    obj_any = 0,
    var = 1,
    obj_temp = 2,
    obj_perm = 3,
    obj_boot = 4,
    obj_com = 5,
    this_ref = 6,
};

inline constexpr int kObjectTypeCount = 7;

namespace detail {
// Reflexive-transitive closure of the Hasse edges:
//   obj_any -> {var, obj_temp, obj_perm, obj_com}
//   obj_perm -> {obj_boot, this_ref}
// Row = a, column = b, true iff a <= b.
inline constexpr bool kTypeLeq[kObjectTypeCount][kObjectTypeCount] = {
    /* obj_any  */ {true, true, true, true, true, true, true},
    /* var      */ {false, true, false, false, false, false, false},
    /* obj_temp */ {false, false, true, false, false, false, false},
    /* obj_perm */ {false, false, false, true, true, false, true},
    /* obj_boot */ {false, false, false, false, true, false, false},
    /* obj_com  */ {false, false, false, false, false, true, false},
    /* this_ref */ {false, false, false, false, false, false, true},
};
}  // namespace detail

/// True iff a is below-or-equal b in the object-type poset.
inline constexpr bool poset_leq(ObjectType a, ObjectType b) {
    return detail::kTypeLeq[static_cast<int>(a)][static_cast<int>(b)];
}

/// Least upper bound of two types, when one exists.
inline constexpr std::optional<ObjectType> type_lub(ObjectType a, ObjectType b) {
    std::optional<ObjectType> best;
    for (int u = 0; u < kObjectTypeCount; ++u) {
        auto cand = static_cast<ObjectType>(u);
        if (!poset_leq(a, cand) || !poset_leq(b, cand)) continue;
        if (!best || poset_leq(cand, *best)) best = cand;
    }
    // A minimal common upper bound must be unique to be a lub.
    if (best) {
        for (int u = 0; u < kObjectTypeCount; ++u) {
            auto cand = static_cast<ObjectType>(u);
            if (poset_leq(a, cand) && poset_leq(b, cand) && !poset_leq(*best, cand))
                return std::nullopt;
        }
    }
    return best;
}

/// Specializes `current` with a newly observed type. Returns the lub, or
/// nullopt when the two are incompatible (e.g. var vs this_ref); the caller
/// decides how to treat the typing conflict.
inline constexpr std::optional<ObjectType> type_refine(ObjectType current,
                                                       ObjectType observed) {
    return type_lub(current, observed);
}

constexpr std::string_view to_string(ObjectType t) {
    switch (t) {
        case ObjectType::obj_any: return "obj_any";
        case ObjectType::var: return "var";
        case ObjectType::obj_temp: return "obj_temp";
        case ObjectType::obj_perm: return "obj_perm";
        case ObjectType::obj_boot: return "obj_boot";
        case ObjectType::obj_com: return "obj_com";
        case ObjectType::this_ref: return "this";
    }
    return "obj_any";
}

inline std::optional<ObjectType> object_type_from_string(std::string_view s) {
    for (int i = 0; i < kObjectTypeCount; ++i) {
        auto t = static_cast<ObjectType>(i);
        if (to_string(t) == s) return t;
    }
    return std::nullopt;
}

/// Nature of an object as reported by the abstraction layer.
enum class Nature : uint8_t {
    file,
    registry_key,
    socket,
    mail,
    process,
    variable,
    drive,
    other,
};

constexpr std::string_view to_string(Nature n) {
    switch (n) {
        case Nature::file: return "file";
        case Nature::registry_key: return "registry_key";
        case Nature::socket: return "socket";
        case Nature::mail: return "mail";
        case Nature::process: return "process";
        case Nature::variable: return "variable";
        case Nature::drive: return "drive";
        case Nature::other: return "other";
    }
    return "other";
}

inline std::optional<Nature> nature_from_string(std::string_view s) {
    for (int i = 0; i < 8; ++i) {
        auto n = static_cast<Nature>(i);
        if (to_string(n) == s) return n;
    }
    return std::nullopt;
}

}  // namespace bauto
