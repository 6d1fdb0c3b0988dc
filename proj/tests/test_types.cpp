#include <catch2/catch_amalgamated.hpp>

#include "bauto/types.hpp"

using namespace bauto;

namespace {

// Independent oracle: reflexive-transitive closure of the declared Hasse
// edges, computed by fixed point over the 7-element carrier.
struct ClosureOracle {
    bool leq[7][7] = {};

    ClosureOracle() {
        auto edge = [&](ObjectType a, ObjectType b) {
            leq[static_cast<int>(a)][static_cast<int>(b)] = true;
        };
        for (int i = 0; i < 7; ++i) leq[i][i] = true;
        edge(ObjectType::obj_any, ObjectType::var);
        edge(ObjectType::obj_any, ObjectType::obj_temp);
        edge(ObjectType::obj_any, ObjectType::obj_perm);
        edge(ObjectType::obj_any, ObjectType::obj_com);
        edge(ObjectType::obj_perm, ObjectType::obj_boot);
        edge(ObjectType::obj_perm, ObjectType::this_ref);
        for (bool changed = true; changed;) {
            changed = false;
            for (int a = 0; a < 7; ++a)
                for (int b = 0; b < 7; ++b)
                    for (int c = 0; c < 7; ++c)
                        if (leq[a][b] && leq[b][c] && !leq[a][c]) leq[a][c] = true, changed = true;
        }
    }
};

ObjectType types[7] = {ObjectType::obj_any,  ObjectType::var,      ObjectType::obj_temp,
                       ObjectType::obj_perm, ObjectType::obj_boot, ObjectType::obj_com,
                       ObjectType::this_ref};

}  // namespace

TEST_CASE("poset_leq agrees with the closure oracle on all 49 pairs") {
    ClosureOracle oracle;
    for (int a = 0; a < 7; ++a)
        for (int b = 0; b < 7; ++b)
            CHECK(poset_leq(types[a], types[b]) == oracle.leq[a][b]);
}

TEST_CASE("poset_leq quoted facts") {
    CHECK(poset_leq(ObjectType::obj_perm, ObjectType::obj_boot));
    CHECK(poset_leq(ObjectType::obj_boot, ObjectType::obj_boot));
    CHECK_FALSE(poset_leq(ObjectType::obj_temp, ObjectType::obj_com));
    CHECK(poset_leq(ObjectType::obj_perm, ObjectType::this_ref));
}

TEST_CASE("poset is a partial order") {
    for (int a = 0; a < 7; ++a) {
        CHECK(poset_leq(types[a], types[a]));
        for (int b = 0; b < 7; ++b) {
            if (a != b && poset_leq(types[a], types[b])) CHECK_FALSE(poset_leq(types[b], types[a]));
            for (int c = 0; c < 7; ++c)
                if (poset_leq(types[a], types[b]) && poset_leq(types[b], types[c]))
                    CHECK(poset_leq(types[a], types[c]));
        }
    }
    // obj_any is the unique bottom
    for (int b = 0; b < 7; ++b) CHECK(poset_leq(ObjectType::obj_any, types[b]));
    // var comparable only to itself and obj_any
    for (int b = 0; b < 7; ++b) {
        if (types[b] == ObjectType::var || types[b] == ObjectType::obj_any) continue;
        CHECK_FALSE(poset_leq(ObjectType::var, types[b]));
        CHECK_FALSE(poset_leq(types[b], ObjectType::var));
    }
}

TEST_CASE("type_refine basics") {
    CHECK(type_refine(ObjectType::obj_any, ObjectType::obj_perm) == ObjectType::obj_perm);
    CHECK(type_refine(ObjectType::obj_perm, ObjectType::obj_boot) == ObjectType::obj_boot);
    CHECK_FALSE(type_refine(ObjectType::var, ObjectType::this_ref).has_value());
}

TEST_CASE("type_refine is a lub where defined") {
    ClosureOracle oracle;
    auto lub_oracle = [&](int a, int b) -> std::optional<ObjectType> {
        std::optional<int> best;
        for (int u = 0; u < 7; ++u) {
            if (!oracle.leq[a][u] || !oracle.leq[b][u]) continue;
            if (!best || oracle.leq[u][*best]) best = u;
        }
        if (best)
            for (int u = 0; u < 7; ++u)
                if (oracle.leq[a][u] && oracle.leq[b][u] && !oracle.leq[*best][u])
                    return std::nullopt;
        return best ? std::optional(types[*best]) : std::nullopt;
    };
    for (int a = 0; a < 7; ++a)
        for (int b = 0; b < 7; ++b)
            CHECK(type_refine(types[a], types[b]) == lub_oracle(a, b));
}

TEST_CASE("type_refine commutative, idempotent, associative where defined") {
    for (int a = 0; a < 7; ++a) {
        CHECK(type_refine(types[a], types[a]) == types[a]);
        for (int b = 0; b < 7; ++b) {
            auto ab = type_refine(types[a], types[b]);
            CHECK(ab == type_refine(types[b], types[a]));
            if (ab) {
                CHECK(poset_leq(types[a], *ab));
                CHECK(poset_leq(types[b], *ab));
            }
            for (int c = 0; c < 7; ++c) {
                auto bc = type_refine(types[b], types[c]);
                if (ab && bc) {
                    auto left = type_refine(*ab, types[c]);
                    auto right = type_refine(types[a], *bc);
                    if (left && right) CHECK(*left == *right);
                }
            }
        }
    }
}

TEST_CASE("type and nature names round-trip") {
    for (int i = 0; i < 7; ++i)
        CHECK(object_type_from_string(to_string(types[i])) == types[i]);
    CHECK(object_type_from_string("this") == ObjectType::this_ref);
    CHECK_FALSE(object_type_from_string("bogus").has_value());
    CHECK(nature_from_string("registry_key") == Nature::registry_key);
}
