#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "bauto/event.hpp"
#include "bauto/types.hpp"

namespace bauto {

struct CatalogError : std::runtime_error {
    explicit CatalogError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A raw API parameter as seen by a front-end: a number (handle, address,
/// control code) or a text value.
using ApiParam = std::variant<int64_t, std::string>;

inline std::string lowercase(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

/// One mapping entry: an API name, optional discriminating parameter
/// constants, the interaction class, and the roles of the parameters.
struct ApiCatalogEntry {
    std::string api;  // lowercased
    struct Discriminator {
        int param = 0;
        ApiParam equals;
    };
    std::vector<Discriminator> when;
    InteractionClass cls = InteractionClass::Signal;
    struct Role {
        int param = 0;  // -1 refers to the call's receiver (scripts)
        std::string role;  // subject|source|target|buffer|result-handle|name
    };
    std::vector<Role> roles;
    // script-level result object metadata
    std::string result_iface;
    std::optional<Nature> result_nature;
    std::optional<ObjectType> result_type;

    bool discriminated() const { return !when.empty(); }

    bool matches(const std::vector<ApiParam>& params) const {
        for (const auto& d : when) {
            if (d.param < 0 || d.param >= static_cast<int>(params.size())) return false;
            const ApiParam& got = params[d.param];
            if (const auto* want = std::get_if<int64_t>(&d.equals)) {
                const auto* num = std::get_if<int64_t>(&got);
                if (!num || *num != *want) return false;
            } else {
                const auto* s = std::get_if<std::string>(&got);
                if (!s || lowercase(*s) != lowercase(std::get<std::string>(d.equals))) return false;
            }
        }
        return true;
    }

    const Role* role(const std::string& name) const {
        for (const auto& r : roles)
            if (r.role == name) return &r;
        return nullptr;
    }
};

/// The {API name} x ({Parameters} or nothing) -> {Interaction class} mapping.
/// Discriminated entries are tried before the per-name default; unlisted
/// calls map to nothing and the caller ignores them.
class ApiCatalog {
public:
    void add(ApiCatalogEntry entry) {
        entry.api = lowercase(entry.api);
        entries_[entry.api].push_back(std::move(entry));
    }

    void validate() const {
        for (const auto& [name, list] : entries_) {
            int defaults = 0;
            for (const auto& e : list)
                if (!e.discriminated()) ++defaults;
            if (defaults > 1)
                throw CatalogError("two default entries for api '" + name + "'");
            for (size_t i = 0; i < list.size(); ++i) {
                for (size_t j = i + 1; j < list.size(); ++j) {
                    if (!list[i].discriminated() || !list[j].discriminated()) continue;
                    // identical discriminator sets would make dispatch ambiguous
                    if (list[i].when.size() == list[j].when.size()) {
                        bool same = true;
                        for (size_t k = 0; k < list[i].when.size(); ++k) {
                            if (list[i].when[k].param != list[j].when[k].param ||
                                !(list[i].when[k].equals == list[j].when[k].equals))
                                same = false;
                        }
                        if (same)
                            throw CatalogError("ambiguous discriminators for api '" + name + "'");
                    }
                }
            }
        }
    }

    /// Resolves a call. Discriminated entries win over the default; no match
    /// means the call is not monitored.
    const ApiCatalogEntry* map_call(const std::string& api,
                                    const std::vector<ApiParam>& params) const {
        auto it = entries_.find(lowercase(api));
        if (it == entries_.end()) return nullptr;
        const ApiCatalogEntry* fallback = nullptr;
        for (const auto& e : it->second) {
            if (!e.discriminated()) {
                fallback = &e;
                continue;
            }
            if (e.matches(params)) return &e;
        }
        return fallback;
    }

    size_t entry_count(const std::string& api) const {
        auto it = entries_.find(lowercase(api));
        return it == entries_.end() ? 0 : it->second.size();
    }
    size_t size() const {
        size_t n = 0;
        for (const auto& [k, v] : entries_) n += v.size();
        return n;
    }

private:
    std::map<std::string, std::vector<ApiCatalogEntry>> entries_;
};

inline ApiCatalog load_catalog(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw CatalogError("catalog is not valid JSON");
    if (!j.is_array()) throw CatalogError("catalog must be a JSON array of entries");
    ApiCatalog cat;
    for (const auto& je : j) {
        ApiCatalogEntry e;
        try {
            e.api = je.at("api").get<std::string>();
            auto cls = interaction_class_from_string(je.at("class").get<std::string>());
            if (!cls) throw CatalogError("unknown class in entry for " + e.api);
            e.cls = *cls;
            if (je.contains("when")) {
                for (const auto& jw : je.at("when")) {
                    ApiCatalogEntry::Discriminator d;
                    d.param = jw.at("param").get<int>();
                    if (jw.at("equals").is_number_integer())
                        d.equals = jw.at("equals").get<int64_t>();
                    else
                        d.equals = jw.at("equals").get<std::string>();
                    e.when.push_back(std::move(d));
                }
            }
            if (je.contains("roles")) {
                for (const auto& jr : je.at("roles")) {
                    ApiCatalogEntry::Role r;
                    r.param = jr.at("param").get<int>();
                    r.role = jr.at("role").get<std::string>();
                    e.roles.push_back(std::move(r));
                }
            }
            if (je.contains("result")) {
                const auto& jr = je.at("result");
                e.result_iface = jr.value("iface", std::string());
                if (jr.contains("nature")) {
                    auto n = nature_from_string(jr.at("nature").get<std::string>());
                    if (!n) throw CatalogError("bad result nature for " + e.api);
                    e.result_nature = n;
                }
                if (jr.contains("type")) {
                    auto t = object_type_from_string(jr.at("type").get<std::string>());
                    if (!t) throw CatalogError("bad result type for " + e.api);
                    e.result_type = t;
                }
            }
        } catch (const nlohmann::json::exception& ex) {
            throw CatalogError(std::string("bad catalog entry: ") + ex.what());
        }
        cat.add(std::move(e));
    }
    cat.validate();
    return cat;
}

}  // namespace bauto
