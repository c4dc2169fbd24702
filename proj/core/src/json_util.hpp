#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "handover/error.hpp"

namespace handover::detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                                std::string_view section) {
    if (!j.is_object()) throw ConfigError(std::string(section) + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (auto k : known) ok = ok || key == k;
        if (!ok) throw ConfigError(std::string(section) + ": unknown key '" + key + "'");
    }
}

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out, std::string_view section) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string(section) + ": key '" + key + "' has the wrong type");
    }
}

}  // namespace handover::detail
