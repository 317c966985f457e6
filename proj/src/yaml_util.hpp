#pragma once

#include <yaml-cpp/yaml.h>

#include <string>
#include <string_view>
#include <vector>

#include "arrdiag/errors.hpp"

namespace arrdiag::detail {

inline YAML::Node parse_yaml(std::string_view document) {
    try {
        return YAML::Load(std::string(document));
    } catch (const YAML::Exception& e) {
        throw ParseError(std::string("malformed document: ") + e.what());
    }
}

inline YAML::Node require(const YAML::Node& node, const char* key, const std::string& where) {
    if (!node.IsMap() || !node[key]) throw ParseError(where + ": missing field '" + key + "'");
    return node[key];
}

template <typename T>
T as(const YAML::Node& node, const std::string& where) {
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        throw ParseError(where + ": wrong value type");
    }
}

template <typename T>
T get(const YAML::Node& node, const char* key, const std::string& where) {
    return as<T>(require(node, key, where), where + "." + key);
}

template <typename T>
T get_or(const YAML::Node& node, const char* key, T fallback, const std::string& where) {
    if (!node.IsMap() || !node[key]) return fallback;
    return as<T>(node[key], where + "." + key);
}

inline std::vector<std::string> string_list(const YAML::Node& node, const std::string& where) {
    std::vector<std::string> out;
    if (!node) return out;
    if (!node.IsSequence()) throw ParseError(where + ": expected a list");
    for (const auto& item : node) out.push_back(as<std::string>(item, where));
    return out;
}

}  // namespace arrdiag::detail
