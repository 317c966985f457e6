#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "arrdiag/system_config.hpp"

namespace arrdiag::testing {

inline std::filesystem::path source_dir() { return ARRDIAG_SOURCE_DIR; }

inline const SystemConfig& default_config() {
    static const SystemConfig cfg = load_system_config_file(source_dir() / "config" / "metl_purification.yaml");
    return cfg;
}

inline std::shared_ptr<const DependencyGraph> default_graph() { return default_config().graph; }

inline std::string default_yaml() { return read_text_file(source_dir() / "config" / "metl_purification.yaml"); }

/// Replaces the first occurrence of `from` in the default config text.
inline std::string patched_yaml(const std::string& from, const std::string& to) {
    std::string text = default_yaml();
    const auto pos = text.find(from);
    if (pos == std::string::npos) throw std::logic_error("patch anchor not found: " + from);
    return text.replace(pos, from.size(), to);
}

inline std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "arrdiag-tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace arrdiag::testing
