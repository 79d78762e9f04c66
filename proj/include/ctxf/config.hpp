#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace ctxf {

/// Parses the TOML subset used by the config files into a JSON object:
/// comments, [table] / [a.b] headers, bare or quoted (dotted) keys, basic and
/// literal strings, integers, floats, booleans and arrays (which may span
/// lines). Throws ConfigError with the line number on anything else.
nlohmann::json parse_toml(const std::string& text);
nlohmann::json load_toml(const std::filesystem::path& path);

}  // namespace ctxf
