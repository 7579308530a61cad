#pragma once

#include <json.hpp>

#include <string>

namespace mbp::cli {

/// Reads the TOML subset used by experiment configs into JSON: tables, dotted
/// keys, arrays of tables, strings, numbers, booleans and (multi-line) arrays.
/// Inline tables and dates are rejected.
nlohmann::json parse_toml(const std::string& text);

/// Inverse of parse_toml for objects whose leaves are scalars or scalar arrays.
std::string to_toml(const nlohmann::json& doc);

}  // namespace mbp::cli
