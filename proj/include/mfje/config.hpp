#pragma once

// Reader for the subset of TOML used by experiment configs: [tables] and
// [dotted.tables], bare or quoted keys, basic and literal strings, integers,
// floats, booleans, arrays (which may span lines) and inline tables.

#include <string>
#include <string_view>

#include "json.hpp"

namespace mfje {

// Throws ConfigError with the line number on malformed input.
nlohmann::json parse_toml(std::string_view text);

std::string read_text_file(const std::string& path);

// 64-bit FNV-1a, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace mfje
