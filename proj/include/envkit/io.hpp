#pragma once

#include "envkit/ext_real.hpp"
#include "envkit/linalg.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace envkit {

inline constexpr const char* kToolVersion = "0.1.0";

/// Parses "a,b;c,d" (rows separated by ';', entries by ','). Throws ConfigError.
Mat parse_matrix_literal(const std::string& text);

/// Inverse of parse_matrix_literal, entries printed with 17 significant digits.
std::string format_matrix_literal(const Mat& F);

/// Accepts a matrix literal string or a nested array of rows.
Mat matrix_from_json(const nlohmann::json& j);
/// Nested array of rows.
nlohmann::json matrix_to_json(const Mat& F);

nlohmann::json vector_to_json(const Vec& v);
Vec vector_from_json(const nlohmann::json& j);

/// Finite values as numbers, +inf as the string "inf".
nlohmann::json ext_to_json(ExtReal x);
ExtReal ext_from_json(const nlohmann::json& j);

/// Shortest round-trip-safe decimal text for a double ("inf" for +inf).
std::string format_double(double x);

/// 64-bit FNV-1a hash rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& data);

/// Adds {tool_version, config_digest, seed} to a JSON artifact.
void stamp_artifact(nlohmann::json& artifact, const nlohmann::json& config, std::uint64_t seed);

/// Reads a whole file; throws ConfigError if it cannot be opened.
std::string read_text_file(const std::string& path);
nlohmann::json read_json_file(const std::string& path);

/// Writes a whole file; throws ConfigError if it cannot be opened.
void write_text_file(const std::string& path, const std::string& text);

} // namespace envkit
