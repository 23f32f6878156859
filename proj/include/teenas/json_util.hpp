// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <initializer_list>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>

#include "teenas/error.hpp"

namespace teenas::json_util {

using nlohmann::json;

/// Rejects keys outside `allowed`; `context` prefixes the error.
void check_keys(const json& doc, std::initializer_list<std::string_view> allowed, std::string_view context);

/// Verifies the "schema"/"version" header of a top-level document.
void check_schema(const json& doc, std::string_view schema, int version);

json schema_header(std::string_view schema, int version);

template <typename T>
T require(const json& doc, std::string_view key, std::string_view context) {
  const auto it = doc.find(key);
  if (it == doc.end()) throw ParseError(std::string(context) + ": missing field '" + std::string(key) + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string(context) + ": field '" + std::string(key) + "': " + e.what());
  }
}

template <typename T>
T optional(const json& doc, std::string_view key, T fallback, std::string_view context) {
  if (!doc.contains(key)) return fallback;
  return require<T>(doc, key, context);
}

/// Parses text, converting nlohmann's errors (which carry line/column) to ParseError.
json parse(std::string_view text, std::string_view source);
json parse_file(const std::string& path);

}  // namespace teenas::json_util
