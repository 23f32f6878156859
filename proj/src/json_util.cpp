// SPDX-License-Identifier: Apache-2.0
#include "teenas/json_util.hpp"

#include <algorithm>

#include "teenas/digest.hpp"

namespace teenas::json_util {

void check_keys(const json& doc, std::initializer_list<std::string_view> allowed, std::string_view context) {
  if (!doc.is_object()) throw ParseError(std::string(context) + ": expected an object");
  for (const auto& [key, value] : doc.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ParseError(std::string(context) + ": unknown field '" + key + "'");
    }
  }
}

void check_schema(const json& doc, std::string_view schema, int version) {
  const auto name = require<std::string>(doc, "schema", schema);
  if (name != schema) {
    throw ParseError("expected schema '" + std::string(schema) + "', found '" + name + "'");
  }
  const int found = require<int>(doc, "version", schema);
  if (found != version) {
    throw ParseError(std::string(schema) + ": unsupported version " + std::to_string(found));
  }
}

json schema_header(std::string_view schema, int version) {
  return json{{"schema", schema}, {"version", version}};
}

json parse(std::string_view text, std::string_view source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(source) + ": " + e.what());
  }
}

json parse_file(const std::string& path) {
  return parse(read_text_file(path), path);
}

}  // namespace teenas::json_util
