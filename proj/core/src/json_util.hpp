/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstdio>
#include <initializer_list>
#include <string>

#include <json.hpp>

#include "vlplan/error.hpp"

// Internal JSON helpers shared by the config parsers. Not installed.
namespace vlplan::detail {

// ordered_json preserves insertion order, which keeps emitted reports
// byte-stable instead of alphabetically resorted.
using json = nlohmann::ordered_json;

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline json parse_json(const std::string& text, const char* what) {
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded())
    fail(Errc::ConfigError, std::string(what) + ": malformed JSON");
  return doc;
}

// Rejects documents with keys outside the declared schema, so typos fail
// loudly instead of being silently ignored.
inline void check_keys(const json& obj,
                       std::initializer_list<const char*> required,
                       std::initializer_list<const char*> optional,
                       const char* where) {
  if (!obj.is_object())
    fail(Errc::ConfigError, std::string(where) + ": expected a JSON object");
  for (const char* key : required) {
    if (!obj.contains(key))
      fail(Errc::ConfigError,
           std::string(where) + ": missing required key \"" + key + "\"");
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : required)
      if (it.key() == key) { known = true; break; }
    if (!known)
      for (const char* key : optional)
        if (it.key() == key) { known = true; break; }
    if (!known)
      fail(Errc::ConfigError,
           std::string(where) + ": unknown key \"" + it.key() + "\"");
  }
}

inline void check_version(const json& obj, int expected, const char* where) {
  if (!obj.contains("version"))
    fail(Errc::ConfigError, std::string(where) + ": missing \"version\"");
  const json& v = obj["version"];
  if (!v.is_number_integer() || v.get<int>() != expected)
    fail(Errc::ConfigError, std::string(where) + ": unsupported version (want " +
                                std::to_string(expected) + ")");
}

inline double as_number(const json& v, const char* where) {
  if (!v.is_number())
    fail(Errc::ConfigError, std::string(where) + ": expected a number");
  return v.get<double>();
}

inline std::string as_string(const json& v, const char* where) {
  if (!v.is_string())
    fail(Errc::ConfigError, std::string(where) + ": expected a string");
  return v.get<std::string>();
}

}  // namespace vlplan::detail
