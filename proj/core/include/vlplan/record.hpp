/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace vlplan {

/// One report cell. The variant keeps integer-valued and real-valued fields
/// distinct so serialized reports round-trip without type drift.
using Value = std::variant<bool, std::int64_t, double, std::string>;

struct Field {
  std::string name;
  Value value;
};

/// An ordered list of named values — one report row, or a parameter set.
/// Field order is meaningful (it drives CSV column order) and names are
/// unique.
struct Record {
  std::vector<Field> fields;

  /// Appends, or overwrites in place if the name already exists.
  Record& set(std::string name, Value value) {
    for (Field& f : fields) {
      if (f.name == name) {
        f.value = std::move(value);
        return *this;
      }
    }
    fields.push_back(Field{std::move(name), std::move(value)});
    return *this;
  }

  const Value* find(const std::string& name) const {
    for (const Field& f : fields)
      if (f.name == name) return &f.value;
    return nullptr;
  }

  bool has(const std::string& name) const { return find(name) != nullptr; }
};

inline bool operator==(const Field& a, const Field& b) {
  return a.name == b.name && a.value == b.value;
}

inline bool operator==(const Record& a, const Record& b) {
  return a.fields == b.fields;
}

}  // namespace vlplan
