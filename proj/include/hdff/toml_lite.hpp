// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

// Reader for the TOML subset used by run configs: [table] / [a.b] headers,
// key = value pairs, basic and literal strings, integers, floats, booleans
// and (possibly multi-line) arrays of those. '#' comments.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace hdff::toml {

struct Value;
using Array = std::vector<Value>;

struct Value {
  std::variant<bool, std::int64_t, double, std::string, Array> v;
  int line = 0;

  bool is_string() const { return std::holds_alternative<std::string>(v); }
  bool is_int() const { return std::holds_alternative<std::int64_t>(v); }
  bool is_float() const { return std::holds_alternative<double>(v); }
  bool is_bool() const { return std::holds_alternative<bool>(v); }
  bool is_array() const { return std::holds_alternative<Array>(v); }
  std::string type_name() const;
};

struct Table {
  int line = 0;
  std::map<std::string, Value> values;
};

// Table name ("" for top-level keys) -> table.
using Document = std::map<std::string, Table>;

// Throws ConfigError("<origin>:<line>: ...") on syntax errors.
Document parse(const std::string& text, const std::string& origin);

std::string quote(const std::string& s);
std::string format_double(double d);

}  // namespace hdff::toml
