// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/toml_lite.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "hdff/common.hpp"

namespace hdff::toml {

std::string Value::type_name() const {
  switch (v.index()) {
    case 0: return "boolean";
    case 1: return "integer";
    case 2: return "float";
    case 3: return "string";
    default: return "array";
  }
}

namespace {

bool bare_key_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; }

class Parser {
 public:
  Parser(const std::string& s, std::string origin) : s_(s), origin_(std::move(origin)) {}

  Document run() {
    Document doc;
    doc[""].line = 0;
    std::string table;
    for (;;) {
      skip_ws(true);
      if (pos_ >= s_.size()) break;
      if (s_[pos_] == '[') {
        ++pos_;
        skip_ws(false);
        table = dotted_name(']');
        expect(']');
        if (doc.count(table) && table != "") fail("duplicate table [" + table + "]");
        doc[table].line = line_;
      } else {
        const int key_line = line_;
        const std::string key = dotted_name('=');
        skip_ws(false);
        expect('=');
        skip_ws(false);
        Value v = value();
        v.line = key_line;
        auto& t = doc[table];
        if (t.values.count(key)) fail("duplicate key '" + key + "'");
        t.values.emplace(key, std::move(v));
      }
      end_of_statement();
    }
    return doc;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(origin_ + ":" + std::to_string(line_) + ": " + what);
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  // Skips blanks and comments; crosses newlines only when allowed.
  void skip_ws(bool newlines) {
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == ' ' || c == '\t' || c == '\r') {
        ++pos_;
      } else if (c == '\n' && newlines) {
        ++pos_;
        ++line_;
      } else if (c == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  void end_of_statement() {
    skip_ws(false);
    if (pos_ < s_.size() && s_[pos_] != '\n') fail("unexpected trailing text");
  }

  std::string dotted_name(char terminator) {
    std::string name;
    for (;;) {
      skip_ws(false);
      std::string part;
      if (peek() == '"') {
        part = basic_string();
      } else {
        while (pos_ < s_.size() && bare_key_char(s_[pos_])) part += s_[pos_++];
      }
      if (part.empty()) fail("expected a key name");
      name += part;
      skip_ws(false);
      if (peek() == '.') {
        ++pos_;
        name += '.';
        continue;
      }
      if (peek() != terminator) fail(std::string("expected '") + terminator + "' after '" + name + "'");
      return name;
    }
  }

  Value value() {
    Value out;
    out.line = line_;
    const char c = peek();
    if (c == '"') {
      out.v = basic_string();
    } else if (c == '\'') {
      out.v = literal_string();
    } else if (c == '[') {
      ++pos_;
      Array arr;
      for (;;) {
        skip_ws(true);
        if (peek() == ']') {
          ++pos_;
          break;
        }
        arr.push_back(value());
        skip_ws(true);
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        if (peek() == ']') {
          ++pos_;
          break;
        }
        fail("expected ',' or ']' in array");
      }
      out.v = std::move(arr);
    } else {
      std::size_t end = pos_;
      while (end < s_.size() && !std::isspace(static_cast<unsigned char>(s_[end])) && s_[end] != ',' &&
             s_[end] != ']' && s_[end] != '#')
        ++end;
      const std::string tok = s_.substr(pos_, end - pos_);
      if (tok.empty()) fail("missing value");
      pos_ = end;
      out.v = scalar(tok);
    }
    return out;
  }

  std::string basic_string() {
    ++pos_;
    std::string out;
    for (;;) {
      if (pos_ >= s_.size() || s_[pos_] == '\n') fail("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (pos_ >= s_.size()) fail("unterminated escape");
      switch (const char e = s_[pos_++]) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
    return out;
  }

  std::string literal_string() {
    ++pos_;
    const auto end = s_.find('\'', pos_);
    const auto nl = s_.find('\n', pos_);
    if (end == std::string::npos || (nl != std::string::npos && nl < end)) fail("unterminated literal string");
    std::string out = s_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return out;
  }

  std::variant<bool, std::int64_t, double, std::string, Array> scalar(const std::string& tok) {
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string clean;
    for (char c : tok)
      if (c != '_') clean += c;
    if (clean == "inf" || clean == "+inf") return HUGE_VAL;
    if (clean == "-inf") return -HUGE_VAL;
    const bool is_float = clean.find_first_of(".eE") != std::string::npos;
    const char* b = clean.data() + (!clean.empty() && clean[0] == '+' ? 1 : 0);
    const char* e = clean.data() + clean.size();
    if (!is_float) {
      std::int64_t i = 0;
      auto [p, ec] = std::from_chars(b, e, i);
      if (ec == std::errc() && p == e) return i;
    } else {
      double d = 0;
      auto [p, ec] = std::from_chars(b, e, d);
      if (ec == std::errc() && p == e) return d;
    }
    fail("invalid value '" + tok + "'");
  }

  const std::string& s_;
  std::string origin_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

}  // namespace

Document parse(const std::string& text, const std::string& origin) { return Parser(text, origin).run(); }

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

std::string format_double(double d) {
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  // Shortest round-trip form; always carries a '.' or exponent so it reads
  // back as a float.
  std::string s = fmt::format("{}", d);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

}  // namespace hdff::toml
