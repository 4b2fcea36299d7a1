#include "mfje/config.hpp"

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "mfje/error.hpp"

namespace mfje {

namespace {

using nlohmann::json;

class TomlReader {
 public:
  explicit TomlReader(std::string_view s) : s_(s) {}

  json parse() {
    json root = json::object();
    json* table = &root;
    for (;;) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        table = &open_table(root);
      } else {
        read_pair(*table);
      }
      end_of_line();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("line " + std::to_string(line_) + ": " + what);
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }
  char get() {
    const char c = s_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }

  void skip_space() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }
  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') ++pos_;
  }
  void skip_blank_lines() {
    for (;;) {
      skip_space();
      skip_comment();
      if (peek() == '\r') ++pos_;
      if (peek() == '\n') {
        get();
        continue;
      }
      return;
    }
  }
  // Whitespace, comments and newlines inside arrays.
  void skip_all() {
    for (;;) {
      skip_space();
      skip_comment();
      if (peek() == '\r' || peek() == '\n') {
        get();
        continue;
      }
      return;
    }
  }
  void end_of_line() {
    skip_space();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (eof()) return;
    if (peek() != '\n') fail("unexpected text after value");
    get();
  }

  std::string read_key_part() {
    skip_space();
    if (peek() == '"') return read_basic_string();
    if (peek() == '\'') return read_literal_string();
    std::string k;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-'))
      k += static_cast<char>(get());
    if (k.empty()) fail("expected a key");
    return k;
  }

  std::vector<std::string> read_key() {
    std::vector<std::string> parts{read_key_part()};
    skip_space();
    while (peek() == '.') {
      ++pos_;
      parts.push_back(read_key_part());
      skip_space();
    }
    return parts;
  }

  json& open_table(json& root) {
    ++pos_;
    if (peek() == '[') fail("arrays of tables are not supported");
    const auto key = read_key();
    skip_space();
    if (peek() != ']') fail("expected ']' after table name");
    ++pos_;
    json* t = &root;
    for (const auto& k : key) {
      if (!t->contains(k)) (*t)[k] = json::object();
      t = &(*t)[k];
      if (!t->is_object()) fail("'" + k + "' is already defined as a value");
    }
    if (defined_tables_.count(key)) fail("table [" + join(key) + "] defined twice");
    defined_tables_.insert(key);
    return *t;
  }

  static std::string join(const std::vector<std::string>& key) {
    std::string s;
    for (std::size_t i = 0; i < key.size(); ++i) s += (i ? "." : "") + key[i];
    return s;
  }

  void read_pair(json& table) {
    const auto key = read_key();
    skip_space();
    if (peek() != '=') fail("expected '=' after key '" + join(key) + "'");
    ++pos_;
    skip_space();
    json* t = &table;
    for (std::size_t i = 0; i + 1 < key.size(); ++i) {
      if (!t->contains(key[i])) (*t)[key[i]] = json::object();
      t = &(*t)[key[i]];
      if (!t->is_object()) fail("'" + key[i] + "' is already defined as a value");
    }
    if (t->contains(key.back())) fail("key '" + join(key) + "' defined twice");
    (*t)[key.back()] = read_value();
  }

  json read_value() {
    const char c = peek();
    if (c == '"') return read_basic_string();
    if (c == '\'') return read_literal_string();
    if (c == '[') return read_array();
    if (c == '{') return read_inline_table();
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return read_number();
  }

  std::string read_basic_string() {
    ++pos_;
    std::string out;
    for (;;) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = get();
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) fail("unterminated string");
      c = get();
      switch (c) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail(std::string("unsupported escape \\") + c);
      }
    }
  }

  std::string read_literal_string() {
    ++pos_;
    std::string out;
    for (;;) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = get();
      if (c == '\'') return out;
      out += c;
    }
  }

  json read_array() {
    ++pos_;
    json arr = json::array();
    for (;;) {
      skip_all();
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      arr.push_back(read_value());
      skip_all();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      fail("expected ',' or ']' in array");
    }
  }

  json read_inline_table() {
    ++pos_;
    json t = json::object();
    skip_space();
    if (peek() == '}') {
      ++pos_;
      return t;
    }
    for (;;) {
      read_pair(t);
      skip_space();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() == '}') {
        ++pos_;
        return t;
      }
      fail("expected ',' or '}' in inline table");
    }
  }

  json read_number() {
    std::string tok;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                      peek() == '.' || peek() == '_'))
      tok += static_cast<char>(get());
    if (tok.empty()) fail("expected a value");
    std::string clean;
    for (char c : tok)
      if (c != '_') clean += c;
    if (clean == "inf" || clean == "+inf") return std::numeric_limits<double>::infinity();
    if (clean == "-inf") return -std::numeric_limits<double>::infinity();
    const bool is_float = clean.find_first_of(".eE") != std::string::npos;
    try {
      std::size_t used = 0;
      if (is_float) {
        const double v = std::stod(clean, &used);
        if (used != clean.size()) fail("malformed number '" + tok + "'");
        return v;
      }
      const long long v = std::stoll(clean, &used, 10);
      if (used != clean.size()) fail("malformed number '" + tok + "'");
      return v;
    } catch (const std::invalid_argument&) {
      fail("malformed value '" + tok + "'");
    } catch (const std::out_of_range&) {
      fail("number out of range '" + tok + "'");
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::set<std::vector<std::string>> defined_tables_;
};

}  // namespace

nlohmann::json parse_toml(std::string_view text) { return TomlReader(text).parse(); }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mfje
