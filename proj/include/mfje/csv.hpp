#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <type_traits>

namespace mfje {

// Reals are written with 17 significant digits so values round-trip exactly.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Writes comma-separated fields terminated by LF.
class CsvRow {
 public:
  explicit CsvRow(std::ostream& os) : os_(os) {}
  ~CsvRow() { os_ << '\n'; }
  CsvRow(const CsvRow&) = delete;
  CsvRow& operator=(const CsvRow&) = delete;

  CsvRow& operator<<(double v) { return field(format_real(v)); }
  CsvRow& operator<<(const std::string& s) { return field(s); }
  CsvRow& operator<<(const char* s) { return field(s); }
  template <class Int>
    requires std::is_integral_v<Int>
  CsvRow& operator<<(Int v) {
    return field(std::to_string(v));
  }

 private:
  CsvRow& field(const std::string& s) {
    if (!first_) os_ << ',';
    first_ = false;
    os_ << s;
    return *this;
  }
  std::ostream& os_;
  bool first_ = true;
};

}  // namespace mfje
