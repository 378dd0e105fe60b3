#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include "nullrec/error.hpp"

namespace nullrec {

inline constexpr const char* kVersion = "0.1.0";

/// 17 significant digits, so values round-trip exactly.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw Error(ErrorCode::kIoFailure, "cannot write " + path);
    write_row(header);
  }

  void write_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
    if (!out_) throw Error(ErrorCode::kIoFailure, "write failed");
  }

 private:
  std::ofstream out_;
};

}  // namespace nullrec
