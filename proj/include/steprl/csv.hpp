#pragma once

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "steprl/errors.hpp"

namespace steprl {

// Minimal CSV emitter. Doubles are written with 17 significant digits so
// re-reading a row reproduces the exact binary value.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path, const std::vector<std::string>& header)
      : out_(path) {
    if (!out_) throw usage_error("cannot open CSV output file: " + path);
    write_row_strings(header);
  }

  void row(const std::vector<std::string>& cells) { write_row_strings(cells); }

  static std::string num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  }

  static std::string num(long long v) { return std::to_string(v); }
  static std::string num(int v) { return std::to_string(v); }
  static std::string num(std::size_t v) { return std::to_string(v); }

 private:
  void write_row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  std::ofstream out_;
};

}  // namespace steprl
