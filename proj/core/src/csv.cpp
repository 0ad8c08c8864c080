#include "spikedet/csv.hpp"

#include <cstdio>
#include <stdexcept>

namespace spikedet {

std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : f_(path), columns_(header.size()) {
  if (!f_) throw std::runtime_error("CsvWriter: cannot open '" + path + "'");
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_)
    throw std::runtime_error("CsvWriter: expected " + std::to_string(columns_) + " cells, got " +
                             std::to_string(cells.size()));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) f_ << ',';
    f_ << cells[i];
  }
  f_ << '\n';
}

} // namespace spikedet
