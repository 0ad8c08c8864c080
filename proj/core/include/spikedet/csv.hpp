#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace spikedet {

// Formats a double with up to 9 significant digits, locale-independent.
std::string csv_num(double v);

// Minimal CSV writer with a fixed header; numbers are formatted via csv_num
// so identical values always serialize to identical bytes.
class CsvWriter {
public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);

  void row(const std::vector<std::string>& cells);

private:
  std::ofstream f_;
  std::size_t columns_;
};

} // namespace spikedet
