#pragma once

#include <istream>
#include <string>
#include <vector>

namespace semfx {

/// Comma-separated numeric table with a header row. Fields may be quoted.
struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  long rows() const { return columns.empty() ? 0 : static_cast<long>(columns.front().size()); }
  /// Throws Error(config) naming the column when absent.
  int index(const std::string& name) const;
  const std::vector<double>& column(const std::string& name) const;
};

/// Parse errors carry the 1-based line and column of the offending cell.
NumericTable read_csv(std::istream& in, const std::string& source = "<input>");
NumericTable read_csv_file(const std::string& path);

std::vector<std::string> split_list(const std::string& text, char sep = ',');

}  // namespace semfx
