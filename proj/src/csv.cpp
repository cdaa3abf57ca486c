#include "semfx/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "semfx/error.hpp"

namespace semfx {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// One record; quoted fields may contain commas and doubled quotes but not newlines.
std::vector<std::string> split_record(const std::string& line, const std::string& where) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw Error(ErrorKind::parse, where + ": unterminated quoted field");
  out.push_back(trim(cur));
  return out;
}

bool parse_double(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

int NumericTable::index(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(ErrorKind::config, "column '" + name + "' not found");
  return static_cast<int>(it - header.begin());
}

const std::vector<double>& NumericTable::column(const std::string& name) const {
  return columns[static_cast<std::size_t>(index(name))];
}

NumericTable read_csv(std::istream& in, const std::string& source) {
  NumericTable t;
  std::string line;
  long lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    auto fields = split_record(line, where);
    if (!have_header) {
      for (const auto& f : fields) {
        if (f.empty()) throw Error(ErrorKind::parse, where + ": empty column name in header");
        if (std::find(t.header.begin(), t.header.end(), f) != t.header.end()) {
          throw Error(ErrorKind::parse, where + ": duplicate column name '" + f + "'");
        }
        t.header.push_back(f);
      }
      t.columns.resize(t.header.size());
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size()) {
      std::ostringstream msg;
      msg << where << ": expected " << t.header.size() << " fields, found " << fields.size();
      throw Error(ErrorKind::parse, msg.str());
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      double v = 0.0;
      if (!parse_double(fields[j], v)) {
        std::ostringstream msg;
        msg << source << ": row " << lineno << ", column " << (j + 1) << " ('" << t.header[j]
            << "'): non-numeric value '" << fields[j] << "'";
        throw Error(ErrorKind::parse, msg.str());
      }
      t.columns[j].push_back(v);
    }
  }
  if (!have_header) throw Error(ErrorKind::parse, source + ": empty input, header row required");
  if (t.rows() == 0) throw Error(ErrorKind::parse, source + ": no data rows");
  return t;
}

NumericTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::parse, "cannot open '" + path + "'");
  return read_csv(in, path);
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace semfx
