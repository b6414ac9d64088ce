#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace earseg {

// Minimal CSV support: comma-separated fields, double-quote quoting with ""
// escapes, one record per line. Enough for the manifest/metrics/log files
// this project emits and consumes; errors carry 1-based line numbers.

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

inline std::string csv_join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ",";
    out += csv_escape(fields[i]);
  }
  return out;
}

inline std::vector<std::string> csv_split(const std::string& line, int line_number,
                                          const std::string& context) {
  std::vector<std::string> fields;
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
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) {
    throw std::runtime_error(context + ": line " + std::to_string(line_number) +
                             ": unterminated quoted field");
  }
  fields.push_back(cur);
  return fields;
}

struct CsvTable {
  struct Row {
    int line = 0;  // 1-based line number in the source file
    std::vector<std::string> fields;
  };
  std::string path;
  std::vector<std::string> header;
  std::vector<Row> rows;
};

// Loads a CSV with a mandatory header row; blank lines are skipped. Every
// data row must have exactly as many fields as the header.
inline CsvTable load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  CsvTable table;
  table.path = path;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = csv_split(line, line_number, path);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw std::runtime_error(path + ": line " + std::to_string(line_number) + ": expected " +
                               std::to_string(table.header.size()) + " fields, got " +
                               std::to_string(fields.size()));
    }
    table.rows.push_back({line_number, std::move(fields)});
  }
  if (table.header.empty()) {
    throw std::runtime_error(path + ": empty file, expected a CSV header row");
  }
  return table;
}

inline void expect_header(const CsvTable& table, const std::vector<std::string>& expected) {
  if (table.header != expected) {
    std::string want, got;
    for (std::size_t i = 0; i < expected.size(); ++i) want += (i ? "," : "") + expected[i];
    for (std::size_t i = 0; i < table.header.size(); ++i) got += (i ? "," : "") + table.header[i];
    throw std::runtime_error(table.path + ": line 1: expected header '" + want + "', got '" +
                             got + "'");
  }
}

inline double parse_double(const std::string& s, const std::string& path, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(path + ": line " + std::to_string(line) + ": '" + s +
                             "' is not a number");
  }
  if (used != s.size()) {
    throw std::runtime_error(path + ": line " + std::to_string(line) + ": '" + s +
                             "' is not a number");
  }
  return v;
}

inline long parse_long(const std::string& s, const std::string& path, int line) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(s, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(path + ": line " + std::to_string(line) + ": '" + s +
                             "' is not an integer");
  }
  if (used != s.size()) {
    throw std::runtime_error(path + ": line " + std::to_string(line) + ": '" + s +
                             "' is not an integer");
  }
  return v;
}

}  // namespace earseg
