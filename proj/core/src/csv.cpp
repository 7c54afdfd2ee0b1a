#include "plume/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "plume/errors.hpp"

namespace plume::csv {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

std::vector<Row> read_file(const std::filesystem::path& path,
                           const std::string& expected_header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path.string());

  std::vector<Row> rows;
  std::string line;
  int line_number = 0;
  bool header_seen = false;
  const std::size_t expected_fields = split_line(expected_header).size();
  while (std::getline(in, line)) {
    ++line_number;
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    if (!header_seen) {
      if (stripped != expected_header) {
        throw ConfigError(path.string() + ":" + std::to_string(line_number) +
                          ": expected header '" + expected_header + "', got '" +
                          stripped + "'");
      }
      header_seen = true;
      continue;
    }
    Row row;
    row.line_number = line_number;
    row.fields = split_line(stripped);
    for (auto& f : row.fields) f = trim(f);
    if (row.fields.size() != expected_fields) {
      throw ConfigError(path.string() + ":" + std::to_string(line_number) +
                        ": expected " + std::to_string(expected_fields) +
                        " fields, got " + std::to_string(row.fields.size()));
    }
    rows.push_back(std::move(row));
  }
  if (!header_seen) {
    throw ConfigError(path.string() + ": file is empty, expected header '" +
                      expected_header + "'");
  }
  return rows;
}

double parse_double(const Row& row, std::size_t field,
                    const std::filesystem::path& path) {
  const std::string& s = row.fields.at(field);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw ConfigError(path.string() + ":" + std::to_string(row.line_number) +
                      ": not a number: '" + s + "'");
  }
  return v;
}

int parse_int(const Row& row, std::size_t field,
              const std::filesystem::path& path) {
  const std::string& s = row.fields.at(field);
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') {
    throw ConfigError(path.string() + ":" + std::to_string(row.line_number) +
                      ": not an integer: '" + s + "'");
  }
  return static_cast<int>(v);
}

std::string format_double(double value) {
  // Try increasing precision until the text round-trips exactly; keeps
  // output files compact while preserving bit-exact reload.
  char buf[40];
  for (int prec = 9; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, value);
    if (std::strtod(buf, nullptr) == value) break;
  }
  return buf;
}

Writer::Writer(const std::filesystem::path& path, const std::string& header)
    : out_(path), path_(path) {
  if (!out_) throw ConfigError("cannot write file: " + path.string());
  out_ << header << "\n";
}

void Writer::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << fields[i];
  }
  out_ << "\n";
}

Writer::~Writer() { out_.flush(); }

}  // namespace plume::csv
