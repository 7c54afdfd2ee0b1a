#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace plume::csv {

struct Row {
  int line_number = 0;  // 1-based line in the source file
  std::vector<std::string> fields;
};

/// Reads a CSV file and checks the header line verbatim. Parse errors carry
/// the file name and line number. Empty lines are skipped.
std::vector<Row> read_file(const std::filesystem::path& path,
                           const std::string& expected_header);

double parse_double(const Row& row, std::size_t field,
                    const std::filesystem::path& path);
int parse_int(const Row& row, std::size_t field,
              const std::filesystem::path& path);

/// Shortest decimal representation that round-trips a double (%.17g pruned).
std::string format_double(double value);

class Writer {
 public:
  Writer(const std::filesystem::path& path, const std::string& header);
  void row(const std::vector<std::string>& fields);
  ~Writer();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

}  // namespace plume::csv
