#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lpn {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
double parse_double(const std::string& text);

/// Comma-separated table with a header row. Cells are unquoted; fields must
/// not contain commas or newlines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column_index(const std::string& name) const;
  std::vector<double> numeric_column(const std::string& name) const;
  void add_row(std::vector<std::string> cells);
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

/// Reads a numeric CSV (optional non-numeric header line) and returns one
/// sample per column.
Eigen::MatrixXd read_samples_csv(const std::filesystem::path& path);

}  // namespace lpn
