#pragma once

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

namespace homoscale {

// Shortest form for integers, 17 significant digits otherwise.
std::string format_double(double v);

// CSV with a fixed header; every float written with 17 significant digits.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  void row(const std::vector<double>& values);
  void row_mixed(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
  std::size_t cols_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable read_csv(const std::string& path);

nlohmann::json read_json_file(const std::string& path);
// Pretty JSON with stable key order.
void write_json_file(const std::string& path, const nlohmann::json& j);

void ensure_directory(const std::string& path);

}  // namespace homoscale
