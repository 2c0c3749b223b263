#include "sbd/problem.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "sbd/errors.hpp"

namespace sbd {

Eigen::MatrixXd read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty file " + path);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("non-numeric cell '" + cell + "' in " + path);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw IoError("ragged row in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("no data rows in " + path);
  Eigen::MatrixXd m(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
  return m;
}

std::string data_path(const std::string& file) {
  if (const char* dir = std::getenv("SBD_DATA_DIR")) return std::string(dir) + "/" + file;
  return std::string(SBD_DATA_DIR) + "/" + file;
}

}  // namespace sbd
