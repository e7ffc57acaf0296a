#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tritex {

struct ColoredPointCloud {
  std::vector<double> positions;  // N*3
  std::vector<double> colors;     // N*3 in [0,1]

  int64_t count() const { return static_cast<int64_t>(positions.size()) / 3; }

  void check_valid(const char* op) const {
    if (positions.empty() || positions.size() % 3 != 0 || colors.size() != positions.size())
      throw std::invalid_argument(std::string(op) + ": malformed point cloud");
    for (double v : positions)
      if (!std::isfinite(v)) throw std::invalid_argument(std::string(op) + ": non-finite position");
    for (double v : colors)
      if (!std::isfinite(v)) throw std::invalid_argument(std::string(op) + ": non-finite color");
  }
};

}  // namespace tritex
