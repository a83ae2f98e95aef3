#pragma once

#include <array>
#include <string>
#include <vector>

namespace dial::svg {

struct ScatterGroup {
  std::string name;
  std::string color;
  std::vector<std::array<double, 2>> points;
};

// One polyline with optional symmetric error bars per point.
struct LineSeries {
  std::string name;
  std::string color;
  std::vector<std::array<double, 2>> points;  // sorted by x by the caller
  std::vector<double> yerr;                   // empty or one per point
};

void write_scatter(const std::string& path, const std::string& title,
                   const std::vector<ScatterGroup>& groups);

void write_lines(const std::string& path, const std::string& title,
                 const std::string& x_label, const std::string& y_label,
                 const std::vector<LineSeries>& series);

}  // namespace dial::svg
