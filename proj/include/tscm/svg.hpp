#pragma once

#include <string>
#include <vector>

namespace tscm::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Self-contained SVG line chart with axes, ticks and a legend. Non-finite
/// points are dropped.
std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series, int width = 640, int height = 400);

}  // namespace tscm::svg
