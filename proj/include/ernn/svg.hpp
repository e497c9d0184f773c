#pragma once

#include <string>
#include <vector>

namespace ernn::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  int width = 640;
  int height = 400;
};

/// Standalone SVG document: frame, five ticks per axis, axis labels, legend,
/// one polyline per series. Non-finite points split a polyline.
std::string render(const LineChart& chart);

}  // namespace ernn::svg
