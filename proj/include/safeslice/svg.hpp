#pragma once

// Minimal deterministic SVG line charts.

#include <filesystem>
#include <string>
#include <vector>

namespace safeslice {

struct Series {
  std::string label;
  std::vector<double> values;  // x is the index
};

struct ChartSpec {
  std::string title;
  std::string x_label = "window";
  std::string y_label;
  int width = 760;
  int height = 440;
  std::size_t max_points = 800;  // per series; longer series are strided
};

/// Up to `count` round tick values covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int count = 6);

std::string render_line_chart(const ChartSpec& spec, const std::vector<Series>& series);
void write_line_chart(const std::filesystem::path& path, const ChartSpec& spec, const std::vector<Series>& series);

}  // namespace safeslice
