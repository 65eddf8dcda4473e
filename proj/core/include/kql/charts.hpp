#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kql {

struct ChartSeries {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> band;  // half-width drawn as a shaded region; may be empty
  std::string label;
  std::string color = "#1a6fb5";
};

// Self-contained SVG line chart (no external plotting process). NaN y
// values break the line; series with a band get mean +- band shading.
void write_line_chart_svg(std::ostream& os, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<ChartSeries>& series);

}  // namespace kql
