#pragma once

#include <string>
#include <vector>

namespace inspectsim {

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Static SVG line chart (no external viewer dependencies); written
/// atomically.
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<SvgSeries>& series, int width = 860, int height = 420);

}  // namespace inspectsim
