#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace cugro {

struct PlotSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;  // (x, y)
};

/// Self-contained SVG line chart: one polyline per series, axis ticks, and
/// a legend labeled from the series names.
void write_line_chart_svg(const std::filesystem::path& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series);

}  // namespace cugro
