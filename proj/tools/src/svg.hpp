#pragma once

#include <string>
#include <vector>

namespace kronmark::cli {

struct ScatterPoint {
    double x = 0.0;
    double y = 0.0;
};

// Self-contained SVG scatter plot with axes through the origin.
std::string scatter_svg(const std::vector<ScatterPoint>& points, const std::string& x_label, const std::string& y_label);

// 0.9163 -> "91.6%"
std::string format_percent(double fraction);

}  // namespace kronmark::cli
