#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace kronmark::cli {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * fraction);
    return buf;
}

std::string scatter_svg(const std::vector<ScatterPoint>& points, const std::string& x_label, const std::string& y_label) {
    const double width = 640, height = 480, margin = 56;
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    for (const auto& p : points) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    const double xr = xmax - xmin > 0 ? xmax - xmin : 1.0, yr = ymax - ymin > 0 ? ymax - ymin : 1.0;
    xmin -= 0.05 * xr;
    xmax += 0.05 * xr;
    ymin -= 0.05 * yr;
    ymax += 0.05 * yr;
    auto sx = [&](double x) { return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin); };
    auto sy = [&](double y) { return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" viewBox=\"0 0 "
       << width << ' ' << height << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    os << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << width - 2 * margin << "\" height=\""
       << height - 2 * margin << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << num(sx(0)) << "\" y1=\"" << margin << "\" x2=\"" << num(sx(0)) << "\" y2=\"" << height - margin
       << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
    os << "<line x1=\"" << margin << "\" y1=\"" << num(sy(0)) << "\" x2=\"" << width - margin << "\" y2=\"" << num(sy(0))
       << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
    for (const auto& p : points) {
        os << "<circle cx=\"" << num(sx(p.x)) << "\" cy=\"" << num(sy(p.y)) << "\" r=\"2.5\" fill=\"steelblue\"/>\n";
    }
    os << "<text x=\"" << width / 2 << "\" y=\"" << height - 16 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       << "font-size=\"14\">" << escape(x_label) << "</text>\n";
    os << "<text x=\"18\" y=\"" << height / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" "
       << "transform=\"rotate(-90 18 " << height / 2 << ")\">" << escape(y_label) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace kronmark::cli
