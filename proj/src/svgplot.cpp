#include "cugro/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "cugro/blobio.hpp"
#include "cugro/error.hpp"

namespace cugro {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

void write_line_chart_svg(const std::filesystem::path& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series) {
    if (series.empty()) throw Error("plot: no series to draw");
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const PlotSeries& s : series) {
        if (s.points.empty()) throw Error("plot: series '" + s.label + "' has no points");
        for (auto [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (xmax == xmin) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax == ymin) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double pad_y = 0.08 * (ymax - ymin);
    ymin -= pad_y;
    ymax += pad_y;

    const double width = 640, height = 420;
    const double left = 70, right = 20, top = 40, bottom = 50;
    const double pw = width - left - right, ph = height - top - bottom;
    auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
           num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + num(width / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
           "font-family=\"sans-serif\">" + title + "</text>\n";

    // Axes.
    svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(left + pw) +
           "\" y2=\"" + num(top + ph) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" +
           num(top + ph) + "\" stroke=\"black\"/>\n";
    const int ticks = 5;
    for (int i = 0; i <= ticks; ++i) {
        const double fx = xmin + (xmax - xmin) * i / ticks;
        const double fy = ymin + (ymax - ymin) * i / ticks;
        svg += "<line x1=\"" + num(sx(fx)) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(sx(fx)) +
               "\" y2=\"" + num(top + ph + 4) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + num(sx(fx)) + "\" y=\"" + num(top + ph + 18) +
               "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" + num(fx) +
               "</text>\n";
        svg += "<line x1=\"" + num(left - 4) + "\" y1=\"" + num(sy(fy)) + "\" x2=\"" + num(left) +
               "\" y2=\"" + num(sy(fy)) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + num(left - 8) + "\" y=\"" + num(sy(fy) + 4) +
               "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" + num(fy) +
               "</text>\n";
    }
    svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(height - 12) +
           "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" + x_label +
           "</text>\n";
    svg += "<text x=\"16\" y=\"" + num(top + ph / 2) +
           "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" "
           "transform=\"rotate(-90 16 " + num(top + ph / 2) + ")\">" + y_label + "</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
        std::string pts;
        for (auto [x, y] : series[i].points) {
            pts += num(sx(x)) + "," + num(sy(y)) + " ";
        }
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        for (auto [x, y] : series[i].points) {
            svg += "<circle cx=\"" + num(sx(x)) + "\" cy=\"" + num(sy(y)) + "\" r=\"3\" fill=\"" +
                   color + "\"/>\n";
        }
        // Legend entry.
        const double ly = top + 8 + 16 * static_cast<double>(i);
        svg += "<line x1=\"" + num(left + pw - 150) + "\" y1=\"" + num(ly) + "\" x2=\"" +
               num(left + pw - 130) + "\" y2=\"" + num(ly) + "\" stroke=\"" + color +
               "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + num(left + pw - 124) + "\" y=\"" + num(ly + 4) +
               "\" font-size=\"11\" font-family=\"sans-serif\">" + series[i].label + "</text>\n";
    }
    svg += "</svg>\n";
    write_text_file(path, svg);
}

}  // namespace cugro
