#pragma once

#include <string>
#include <vector>

#include "thermloc/geometry.hpp"

namespace thermloc {

struct PlotSeries {
    std::string name;
    std::string color = "#1f77b4";
    std::vector<Vec2> points;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    int width = 860;
    int height = 520;
    bool equal_axes = false;  // same scale on x and y (trajectory top views)
};

// Self-contained SVG line plot: axes, ticks, legend, one polyline per series.
std::string render_line_plot(const PlotSpec& spec, const std::vector<PlotSeries>& series);
void write_line_plot(const std::string& path, const PlotSpec& spec,
                     const std::vector<PlotSeries>& series);

}  // namespace thermloc
