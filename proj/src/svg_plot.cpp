#include "thermloc/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace thermloc {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// round tick spacing to 1/2/5 * 10^k
double nice_step(double range, int target_ticks) {
    if (range <= 0.0) return 1.0;
    const double raw = range / target_ticks;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double norm = raw / mag;
    double step = 10.0;
    if (norm <= 1.0)
        step = 1.0;
    else if (norm <= 2.0)
        step = 2.0;
    else if (norm <= 5.0)
        step = 5.0;
    return step * mag;
}

}  // namespace

std::string render_line_plot(const PlotSpec& spec, const std::vector<PlotSeries>& series) {
    const double ml = 70, mr = 20, mt = 40, mb = 50;  // margins
    const double pw = spec.width - ml - mr;
    const double ph = spec.height - mt - mb;

    double x_min = std::numeric_limits<double>::max(), x_max = std::numeric_limits<double>::lowest();
    double y_min = x_min, y_max = x_max;
    for (const auto& s : series) {
        for (const auto& p : s.points) {
            x_min = std::min(x_min, p.x());
            x_max = std::max(x_max, p.x());
            y_min = std::min(y_min, p.y());
            y_max = std::max(y_max, p.y());
        }
    }
    if (x_min > x_max) {
        x_min = y_min = 0.0;
        x_max = y_max = 1.0;
    }
    if (x_max - x_min < 1e-12) {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if (y_max - y_min < 1e-12) {
        y_min -= 0.5;
        y_max += 0.5;
    }
    {
        const double pad_x = 0.03 * (x_max - x_min);
        const double pad_y = 0.03 * (y_max - y_min);
        x_min -= pad_x;
        x_max += pad_x;
        y_min -= pad_y;
        y_max += pad_y;
    }
    if (spec.equal_axes) {
        const double sx = (x_max - x_min) / pw;
        const double sy = (y_max - y_min) / ph;
        const double s = std::max(sx, sy);
        const double cx = 0.5 * (x_min + x_max), cy = 0.5 * (y_min + y_max);
        x_min = cx - 0.5 * s * pw;
        x_max = cx + 0.5 * s * pw;
        y_min = cy - 0.5 * s * ph;
        y_max = cy + 0.5 * s * ph;
    }

    auto map_x = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
    auto map_y = [&](double y) { return mt + (1.0 - (y - y_min) / (y_max - y_min)) * ph; };

    std::string svg;
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" "
                  "width=\"%d\" height=\"%d\" font-family=\"sans-serif\">\n"
                  "<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n",
                  spec.width, spec.height, spec.width, spec.height);
    svg += buf;

    // grid and tick labels
    const double x_step = nice_step(x_max - x_min, 8);
    const double y_step = nice_step(y_max - y_min, 6);
    svg += "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
    for (double x = std::ceil(x_min / x_step) * x_step; x <= x_max + 1e-12; x += x_step) {
        std::snprintf(buf, sizeof(buf), "<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\"/>\n",
                      fmt(map_x(x)).c_str(), fmt(mt).c_str(), fmt(map_x(x)).c_str(),
                      fmt(mt + ph).c_str());
        svg += buf;
    }
    for (double y = std::ceil(y_min / y_step) * y_step; y <= y_max + 1e-12; y += y_step) {
        std::snprintf(buf, sizeof(buf), "<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\"/>\n",
                      fmt(ml).c_str(), fmt(map_y(y)).c_str(), fmt(ml + pw).c_str(),
                      fmt(map_y(y)).c_str());
        svg += buf;
    }
    svg += "</g>\n<g font-size=\"11\" fill=\"#444444\">\n";
    for (double x = std::ceil(x_min / x_step) * x_step; x <= x_max + 1e-12; x += x_step) {
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%s\" y=\"%s\" text-anchor=\"middle\">%s</text>\n",
                      fmt(map_x(x)).c_str(), fmt(mt + ph + 16).c_str(), fmt(x).c_str());
        svg += buf;
    }
    for (double y = std::ceil(y_min / y_step) * y_step; y <= y_max + 1e-12; y += y_step) {
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%s\" y=\"%s\" text-anchor=\"end\">%s</text>\n",
                      fmt(ml - 6).c_str(), fmt(map_y(y) + 4).c_str(), fmt(y).c_str());
        svg += buf;
    }
    svg += "</g>\n";

    // frame
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%s\" y=\"%s\" width=\"%s\" height=\"%s\" fill=\"none\" "
                  "stroke=\"#333333\"/>\n",
                  fmt(ml).c_str(), fmt(mt).c_str(), fmt(pw).c_str(), fmt(ph).c_str());
    svg += buf;

    // series
    for (const auto& s : series) {
        if (s.points.empty()) continue;
        svg += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\" points=\"";
        for (const auto& p : s.points) {
            svg += fmt(map_x(p.x()));
            svg += ",";
            svg += fmt(map_y(p.y()));
            svg += " ";
        }
        svg += "\"/>\n";
    }

    // title, labels, legend
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%s\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">%s</text>\n",
                  fmt(ml + pw / 2).c_str(), spec.title.c_str());
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%s\" y=\"%s\" font-size=\"12\" text-anchor=\"middle\">%s</text>\n",
                  fmt(ml + pw / 2).c_str(), fmt(spec.height - 12).c_str(), spec.x_label.c_str());
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"16\" y=\"%s\" font-size=\"12\" text-anchor=\"middle\" "
                  "transform=\"rotate(-90 16 %s)\">%s</text>\n",
                  fmt(mt + ph / 2).c_str(), fmt(mt + ph / 2).c_str(), spec.y_label.c_str());
    svg += buf;
    double ly = mt + 14;
    for (const auto& s : series) {
        std::snprintf(buf, sizeof(buf),
                      "<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\" stroke=\"%s\" "
                      "stroke-width=\"2\"/><text x=\"%s\" y=\"%s\" font-size=\"12\">%s</text>\n",
                      fmt(ml + 10).c_str(), fmt(ly - 4).c_str(), fmt(ml + 34).c_str(),
                      fmt(ly - 4).c_str(), s.color.c_str(), fmt(ml + 40).c_str(),
                      fmt(ly).c_str(), s.name.c_str());
        svg += buf;
        ly += 16;
    }
    svg += "</svg>\n";
    return svg;
}

void write_line_plot(const std::string& path, const PlotSpec& spec,
                     const std::vector<PlotSeries>& series) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open plot file for writing: " + path);
    f << render_line_plot(spec, series);
}

}  // namespace thermloc
