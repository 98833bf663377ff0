#pragma once

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace sednoise::svg {

struct Series {
    std::string name;
    std::vector<double> x, y;
};

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

/// Line plot with axes, min/max tick labels and a legend. Output is deterministic for given input.
inline std::string line_plot(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                             const std::string& y_label, double width = 640, double height = 400) {
    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    const double left = 60, right = 160, top = 40, bottom = 50;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    bool first = true;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (first) {
                x0 = x1 = s.x[i];
                y0 = y1 = s.y[i];
                first = false;
            }
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\"" << fmt(height)
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << fmt(width / 2) << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
    out << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top + ph) << "\" x2=\"" << fmt(left + pw) << "\" y2=\""
        << fmt(top + ph) << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(left) << "\" y2=\"" << fmt(top + ph)
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << fmt(left) << "\" y=\"" << fmt(top + ph + 16) << "\" text-anchor=\"middle\">" << fmt(x0) << "</text>\n";
    out << "<text x=\"" << fmt(left + pw) << "\" y=\"" << fmt(top + ph + 16) << "\" text-anchor=\"middle\">" << fmt(x1)
        << "</text>\n";
    out << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(top + ph) << "\" text-anchor=\"end\">" << fmt(y0) << "</text>\n";
    out << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(top + 4) << "\" text-anchor=\"end\">" << fmt(y1) << "</text>\n";
    out << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(height - 12) << "\" text-anchor=\"middle\">" << x_label
        << "</text>\n";
    out << "<text x=\"14\" y=\"" << fmt(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
        << fmt(top + ph / 2) << ")\">" << y_label << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* colour = palette[k % 10];
        out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
            out << (i ? " " : "") << fmt(px(s.x[i])) << "," << fmt(py(s.y[i]));
        out << "\"/>\n";
        const double ly = top + 14 * static_cast<double>(k);
        out << "<line x1=\"" << fmt(left + pw + 10) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(left + pw + 30)
            << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << fmt(left + pw + 34) << "\" y=\"" << fmt(ly + 4) << "\">" << s.name << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace sednoise::svg
