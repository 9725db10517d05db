#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lodfm/errors.hpp"

namespace lodfm {

// Minimal static line chart, one polyline per series. Presentation only; the
// numbers of record live in the CSV next to it.
inline void write_svg_chart(const std::filesystem::path& path,
                            const std::string& title,
                            const std::string& x_label,
                            const std::vector<double>& xs,
                            const std::map<std::string, std::vector<double>>& series) {
  const double width = 640, height = 420;
  const double left = 70, right = 20, top = 40, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double y_min = 0.0, y_max = 0.0;
  bool first = true;
  for (const auto& [name, ys] : series) {
    for (double y : ys) {
      if (first) {
        y_min = y_max = y;
        first = false;
      } else {
        y_min = std::min(y_min, y);
        y_max = std::max(y_max, y);
      }
    }
  }
  if (first || xs.empty()) throw DegenerateInputError("nothing to plot");
  if (y_max == y_min) {
    y_max += 0.5;
    y_min -= 0.5;
  }
  const double x_min = xs.front(), x_max = xs.back();
  const double x_span = x_max == x_min ? 1.0 : x_max - x_min;

  auto px = [&](double x) { return left + (x - x_min) / x_span * plot_w; };
  auto py = [&](double y) { return top + (y_max - y) / (y_max - y_min) * plot_h; };
  auto fmt = [](double v) {
    std::ostringstream os;
    os << std::setprecision(4) << v;
    return os.str();
  };

  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
      << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";
  // axes
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\""
      << left + plot_w << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = y_min + (y_max - y_min) * i / 4.0;
    svg << "<text x=\"" << left - 8 << "\" y=\"" << py(y) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(y) << "</text>\n";
    svg << "<line x1=\"" << left << "\" y1=\"" << py(y) << "\" x2=\""
        << left + plot_w << "\" y2=\"" << py(y)
        << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
  }
  for (double x : xs) {
    svg << "<text x=\"" << px(x) << "\" y=\"" << top + plot_h + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(x) << "</text>\n";
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << x_label << "</text>\n";

  std::size_t color = 0;
  double legend_y = top + 4;
  for (const auto& [name, ys] : series) {
    const char* stroke = palette[color % 8];
    std::ostringstream points;
    for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i)
      points << px(xs[i]) << ',' << py(ys[i]) << ' ';
    svg << "<polyline fill=\"none\" stroke=\"" << stroke
        << "\" stroke-width=\"1.8\" points=\"" << points.str() << "\"/>\n";
    for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i)
      svg << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i])
          << "\" r=\"2.5\" fill=\"" << stroke << "\"/>\n";
    svg << "<rect x=\"" << left + plot_w - 130 << "\" y=\"" << legend_y - 8
        << "\" width=\"12\" height=\"3\" fill=\"" << stroke << "\"/>\n";
    svg << "<text x=\"" << left + plot_w - 112 << "\" y=\"" << legend_y - 3
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << name << "</text>\n";
    legend_y += 16;
    ++color;
  }
  svg << "</svg>\n";

  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << svg.str();
}

}  // namespace lodfm
