#include "dial/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "dial/format.hpp"

namespace dial::svg {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 56.0;

struct Box {
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -std::numeric_limits<double>::infinity();
  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -std::numeric_limits<double>::infinity();

  void include(double x, double y) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }

  void pad() {
    if (!(xmax > xmin)) {
      xmin -= 1.0;
      xmax += 1.0;
    }
    if (!(ymax > ymin)) {
      ymin -= 1.0;
      ymax += 1.0;
    }
    const double dx = 0.05 * (xmax - xmin), dy = 0.05 * (ymax - ymin);
    xmin -= dx;
    xmax += dx;
    ymin -= dy;
    ymax += dy;
  }

  double sx(double x) const {
    return kMargin + (x - xmin) / (xmax - xmin) * (kWidth - 2 * kMargin);
  }
  double sy(double y) const {
    return kHeight - kMargin -
           (y - ymin) / (ymax - ymin) * (kHeight - 2 * kMargin);
  }
};

std::ofstream open_svg(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
    << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
    << kHeight << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return f;
}

void draw_frame(std::ofstream& f, const std::string& title,
                const std::string& x_label, const std::string& y_label,
                const Box& box) {
  f << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\""
    << kWidth - 2 * kMargin << "\" height=\"" << kHeight - 2 * kMargin
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  f << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
    << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  if (!x_label.empty()) {
    f << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"12\">" << x_label << "</text>\n";
  }
  if (!y_label.empty()) {
    f << "<text x=\"16\" y=\"" << kHeight / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"12\" transform=\"rotate(-90 16 " << kHeight / 2 << ")\">"
      << y_label << "</text>\n";
  }
  // Corner tick labels keep the plot readable without a full axis engine.
  f << "<text x=\"" << kMargin << "\" y=\"" << kHeight - kMargin + 16
    << "\" font-family=\"sans-serif\" font-size=\"10\">" << fmt_double(box.xmin)
    << "</text>\n";
  f << "<text x=\"" << kWidth - kMargin << "\" y=\"" << kHeight - kMargin + 16
    << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
    << fmt_double(box.xmax) << "</text>\n";
  f << "<text x=\"" << kMargin - 4 << "\" y=\"" << kHeight - kMargin
    << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
    << fmt_double(box.ymin) << "</text>\n";
  f << "<text x=\"" << kMargin - 4 << "\" y=\"" << kMargin + 4
    << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
    << fmt_double(box.ymax) << "</text>\n";
}

}  // namespace

void write_scatter(const std::string& path, const std::string& title,
                   const std::vector<ScatterGroup>& groups) {
  Box box;
  for (const auto& g : groups) {
    for (const auto& p : g.points) box.include(p[0], p[1]);
  }
  box.pad();
  auto f = open_svg(path);
  draw_frame(f, title, "", "", box);
  double legend_y = kMargin + 14;
  for (const auto& g : groups) {
    for (const auto& p : g.points) {
      f << "<circle cx=\"" << box.sx(p[0]) << "\" cy=\"" << box.sy(p[1])
        << "\" r=\"2.5\" fill=\"" << g.color << "\" fill-opacity=\"0.7\"/>\n";
    }
    f << "<circle cx=\"" << kWidth - kMargin - 120 << "\" cy=\""
      << legend_y - 4 << "\" r=\"4\" fill=\"" << g.color << "\"/>\n";
    f << "<text x=\"" << kWidth - kMargin - 110 << "\" y=\"" << legend_y
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << g.name
      << "</text>\n";
    legend_y += 16;
  }
  f << "</svg>\n";
}

void write_lines(const std::string& path, const std::string& title,
                 const std::string& x_label, const std::string& y_label,
                 const std::vector<LineSeries>& series) {
  Box box;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      const double e = i < s.yerr.size() ? s.yerr[i] : 0.0;
      box.include(s.points[i][0], s.points[i][1] - e);
      box.include(s.points[i][0], s.points[i][1] + e);
    }
  }
  box.pad();
  auto f = open_svg(path);
  draw_frame(f, title, x_label, y_label, box);
  double legend_y = kMargin + 14;
  for (const auto& s : series) {
    f << "<polyline fill=\"none\" stroke=\"" << s.color
      << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : s.points) {
      f << box.sx(p[0]) << "," << box.sy(p[1]) << " ";
    }
    f << "\"/>\n";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      const double x = box.sx(s.points[i][0]);
      f << "<circle cx=\"" << x << "\" cy=\"" << box.sy(s.points[i][1])
        << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
      if (i < s.yerr.size() && s.yerr[i] > 0.0) {
        const double y0 = box.sy(s.points[i][1] - s.yerr[i]);
        const double y1 = box.sy(s.points[i][1] + s.yerr[i]);
        f << "<line x1=\"" << x << "\" y1=\"" << y0 << "\" x2=\"" << x
          << "\" y2=\"" << y1 << "\" stroke=\"" << s.color
          << "\" stroke-width=\"1\"/>\n";
      }
    }
    f << "<text x=\"" << kWidth - kMargin - 110 << "\" y=\"" << legend_y
      << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << s.color
      << "\">" << s.name << "</text>\n";
    legend_y += 16;
  }
  f << "</svg>\n";
}

}  // namespace dial::svg
