#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace gradmarket::cli {

namespace {

// Fixed canvas; generous left margin for y tick labels.
constexpr double kWidth = 720.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 24.0;
constexpr double kTop = 36.0;
constexpr double kBottom = 56.0;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;

  void expand(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double span() const { return hi - lo; }
};

// Map data to pixel space (y grows downward in SVG).
double px(double x, const Range& r) { return kLeft + (x - r.lo) / r.span() * kPlotW; }
double py(double y, const Range& r) { return kTop + (r.hi - y) / r.span() * kPlotH; }

void open_document(std::ostringstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-size=\"15\">" << escape(title) << "</text>\n";
}

void draw_axes(std::ostringstream& out, const std::string& x_label,
               const std::string& y_label) {
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + kPlotH << "\" x2=\""
      << kLeft + kPlotW << "\" y2=\"" << kTop + kPlotH
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kTop + kPlotH << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kLeft + kPlotW / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << kTop + kPlotH / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << kTop + kPlotH / 2
      << ")\">" << escape(y_label) << "</text>\n";
}

void draw_y_ticks(std::ostringstream& out, const Range& ry) {
  for (int k = 0; k <= 4; ++k) {
    const double v = ry.lo + ry.span() * k / 4.0;
    const double y = py(v, ry);
    out << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << y << "\" x2=\"" << kLeft
        << "\" y2=\"" << y << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << kLeft << "\" y1=\"" << y << "\" x2=\"" << kLeft + kPlotW
        << "\" y2=\"" << y << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << kLeft - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
}

void draw_legend(std::ostringstream& out, const std::vector<std::string>& names) {
  double y = kTop + 6;
  for (std::size_t s = 0; s < names.size(); ++s) {
    const char* color = kPalette[s % kPaletteSize];
    out << "<rect x=\"" << kLeft + kPlotW - 150 << "\" y=\"" << y - 9
        << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << kLeft + kPlotW - 136 << "\" y=\"" << y << "\">"
        << escape(names[s]) << "</text>\n";
    y += 16;
  }
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<Series>& series,
                       const std::optional<TickLabels>& x_ticks) {
  Range rx{1e300, -1e300};
  Range ry{0.0, -1e300};  // y axis anchored at 0 unless data dips below
  bool any = false;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      rx.expand(x);
      ry.expand(y);
      any = true;
    }
  }
  if (!any) {
    rx = {0.0, 1.0};
    ry = {0.0, 1.0};
  }
  if (rx.span() <= 0.0) rx = {rx.lo - 0.5, rx.hi + 0.5};
  if (ry.span() <= 0.0) ry = {ry.lo - 0.5, ry.hi + 0.5};
  ry.hi += ry.span() * 0.05;

  std::ostringstream out;
  open_document(out, title);
  draw_y_ticks(out, ry);
  draw_axes(out, x_label, y_label);

  if (x_ticks) {
    for (const auto& [x, label] : *x_ticks) {
      const double xx = px(x, rx);
      out << "<line x1=\"" << xx << "\" y1=\"" << kTop + kPlotH << "\" x2=\"" << xx
          << "\" y2=\"" << kTop + kPlotH + 4 << "\" stroke=\"black\"/>\n";
      out << "<text x=\"" << xx << "\" y=\"" << kTop + kPlotH + 18
          << "\" text-anchor=\"middle\">" << escape(label) << "</text>\n";
    }
  } else {
    for (int k = 0; k <= 4; ++k) {
      const double v = rx.lo + rx.span() * k / 4.0;
      const double xx = px(v, rx);
      out << "<line x1=\"" << xx << "\" y1=\"" << kTop + kPlotH << "\" x2=\"" << xx
          << "\" y2=\"" << kTop + kPlotH + 4 << "\" stroke=\"black\"/>\n";
      out << "<text x=\"" << xx << "\" y=\"" << kTop + kPlotH + 18
          << "\" text-anchor=\"middle\">" << num(v) << "</text>\n";
    }
  }

  std::vector<std::string> names;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % kPaletteSize];
    names.push_back(series[s].name);
    if (series[s].points.empty()) continue;
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" "
        << "points=\"";
    for (const auto& [x, y] : series[s].points) {
      out << num(px(x, rx)) << ',' << num(py(y, ry)) << ' ';
    }
    out << "\"/>\n";
    for (const auto& [x, y] : series[s].points) {
      out << "<circle cx=\"" << num(px(x, rx)) << "\" cy=\"" << num(py(y, ry))
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
  }
  draw_legend(out, names);
  out << "</svg>\n";
  return out.str();
}

std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<std::string>& series_names,
                      const std::vector<BarGroup>& groups, bool stacked) {
  Range ry{0.0, -1e300};
  for (const auto& g : groups) {
    double stack = 0.0;
    for (const auto& v : g.values) {
      if (!v) continue;
      if (stacked) {
        stack += *v;
      } else {
        ry.expand(*v);
      }
    }
    if (stacked) ry.expand(stack);
  }
  if (ry.hi <= ry.lo) ry = {0.0, 1.0};
  ry.hi += ry.span() * 0.05;

  std::ostringstream out;
  open_document(out, title);
  draw_y_ticks(out, ry);
  draw_axes(out, "", y_label);

  const std::size_t n_groups = std::max<std::size_t>(groups.size(), 1);
  const std::size_t n_series = std::max<std::size_t>(series_names.size(), 1);
  const double slot = kPlotW / static_cast<double>(n_groups);
  const double band = slot * 0.8;
  const double bar = stacked ? band : band / static_cast<double>(n_series);

  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double x0 = kLeft + slot * static_cast<double>(g) + (slot - band) / 2.0;
    double stack_base = 0.0;
    for (std::size_t s = 0; s < groups[g].values.size() && s < n_series; ++s) {
      if (!groups[g].values[s]) continue;
      const double v = *groups[g].values[s];
      const char* color = kPalette[s % kPaletteSize];
      double x = x0, y_lo = 0.0, y_hi = v;
      if (stacked) {
        y_lo = stack_base;
        y_hi = stack_base + v;
        stack_base = y_hi;
      } else {
        x = x0 + bar * static_cast<double>(s);
      }
      const double top = py(y_hi, ry);
      const double bottom = py(y_lo, ry);
      out << "<rect x=\"" << num(x) << "\" y=\"" << num(top) << "\" width=\""
          << num(bar) << "\" height=\"" << num(std::max(0.0, bottom - top))
          << "\" fill=\"" << color << "\"/>\n";
    }
    out << "<text x=\"" << num(x0 + band / 2.0) << "\" y=\"" << kTop + kPlotH + 18
        << "\" text-anchor=\"middle\">" << escape(groups[g].label) << "</text>\n";
  }
  draw_legend(out, series_names);
  out << "</svg>\n";
  return out.str();
}

}  // namespace gradmarket::cli
