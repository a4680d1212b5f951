#pragma once

// Minimal standalone SVG figures: Δ boxplots per test length and ROC curves.

#include <algorithm>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace adascreen::plot {

struct BoxSeries {
  std::string label;
  double whisker_low = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, whisker_high = 0.0;
  std::vector<double> outliers;
  std::optional<double> marker;  // e.g. the held-out Δ
};

struct Curve {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y) in [0,1]²
};

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"};
  return colors[i % 8];
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace detail

inline std::string boxplot_svg(const std::vector<BoxSeries>& boxes, const std::string& title,
                               const std::string& y_label) {
  const double width = 120.0 + 70.0 * static_cast<double>(std::max<std::size_t>(boxes.size(), 1));
  const double height = 360.0, left = 70.0, top = 40.0, plot_h = 260.0;
  double lo = 0.0, hi = 0.0;
  for (const auto& b : boxes) {
    lo = std::min({lo, b.whisker_low, b.marker.value_or(lo)});
    hi = std::max({hi, b.whisker_high, b.marker.value_or(hi)});
    for (double o : b.outliers) {
      lo = std::min(lo, o);
      hi = std::max(hi, o);
    }
  }
  const double pad = std::max(1e-3, 0.08 * (hi - lo));
  lo -= pad;
  hi += pad;
  auto y = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };
  using detail::fmt;

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", width) + "\" height=\"" +
                  fmt("%.0f", height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<text x=\"" + fmt("%.1f", width / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
       detail::escape(title) + "</text>\n";
  s += "<line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", top) + "\" x2=\"" + fmt("%.1f", left) +
       "\" y2=\"" + fmt("%.1f", top + plot_h) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    s += "<text x=\"" + fmt("%.1f", left - 6) + "\" y=\"" + fmt("%.1f", y(v) + 4) + "\" text-anchor=\"end\">" +
         fmt("%.3f", v) + "</text>\n";
  }
  if (lo < 0.0 && hi > 0.0)
    s += "<line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", y(0)) + "\" x2=\"" + fmt("%.1f", width - 20) +
         "\" y2=\"" + fmt("%.1f", y(0)) + "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  s += "<text transform=\"rotate(-90)\" x=\"" + fmt("%.1f", -(top + plot_h / 2)) +
       "\" y=\"16\" text-anchor=\"middle\">" + detail::escape(y_label) + "</text>\n";
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    const double cx = left + 50.0 + 70.0 * static_cast<double>(i);
    const double half = 18.0;
    s += "<line x1=\"" + fmt("%.1f", cx) + "\" y1=\"" + fmt("%.2f", y(b.whisker_high)) + "\" x2=\"" +
         fmt("%.1f", cx) + "\" y2=\"" + fmt("%.2f", y(b.whisker_low)) + "\" stroke=\"black\"/>\n";
    s += "<rect x=\"" + fmt("%.1f", cx - half) + "\" y=\"" + fmt("%.2f", y(b.q3)) + "\" width=\"" +
         fmt("%.1f", 2 * half) + "\" height=\"" + fmt("%.2f", std::max(0.5, y(b.q1) - y(b.q3))) + "\" fill=\"" +
         detail::palette(i) + "\" fill-opacity=\"0.5\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + fmt("%.1f", cx - half) + "\" y1=\"" + fmt("%.2f", y(b.median)) + "\" x2=\"" +
         fmt("%.1f", cx + half) + "\" y2=\"" + fmt("%.2f", y(b.median)) + "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    for (double o : b.outliers)
      s += "<circle cx=\"" + fmt("%.1f", cx) + "\" cy=\"" + fmt("%.2f", y(o)) + "\" r=\"2\" fill=\"none\" stroke=\"black\"/>\n";
    if (b.marker)
      s += "<circle cx=\"" + fmt("%.1f", cx) + "\" cy=\"" + fmt("%.2f", y(*b.marker)) + "\" r=\"4\" fill=\"red\"/>\n";
    s += "<text x=\"" + fmt("%.1f", cx) + "\" y=\"" + fmt("%.1f", top + plot_h + 18) + "\" text-anchor=\"middle\">" +
         detail::escape(b.label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

/// Curves with x = 1 − specificity and y = sensitivity are the usual ROC layout.
inline std::string curves_svg(const std::vector<Curve>& curves, const std::string& title, const std::string& x_label,
                              const std::string& y_label) {
  const double size = 300.0, left = 60.0, top = 40.0;
  using detail::fmt;
  auto px = [&](double v) { return left + size * v; };
  auto py = [&](double v) { return top + size * (1.0 - v); };
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", left + size + 200) +
                  "\" height=\"" + fmt("%.0f", top + size + 60) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<text x=\"" + fmt("%.1f", left + size / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
       detail::escape(title) + "</text>\n";
  s += "<rect x=\"" + fmt("%.1f", left) + "\" y=\"" + fmt("%.1f", top) + "\" width=\"" + fmt("%.1f", size) +
       "\" height=\"" + fmt("%.1f", size) + "\" fill=\"none\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt("%.1f", px(0)) + "\" y1=\"" + fmt("%.1f", py(0)) + "\" x2=\"" + fmt("%.1f", px(1)) +
       "\" y2=\"" + fmt("%.1f", py(1)) + "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    s += "<text x=\"" + fmt("%.1f", px(v)) + "\" y=\"" + fmt("%.1f", top + size + 16) + "\" text-anchor=\"middle\">" +
         fmt("%.2f", v) + "</text>\n";
    s += "<text x=\"" + fmt("%.1f", left - 6) + "\" y=\"" + fmt("%.1f", py(v) + 4) + "\" text-anchor=\"end\">" +
         fmt("%.2f", v) + "</text>\n";
  }
  s += "<text x=\"" + fmt("%.1f", left + size / 2) + "\" y=\"" + fmt("%.1f", top + size + 36) +
       "\" text-anchor=\"middle\">" + detail::escape(x_label) + "</text>\n";
  s += "<text transform=\"rotate(-90)\" x=\"" + fmt("%.1f", -(top + size / 2)) + "\" y=\"16\" text-anchor=\"middle\">" +
       detail::escape(y_label) + "</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    std::string pts;
    for (const auto& [x, yv] : curves[i].points) pts += fmt("%.2f", px(x)) + "," + fmt("%.2f", py(yv)) + " ";
    s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + detail::palette(i) + "\" stroke-width=\"1.5\"/>\n";
    s += "<text x=\"" + fmt("%.1f", left + size + 14) + "\" y=\"" + fmt("%.1f", top + 14 + 16.0 * static_cast<double>(i)) +
         "\" fill=\"" + detail::palette(i) + "\">" + detail::escape(curves[i].label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace adascreen::plot
