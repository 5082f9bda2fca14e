#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

// Minimal SVG summaries so plots need no external tooling.
namespace sme::svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string header(int width, int height, const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"10\" y=\"16\" font-size=\"13\">" + title +
         "</text>\n";
}

/// Polyline of ys against their index.
inline std::string line_chart(const std::vector<double>& ys, const std::string& title, const std::string& y_label) {
  constexpr int w = 640, h = 360, left = 60, right = 20, top = 30, bottom = 40;
  std::string out = header(w, h, title);
  if (ys.empty()) return out + "</svg>\n";
  double lo = *std::min_element(ys.begin(), ys.end());
  double hi = *std::max_element(ys.begin(), ys.end());
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pw = w - left - right;
  const double ph = h - top - bottom;
  auto px = [&](std::size_t i) { return left + (ys.size() == 1 ? 0.5 : double(i) / double(ys.size() - 1)) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - lo) / (hi - lo)) * ph; };
  out += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(left + pw) + "\" y2=\"" +
         num(top + ph) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(top + ph) +
         "\" stroke=\"black\"/>\n";
  out += "<text x=\"5\" y=\"" + num(top + 10) + "\">" + num(hi) + "</text>\n";
  out += "<text x=\"5\" y=\"" + num(top + ph) + "\">" + num(lo) + "</text>\n";
  out += "<text x=\"" + num(left) + "\" y=\"" + num(h - 10) + "\">" + y_label + "</text>\n";
  out += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < ys.size(); ++i) out += num(px(i)) + "," + num(py(ys[i])) + " ";
  out += "\"/>\n</svg>\n";
  return out;
}

/// One bar per labelled value in [0, 1], shaded by value (heatmap strip).
inline std::string bar_strip(const std::vector<std::string>& labels, const std::vector<double>& values,
                             const std::string& title) {
  const int cell = 100;
  const int w = 20 + cell * static_cast<int>(values.size());
  const int h = 260;
  std::string out = header(w, h, title);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::clamp(values[i], 0.0, 1.0);
    const int x = 10 + cell * static_cast<int>(i);
    const int bar = static_cast<int>(v * 180.0);
    const int shade = static_cast<int>(255.0 * (1.0 - v));
    out += "<rect x=\"" + std::to_string(x + 10) + "\" y=\"" + std::to_string(220 - bar) + "\" width=\"" +
           std::to_string(cell - 20) + "\" height=\"" + std::to_string(bar) + "\" fill=\"rgb(" +
           std::to_string(shade) + "," + std::to_string(shade) + ",255)\" stroke=\"black\"/>\n";
    out += "<text x=\"" + std::to_string(x + 10) + "\" y=\"" + std::to_string(215 - bar) + "\">" + num(values[i]) +
           "</text>\n";
    out += "<text x=\"" + std::to_string(x + 5) + "\" y=\"240\">" + labels[i] + "</text>\n";
  }
  return out + "</svg>\n";
}

}  // namespace sme::svg
