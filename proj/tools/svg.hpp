#pragma once

// Minimal SVG charts for the report subcommand.

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

namespace triplet_embed::svg {

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;

inline std::string frame(const std::string& title, const std::string& x_label, const std::string& y_label) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
                  num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
       escape(title) + "</text>\n";
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kHeight - kBottom) + "\" x2=\"" + num(kWidth - kRight) +
       "\" y2=\"" + num(kHeight - kBottom) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
       num(kHeight - kBottom) + "\" stroke=\"black\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"" + num(kHeight - 10) + "\" text-anchor=\"middle\">" +
       escape(x_label) + "</text>\n";
  s += "<text x=\"15\" y=\"" + num(kHeight / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " +
       num(kHeight / 2) + ")\">" + escape(y_label) + "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = kHeight - kBottom - t * (kHeight - kTop - kBottom) / 4;
    s += "<text x=\"" + num(kLeft - 5) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + num(t / 4.0) +
         "</text>\n";
  }
  return s;
}

}  // namespace detail

// Line chart with the y axis fixed to [0, 1].
inline std::string line_chart(const std::vector<double>& x, const std::vector<double>& y, const std::string& title,
                              const std::string& x_label, const std::string& y_label) {
  using namespace detail;
  std::string s = frame(title, x_label, y_label);
  if (!x.empty()) {
    const double x_min = *std::min_element(x.begin(), x.end());
    const double x_max = std::max(*std::max_element(x.begin(), x.end()), x_min + 1.0);
    std::string points;
    for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
      const double px = kLeft + (x[i] - x_min) / (x_max - x_min) * (kWidth - kLeft - kRight);
      const double py = kHeight - kBottom - std::clamp(y[i], 0.0, 1.0) * (kHeight - kTop - kBottom);
      points += num(px) + "," + num(py) + " ";
    }
    s += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
    s += "<text x=\"" + num(kLeft) + "\" y=\"" + num(kHeight - kBottom + 15) + "\" text-anchor=\"middle\">" +
         num(x_min) + "</text>\n";
    s += "<text x=\"" + num(kWidth - kRight) + "\" y=\"" + num(kHeight - kBottom + 15) +
         "\" text-anchor=\"middle\">" + num(x_max) + "</text>\n";
  }
  return s + "</svg>\n";
}

// Bar chart of fractions in [0, 1].
inline std::string bar_chart(const std::vector<std::string>& names, const std::vector<double>& values,
                             const std::string& title, const std::string& y_label) {
  using namespace detail;
  std::string s = frame(title, "", y_label);
  const double slot = (kWidth - kLeft - kRight) / static_cast<double>(std::max<std::size_t>(names.size(), 1));
  for (std::size_t i = 0; i < names.size() && i < values.size(); ++i) {
    const double h = std::clamp(values[i], 0.0, 1.0) * (kHeight - kTop - kBottom);
    const double x = kLeft + i * slot + slot * 0.15;
    s += "<rect x=\"" + num(x) + "\" y=\"" + num(kHeight - kBottom - h) + "\" width=\"" + num(slot * 0.7) +
         "\" height=\"" + num(h) + "\" fill=\"steelblue\"/>\n";
    s += "<text x=\"" + num(x + slot * 0.35) + "\" y=\"" + num(kHeight - kBottom + 15) +
         "\" text-anchor=\"middle\">" + escape(names[i]) + "</text>\n";
  }
  return s + "</svg>\n";
}

}  // namespace triplet_embed::svg
