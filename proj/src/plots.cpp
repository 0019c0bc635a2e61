#include "lvap/plots.hpp"

#include <algorithm>
#include <cstdio>

#include "lvap/io.hpp"

namespace lvap {

namespace {

constexpr double kWidth = 480;
constexpr double kHeight = 360;
constexpr double kMargin = 48;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

double px(double x) { return kMargin + x * (kWidth - 2 * kMargin); }
double py(double y) { return kHeight - kMargin - y * (kHeight - 2 * kMargin); }

std::string escape(const std::string& text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string frame(const std::string& title, const std::string& x_label,
                  const std::string& y_label) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
                  "\" height=\"" + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" +
       escape(title) + "</text>\n";
  s += "<rect x=\"" + num(px(0)) + "\" y=\"" + num(py(1)) + "\" width=\"" + num(px(1) - px(0)) +
       "\" height=\"" + num(py(0) - py(1)) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    s += "<text x=\"" + num(px(v)) + "\" y=\"" + num(py(0) + 14) +
         "\" text-anchor=\"middle\">" + num(v) + "</text>\n";
    s += "<text x=\"" + num(px(0) - 6) + "\" y=\"" + num(py(v) + 4) +
         "\" text-anchor=\"end\">" + num(v) + "</text>\n";
  }
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"" + num(kHeight - 8) +
       "\" text-anchor=\"middle\">" + x_label + "</text>\n";
  s += "<text x=\"14\" y=\"" + num(kHeight / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
       num(kHeight / 2) + ")\">" + y_label + "</text>\n";
  return s;
}

}  // namespace

std::string pr_curves_csv(const EvalCurves& curves) {
  std::string out = "series,category_id,iou_threshold,recall,precision\n";
  for (const auto& s : curves.series) {
    const std::string head = s.category_id ? "class," + std::to_string(*s.category_id) + ","
                                           : std::string("pooled,,");
    for (const auto& p : s.points) {
      out += head + format_double(s.iou_threshold) + "," + format_double(p.recall) + "," +
             format_double(p.precision) + "\n";
    }
  }
  return out;
}

std::string pr_curves_svg(const EvalCurves& curves, const std::string& title) {
  std::string s = frame(title, "recall", "precision");
  auto polyline = [&](const EvalCurves::Series& series, const char* style) {
    s += "<polyline fill=\"none\" " + std::string(style) + " points=\"";
    for (const auto& p : series.points) s += num(px(p.recall)) + "," + num(py(p.precision)) + " ";
    s += "\"/>\n";
  };
  for (const auto& series : curves.series) {
    if (series.category_id) polyline(series, "stroke=\"#999\" stroke-opacity=\"0.5\"");
  }
  // Pooled curves go on top, the first (loosest) threshold emphasized.
  bool first = true;
  for (const auto& series : curves.series) {
    if (series.category_id) continue;
    polyline(series, first ? "stroke=\"#1f5fbf\" stroke-width=\"2\""
                           : "stroke=\"#1f5fbf\" stroke-opacity=\"0.35\"");
    first = false;
  }
  s += "</svg>\n";
  return s;
}

std::string score_histogram_svg(const ScoreDistribution& dist, const std::string& title) {
  std::string s = frame(title, "score", "fraction of detections");
  const char* colors[] = {"#d62728", "#ff7f0e", "#1f77b4", "#7f7f7f"};
  const double bin_width = 1.0 / std::max(dist.bins, 1);
  double peak = 0.0;
  for (const auto& g : dist.groups) {
    for (auto h : g.histogram) {
      if (g.count > 0) peak = std::max(peak, static_cast<double>(h) / static_cast<double>(g.count));
    }
  }
  if (peak <= 0.0) peak = 1.0;
  for (std::size_t gi = 0; gi < dist.groups.size(); ++gi) {
    const auto& g = dist.groups[gi];
    if (g.count == 0) continue;
    s += "<polyline fill=\"none\" stroke=\"" + std::string(colors[gi % 4]) + "\" points=\"";
    for (std::size_t b = 0; b < g.histogram.size(); ++b) {
      const double y = static_cast<double>(g.histogram[b]) / static_cast<double>(g.count) / peak;
      s += num(px(b * bin_width)) + "," + num(py(y)) + " " + num(px((b + 1) * bin_width)) + "," +
           num(py(y)) + " ";
    }
    s += "\"/>\n";
    s += "<text x=\"" + num(px(1) - 4) + "\" y=\"" + num(py(1) + 14 + 13 * gi) +
         "\" text-anchor=\"end\" fill=\"" + colors[gi % 4] + "\">" + group_name(g.group) +
         "</text>\n";
  }
  s += "<text x=\"" + num(px(0) + 4) + "\" y=\"" + num(py(1) + 14) + "\">peak " + num(peak) +
       "</text>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace lvap
