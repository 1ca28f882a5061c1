#pragma once

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace rldet {

// Minimal deterministic SVG line/bar charts for metrics JSON. Good enough to
// eyeball loss curves and sweep results without a plotting stack.
namespace svgplot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

inline std::string render_lines(const std::vector<Series>& series, const std::string& title,
                                const std::string& x_label, const std::string& y_label) {
  const int w = 720, h = 440, ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Series& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmin >= xmax) xmax = xmin + 1.0;
  if (ymin >= ymax) ymax = ymin + 1.0;
  ymin = std::min(ymin, 0.0);
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };
  const char* colors[6] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ostringstream os;
  char buf[256];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%d\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">%s</text>\n",
                ml, title.c_str());
  os << buf;
  // axes
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml, h - mb, w - mr,
                h - mb);
  os << buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml, mt, ml, h - mb);
  os << buf;
  for (int tick = 0; tick <= 4; ++tick) {
    const double ty = ymin + (ymax - ymin) * tick / 4.0;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" "
                  "text-anchor=\"end\">%.3g</text>\n",
                  ml - 6, py(ty) + 4, ty);
    os << buf;
    const double tx = xmin + (xmax - xmin) * tick / 4.0;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%d\" font-family=\"sans-serif\" font-size=\"11\" "
                  "text-anchor=\"middle\">%.3g</text>\n",
                  px(tx), h - mb + 16, tx);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"12\">%s</text>\n",
                (w + ml) / 2 - 20, h - 12, x_label.c_str());
  os << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"14\" y=\"%d\" font-family=\"sans-serif\" font-size=\"12\" "
                "transform=\"rotate(-90 14 %d)\">%s</text>\n",
                (h + mt) / 2, (h + mt) / 2, y_label.c_str());
  os << buf;

  for (size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    os << "<polyline fill=\"none\" stroke=\"" << colors[si % 6] << "\" stroke-width=\"1.8\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", px(s.x[i]), py(s.y[i]));
      os << buf;
    }
    os << "\"/>\n";
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%zu\" font-family=\"sans-serif\" font-size=\"12\" "
                  "fill=\"%s\">%s</text>\n",
                  w - mr - 140, mt + 16 * (si + 1), colors[si % 6], s.label.c_str());
    os << buf;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace svgplot

// Renders whichever metrics JSON shape it is handed: an epoch-log array, a
// sweep result, or an ablation/eval report.
inline std::string plot_metrics_json(const nlohmann::ordered_json& j, const std::string& title) {
  using svgplot::Series;
  std::vector<Series> series;
  auto curve_series = [](const nlohmann::ordered_json& arr) {
    std::vector<Series> out;
    const char* keys[4] = {"total", "lidar_det", "radar_det", "motion"};
    for (const char* k : keys) {
      Series s;
      s.label = k;
      for (const auto& e : arr) {
        if (!e.contains(k)) continue;
        s.x.push_back(e.at("epoch").get<double>());
        s.y.push_back(e.at(k).get<double>());
      }
      if (!s.x.empty()) out.push_back(std::move(s));
    }
    return out;
  };

  if (j.is_array()) {  // loss curves
    series = curve_series(j);
    return svgplot::render_lines(series, title, "epoch", "loss");
  }
  if (j.contains("rows")) {  // lambda sweep
    Series all, corr;
    all.label = "all-area mAP";
    corr.label = "corridor mAP";
    for (const auto& row : j.at("rows")) {
      all.x.push_back(row.at("lambda").get<double>());
      all.y.push_back(row.at("report").at("all_area").at("mAP").get<double>());
      corr.x.push_back(row.at("lambda").get<double>());
      corr.y.push_back(row.at("report").at("driving_corridor").at("mAP").get<double>());
    }
    return svgplot::render_lines({all, corr}, title, "lambda", "mAP");
  }
  if (j.contains("cells")) {  // ablation: mAP per cell index
    Series all, corr;
    all.label = "all-area mAP";
    corr.label = "corridor mAP";
    double i = 0.0;
    for (const auto& cell : j.at("cells")) {
      all.x.push_back(i);
      all.y.push_back(cell.at("report").at("all_area").at("mAP").get<double>());
      corr.x.push_back(i);
      corr.y.push_back(cell.at("report").at("driving_corridor").at("mAP").get<double>());
      i += 1.0;
    }
    return svgplot::render_lines({all, corr}, title, "cell (-,-),(D,-),(-,X),(D,X)", "mAP");
  }
  throw std::runtime_error("plot: unrecognized metrics JSON shape");
}

}  // namespace rldet
