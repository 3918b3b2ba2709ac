#include "tta/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace tta {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

}  // namespace

std::string render_svg(const LinePlot& plot) {
  const double left = 64, right = 16, top = 36, bottom = 48;
  const double w = plot.width, h = plot.height;
  const double pw = w - left - right, ph = h - top - bottom;

  double y_min = std::numeric_limits<double>::infinity();
  double y_max = -y_min;
  std::size_t n_max = 0;
  for (const auto& s : plot.series) {
    n_max = std::max(n_max, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  if (!std::isfinite(y_min)) y_min = 0.0, y_max = 1.0;
  if (y_max - y_min < 1e-12) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  const double x_max = n_max > 1 ? static_cast<double>(n_max - 1) : 1.0;
  auto sx = [&](double x) { return left + pw * x / x_max; };
  auto sy = [&](double y) { return top + ph * (1.0 - (y - y_min) / (y_max - y_min)); };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  if (!plot.run_id.empty()) os << "<!-- run_id: " << plot.run_id << " -->\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << plot.width
     << "\" height=\"" << plot.height << "\" viewBox=\"0 0 " << plot.width << ' '
     << plot.height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(plot.title) << "</text>\n";

  // Grid and ticks.
  for (int i = 0; i <= 4; ++i) {
    const double y = y_min + (y_max - y_min) * i / 4.0;
    const double py = sy(y);
    os << "<line x1=\"" << left << "\" y1=\"" << num(py) << "\" x2=\"" << left + pw
       << "\" y2=\"" << num(py) << "\" stroke=\"#e0e0e0\"/>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << num(py + 4)
       << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
    const double x = x_max * i / 4.0;
    os << "<text x=\"" << num(sx(x)) << "\" y=\"" << top + ph + 16
       << "\" text-anchor=\"middle\">" << num(std::round(x)) << "</text>\n";
  }
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw
     << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 10
     << "\" text-anchor=\"middle\">" << escape(plot.x_label) << "</text>\n";
  os << "<text transform=\"translate(14," << top + ph / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << escape(plot.y_label)
     << "</text>\n";

  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    // A NaN splits the series into separate polylines.
    std::string points;
    auto flush = [&] {
      if (!points.empty()) {
        os << "<polyline fill=\"none\" stroke=\"" << color
           << "\" stroke-width=\"1.2\" points=\"" << points << "\"/>\n";
        points.clear();
      }
    };
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (!std::isfinite(s.values[i])) {
        flush();
        continue;
      }
      if (!points.empty()) points += ' ';
      points += num(sx(static_cast<double>(i))) + "," + num(sy(s.values[i]));
    }
    flush();
    const double ly = top + 14 + 14 * static_cast<double>(k);
    os << "<line x1=\"" << left + pw - 110 << "\" y1=\"" << ly - 4 << "\" x2=\""
       << left + pw - 92 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw - 88 << "\" y=\"" << ly << "\">" << escape(s.name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace tta
