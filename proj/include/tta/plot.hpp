#pragma once

#include <string>
#include <vector>

namespace tta {

struct Series {
  std::string name;
  std::vector<double> values;  // y per step; NaN leaves a gap
};

struct LinePlot {
  std::string title;
  std::string x_label = "step";
  std::string y_label;
  std::vector<Series> series;
  std::string run_id;  // embedded as an XML comment when non-empty
  int width = 640;
  int height = 400;
};

// Self-contained SVG document: axes, ticks, polylines and a legend.
std::string render_svg(const LinePlot& plot);

}  // namespace tta
