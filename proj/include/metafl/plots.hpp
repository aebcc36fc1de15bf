#pragma once

#include <string>
#include <vector>

#include "metafl/common.hpp"

namespace metafl {

struct PlotSeries {
  std::string name;
  Vec x;
  Vec y;
};

// Plain-text SVG line plot; axes only when the series is empty.
std::string render_svg(const PlotSeries& series, double width = 640.0, double height = 400.0);

// Maps a data point into the SVG pixel frame used by render_svg; exposed so
// coordinate arithmetic is checkable.
std::pair<double, double> svg_point(const PlotSeries& series, std::size_t index,
                                    double width = 640.0, double height = 400.0);

// One SVG per numeric column of the metrics CSV (x = the round column).
std::vector<std::string> emit_plots(const std::string& metrics_csv_path,
                                    const std::string& out_dir);

}  // namespace metafl
