#include "metafl/plots.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace metafl {

namespace {

constexpr double kMarginLeft = 60.0;
constexpr double kMarginRight = 20.0;
constexpr double kMarginTop = 20.0;
constexpr double kMarginBottom = 40.0;

struct Frame {
  double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
};

Frame frame_of(const PlotSeries& s) {
  Frame f;
  if (s.x.empty()) return f;
  f.x_lo = *std::min_element(s.x.begin(), s.x.end());
  f.x_hi = *std::max_element(s.x.begin(), s.x.end());
  f.y_lo = *std::min_element(s.y.begin(), s.y.end());
  f.y_hi = *std::max_element(s.y.begin(), s.y.end());
  if (f.x_hi == f.x_lo) f.x_hi = f.x_lo + 1.0;
  if (f.y_hi == f.y_lo) f.y_hi = f.y_lo + 1.0;
  return f;
}

}  // namespace

std::pair<double, double> svg_point(const PlotSeries& series, std::size_t index, double width,
                                    double height) {
  require(index < series.x.size(), Errc::shape, "svg_point: index out of range");
  const Frame f = frame_of(series);
  const double plot_w = width - kMarginLeft - kMarginRight;
  const double plot_h = height - kMarginTop - kMarginBottom;
  const double px = kMarginLeft + (series.x[index] - f.x_lo) / (f.x_hi - f.x_lo) * plot_w;
  const double py = kMarginTop + (f.y_hi - series.y[index]) / (f.y_hi - f.y_lo) * plot_h;
  return {px, py};
}

std::string render_svg(const PlotSeries& series, double width, double height) {
  require(series.x.size() == series.y.size(), Errc::shape,
          "render_svg: x/y length mismatch");
  const Frame f = frame_of(series);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // Axes.
  svg << "  <line x1=\"" << kMarginLeft << "\" y1=\"" << height - kMarginBottom << "\" x2=\""
      << width - kMarginRight << "\" y2=\"" << height - kMarginBottom
      << "\" stroke=\"black\"/>\n";
  svg << "  <line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft
      << "\" y2=\"" << height - kMarginBottom << "\" stroke=\"black\"/>\n";
  svg << "  <text x=\"" << width / 2.0 << "\" y=\"" << height - 8.0
      << "\" text-anchor=\"middle\" font-size=\"14\">" << series.name << "</text>\n";
  svg << "  <text x=\"8\" y=\"" << kMarginTop + 4.0 << "\" font-size=\"11\">"
      << fmt_double(f.y_hi) << "</text>\n";
  svg << "  <text x=\"8\" y=\"" << height - kMarginBottom << "\" font-size=\"11\">"
      << fmt_double(f.y_lo) << "</text>\n";

  if (!series.x.empty()) {
    svg << "  <polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series.x.size(); ++i) {
      auto [px, py] = svg_point(series, i, width, height);
      if (i > 0) svg << ' ';
      svg << fmt_double(px) << ',' << fmt_double(py);
    }
    svg << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::string> emit_plots(const std::string& metrics_csv_path,
                                    const std::string& out_dir) {
  std::ifstream in(metrics_csv_path);
  require(in.good(), Errc::io, "emit_plots: cannot open " + metrics_csv_path);

  std::string header;
  require(static_cast<bool>(std::getline(in, header)), Errc::io,
          "emit_plots: empty metrics csv");
  std::vector<std::string> columns;
  {
    std::stringstream ss(header);
    std::string cell;
    while (std::getline(ss, cell, ',')) columns.push_back(cell);
  }
  require(columns.size() >= 3 && columns[1] == "round", Errc::io,
          "emit_plots: unexpected metrics schema");

  std::vector<Vec> table(columns.size());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t j = 0; j < columns.size(); ++j) {
      require(static_cast<bool>(std::getline(ss, cell, ',')), Errc::io,
              "emit_plots: ragged metrics row");
      if (j > 0) table[j].push_back(std::strtod(cell.c_str(), nullptr));
    }
  }

  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;
  for (std::size_t j = 2; j < columns.size(); ++j) {
    PlotSeries s;
    s.name = columns[j];
    s.x = table[1];
    s.y = table[j];
    const std::string path =
        (std::filesystem::path(out_dir) / (columns[j] + ".svg")).string();
    std::ofstream out(path);
    require(out.good(), Errc::io, "emit_plots: cannot write " + path);
    out << render_svg(s);
    written.push_back(path);
  }
  return written;
}

}  // namespace metafl
