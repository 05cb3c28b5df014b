#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "xmodal/metrics.hpp"

namespace xmodal {

enum class PlotKind { confusion, boxplot, alpha, tsne };

/// Throws UnknownKind.
PlotKind parse_plot_kind(std::string_view name);
std::string to_string(PlotKind kind);

struct Rgb {
  unsigned char r = 0, g = 0, b = 0;
};

/// A flat list of drawing primitives that renders to SVG text or to pixels.
/// Coordinates are pixels from the top-left corner.
class Figure {
 public:
  Figure(int width, int height);

  void rect(double x, double y, double w, double h, Rgb fill, const std::string& cls = {});
  void frame(double x, double y, double w, double h, Rgb stroke);
  void line(double x1, double y1, double x2, double y2, Rgb stroke, double width = 1);
  void circle(double cx, double cy, double r, Rgb fill, const std::string& cls = {});
  /// `anchor`: -1 left, 0 centre, 1 right. `y` is the vertical centre of the text.
  void text(double x, double y, std::string s, Rgb color = {}, int anchor = -1);

  int width() const { return width_; }
  int height() const { return height_; }
  std::string svg() const;
  /// Row-major RGB, 3 bytes per pixel.
  std::vector<unsigned char> raster() const;
  void write_svg(const std::filesystem::path& path) const;
  void write_png(const std::filesystem::path& path) const;
  /// Writes `stem`.svg and `stem`.png; returns both paths.
  std::vector<std::filesystem::path> save(const std::filesystem::path& stem) const;

  static constexpr int kCharWidth = 6;

 private:
  enum class Op { rect, frame, line, circle, text };
  struct Item {
    Op op;
    double a, b, c, d;
    Rgb color;
    std::string s;
    int anchor = -1;
  };
  int width_, height_;
  std::vector<Item> items_;
};

/// Heatmap of row-normalized percentages.
Figure confusion_figure(const Confusion& c, const std::vector<std::string>& class_map, const std::string& title);
/// One box per named group of per-fold values (median, quartiles, 1.5 IQR whiskers).
Figure boxplot_figure(const std::vector<std::pair<std::string, std::vector<double>>>& groups, const std::string& title);
/// Line plot with one marker per alpha value.
Figure alpha_figure(const std::vector<double>& alpha, const std::vector<double>& f1, const std::string& title);
/// Scatter coloured by class; one legend entry per class present in `labels`.
Figure tsne_figure(const Eigen::MatrixXd& xy, const std::vector<int>& labels, const std::vector<std::string>& class_map,
                   const std::string& title);

}  // namespace xmodal
