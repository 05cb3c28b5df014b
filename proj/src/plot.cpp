#include "xmodal/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include <png.h>

namespace xmodal {

namespace {
#include "font6x11.inc"

const Rgb kBlack{0, 0, 0};
const Rgb kGrey{200, 200, 200};
const Rgb kWhite{255, 255, 255};
const Rgb kPalette[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},  {148, 103, 189},
                        {140, 86, 75},  {227, 119, 194}, {127, 127, 127}, {188, 189, 34}, {23, 190, 207}};

Rgb palette(int i) { return kPalette[static_cast<std::size_t>(i) % std::size(kPalette)]; }

std::string hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string fmt(double v, int digits) {
  if (std::abs(v) < 1e-12) v = 0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// White-to-blue ramp for t in [0, 1].
Rgb heat(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto mix = [t](int a, int b) { return static_cast<unsigned char>(std::lround(a + (b - a) * t)); };
  return {mix(247, 8), mix(251, 48), mix(255, 107)};
}

struct Axis {
  double lo, hi, px0, px1;
  double operator()(double v) const { return px0 + (v - lo) / (hi - lo) * (px1 - px0); }
};

std::vector<double> ticks(double lo, double hi, int target = 5) {
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double v = std::ceil(lo / step - 1e-9) * step; v <= hi + 1e-9 * step; v += step) out.push_back(v);
  return out;
}

void axes(Figure& f, const Axis& x, const Axis& y, int xdigits, int ydigits, const std::string& xlabel,
          const std::string& ylabel) {
  for (double t : ticks(y.lo, y.hi)) {
    f.line(x.px0, y(t), x.px1, y(t), {235, 235, 235});
    f.text(x.px0 - 6, y(t), fmt(t, ydigits), kBlack, 1);
  }
  for (double t : ticks(x.lo, x.hi)) f.text(x(t), y.px0 + 12, fmt(t, xdigits), kBlack, 0);
  f.line(x.px0, y.px0, x.px1, y.px0, kBlack);
  f.line(x.px0, y.px0, x.px0, y.px1, kBlack);
  f.text((x.px0 + x.px1) / 2, y.px0 + 28, xlabel, kBlack, 0);
  f.text(8, y.px1 - 14, ylabel, kBlack, -1);
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] * (1 - frac) + v[i + 1] * frac : v[i];
}

}  // namespace

PlotKind parse_plot_kind(std::string_view name) {
  if (name == "confusion") return PlotKind::confusion;
  if (name == "boxplot") return PlotKind::boxplot;
  if (name == "alpha") return PlotKind::alpha;
  if (name == "tsne") return PlotKind::tsne;
  throw UnknownKind("unknown plot kind '" + std::string(name) + "' (expected confusion, boxplot, alpha or tsne)");
}

std::string to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::confusion: return "confusion";
    case PlotKind::boxplot: return "boxplot";
    case PlotKind::alpha: return "alpha";
    case PlotKind::tsne: return "tsne";
  }
  return "?";
}

Figure::Figure(int width, int height) : width_(width), height_(height) { rect(0, 0, width, height, kWhite); }

void Figure::rect(double x, double y, double w, double h, Rgb fill, const std::string& cls) {
  items_.push_back({Op::rect, x, y, w, h, fill, cls});
}
void Figure::frame(double x, double y, double w, double h, Rgb stroke) {
  items_.push_back({Op::frame, x, y, w, h, stroke, {}});
}
void Figure::line(double x1, double y1, double x2, double y2, Rgb stroke, double width) {
  items_.push_back({Op::line, x1, y1, x2, y2, stroke, {}, static_cast<int>(std::lround(width))});
}
void Figure::circle(double cx, double cy, double r, Rgb fill, const std::string& cls) {
  items_.push_back({Op::circle, cx, cy, r, 0, fill, cls});
}
void Figure::text(double x, double y, std::string s, Rgb color, int anchor) {
  items_.push_back({Op::text, x, y, 0, 0, color, std::move(s), anchor});
}

std::string Figure::svg() const {
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width_) + "\" height=\"" +
                    std::to_string(height_) + "\" viewBox=\"0 0 " + std::to_string(width_) + " " +
                    std::to_string(height_) + "\" font-family=\"monospace\" font-size=\"10\">\n";
  for (const auto& it : items_) {
    const std::string cls = it.s.empty() || it.op == Op::text ? "" : " class=\"" + escape(it.s) + "\"";
    switch (it.op) {
      case Op::rect:
        out += "<rect x=\"" + num(it.a) + "\" y=\"" + num(it.b) + "\" width=\"" + num(it.c) + "\" height=\"" +
               num(it.d) + "\" fill=\"" + hex(it.color) + "\"" + cls + "/>\n";
        break;
      case Op::frame:
        out += "<rect x=\"" + num(it.a) + "\" y=\"" + num(it.b) + "\" width=\"" + num(it.c) + "\" height=\"" +
               num(it.d) + "\" fill=\"none\" stroke=\"" + hex(it.color) + "\"/>\n";
        break;
      case Op::line:
        out += "<line x1=\"" + num(it.a) + "\" y1=\"" + num(it.b) + "\" x2=\"" + num(it.c) + "\" y2=\"" + num(it.d) +
               "\" stroke=\"" + hex(it.color) + "\" stroke-width=\"" + std::to_string(it.anchor) + "\"/>\n";
        break;
      case Op::circle:
        out += "<circle cx=\"" + num(it.a) + "\" cy=\"" + num(it.b) + "\" r=\"" + num(it.c) + "\" fill=\"" +
               hex(it.color) + "\"" + cls + "/>\n";
        break;
      case Op::text: {
        const char* anchor = it.anchor < 0 ? "start" : it.anchor == 0 ? "middle" : "end";
        out += "<text x=\"" + num(it.a) + "\" y=\"" + num(it.b + 3.5) + "\" text-anchor=\"" + anchor + "\" fill=\"" +
               hex(it.color) + "\">" + escape(it.s) + "</text>\n";
        break;
      }
    }
  }
  return out + "</svg>\n";
}

std::vector<unsigned char> Figure::raster() const {
  std::vector<unsigned char> px(static_cast<std::size_t>(width_) * height_ * 3, 255);
  auto put = [&](long x, long y, Rgb c) {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
    auto* p = &px[(static_cast<std::size_t>(y) * width_ + x) * 3];
    p[0] = c.r, p[1] = c.g, p[2] = c.b;
  };
  auto fill = [&](double x0, double y0, double x1, double y1, Rgb c) {
    for (long y = std::lround(y0); y < std::lround(y1); ++y)
      for (long x = std::lround(x0); x < std::lround(x1); ++x) put(x, y, c);
  };
  for (const auto& it : items_) {
    switch (it.op) {
      case Op::rect: fill(it.a, it.b, it.a + it.c, it.b + it.d, it.color); break;
      case Op::frame: {
        const long x0 = std::lround(it.a), y0 = std::lround(it.b);
        const long x1 = std::lround(it.a + it.c), y1 = std::lround(it.b + it.d);
        for (long x = x0; x <= x1; ++x) put(x, y0, it.color), put(x, y1, it.color);
        for (long y = y0; y <= y1; ++y) put(x0, y, it.color), put(x1, y, it.color);
        break;
      }
      case Op::line: {
        const double len = std::max(std::abs(it.c - it.a), std::abs(it.d - it.b));
        const int steps = std::max(1, static_cast<int>(std::ceil(len)));
        const int w = std::max(1, it.anchor);
        for (int s = 0; s <= steps; ++s) {
          const double t = static_cast<double>(s) / steps;
          const long x = std::lround(it.a + t * (it.c - it.a)), y = std::lround(it.b + t * (it.d - it.b));
          for (int dy = 0; dy < w; ++dy)
            for (int dx = 0; dx < w; ++dx) put(x + dx - w / 2, y + dy - w / 2, it.color);
        }
        break;
      }
      case Op::circle: {
        const long r = static_cast<long>(std::ceil(it.c));
        for (long dy = -r; dy <= r; ++dy)
          for (long dx = -r; dx <= r; ++dx)
            if (dx * dx + dy * dy <= it.c * it.c) put(std::lround(it.a) + dx, std::lround(it.b) + dy, it.color);
        break;
      }
      case Op::text: {
        const double w = static_cast<double>(it.s.size()) * kGlyphW;
        const long x0 = std::lround(it.anchor < 0 ? it.a : it.anchor == 0 ? it.a - w / 2 : it.a - w);
        const long y0 = std::lround(it.b - kGlyphH / 2.0) - 1;
        for (std::size_t k = 0; k < it.s.size(); ++k) {
          const int ch = static_cast<unsigned char>(it.s[k]);
          if (ch < 32 || ch > 126) continue;
          for (int row = 0; row < kGlyphH; ++row)
            for (int col = 0; col < kGlyphW; ++col)
              if (kGlyphs[ch - 32][row] & (1 << (kGlyphW - 1 - col)))
                put(x0 + static_cast<long>(k) * kGlyphW + col, y0 + row, it.color);
        }
        break;
      }
    }
  }
  return px;
}

void Figure::write_svg(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << svg();
}

void Figure::write_png(const std::filesystem::path& path) const {
  const auto px = raster();
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw Error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    throw Error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width_, height_, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height_; ++y)
    png_write_row(png, const_cast<png_bytep>(&px[static_cast<std::size_t>(y) * width_ * 3]));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::filesystem::path> Figure::save(const std::filesystem::path& stem) const {
  auto svg_path = stem, png_path = stem;
  svg_path += ".svg";
  png_path += ".png";
  write_svg(svg_path);
  write_png(png_path);
  return {svg_path, png_path};
}

Figure confusion_figure(const Confusion& c, const std::vector<std::string>& class_map, const std::string& title) {
  const int k = static_cast<int>(c.rows());
  if (c.cols() != k || static_cast<int>(class_map.size()) != k)
    throw ShapeMismatch("confusion matrix and class map sizes differ");
  std::size_t name_len = 4;
  for (const auto& n : class_map) name_len = std::max(name_len, n.size());
  const double cell = 48, left = 20 + Figure::kCharWidth * static_cast<double>(name_len), top = 40;
  const double bottom = 30 + Figure::kCharWidth * static_cast<double>(std::min<std::size_t>(name_len, 14));
  Figure f(static_cast<int>(left + cell * k + 20), static_cast<int>(top + cell * k + bottom));
  f.text(f.width() / 2.0, 16, title, kBlack, 0);
  for (int r = 0; r < k; ++r) {
    const double total = static_cast<double>(c.row(r).sum());
    for (int col = 0; col < k; ++col) {
      const double pct = total > 0 ? 100.0 * static_cast<double>(c(r, col)) / total : 0.0;
      const double x = left + cell * col, y = top + cell * r;
      f.rect(x, y, cell, cell, heat(pct / 100.0), "cell");
      f.text(x + cell / 2, y + cell / 2, fmt(pct, 1), pct > 55 ? kWhite : kBlack, 0);
    }
    f.text(left - 6, top + cell * r + cell / 2, class_map[r], kBlack, 1);
  }
  for (int col = 0; col < k; ++col) {
    std::string name = class_map[col].substr(0, 14);
    f.text(left + cell * col + cell / 2, top + cell * k + 10, name.size() > 7 ? std::to_string(col) : name, kBlack, 0);
  }
  f.frame(left, top, cell * k, cell * k, kBlack);
  f.text(left + cell * k / 2, top + cell * k + 26, "predicted", kBlack, 0);
  return f;
}

Figure boxplot_figure(const std::vector<std::pair<std::string, std::vector<double>>>& groups, const std::string& title) {
  if (groups.empty()) throw Error("boxplot needs at least one group");
  double lo = 1, hi = 0;
  for (const auto& [name, v] : groups) {
    if (v.empty()) throw Error("boxplot group '" + name + "' is empty");
    lo = std::min(lo, *std::min_element(v.begin(), v.end()));
    hi = std::max(hi, *std::max_element(v.begin(), v.end()));
  }
  lo = std::max(0.0, std::floor(lo * 10 - 0.5) / 10);
  hi = std::min(1.0, std::ceil(hi * 10 + 0.5) / 10);
  if (hi <= lo) hi = lo + 0.1;
  const double slot = 90;
  Figure f(static_cast<int>(80 + slot * static_cast<double>(groups.size()) + 20), 360);
  const Axis y{lo, hi, 300, 40};
  const Axis x{0, static_cast<double>(groups.size()), 70, f.width() - 20.0};
  f.text(f.width() / 2.0, 16, title, kBlack, 0);
  for (double t : ticks(lo, hi)) {
    f.line(x.px0, y(t), x.px1, y(t), {235, 235, 235});
    f.text(x.px0 - 6, y(t), fmt(t, 2), kBlack, 1);
  }
  f.line(x.px0, y.px0, x.px1, y.px0, kBlack);
  f.line(x.px0, y.px0, x.px0, y.px1, kBlack);
  f.text(8, 28, "macro F1", kBlack, -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& v = groups[g].second;
    const double q1 = quantile(v, 0.25), med = quantile(v, 0.5), q3 = quantile(v, 0.75), iqr = q3 - q1;
    double wlo = q3, whi = q1;
    for (double s : v) {
      if (s >= q1 - 1.5 * iqr) wlo = std::min(wlo, s);
      if (s <= q3 + 1.5 * iqr) whi = std::max(whi, s);
    }
    const double cx = x(static_cast<double>(g) + 0.5), half = slot * 0.3;
    const Rgb col = palette(static_cast<int>(g));
    f.line(cx, y(wlo), cx, y(q1), kBlack);
    f.line(cx, y(q3), cx, y(whi), kBlack);
    f.line(cx - half / 2, y(wlo), cx + half / 2, y(wlo), kBlack);
    f.line(cx - half / 2, y(whi), cx + half / 2, y(whi), kBlack);
    f.rect(cx - half, y(q3), 2 * half, std::max(1.0, y(q1) - y(q3)), col, "box");
    f.frame(cx - half, y(q3), 2 * half, std::max(1.0, y(q1) - y(q3)), kBlack);
    f.line(cx - half, y(med), cx + half, y(med), kBlack, 2);
    for (double s : v)
      if (s < wlo || s > whi) f.circle(cx, y(s), 3, kBlack, "outlier");
    f.text(cx, y.px0 + 14, groups[g].first, kBlack, 0);
  }
  return f;
}

Figure alpha_figure(const std::vector<double>& alpha, const std::vector<double>& f1, const std::string& title) {
  if (alpha.empty() || alpha.size() != f1.size()) throw ShapeMismatch("alpha plot needs one score per alpha value");
  double lo = *std::min_element(f1.begin(), f1.end()), hi = *std::max_element(f1.begin(), f1.end());
  lo = std::max(0.0, std::floor(lo * 20 - 0.5) / 20);
  hi = std::min(1.0, std::ceil(hi * 20 + 0.5) / 20);
  if (hi <= lo) hi = lo + 0.05;
  Figure f(520, 340);
  const Axis x{0, 1, 70, 500}, y{lo, hi, 290, 40};
  f.text(f.width() / 2.0, 16, title, kBlack, 0);
  axes(f, x, y, 1, 2, "weight alpha", "macro F1");
  for (std::size_t i = 0; i + 1 < alpha.size(); ++i)
    f.line(x(alpha[i]), y(f1[i]), x(alpha[i + 1]), y(f1[i + 1]), palette(0), 2);
  for (std::size_t i = 0; i < alpha.size(); ++i) f.circle(x(alpha[i]), y(f1[i]), 4, palette(0), "marker");
  return f;
}

Figure tsne_figure(const Eigen::MatrixXd& xy, const std::vector<int>& labels, const std::vector<std::string>& class_map,
                   const std::string& title) {
  if (xy.cols() != 2 || static_cast<std::size_t>(xy.rows()) != labels.size())
    throw ShapeMismatch("scatter needs N x 2 coordinates and N labels");
  std::vector<int> present;
  for (int l : labels) {
    if (l < 0 || l >= static_cast<int>(class_map.size())) throw LabelRange("scatter label outside the class map");
    if (std::find(present.begin(), present.end(), l) == present.end()) present.push_back(l);
  }
  std::sort(present.begin(), present.end());
  const Eigen::Vector2d mn = xy.colwise().minCoeff(), mx = xy.colwise().maxCoeff();
  const double padx = std::max(1e-9, 0.05 * (mx(0) - mn(0))), pady = std::max(1e-9, 0.05 * (mx(1) - mn(1)));
  Figure f(600, 460);
  const Axis x{mn(0) - padx, mx(0) + padx, 40, 440}, y{mn(1) - pady, mx(1) + pady, 420, 40};
  f.text(f.width() / 2.0, 16, title, kBlack, 0);
  f.frame(x.px0, y.px1, x.px1 - x.px0, y.px0 - y.px1, kGrey);
  for (Eigen::Index i = 0; i < xy.rows(); ++i) f.circle(x(xy(i, 0)), y(xy(i, 1)), 2.5, palette(labels[i]), "point");
  for (std::size_t k = 0; k < present.size(); ++k) {
    const double ly = 50 + 18 * static_cast<double>(k);
    f.rect(456, ly - 5, 10, 10, palette(present[k]), "legend");
    f.text(472, ly, class_map[present[k]], kBlack, -1);
  }
  return f;
}

}  // namespace xmodal
