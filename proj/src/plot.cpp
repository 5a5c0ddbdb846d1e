#include "vsd/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "vsd/errors.hpp"

namespace vsd::plot {

namespace {

// classic 5x7 column-encoded bitmap font, ASCII 32..126 (LSB = top row)
constexpr std::uint8_t kFont5x7[95][5] = {
    {0x00, 0x00, 0x00, 0x00, 0x00}, {0x00, 0x00, 0x5F, 0x00, 0x00}, {0x00, 0x07, 0x00, 0x07, 0x00},
    {0x14, 0x7F, 0x14, 0x7F, 0x14}, {0x24, 0x2A, 0x7F, 0x2A, 0x12}, {0x23, 0x13, 0x08, 0x64, 0x62},
    {0x36, 0x49, 0x55, 0x22, 0x50}, {0x00, 0x05, 0x03, 0x00, 0x00}, {0x00, 0x1C, 0x22, 0x41, 0x00},
    {0x00, 0x41, 0x22, 0x1C, 0x00}, {0x08, 0x2A, 0x1C, 0x2A, 0x08}, {0x08, 0x08, 0x3E, 0x08, 0x08},
    {0x00, 0x50, 0x30, 0x00, 0x00}, {0x08, 0x08, 0x08, 0x08, 0x08}, {0x00, 0x60, 0x60, 0x00, 0x00},
    {0x20, 0x10, 0x08, 0x04, 0x02}, {0x3E, 0x51, 0x49, 0x45, 0x3E}, {0x00, 0x42, 0x7F, 0x40, 0x00},
    {0x42, 0x61, 0x51, 0x49, 0x46}, {0x21, 0x41, 0x45, 0x4B, 0x31}, {0x18, 0x14, 0x12, 0x7F, 0x10},
    {0x27, 0x45, 0x45, 0x45, 0x39}, {0x3C, 0x4A, 0x49, 0x49, 0x30}, {0x01, 0x71, 0x09, 0x05, 0x03},
    {0x36, 0x49, 0x49, 0x49, 0x36}, {0x06, 0x49, 0x49, 0x29, 0x1E}, {0x00, 0x36, 0x36, 0x00, 0x00},
    {0x00, 0x56, 0x36, 0x00, 0x00}, {0x00, 0x08, 0x14, 0x22, 0x41}, {0x14, 0x14, 0x14, 0x14, 0x14},
    {0x41, 0x22, 0x14, 0x08, 0x00}, {0x02, 0x01, 0x51, 0x09, 0x06}, {0x32, 0x49, 0x79, 0x41, 0x3E},
    {0x7E, 0x11, 0x11, 0x11, 0x7E}, {0x7F, 0x49, 0x49, 0x49, 0x36}, {0x3E, 0x41, 0x41, 0x41, 0x22},
    {0x7F, 0x41, 0x41, 0x22, 0x1C}, {0x7F, 0x49, 0x49, 0x49, 0x41}, {0x7F, 0x09, 0x09, 0x01, 0x01},
    {0x3E, 0x41, 0x41, 0x51, 0x32}, {0x7F, 0x08, 0x08, 0x08, 0x7F}, {0x00, 0x41, 0x7F, 0x41, 0x00},
    {0x20, 0x40, 0x41, 0x3F, 0x01}, {0x7F, 0x08, 0x14, 0x22, 0x41}, {0x7F, 0x40, 0x40, 0x40, 0x40},
    {0x7F, 0x02, 0x04, 0x02, 0x7F}, {0x7F, 0x04, 0x08, 0x10, 0x7F}, {0x3E, 0x41, 0x41, 0x41, 0x3E},
    {0x7F, 0x09, 0x09, 0x09, 0x06}, {0x3E, 0x41, 0x51, 0x21, 0x5E}, {0x7F, 0x09, 0x19, 0x29, 0x46},
    {0x46, 0x49, 0x49, 0x49, 0x31}, {0x01, 0x01, 0x7F, 0x01, 0x01}, {0x3F, 0x40, 0x40, 0x40, 0x3F},
    {0x1F, 0x20, 0x40, 0x20, 0x1F}, {0x7F, 0x20, 0x18, 0x20, 0x7F}, {0x63, 0x14, 0x08, 0x14, 0x63},
    {0x03, 0x04, 0x78, 0x04, 0x03}, {0x61, 0x51, 0x49, 0x45, 0x43}, {0x00, 0x00, 0x7F, 0x41, 0x41},
    {0x02, 0x04, 0x08, 0x10, 0x20}, {0x41, 0x41, 0x7F, 0x00, 0x00}, {0x04, 0x02, 0x01, 0x02, 0x04},
    {0x40, 0x40, 0x40, 0x40, 0x40}, {0x00, 0x01, 0x02, 0x04, 0x00}, {0x20, 0x54, 0x54, 0x54, 0x78},
    {0x7F, 0x48, 0x44, 0x44, 0x38}, {0x38, 0x44, 0x44, 0x44, 0x20}, {0x38, 0x44, 0x44, 0x48, 0x7F},
    {0x38, 0x54, 0x54, 0x54, 0x18}, {0x08, 0x7E, 0x09, 0x01, 0x02}, {0x08, 0x14, 0x54, 0x54, 0x3C},
    {0x7F, 0x08, 0x04, 0x04, 0x78}, {0x00, 0x44, 0x7D, 0x40, 0x00}, {0x20, 0x40, 0x44, 0x3D, 0x00},
    {0x00, 0x7F, 0x10, 0x28, 0x44}, {0x00, 0x41, 0x7F, 0x40, 0x00}, {0x7C, 0x04, 0x18, 0x04, 0x78},
    {0x7C, 0x08, 0x04, 0x04, 0x78}, {0x38, 0x44, 0x44, 0x44, 0x38}, {0x7C, 0x14, 0x14, 0x14, 0x08},
    {0x08, 0x14, 0x14, 0x18, 0x7C}, {0x7C, 0x08, 0x04, 0x04, 0x08}, {0x48, 0x54, 0x54, 0x54, 0x20},
    {0x04, 0x3F, 0x44, 0x40, 0x20}, {0x3C, 0x40, 0x40, 0x20, 0x7C}, {0x1C, 0x20, 0x40, 0x20, 0x1C},
    {0x3C, 0x40, 0x30, 0x40, 0x3C}, {0x44, 0x28, 0x10, 0x28, 0x44}, {0x0C, 0x50, 0x50, 0x50, 0x3C},
    {0x44, 0x64, 0x54, 0x4C, 0x44}, {0x00, 0x08, 0x36, 0x41, 0x00}, {0x00, 0x00, 0x7F, 0x00, 0x00},
    {0x00, 0x41, 0x36, 0x08, 0x00}, {0x08, 0x08, 0x2A, 0x1C, 0x08}};

void put_px(ImageU8& img, int x, int y, Color c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  std::uint8_t* p = img.px(y, x);
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

std::string format_tick(double v) {
  std::ostringstream os;
  const double a = std::abs(v);
  if (v == 0.0)
    os << "0";
  else if (a >= 100.0)
    os << static_cast<long long>(std::llround(v));
  else if (a >= 1.0) {
    os.precision(2);
    os << std::fixed << v;
  } else {
    os.precision(3);
    os << std::fixed << v;
  }
  return os.str();
}

}  // namespace

void draw_text(ImageU8& img, int x, int y, const std::string& text, Color color, int scale) {
  int cx = x;
  for (char ch : text) {
    const int code = static_cast<unsigned char>(ch);
    if (code < 32 || code > 126) {
      cx += 6 * scale;
      continue;
    }
    const std::uint8_t* glyph = kFont5x7[code - 32];
    for (int col = 0; col < 5; ++col)
      for (int row = 0; row < 7; ++row)
        if (glyph[col] & (1 << row))
          for (int sx = 0; sx < scale; ++sx)
            for (int sy = 0; sy < scale; ++sy)
              put_px(img, cx + col * scale + sx, y + row * scale + sy, color);
    cx += 6 * scale;
  }
}

void draw_line(ImageU8& img, double x0, double y0, double x1, double y1, Color color) {
  const double dx = x1 - x0, dy = y1 - y0;
  const int steps = std::max(2, static_cast<int>(std::ceil(std::max(std::abs(dx), std::abs(dy)))) + 1);
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    put_px(img, static_cast<int>(std::lround(x0 + t * dx)), static_cast<int>(std::lround(y0 + t * dy)), color);
  }
}

void fill_rect(ImageU8& img, int x0, int y0, int x1, int y1, Color color) {
  for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
    for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) put_px(img, x, y, color);
}

Figure::Figure(int width, int height, std::string title, std::string x_label, std::string y_label)
    : width_(width), height_(height), title_(std::move(title)), x_label_(std::move(x_label)),
      y_label_(std::move(y_label)) {}

void Figure::add_line(const std::vector<double>& x, const std::vector<double>& y, const std::string& name,
                      bool with_markers) {
  if (x.size() != y.size()) throw LengthMismatch("Figure::add_line: x/y size mismatch");
  lines_.push_back({x, y, name, with_markers});
}

void Figure::add_bar_groups(const std::vector<std::string>& group_labels,
                            const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  for (const auto& s : series)
    if (s.second.size() != group_labels.size())
      throw LengthMismatch("Figure::add_bar_groups: series length mismatch");
  group_labels_ = group_labels;
  bars_ = series;
}

void Figure::save(const std::filesystem::path& path) {
  ImageU8 img(width_, height_, {250, 250, 250});
  const int ml = 64, mr = 130, mt = 28, mb = 46;
  const int x0 = ml, x1 = width_ - mr, y0 = mt, y1 = height_ - mb;

  double lo_x = 0, hi_x = 1, lo_y = 0, hi_y = 1;
  bool have = false;
  for (const auto& s : lines_)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!have) {
        lo_x = hi_x = s.x[i];
        lo_y = hi_y = s.y[i];
        have = true;
      }
      lo_x = std::min(lo_x, s.x[i]);
      hi_x = std::max(hi_x, s.x[i]);
      lo_y = std::min(lo_y, s.y[i]);
      hi_y = std::max(hi_y, s.y[i]);
    }
  if (!bars_.empty()) {
    lo_x = 0;
    hi_x = static_cast<double>(group_labels_.size());
    for (const auto& s : bars_)
      for (double v : s.second) {
        if (!have) {
          lo_y = hi_y = v;
          have = true;
        }
        lo_y = std::min(lo_y, v);
        hi_y = std::max(hi_y, v);
      }
    lo_y = std::min(lo_y, 0.0);
  }
  if (!have) hi_y = hi_x = 1.0;
  if (hi_y <= lo_y) hi_y = lo_y + 1.0;
  if (hi_x <= lo_x) hi_x = lo_x + 1.0;
  const double pad_y = 0.06 * (hi_y - lo_y);
  lo_y -= (bars_.empty() ? pad_y : 0.0);
  hi_y += pad_y;

  auto to_px = [&](double x, double y) {
    const double px = x0 + (x - lo_x) / (hi_x - lo_x) * (x1 - x0);
    const double py = y1 - (y - lo_y) / (hi_y - lo_y) * (y1 - y0);
    return std::pair<double, double>{px, py};
  };

  // frame + ticks
  draw_line(img, x0, y0, x0, y1, kBlack);
  draw_line(img, x0, y1, x1, y1, kBlack);
  for (int i = 0; i <= 5; ++i) {
    const double vy = lo_y + (hi_y - lo_y) * i / 5.0;
    const auto [px, py] = to_px(lo_x, vy);
    draw_line(img, x0 - 3, py, x0, py, kBlack);
    draw_text(img, 6, static_cast<int>(py) - 3, format_tick(vy), kBlack);
    if (i > 0) draw_line(img, x0, py, x1, py, {225, 225, 225});
  }
  if (bars_.empty()) {
    for (int i = 0; i <= 5; ++i) {
      const double vx = lo_x + (hi_x - lo_x) * i / 5.0;
      const auto [px, py] = to_px(vx, lo_y);
      draw_line(img, px, y1, px, y1 + 3, kBlack);
      draw_text(img, static_cast<int>(px) - 10, y1 + 7, format_tick(vx), kBlack);
    }
  } else {
    for (std::size_t g = 0; g < group_labels_.size(); ++g) {
      const auto [px, py] = to_px(g + 0.5, lo_y);
      draw_text(img, static_cast<int>(px) - 3 * static_cast<int>(group_labels_[g].size()), y1 + 7,
                group_labels_[g], kBlack);
    }
  }
  draw_text(img, (x0 + x1) / 2 - 3 * static_cast<int>(title_.size()), 8, title_, kBlack);
  draw_text(img, (x0 + x1) / 2 - 3 * static_cast<int>(x_label_.size()), height_ - 16, x_label_, kBlack);
  draw_text(img, 6, 8, y_label_, kBlack);

  // bars
  if (!bars_.empty()) {
    const double group_w = 1.0;
    const double bar_w = group_w * 0.8 / static_cast<double>(bars_.size());
    for (std::size_t s = 0; s < bars_.size(); ++s) {
      const Color c = kSeriesColors[s % kSeriesColors.size()];
      for (std::size_t g = 0; g < group_labels_.size(); ++g) {
        const double gx = g + 0.1 + s * bar_w;
        const auto [bx0, by0] = to_px(gx, bars_[s].second[g]);
        const auto [bx1, by1] = to_px(gx + bar_w * 0.9, lo_y);
        fill_rect(img, static_cast<int>(bx0), static_cast<int>(by0), static_cast<int>(bx1),
                  static_cast<int>(by1), c);
      }
    }
  }
  // lines
  for (std::size_t s = 0; s < lines_.size(); ++s) {
    const Color c = kSeriesColors[s % kSeriesColors.size()];
    const auto& L = lines_[s];
    for (std::size_t i = 1; i < L.x.size(); ++i) {
      const auto [ax, ay] = to_px(L.x[i - 1], L.y[i - 1]);
      const auto [bx, by] = to_px(L.x[i], L.y[i]);
      draw_line(img, ax, ay, bx, by, c);
    }
    if (L.markers)
      for (std::size_t i = 0; i < L.x.size(); ++i) {
        const auto [ax, ay] = to_px(L.x[i], L.y[i]);
        fill_rect(img, static_cast<int>(ax) - 2, static_cast<int>(ay) - 2, static_cast<int>(ax) + 2,
                  static_cast<int>(ay) + 2, c);
      }
  }
  // legend
  int ly = y0 + 4;
  auto legend_entry = [&](const std::string& name, Color c) {
    fill_rect(img, x1 + 8, ly, x1 + 20, ly + 6, c);
    draw_text(img, x1 + 24, ly, name, kBlack);
    ly += 12;
  };
  for (std::size_t s = 0; s < lines_.size(); ++s)
    legend_entry(lines_[s].name, kSeriesColors[s % kSeriesColors.size()]);
  for (std::size_t s = 0; s < bars_.size(); ++s)
    legend_entry(bars_[s].first, kSeriesColors[s % kSeriesColors.size()]);

  write_png(path, img);
}

}  // namespace vsd::plot
