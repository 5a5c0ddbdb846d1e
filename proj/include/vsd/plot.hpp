#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "vsd/image.hpp"

namespace vsd::plot {

using Color = std::array<std::uint8_t, 3>;

inline constexpr Color kBlack{20, 20, 20};
inline constexpr std::array<Color, 6> kSeriesColors{{{31, 119, 180},
                                                     {255, 127, 14},
                                                     {44, 160, 44},
                                                     {214, 39, 40},
                                                     {148, 103, 189},
                                                     {140, 86, 75}}};

// Minimal raster chart writer: enough for the report figures, nothing more.
class Figure {
 public:
  Figure(int width, int height, std::string title, std::string x_label, std::string y_label);

  void add_line(const std::vector<double>& x, const std::vector<double>& y, const std::string& name,
                bool with_markers = false);
  // grouped bars: one group per category label, one bar per series
  void add_bar_groups(const std::vector<std::string>& group_labels,
                      const std::vector<std::pair<std::string, std::vector<double>>>& series);

  void save(const std::filesystem::path& path);

 private:
  struct LineSeries {
    std::vector<double> x, y;
    std::string name;
    bool markers;
  };
  int width_, height_;
  std::string title_, x_label_, y_label_;
  std::vector<LineSeries> lines_;
  std::vector<std::string> group_labels_;
  std::vector<std::pair<std::string, std::vector<double>>> bars_;
};

// 5x7 bitmap text, scale >= 1
void draw_text(ImageU8& img, int x, int y, const std::string& text, Color color, int scale = 1);
void draw_line(ImageU8& img, double x0, double y0, double x1, double y1, Color color);
void fill_rect(ImageU8& img, int x0, int y0, int x1, int y1, Color color);

}  // namespace vsd::plot
