#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace vsd {

// Interleaved 8-bit RGB image, row-major, top-left origin.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // height*width*3

  ImageU8() = default;
  ImageU8(int w, int h, std::array<std::uint8_t, 3> fill = {0, 0, 0});

  std::uint8_t* px(int row, int col) { return data.data() + 3 * (static_cast<std::size_t>(row) * width + col); }
  const std::uint8_t* px(int row, int col) const {
    return data.data() + 3 * (static_cast<std::size_t>(row) * width + col);
  }
  bool same_size(const ImageU8& o) const { return width == o.width && height == o.height; }
};

// Float RGB accumulation canvas in [0,1]; rendering happens here, then quantizes.
struct ImageF {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // height*width*3

  ImageF() = default;
  ImageF(int w, int h, float fill = 0.f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  float* px(int row, int col) { return data.data() + 3 * (static_cast<std::size_t>(row) * width + col); }
  const float* px(int row, int col) const { return data.data() + 3 * (static_cast<std::size_t>(row) * width + col); }
};

ImageU8 quantize(const ImageF& src);
ImageF to_float(const ImageU8& src);

// PNG round-trip via libpng. Reads gray/palette/RGBA as 8-bit RGB.
void write_png(const std::filesystem::path& path, const ImageU8& img);
ImageU8 read_png(const std::filesystem::path& path);

// Bilinear resample to out_w x out_h, float output in [0,1], RGB interleaved.
std::vector<float> resize_bilinear(const ImageU8& src, int out_w, int out_h);

}  // namespace vsd
