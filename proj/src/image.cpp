#include "vsd/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "vsd/errors.hpp"

namespace vsd {

ImageU8::ImageU8(int w, int h, std::array<std::uint8_t, 3> fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3) {
  for (std::size_t i = 0; i < data.size(); i += 3) {
    data[i] = fill[0];
    data[i + 1] = fill[1];
    data[i + 2] = fill[2];
  }
}

ImageU8 quantize(const ImageF& src) {
  ImageU8 out;
  out.width = src.width;
  out.height = src.height;
  out.data.resize(src.data.size());
  for (std::size_t i = 0; i < src.data.size(); ++i) {
    const float v = std::clamp(src.data[i], 0.f, 1.f);
    out.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.f));
  }
  return out;
}

ImageF to_float(const ImageU8& src) {
  ImageF out(src.width, src.height);
  for (std::size_t i = 0; i < src.data.size(); ++i) out.data[i] = src.data[i] / 255.f;
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::filesystem::path& path, const ImageU8& img) {
  if (img.width <= 0 || img.height <= 0) throw IoFailure("write_png: empty image for " + path.string());
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoFailure("write_png: cannot open " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoFailure("write_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoFailure("write_png: encode failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (int r = 0; r < img.height; ++r)
    rows[r] = const_cast<png_bytep>(img.data.data() + 3 * static_cast<std::size_t>(r) * img.width);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageU8 read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoFailure("read_png: cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoFailure("read_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoFailure("read_png: decode failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_expand(png);           // palette/gray/low-bit -> 8 bit
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  ImageU8 img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.data.resize(static_cast<std::size_t>(img.width) * img.height * 3);

  std::vector<png_bytep> rows(img.height);
  for (int r = 0; r < img.height; ++r)
    rows[r] = img.data.data() + 3 * static_cast<std::size_t>(r) * img.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

std::vector<float> resize_bilinear(const ImageU8& src, int out_w, int out_h) {
  std::vector<float> out(static_cast<std::size_t>(out_w) * out_h * 3);
  const float sx = static_cast<float>(src.width) / out_w;
  const float sy = static_cast<float>(src.height) / out_h;
  for (int r = 0; r < out_h; ++r) {
    // map output pixel centers into source pixel-center coordinates
    const float fy = (r + 0.5f) * sy - 0.5f;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.height - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const float wy = std::clamp(fy - y0, 0.f, 1.f);
    for (int c = 0; c < out_w; ++c) {
      const float fx = (c + 0.5f) * sx - 0.5f;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src.width - 1);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const float wx = std::clamp(fx - x0, 0.f, 1.f);
      const std::uint8_t* p00 = src.px(y0, x0);
      const std::uint8_t* p01 = src.px(y0, x1);
      const std::uint8_t* p10 = src.px(y1, x0);
      const std::uint8_t* p11 = src.px(y1, x1);
      float* o = out.data() + 3 * (static_cast<std::size_t>(r) * out_w + c);
      for (int k = 0; k < 3; ++k) {
        const float top = p00[k] + (p01[k] - p00[k]) * wx;
        const float bot = p10[k] + (p11[k] - p10[k]) * wx;
        o[k] = (top + (bot - top) * wy) / 255.f;
      }
    }
  }
  return out;
}

}  // namespace vsd
