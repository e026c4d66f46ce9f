#include "sfr/png_io.hpp"

#include "sfr/common.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace sfr {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::string& path, int width, int height, int bit_depth,
               int color_type, const std::vector<png_bytep>& rows) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("png: cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // buffers are little-endian
  png_write_image(png, const_cast<png_bytep*>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FilePtr fp;

  explicit PngReader(const std::string& path) : fp(std::fopen(path.c_str(), "rb")) {
    if (!fp) throw IoError("png: cannot open: " + path);
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info = png_create_info_struct(png);
  }
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

}  // namespace

void write_png_rgb8(const std::string& path, const ImageRgb8& img) {
  std::vector<png_bytep> rows(img.height());
  for (int y = 0; y < img.height(); ++y)
    rows[y] = reinterpret_cast<png_bytep>(const_cast<Rgb8*>(&img.at(0, y)));
  write_png(path, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB, rows);
}

ImageRgb8 read_png_rgb8(const std::string& path) {
  PngReader r(path);
  if (setjmp(png_jmpbuf(r.png))) throw IoError("png: read failed: " + path);
  png_init_io(r.png, r.fp.get());
  png_read_info(r.png, r.info);
  png_set_strip_16(r.png);
  png_set_palette_to_rgb(r.png);
  png_set_strip_alpha(r.png);
  png_set_gray_to_rgb(r.png);
  png_read_update_info(r.png, r.info);
  const int w = png_get_image_width(r.png, r.info);
  const int h = png_get_image_height(r.png, r.info);
  ImageRgb8 img(w, h);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = reinterpret_cast<png_bytep>(&img.at(0, y));
  png_read_image(r.png, rows.data());
  return img;
}

void write_png_depth16(const std::string& path, const ImageD& depth_m, double scale) {
  const int w = depth_m.width(), h = depth_m.height();
  std::vector<std::uint16_t> buf(size_t(w) * h);
  for (size_t i = 0; i < depth_m.size(); ++i) {
    const double raw = depth_m[i] > 0.0 ? depth_m[i] * scale : 0.0;
    buf[i] = std::uint16_t(std::clamp(std::lround(raw), 0l, 65535l));
  }
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = reinterpret_cast<png_bytep>(&buf[size_t(y) * w]);
  write_png(path, w, h, 16, PNG_COLOR_TYPE_GRAY, rows);
}

ImageD read_png_depth16(const std::string& path, double scale) {
  PngReader r(path);
  if (setjmp(png_jmpbuf(r.png))) throw IoError("png: read failed: " + path);
  png_init_io(r.png, r.fp.get());
  png_read_info(r.png, r.info);
  if (png_get_bit_depth(r.png, r.info) != 16 ||
      png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY)
    throw IoError("png: expected 16-bit grayscale depth: " + path);
  png_set_swap(r.png);
  png_read_update_info(r.png, r.info);
  const int w = png_get_image_width(r.png, r.info);
  const int h = png_get_image_height(r.png, r.info);
  std::vector<std::uint16_t> buf(size_t(w) * h);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = reinterpret_cast<png_bytep>(&buf[size_t(y) * w]);
  png_read_image(r.png, rows.data());
  ImageD depth(w, h, 0.0);
  for (size_t i = 0; i < depth.size(); ++i)
    if (buf[i] > 0) depth[i] = buf[i] / scale;
  return depth;
}

}  // namespace sfr
