#include "gs/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <vector>

namespace gs {

namespace {

struct FileCloser {
  FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

void write_rows(const std::string& path, int64_t w, int64_t h,
                const std::vector<unsigned char>& rgb) {
  FILE* f = std::fopen(path.c_str(), "wb");
  GS_CHECK(f, "cannot open '" + path + "' for writing");
  FileCloser closer{f};
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  GS_CHECK(png, "png writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("png write failed for '" + path + "'");
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int64_t y = 0; y < h; ++y)
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(rgb.data() + y * w * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor read_png_rgb(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  GS_CHECK(f, "cannot open '" + path + "'");
  FileCloser closer{f};
  unsigned char sig[8];
  GS_CHECK(std::fread(sig, 1, 8, f) == 8 && !png_sig_cmp(sig, 0, 8),
           "'" + path + "' is not a png file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  GS_CHECK(png, "png reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("png read failed for '" + path + "'");
  }
  png_init_io(png, f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  int64_t w = png_get_image_width(png, info);
  int64_t h = png_get_image_height(png, info);
  GS_CHECK(png_get_channels(png, info) == 3, "png '" + path + "' did not decode to RGB");
  std::vector<unsigned char> rgb(static_cast<size_t>(w * h * 3));
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int64_t y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = rgb.data() + y * w * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor img = Tensor::zeros({3, h, w});
  double* pd = img.data().data();
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        pd[c * h * w + y * w + x] = rgb[static_cast<size_t>((y * w + x) * 3 + c)] / 255.0;
  return img;
}

void write_png_rgb(const std::string& path, const Tensor& img) {
  GS_CHECK(img.ndim() == 3 && img.dim(0) == 3, "write_png_rgb: image must be [3,H,W]");
  int64_t h = img.dim(1), w = img.dim(2);
  const double* pd = img.data().data();
  std::vector<unsigned char> rgb(static_cast<size_t>(w * h * 3));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        double v = pd[c * h * w + y * w + x];
        GS_CHECK(std::isfinite(v), "write_png_rgb: non-finite pixel");
        v = std::min(1.0, std::max(0.0, v));
        rgb[static_cast<size_t>((y * w + x) * 3 + c)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
  write_rows(path, w, h, rgb);
}

void write_png_gray(const std::string& path, const Tensor& map) {
  GS_CHECK(map.ndim() == 2, "write_png_gray: map must be [H,W]");
  int64_t h = map.dim(0), w = map.dim(1);
  const double* pd = map.data().data();
  double lo = pd[0], hi = pd[0];
  for (int64_t i = 0; i < h * w; ++i) {
    GS_CHECK(std::isfinite(pd[i]), "write_png_gray: non-finite value");
    lo = std::min(lo, pd[i]);
    hi = std::max(hi, pd[i]);
  }
  std::vector<unsigned char> rgb(static_cast<size_t>(w * h * 3));
  for (int64_t i = 0; i < h * w; ++i) {
    double v = hi > lo ? (pd[i] - lo) / (hi - lo) : 0.5;
    unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
    rgb[static_cast<size_t>(i * 3)] = b;
    rgb[static_cast<size_t>(i * 3 + 1)] = b;
    rgb[static_cast<size_t>(i * 3 + 2)] = b;
  }
  write_rows(path, w, h, rgb);
}

}  // namespace gs
