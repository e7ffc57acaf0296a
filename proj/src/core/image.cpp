#include "core/image.h"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace tritex {

void save_png(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("save_png: channels must be 1 or 3");
  if (static_cast<int64_t>(img.px.size()) != img.height * img.width * img.channels)
    throw std::invalid_argument("save_png: pixel buffer size mismatch");

  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("save_png: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw std::runtime_error("save_png: libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("save_png: libpng error writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int64_t stride = img.width * img.channels;
  for (int64_t y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.px.data() + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageU8 load_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw std::runtime_error("load_png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw std::runtime_error("load_png: libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("load_png: libpng error reading " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  ImageU8 img;
  img.height = png_get_image_height(png, info);
  img.width = png_get_image_width(png, info);
  img.channels = png_get_channels(png, info);
  if (img.channels != 1 && img.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("load_png: unsupported channel count in " + path);
  }
  img.px.resize(img.height * img.width * img.channels);
  const int64_t stride = img.width * img.channels;
  for (int64_t y = 0; y < img.height; ++y) png_read_row(png, img.px.data() + y * stride, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

ImageU8 tensor_to_u8(const Tensor& img) {
  if (!img.defined() || (img.rank() != 2 && img.rank() != 3))
    throw std::invalid_argument("tensor_to_u8: expected [H,W] or [H,W,C]");
  ImageU8 out;
  out.height = img.dim(0);
  out.width = img.dim(1);
  out.channels = img.rank() == 2 ? 1 : img.dim(2);
  out.px.resize(img.numel());
  const double* d = img.data();
  for (int64_t i = 0; i < img.numel(); ++i) {
    const double v = std::min(1.0, std::max(0.0, d[i]));
    out.px[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

Tensor u8_to_tensor(const ImageU8& img) {
  Shape s = img.channels == 1 ? Shape{img.height, img.width}
                              : Shape{img.height, img.width, img.channels};
  std::vector<double> d(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) d[i] = img.px[i] / 255.0;
  return Tensor::from(std::move(s), std::move(d));
}

}  // namespace tritex
