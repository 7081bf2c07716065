#include "jelly/image_io.hpp"

#include <png.h>

#include <cstring>
#include <vector>

#include "jelly/errors.hpp"

namespace jelly::io {
namespace {

std::vector<std::uint8_t> read_raw(const std::filesystem::path& path, std::uint32_t format,
                                   int& width, int& height) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DecodeError(path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw DecodeError(path.string() + ": " + img.message);
  }
  width = static_cast<int>(img.width);
  height = static_cast<int>(img.height);
  return buffer;
}

void write_raw(const std::filesystem::path& path, std::uint32_t format, int width, int height,
               const void* pixels) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels, 0, nullptr)) {
    throw Error("cannot write " + path.string() + ": " + img.message);
  }
}

}  // namespace

Image read_png_gray(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto raw = read_raw(path, PNG_FORMAT_GRAY, w, h);
  Image out(w, h);
  for (std::size_t i = 0; i < raw.size(); ++i) out.values()[i] = static_cast<float>(raw[i]) / 255.0f;
  return out;
}

void write_png_gray(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> raw(image.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    float v = image.values()[i];
    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    raw[i] = static_cast<std::uint8_t>(static_cast<int>(v * 255.0f + 0.5f));
  }
  write_raw(path, PNG_FORMAT_GRAY, image.width(), image.height(), raw.data());
}

void write_png_mask(const std::filesystem::path& path, const Mask& mask, bool black_on_white) {
  std::vector<std::uint8_t> raw(mask.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const bool set = mask.values()[i] != 0;
    raw[i] = (set != black_on_white) ? 255 : 0;
  }
  write_raw(path, PNG_FORMAT_GRAY, mask.width(), mask.height(), raw.data());
}

Mask read_png_mask(const std::filesystem::path& path, bool black_on_white) {
  int w = 0, h = 0;
  const auto raw = read_raw(path, PNG_FORMAT_GRAY, w, h);
  Mask out(w, h);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const bool bright = raw[i] >= 128;
    out.values()[i] = (bright != black_on_white) ? 1 : 0;
  }
  return out;
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image) {
  static_assert(sizeof(Rgb) == 3);
  write_raw(path, PNG_FORMAT_RGB, image.width(), image.height(), image.data());
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto raw = read_raw(path, PNG_FORMAT_RGB, w, h);
  RgbImage out(w, h);
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

}  // namespace jelly::io
