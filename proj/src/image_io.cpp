// SPDX-License-Identifier: Apache-2.0

#include "fcnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "fcnet/autodiff.hpp"

namespace fcnet {

namespace fs = std::filesystem;

namespace {

struct PngImage {
  png_image image;

  PngImage() {
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

void begin_read(PngImage& png, const fs::path& path) {
  std::error_code ec;
  if (!fs::exists(path, ec)) throw IoError("image not found: " + path.string());
  if (fs::file_size(path, ec) == 0) throw IoError("empty image file: " + path.string());
  if (!png_image_begin_read_from_file(&png.image, path.c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + png.image.message);
}

fs::path temp_sibling(const fs::path& path) {
  fs::path tmp = path;
  tmp += ".tmp";
  return tmp;
}

}  // namespace

Tensor read_png(const fs::path& path) {
  PngImage png;
  begin_read(png, path);
  png.image.format = PNG_FORMAT_RGB;
  const int h = static_cast<int>(png.image.height), w = static_cast<int>(png.image.width);
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, buffer.data(), 0, nullptr))
    throw IoError("cannot decode PNG " + path.string() + ": " + png.image.message);
  Tensor out({1, 3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(0, c, y, x) = static_cast<float>(buffer[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
  return out;
}

std::pair<int, int> png_extents(const fs::path& path) {
  PngImage png;
  begin_read(png, path);
  return {static_cast<int>(png.image.height), static_cast<int>(png.image.width)};
}

void write_png(const fs::path& path, const Tensor& image) {
  require_rank4(image, "write_png");
  if (image.n() != 1 || (image.c() != 1 && image.c() != 3))
    throw ShapeError("write_png: expected 1x1xHxW or 1x3xHxW, got " + to_string(image.shape()));
  const int h = image.h(), w = image.w(), channels = image.c();
  std::vector<png_byte> buffer(static_cast<std::size_t>(h) * w * channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        const float v = std::clamp(image.at(0, c, y, x), 0.0f, 1.0f);
        buffer[(static_cast<std::size_t>(y) * w + x) * channels + c] =
            static_cast<png_byte>(std::floor(v * 255.0f + 0.5f));
      }
  PngImage png;
  png.image.width = static_cast<png_uint_32>(w);
  png.image.height = static_cast<png_uint_32>(h);
  png.image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const fs::path tmp = temp_sibling(path);
  if (!png_image_write_to_file(&png.image, tmp.c_str(), 0, buffer.data(), 0, nullptr)) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw IoError("cannot write PNG " + path.string() + ": " + png.image.message);
  }
  fs::rename(tmp, path);
}

Tensor limit_longer_side(const Tensor& image, int max_side) {
  require_rank4(image, "limit_longer_side");
  const int longer = std::max(image.h(), image.w());
  if (max_side <= 0 || longer <= max_side) return image;
  const double s = static_cast<double>(max_side) / longer;
  const int h = std::max(1, static_cast<int>(std::lround(image.h() * s)));
  const int w = std::max(1, static_cast<int>(std::lround(image.w() * s)));
  return ad::bilinear_resize_forward(image, h, w);
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  const fs::path tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace fcnet
