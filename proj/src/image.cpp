#include "gamessl/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "gamessl/error.hpp"

namespace gamessl {

Frame crop_resize(const Frame& src, const CropBox& box, std::size_t out_h, std::size_t out_w) {
  if (src.empty() || out_h == 0 || out_w == 0) throw DimensionError("crop_resize: empty source or target");
  Frame out(out_h, out_w);
  const double max_x = static_cast<double>(src.width - 1);
  const double max_y = static_cast<double>(src.height - 1);
  const double step_x = box.width / static_cast<double>(out_w);
  const double step_y = box.height / static_cast<double>(out_h);
  for (std::size_t i = 0; i < out_h; ++i) {
    const double sy = std::clamp(box.y0 + (static_cast<double>(i) + 0.5) * step_y - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(sy);
    const auto y1 = std::min(y0 + 1, src.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t j = 0; j < out_w; ++j) {
      const double sx = std::clamp(box.x0 + (static_cast<double>(j) + 0.5) * step_x - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(sx);
      const auto x1 = std::min(x0 + 1, src.width - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = src.at(y0, x0, c) * (1.0 - fx) + src.at(y0, x1, c) * fx;
        const double bottom = src.at(y1, x0, c) * (1.0 - fx) + src.at(y1, x1, c) * fx;
        out.at(i, j, c) = static_cast<float>(top * (1.0 - fy) + bottom * fy);
      }
    }
  }
  return out;
}

Frame resize_bilinear(const Frame& src, std::size_t out_h, std::size_t out_w) {
  if (src.height == out_h && src.width == out_w) return src;
  return crop_resize(src, {0.0, 0.0, static_cast<double>(src.width), static_cast<double>(src.height)}, out_h, out_w);
}

Frame read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError("cannot decode image " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode image " + path.string() + ": " + msg);
  }
  Frame frame(image.height, image.width);
  for (std::size_t i = 0; i < buffer.size(); ++i) frame.pixels[i] = static_cast<float>(buffer[i]) / 255.0f;
  return frame;
}

void write_png(const std::filesystem::path& path, const Frame& frame) {
  std::vector<std::uint8_t> buffer(frame.pixels.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    buffer[i] = static_cast<std::uint8_t>(std::lround(std::clamp(frame.pixels[i], 0.0f, 1.0f) * 255.0f));
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(frame.width);
  image.height = static_cast<png_uint_32>(frame.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write image " + path.string() + ": " + image.message);
  }
}

}  // namespace gamessl
