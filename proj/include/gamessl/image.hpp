#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace gamessl {

// H x W x 3 RGB image, interleaved row-major, values in [0, 1].
struct Frame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Frame() = default;
  Frame(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w * 3, fill) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  bool empty() const { return pixels.empty(); }
};

// Axis-aligned source region in continuous pixel coordinates; pixel (i, j)
// covers [j, j+1) x [i, i+1).
struct CropBox {
  double x0 = 0.0;
  double y0 = 0.0;
  double width = 0.0;
  double height = 0.0;
};

// Bilinear resampling of `box` onto an out_h x out_w grid with half-pixel
// centers. Output pixel (i, j) samples the source at
//   sx = x0 + (j + 0.5) * width / out_w - 0.5
//   sy = y0 + (i + 0.5) * height / out_h - 0.5
// with coordinates clamped to [0, W-1] x [0, H-1] before interpolation.
// A full-frame box at the source size reproduces the source exactly.
Frame crop_resize(const Frame& src, const CropBox& box, std::size_t out_h, std::size_t out_w);

Frame resize_bilinear(const Frame& src, std::size_t out_h, std::size_t out_w);

// 8-bit RGB PNG I/O. Reading converts any PNG colour type to RGB and scales
// bytes by 1/255; writing rounds clamp(v, 0, 1) * 255 to the nearest byte.
Frame read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Frame& frame);

}  // namespace gamessl
