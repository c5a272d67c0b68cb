#include "gamessl/image.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "gamessl/random.hpp"

using namespace gamessl;

namespace {

Frame random_frame(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  Frame f(h, w);
  for (auto& p : f.pixels) p = static_cast<float>(rng.uniform());
  return f;
}

// Independent bilinear sampler at continuous source coordinates (sx, sy).
double bilinear(const Frame& f, double sx, double sy, std::size_t c) {
  sx = std::clamp(sx, 0.0, static_cast<double>(f.width - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(f.height - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(sx)), y0 = static_cast<std::size_t>(std::floor(sy));
  const auto x1 = std::min(x0 + 1, f.width - 1), y1 = std::min(y0 + 1, f.height - 1);
  const double ax = sx - x0, ay = sy - y0;
  return (1 - ay) * ((1 - ax) * f.at(y0, x0, c) + ax * f.at(y0, x1, c)) +
         ay * ((1 - ax) * f.at(y1, x0, c) + ax * f.at(y1, x1, c));
}

}  // namespace

TEST(Image, SameSizeResizeIsExact) {
  auto f = random_frame(16, 12, 1);
  auto g = resize_bilinear(f, 16, 12);
  EXPECT_EQ(g.pixels, f.pixels);
}

TEST(Image, CropResizeMatchesBilinearOracle) {
  auto f = random_frame(64, 64, 2);
  const CropBox box{10.0, 20.0, 32.0, 32.0};
  auto g = crop_resize(f, box, 64, 64);
  for (std::size_t i : {0u, 1u, 31u, 63u})
    for (std::size_t j : {0u, 5u, 63u})
      for (std::size_t c = 0; c < 3; ++c) {
        const double sx = box.x0 + (j + 0.5) * box.width / 64 - 0.5;
        const double sy = box.y0 + (i + 0.5) * box.height / 64 - 0.5;
        EXPECT_NEAR(g.at(i, j, c), bilinear(f, sx, sy, c), 1e-6);
      }
}

TEST(Image, PngRoundTripQuantizes) {
  auto f = random_frame(9, 7, 3);
  const auto path = std::filesystem::temp_directory_path() / "gamessl_image_test.png";
  write_png(path, f);
  auto g = read_png(path);
  ASSERT_EQ(g.height, 9u);
  ASSERT_EQ(g.width, 7u);
  for (std::size_t i = 0; i < f.pixels.size(); ++i) {
    EXPECT_EQ(g.pixels[i], static_cast<float>(std::lround(f.pixels[i] * 255.0f)) / 255.0f);
  }
  // Already-quantized data survives a second round trip exactly.
  write_png(path, g);
  EXPECT_EQ(read_png(path).pixels, g.pixels);
  std::filesystem::remove(path);
}
