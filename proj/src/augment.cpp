#include "gamessl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gamessl/error.hpp"

namespace gamessl {

namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

void flip_horizontal(Frame& f) {
  for (std::size_t y = 0; y < f.height; ++y) {
    for (std::size_t x = 0; x < f.width / 2; ++x) {
      for (std::size_t c = 0; c < 3; ++c) std::swap(f.at(y, x, c), f.at(y, f.width - 1 - x, c));
    }
  }
}

// Rotation about the image centre, bilinear, edge pixels extended.
Frame rotate(const Frame& src, double degrees) {
  const double a = degrees * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cx = 0.5 * static_cast<double>(src.width) - 0.5, cy = 0.5 * static_cast<double>(src.height) - 0.5;
  Frame out(src.height, src.width);
  const double maxx = static_cast<double>(src.width - 1), maxy = static_cast<double>(src.height - 1);
  for (std::size_t i = 0; i < src.height; ++i) {
    for (std::size_t j = 0; j < src.width; ++j) {
      const double dx = static_cast<double>(j) - cx, dy = static_cast<double>(i) - cy;
      const double sx = std::clamp(cx + ca * dx + sa * dy, 0.0, maxx);
      const double sy = std::clamp(cy - sa * dx + ca * dy, 0.0, maxy);
      const auto x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
      const auto x1 = std::min(x0 + 1, src.width - 1), y1 = std::min(y0 + 1, src.height - 1);
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1 - fx) * src.at(y0, x0, c) + fx * src.at(y0, x1, c);
        const double bot = (1 - fx) * src.at(y1, x0, c) + fx * src.at(y1, x1, c);
        out.at(i, j, c) = static_cast<float>((1 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

}  // namespace

void AugmentationPolicy::validate() const {
  if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0)) {
    throw ConfigError("crop scale range must satisfy 0 < min <= max <= 1, got (" + std::to_string(crop_scale_min) +
                      ", " + std::to_string(crop_scale_max) + ")");
  }
  if (!is_probability(flip_probability)) throw ConfigError("flip_probability must be in [0, 1]");
  if (!is_probability(grayscale_probability)) throw ConfigError("grayscale_probability must be in [0, 1]");
  if (!(brightness_jitter >= 0.0) || !(contrast_jitter >= 0.0)) throw ConfigError("jitter amounts must be >= 0");
  if (contrast_jitter > 1.0) throw ConfigError("contrast_jitter must be <= 1");
  if (!(rotation_degrees >= 0.0 && rotation_degrees <= 180.0)) throw ConfigError("rotation_degrees must be in [0, 180]");
}

AugmentationPolicy AugmentationPolicy::for_env(const std::string& env) {
  AugmentationPolicy p;
  if (env == "corridor") p.flip_probability = 0.0;
  return p;
}

AugmentationPolicy AugmentationPolicy::identity() {
  AugmentationPolicy p;
  p.crop_scale_min = p.crop_scale_max = 1.0;
  p.flip_probability = 0.0;
  p.brightness_jitter = p.contrast_jitter = 0.0;
  p.grayscale_probability = 0.0;
  return p;
}

CropBox sample_crop_box(std::size_t height, std::size_t width, double scale_lo, double scale_hi, Rng& rng) {
  const double scale = rng.uniform(scale_lo, scale_hi);
  const double side = std::sqrt(scale);
  const double w = side * static_cast<double>(width), h = side * static_cast<double>(height);
  const double x0 = rng.uniform() * (static_cast<double>(width) - w);
  const double y0 = rng.uniform() * (static_cast<double>(height) - h);
  return {x0, y0, w, h};
}

ViewParams sample_view_params(const AugmentationPolicy& policy, std::size_t height, std::size_t width, Rng& rng) {
  // Fixed draw order keeps a view's parameters reproducible from its stream.
  ViewParams v;
  v.crop = sample_crop_box(height, width, policy.crop_scale_min, policy.crop_scale_max, rng);
  v.flip = rng.bernoulli(policy.flip_probability);
  v.brightness = rng.uniform(-policy.brightness_jitter, policy.brightness_jitter);
  v.contrast = rng.uniform(1.0 - policy.contrast_jitter, 1.0 + policy.contrast_jitter);
  v.grayscale = rng.bernoulli(policy.grayscale_probability);
  v.rotation_degrees = rng.uniform(-policy.rotation_degrees, policy.rotation_degrees);
  return v;
}

Frame apply_view(const Frame& frame, const ViewParams& params, std::size_t out_h, std::size_t out_w) {
  Frame out = crop_resize(frame, params.crop, out_h, out_w);
  if (params.flip) flip_horizontal(out);
  if (params.rotation_degrees != 0.0) out = rotate(out, params.rotation_degrees);
  if (params.brightness != 0.0) {
    const auto b = static_cast<float>(params.brightness);
    for (auto& p : out.pixels) p += b;
  }
  if (params.contrast != 1.0) {
    double total = 0.0;
    for (float p : out.pixels) total += p;
    const auto mean = static_cast<float>(total / static_cast<double>(out.pixels.size()));
    const auto k = static_cast<float>(params.contrast);
    for (auto& p : out.pixels) p = mean + k * (p - mean);
  }
  if (params.grayscale) {
    for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
      const float y = 0.299f * out.pixels[i] + 0.587f * out.pixels[i + 1] + 0.114f * out.pixels[i + 2];
      out.pixels[i] = out.pixels[i + 1] = out.pixels[i + 2] = y;
    }
  }
  for (auto& p : out.pixels) p = std::clamp(p, 0.0f, 1.0f);
  return out;
}

Frame random_resized_crop(const Frame& frame, double scale_lo, double scale_hi, Rng& rng, std::size_t out_h,
                          std::size_t out_w) {
  return crop_resize(frame, sample_crop_box(frame.height, frame.width, scale_lo, scale_hi, rng), out_h, out_w);
}

std::pair<Frame, Frame> make_views(const Frame& frame, const AugmentationPolicy& policy, Rng& rng, std::size_t out_h,
                                   std::size_t out_w) {
  const auto a = sample_view_params(policy, frame.height, frame.width, rng);
  const auto b = sample_view_params(policy, frame.height, frame.width, rng);
  return {apply_view(frame, a, out_h, out_w), apply_view(frame, b, out_h, out_w)};
}

}  // namespace gamessl
