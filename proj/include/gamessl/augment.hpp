#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>

#include "gamessl/image.hpp"
#include "gamessl/random.hpp"

namespace gamessl {

struct AugmentationPolicy {
  // Fraction of the frame area covered by the crop, drawn uniformly.
  double crop_scale_min = 0.5;
  double crop_scale_max = 1.0;
  double flip_probability = 0.5;
  // Brightness: x + U(-b, b). Contrast: mean + U(1-c, 1+c) * (x - mean).
  double brightness_jitter = 0.4;
  double contrast_jitter = 0.4;
  double grayscale_probability = 0.2;
  // Off by default; when positive, views are rotated by U(-deg, deg) about
  // the centre.
  double rotation_degrees = 0.0;
  std::uint64_t seed = 0;

  // Throws ConfigError when a range is inverted or a probability leaves [0, 1].
  void validate() const;

  // Flip is disabled for the corridor environment, whose left/middle/right
  // variables are side-sensitive.
  static AugmentationPolicy for_env(const std::string& env);
  static AugmentationPolicy identity();
};

// Everything random about one view, drawn before any pixel work.
struct ViewParams {
  CropBox crop;
  bool flip = false;
  double brightness = 0.0;
  double contrast = 1.0;
  bool grayscale = false;
  double rotation_degrees = 0.0;
};

// Crop with the frame's aspect ratio whose area fraction is U(lo, hi),
// placed uniformly inside the frame.
CropBox sample_crop_box(std::size_t height, std::size_t width, double scale_lo, double scale_hi, Rng& rng);

ViewParams sample_view_params(const AugmentationPolicy& policy, std::size_t height, std::size_t width, Rng& rng);

// Crop + resize, flip, rotate, brightness, contrast, grayscale, clamp to [0, 1].
Frame apply_view(const Frame& frame, const ViewParams& params, std::size_t out_h, std::size_t out_w);

Frame random_resized_crop(const Frame& frame, double scale_lo, double scale_hi, Rng& rng, std::size_t out_h,
                          std::size_t out_w);

// Two independent views. Pass a per-sample substream so the result does not
// depend on batch composition.
std::pair<Frame, Frame> make_views(const Frame& frame, const AugmentationPolicy& policy, Rng& rng, std::size_t out_h,
                                   std::size_t out_w);

}  // namespace gamessl
