#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gamessl/image.hpp"
#include "gamessl/nn.hpp"

namespace gamessl {

struct EncoderConfig {
  std::size_t input_height = 64;
  std::size_t input_width = 64;
  std::vector<std::size_t> stage_channels{16, 32, 64};
  std::vector<std::size_t> blocks_per_stage{1, 1, 1};
  // Size of the pooled representation. When it differs from the last stage
  // width a 1x1 conv + BN + ReLU expands the final feature map to this width.
  std::size_t embedding_dim = 64;

  // Throws ConfigError on inconsistent lists, d < 8, or an input too small
  // for the downsampling plan.
  void validate() const;

  // 224x224 input, ResNet-50 stage layout and a 2048-wide representation.
  static EncoderConfig paper_scale();

  bool operator==(const EncoderConfig&) const = default;
};

// Residual block: conv3x3-BN-ReLU-conv3x3-BN plus an identity shortcut, or a
// 1x1 conv + BN projection when the width or stride changes, then ReLU.
struct ResidualBlock {
  nn::Conv2d conv1;
  nn::BatchNorm bn1;
  nn::Conv2d conv2;
  nn::BatchNorm bn2;
  std::optional<nn::Conv2d> shortcut;
  std::optional<nn::BatchNorm> shortcut_bn;

  Tensor forward(const Tensor& x, nn::Mode mode, Tape* tape);
};

// Small residual conv net: stride-2 stem, one stage per configured width
// (stages after the first downsample by 2), optional 1x1 expansion, then
// global average pooling to a d-dimensional representation.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  std::size_t output_dim() const { return config_.embedding_dim; }

  // images [N,3,H,W] -> representations [N,d]
  Tensor forward(const Tensor& images, nn::Mode mode, Tape* tape);

  std::vector<NamedTensor> parameters(const std::string& prefix = "encoder") const;
  std::vector<NamedTensor> buffers(const std::string& prefix = "encoder") const;
  // Parameters followed by buffers.
  std::vector<NamedTensor> state(const std::string& prefix = "encoder") const;
  std::size_t parameter_count() const;

  Encoder clone() const;

 private:
  Encoder() = default;

  EncoderConfig config_;
  nn::Conv2d stem_conv_;
  nn::BatchNorm stem_bn_;
  std::vector<ResidualBlock> blocks_;
  std::vector<std::string> block_names_;
  std::optional<nn::Conv2d> expand_conv_;
  std::optional<nn::BatchNorm> expand_bn_;
};

Encoder build_encoder(const EncoderConfig& config, std::uint64_t seed);

// Packs frames into an [N,3,H,W] tensor. Every frame must match (height, width).
Tensor frames_to_batch(std::span<const Frame> frames, std::size_t height, std::size_t width);

// Runs the encoder without recording gradients. Eval mode is a pure function
// of (parameters, frame); train mode also updates batch-norm running stats.
Tensor encode(Encoder& encoder, std::span<const Frame> frames, nn::Mode mode);

// Architecture description stored alongside weights so a checkpoint can be
// rebuilt without the original config file.
NamedTensor encoder_config_tensor(const EncoderConfig& config, const std::string& name = "meta/encoder_config");
EncoderConfig encoder_config_from_tensor(const Tensor& t);

void save_encoder(const std::filesystem::path& path, const Encoder& encoder);
// Accepts both encoder-only files and full training checkpoints.
Encoder load_encoder(const std::filesystem::path& path);

}  // namespace gamessl
