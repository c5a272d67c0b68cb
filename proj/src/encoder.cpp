#include "gamessl/encoder.hpp"

#include <algorithm>

#include "gamessl/checkpoint.hpp"
#include "gamessl/error.hpp"

namespace gamessl {

namespace {

// Output size of a 3x3, padding-1 convolution.
std::size_t conv3_out(std::size_t in, std::size_t stride) { return (in + 2 - 3) / stride + 1; }

}  // namespace

void EncoderConfig::validate() const {
  if (stage_channels.empty()) throw ConfigError("encoder needs at least one stage");
  if (stage_channels.size() != blocks_per_stage.size()) {
    throw ConfigError("stage_channels has " + std::to_string(stage_channels.size()) + " entries but blocks_per_stage has " +
                      std::to_string(blocks_per_stage.size()));
  }
  for (auto c : stage_channels) {
    if (c == 0) throw ConfigError("stage channel widths must be positive");
  }
  for (auto b : blocks_per_stage) {
    if (b == 0) throw ConfigError("each stage needs at least one block");
  }
  if (embedding_dim < 8) throw ConfigError("embedding_dim must be >= 8, got " + std::to_string(embedding_dim));
  if (input_height == 0 || input_width == 0) throw ConfigError("input size must be positive");

  // Stem plus every stage after the first halve the resolution; each of those
  // steps needs at least 2 pixels to downsample.
  std::size_t h = input_height, w = input_width;
  for (std::size_t step = 0; step < stage_channels.size(); ++step) {
    if (h < 2 || w < 2) {
      throw ConfigError("input " + std::to_string(input_height) + "x" + std::to_string(input_width) +
                        " is too small for " + std::to_string(stage_channels.size()) + " stages");
    }
    h = conv3_out(h, 2);
    w = conv3_out(w, 2);
  }
}

EncoderConfig EncoderConfig::paper_scale() {
  EncoderConfig c;
  c.input_height = 224;
  c.input_width = 224;
  c.stage_channels = {64, 128, 256, 512};
  c.blocks_per_stage = {3, 4, 6, 3};
  c.embedding_dim = 2048;
  return c;
}

Tensor ResidualBlock::forward(const Tensor& x, nn::Mode mode, Tape* tape) {
  auto h = conv1.forward(x, tape);
  h = bn1.forward(h, mode, tape);
  h = ops::relu(h, tape);
  h = conv2.forward(h, tape);
  h = bn2.forward(h, mode, tape);
  Tensor skip = x;
  if (shortcut) {
    skip = shortcut->forward(x, tape);
    skip = shortcut_bn->forward(skip, mode, tape);
  }
  return ops::relu(ops::add(h, skip, tape), tape);
}

Encoder::Encoder(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng = Rng::substream(seed, {stream::kInit});
  const auto& widths = config_.stage_channels;
  stem_conv_ = nn::Conv2d::create(3, widths.front(), 3, 2, 1, rng);
  stem_bn_ = nn::BatchNorm::create(widths.front());
  std::size_t in = widths.front();
  for (std::size_t s = 0; s < widths.size(); ++s) {
    for (std::size_t b = 0; b < config_.blocks_per_stage[s]; ++b) {
      const std::size_t out = widths[s];
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      ResidualBlock block;
      block.conv1 = nn::Conv2d::create(in, out, 3, stride, 1, rng);
      block.bn1 = nn::BatchNorm::create(out);
      block.conv2 = nn::Conv2d::create(out, out, 3, 1, 1, rng);
      block.bn2 = nn::BatchNorm::create(out);
      if (stride != 1 || in != out) {
        block.shortcut = nn::Conv2d::create(in, out, 1, stride, 0, rng);
        block.shortcut_bn = nn::BatchNorm::create(out);
      }
      blocks_.push_back(std::move(block));
      block_names_.push_back("stage" + std::to_string(s) + "/block" + std::to_string(b));
      in = out;
    }
  }
  if (config_.embedding_dim != in) {
    expand_conv_ = nn::Conv2d::create(in, config_.embedding_dim, 1, 1, 0, rng);
    expand_bn_ = nn::BatchNorm::create(config_.embedding_dim);
  }
}

Tensor Encoder::forward(const Tensor& images, nn::Mode mode, Tape* tape) {
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != config_.input_height ||
      images.dim(3) != config_.input_width) {
    throw DimensionError("encoder expects [N,3," + std::to_string(config_.input_height) + "," +
                         std::to_string(config_.input_width) + "] input, got " + to_string(images.shape()));
  }
  auto h = stem_conv_.forward(images, tape);
  h = stem_bn_.forward(h, mode, tape);
  h = ops::relu(h, tape);
  for (auto& block : blocks_) h = block.forward(h, mode, tape);
  if (expand_conv_) {
    h = expand_conv_->forward(h, tape);
    h = expand_bn_->forward(h, mode, tape);
    h = ops::relu(h, tape);
  }
  return ops::global_avg_pool(h, tape);
}

std::vector<NamedTensor> Encoder::parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  stem_conv_.parameters(prefix + "/stem/conv", out);
  stem_bn_.parameters(prefix + "/stem/bn", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    const auto base = prefix + "/" + block_names_[i];
    b.conv1.parameters(base + "/conv1", out);
    b.bn1.parameters(base + "/bn1", out);
    b.conv2.parameters(base + "/conv2", out);
    b.bn2.parameters(base + "/bn2", out);
    if (b.shortcut) {
      b.shortcut->parameters(base + "/shortcut/conv", out);
      b.shortcut_bn->parameters(base + "/shortcut/bn", out);
    }
  }
  if (expand_conv_) {
    expand_conv_->parameters(prefix + "/expand/conv", out);
    expand_bn_->parameters(prefix + "/expand/bn", out);
  }
  return out;
}

std::vector<NamedTensor> Encoder::buffers(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  stem_bn_.buffers(prefix + "/stem/bn", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    const auto base = prefix + "/" + block_names_[i];
    b.bn1.buffers(base + "/bn1", out);
    b.bn2.buffers(base + "/bn2", out);
    if (b.shortcut_bn) b.shortcut_bn->buffers(base + "/shortcut/bn", out);
  }
  if (expand_bn_) expand_bn_->buffers(prefix + "/expand/bn", out);
  return out;
}

std::vector<NamedTensor> Encoder::state(const std::string& prefix) const {
  auto out = parameters(prefix);
  auto buf = buffers(prefix);
  out.insert(out.end(), buf.begin(), buf.end());
  return out;
}

std::size_t Encoder::parameter_count() const { return nn::count_elements(parameters()); }

Encoder Encoder::clone() const {
  Encoder e;
  e.config_ = config_;
  e.stem_conv_ = stem_conv_.clone();
  e.stem_bn_ = stem_bn_.clone();
  for (const auto& b : blocks_) {
    ResidualBlock c{b.conv1.clone(), b.bn1.clone(), b.conv2.clone(), b.bn2.clone(), std::nullopt, std::nullopt};
    if (b.shortcut) {
      c.shortcut = b.shortcut->clone();
      c.shortcut_bn = b.shortcut_bn->clone();
    }
    e.blocks_.push_back(std::move(c));
  }
  e.block_names_ = block_names_;
  if (expand_conv_) {
    e.expand_conv_ = expand_conv_->clone();
    e.expand_bn_ = expand_bn_->clone();
  }
  return e;
}

Encoder build_encoder(const EncoderConfig& config, std::uint64_t seed) { return Encoder(config, seed); }

Tensor frames_to_batch(std::span<const Frame> frames, std::size_t height, std::size_t width) {
  if (frames.empty()) throw DimensionError("frames_to_batch: empty batch");
  Tensor batch({frames.size(), 3, height, width});
  auto out = batch.data();
  const std::size_t plane = height * width;
  for (std::size_t n = 0; n < frames.size(); ++n) {
    const auto& f = frames[n];
    if (f.height != height || f.width != width) {
      throw DimensionError("frame " + std::to_string(n) + " is " + std::to_string(f.height) + "x" +
                           std::to_string(f.width) + ", expected " + std::to_string(height) + "x" +
                           std::to_string(width));
    }
    float* dst = out.data() + n * 3 * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      dst[p] = f.pixels[p * 3];
      dst[plane + p] = f.pixels[p * 3 + 1];
      dst[2 * plane + p] = f.pixels[p * 3 + 2];
    }
  }
  return batch;
}

Tensor encode(Encoder& encoder, std::span<const Frame> frames, nn::Mode mode) {
  const auto& cfg = encoder.config();
  if (mode == nn::Mode::Train) {
    return encoder.forward(frames_to_batch(frames, cfg.input_height, cfg.input_width), mode, nullptr);
  }
  // Eval-mode outputs are per-sample, so chunking only bounds memory.
  constexpr std::size_t kChunk = 64;
  const std::size_t d = encoder.output_dim();
  Tensor out({frames.size(), d});
  for (std::size_t begin = 0; begin < frames.size(); begin += kChunk) {
    const std::size_t end = std::min(frames.size(), begin + kChunk);
    auto z = encoder.forward(frames_to_batch(frames.subspan(begin, end - begin), cfg.input_height, cfg.input_width),
                             mode, nullptr);
    std::copy(z.data().begin(), z.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(begin * d));
  }
  return out;
}

NamedTensor encoder_config_tensor(const EncoderConfig& config, const std::string& name) {
  std::vector<float> v{static_cast<float>(config.input_height), static_cast<float>(config.input_width),
                       static_cast<float>(config.embedding_dim), static_cast<float>(config.stage_channels.size())};
  for (auto c : config.stage_channels) v.push_back(static_cast<float>(c));
  for (auto b : config.blocks_per_stage) v.push_back(static_cast<float>(b));
  const auto n = v.size();
  return {name, Tensor({n}, std::move(v))};
}

EncoderConfig encoder_config_from_tensor(const Tensor& t) {
  auto v = t.data();
  if (v.size() < 4) throw FormatError("encoder config tensor too short");
  const auto stages = static_cast<std::size_t>(v[3]);
  if (v.size() != 4 + 2 * stages) throw FormatError("encoder config tensor has inconsistent stage count");
  EncoderConfig c;
  c.input_height = static_cast<std::size_t>(v[0]);
  c.input_width = static_cast<std::size_t>(v[1]);
  c.embedding_dim = static_cast<std::size_t>(v[2]);
  c.stage_channels.assign(stages, 0);
  c.blocks_per_stage.assign(stages, 0);
  for (std::size_t s = 0; s < stages; ++s) {
    c.stage_channels[s] = static_cast<std::size_t>(v[4 + s]);
    c.blocks_per_stage[s] = static_cast<std::size_t>(v[4 + stages + s]);
  }
  return c;
}

void save_encoder(const std::filesystem::path& path, const Encoder& encoder) {
  auto tensors = encoder.state();
  tensors.insert(tensors.begin(), encoder_config_tensor(encoder.config()));
  checkpoint::save(path, tensors);
}

Encoder load_encoder(const std::filesystem::path& path) {
  const auto tensors = checkpoint::load(path);
  const auto* meta = checkpoint::find(tensors, "meta/encoder_config");
  if (meta == nullptr) throw FormatError(path.string() + ": no meta/encoder_config tensor");
  EncoderConfig config;
  try {
    config = encoder_config_from_tensor(meta->tensor);
    config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": invalid encoder config: " + e.what());
  }
  Encoder encoder(config, 0);
  checkpoint::assign(encoder.state(), tensors);
  return encoder;
}

}  // namespace gamessl
