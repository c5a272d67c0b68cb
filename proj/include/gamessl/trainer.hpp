#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gamessl/augment.hpp"
#include "gamessl/encoder.hpp"
#include "gamessl/optim.hpp"
#include "gamessl/ssl.hpp"

namespace gamessl {

enum class Method { SimCLR, BYOL, SwAV };

// "simclr" | "byol" | "swav"; throws ConfigError otherwise.
Method parse_method(const std::string& name);
std::string method_name(Method method);

struct TrainConfig {
  Method method = Method::SimCLR;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  EncoderConfig encoder;
  AugmentationPolicy augmentation;
  ssl::ProjectionHeadConfig projector;
  ssl::SimCLRConfig simclr;
  ssl::BYOLConfig byol;
  ssl::SwAVConfig swav;

  void validate() const;
};

struct TrainLog {
  std::vector<double> step_loss;
  std::vector<std::size_t> step_epoch;
  std::vector<double> epoch_mean_loss;
  std::vector<double> epoch_seconds;

  // step,epoch,loss with one row per optimizer step.
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainOptions {
  // Written after every epoch when non-empty. On a numerical failure the file
  // still holds the last completed epoch.
  std::filesystem::path checkpoint_path;
  std::function<void(std::size_t step, std::size_t epoch, double loss)> on_step;
};

// Full pretraining state: encoder, heads, BYOL target network, SwAV
// prototypes, optimizer velocity and progress counters.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& config);

  // Rebuilds the state saved by save(). The config supplies hyperparameters
  // (the epoch budget may differ from the original run); the architecture and
  // method must match the checkpoint.
  static Trainer restore(const std::filesystem::path& path, const TrainConfig& config);
  void save(const std::filesystem::path& path) const;

  // Trains until config().epochs epochs have completed. Frames must already be
  // at the encoder input size.
  void fit(std::span<const Frame> frames, const TrainOptions& options = {});
  // One epoch over a fresh seeded permutation; drops the last partial batch.
  void run_epoch(std::span<const Frame> frames, const TrainOptions& options = {});
  // One optimizer step on frames[indices], with augmentation keyed by the
  // current epoch and each sample's dataset index. Returns the pre-step loss.
  double train_step(std::span<const Frame> frames, std::span<const std::size_t> indices);

  const TrainConfig& config() const { return config_; }
  const TrainLog& log() const { return log_; }
  std::size_t step() const { return step_; }
  std::size_t epochs_completed() const { return epoch_; }

  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  const nn::Mlp& projector() const { return projector_; }
  const std::optional<nn::Mlp>& predictor() const { return predictor_; }
  const std::optional<Encoder>& target_encoder() const { return target_encoder_; }
  const std::optional<nn::Mlp>& target_projector() const { return target_projector_; }
  const Tensor& prototypes() const { return prototypes_; }

  // Parameters updated by the main optimizer, in a fixed order.
  std::vector<NamedTensor> online_parameters() const;
  // Every tensor written to a checkpoint.
  std::vector<NamedTensor> state() const;

 private:
  Tensor forward_loss(const Tensor& batch, std::size_t n, Tape* tape);
  std::vector<NamedTensor> target_parameters() const;

  TrainConfig config_;
  Encoder encoder_;
  nn::Mlp projector_;
  std::optional<nn::Mlp> predictor_;
  std::optional<Encoder> target_encoder_;
  std::optional<nn::Mlp> target_projector_;
  Tensor prototypes_;
  OptimizerState optimizer_;
  OptimizerState prototype_optimizer_;
  std::size_t step_ = 0;
  std::size_t epoch_ = 0;
  TrainLog log_;
};

struct TrainResult {
  Encoder encoder;
  TrainLog log;
};

// Convenience wrapper: fresh Trainer, fit, return the encoder without heads.
TrainResult train(std::span<const Frame> frames, const TrainConfig& config, const TrainOptions& options = {});

}  // namespace gamessl
