#include "gamessl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "gamessl/checkpoint.hpp"
#include "gamessl/error.hpp"
#include "gamessl/log.hpp"

namespace gamessl {

namespace {

constexpr const char* kProgressName = "meta/progress";
constexpr const char* kLossHistoryName = "meta/loss_history";

const TrainConfig& validated(const TrainConfig& c) {
  c.validate();
  return c;
}

float method_tag(Method m) { return static_cast<float>(static_cast<int>(m)); }

Tensor init_prototypes(std::size_t p, std::size_t k, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, {stream::kPrototypes});
  Tensor t({p, k});
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  ssl::prototype_renormalize(t, rng);
  t.set_requires_grad();
  return t;
}

void append_velocity(const std::string& prefix, const std::vector<NamedTensor>& params, const OptimizerState& opt,
                     std::vector<NamedTensor>& out) {
  if (opt.velocity.empty()) return;
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back({prefix + params[i].name, opt.velocity[i]});
}

// Velocity buffers are restored only when the checkpoint has every one.
void restore_velocity(const std::string& prefix, const std::vector<NamedTensor>& params,
                      const std::vector<NamedTensor>& saved, OptimizerState& opt) {
  opt.velocity.clear();
  std::vector<Tensor> v;
  for (const auto& p : params) {
    const auto* s = checkpoint::find(saved, prefix + p.name);
    if (s == nullptr) return;
    if (s->tensor.shape() != p.tensor.shape()) {
      throw FormatError("velocity '" + s->name + "' has shape " + to_string(s->tensor.shape()) + ", expected " +
                        to_string(p.tensor.shape()));
    }
    v.push_back(s->tensor.clone());
  }
  opt.velocity = std::move(v);
}

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "simclr") return Method::SimCLR;
  if (name == "byol") return Method::BYOL;
  if (name == "swav") return Method::SwAV;
  throw ConfigError("unknown method '" + name + "' (expected simclr, byol or swav)");
}

std::string method_name(Method method) {
  switch (method) {
    case Method::SimCLR:
      return "simclr";
    case Method::BYOL:
      return "byol";
    case Method::SwAV:
      return "swav";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (batch_size < 2 && method != Method::BYOL) {
    throw ConfigError(method_name(method) + " needs batch_size >= 2, got " + std::to_string(batch_size));
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  encoder.validate();
  augmentation.validate();
  projector.validate();
  simclr.validate();
  byol.validate();
  swav.validate();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,epoch,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < step_loss.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g", step_loss[i]);
    out << i << ',' << step_epoch[i] << ',' << buf << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Trainer::Trainer(const TrainConfig& config) : config_(validated(config)), encoder_(config.encoder, config.seed) {
  Rng heads = Rng::substream(config_.seed, {stream::kInit, 1});
  const std::size_t d = config_.encoder.embedding_dim, p = config_.projector.output_dim;
  projector_ = nn::Mlp::create(d, config_.projector.hidden_dim, p, heads);
  if (config_.method == Method::BYOL) {
    predictor_ = nn::Mlp::create(p, config_.byol.predictor_hidden_dim, p, heads);
    target_encoder_ = encoder_.clone();
    target_projector_ = projector_.clone();
  }
  if (config_.method == Method::SwAV) prototypes_ = init_prototypes(p, config_.swav.num_prototypes, config_.seed);
  for (auto* opt : {&optimizer_, &prototype_optimizer_}) {
    opt->learning_rate = static_cast<float>(config_.learning_rate);
    opt->momentum = static_cast<float>(config_.momentum);
    opt->weight_decay = static_cast<float>(config_.weight_decay);
  }
}

std::vector<NamedTensor> Trainer::online_parameters() const {
  auto out = encoder_.parameters("encoder");
  projector_.parameters("projector", out);
  if (predictor_) predictor_->parameters("predictor", out);
  return out;
}

std::vector<NamedTensor> Trainer::target_parameters() const {
  std::vector<NamedTensor> out;
  if (!target_encoder_) return out;
  out = target_encoder_->parameters("encoder");
  target_projector_->parameters("projector", out);
  return out;
}

std::vector<NamedTensor> Trainer::state() const {
  std::vector<NamedTensor> out;
  out.push_back(encoder_config_tensor(config_.encoder));
  out.push_back({kProgressName, Tensor({3}, {static_cast<float>(epoch_), static_cast<float>(step_),
                                             method_tag(config_.method)})});
  // Tensors cannot be empty, so the history is omitted before the first step.
  if (!log_.step_loss.empty()) {
    std::vector<float> losses(log_.step_loss.begin(), log_.step_loss.end());
    const auto n = losses.size();
    out.push_back({kLossHistoryName, Tensor({n}, std::move(losses))});
  }

  auto enc = encoder_.state("encoder");
  out.insert(out.end(), enc.begin(), enc.end());
  projector_.parameters("projector", out);
  projector_.buffers("projector", out);
  if (predictor_) {
    predictor_->parameters("predictor", out);
    predictor_->buffers("predictor", out);
  }
  if (target_encoder_) {
    auto t = target_encoder_->state("target/encoder");
    out.insert(out.end(), t.begin(), t.end());
    target_projector_->parameters("target/projector", out);
    target_projector_->buffers("target/projector", out);
  }
  if (config_.method == Method::SwAV) out.push_back({"swav/prototypes", prototypes_});
  append_velocity("optim/velocity/", online_parameters(), optimizer_, out);
  if (config_.method == Method::SwAV) {
    append_velocity("optim/velocity/", {{"swav/prototypes", prototypes_}}, prototype_optimizer_, out);
  }
  return out;
}

void Trainer::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  checkpoint::save(path, state());
}

Trainer Trainer::restore(const std::filesystem::path& path, const TrainConfig& config) {
  const auto saved = checkpoint::load(path);
  const auto* meta = checkpoint::find(saved, "meta/encoder_config");
  const auto* progress = checkpoint::find(saved, kProgressName);
  const auto* history = checkpoint::find(saved, kLossHistoryName);
  if (meta == nullptr || progress == nullptr || progress->tensor.size() != 3) {
    throw FormatError(path.string() + " is not a training checkpoint");
  }
  if (encoder_config_from_tensor(meta->tensor) != config.encoder) {
    throw ConfigError(path.string() + ": encoder architecture differs from the config");
  }
  if (progress->tensor[2] != method_tag(config.method)) {
    throw ConfigError(path.string() + ": checkpoint was not trained with " + method_name(config.method));
  }

  Trainer t(config);
  // Everything the fresh trainer would write must be present; missing
  // velocity buffers just mean no step was taken yet.
  std::vector<NamedTensor> required;
  for (const auto& nt : t.state()) {
    if (nt.name.rfind("meta/", 0) != 0 && nt.name.rfind("optim/", 0) != 0) required.push_back(nt);
  }
  checkpoint::assign(required, saved);
  restore_velocity("optim/velocity/", t.online_parameters(), saved, t.optimizer_);
  if (config.method == Method::SwAV) {
    restore_velocity("optim/velocity/", {{"swav/prototypes", t.prototypes_}}, saved, t.prototype_optimizer_);
  }
  t.epoch_ = static_cast<std::size_t>(progress->tensor[0]);
  t.step_ = static_cast<std::size_t>(progress->tensor[1]);
  if ((history ? history->tensor.size() : 0) != t.step_) throw FormatError(path.string() + ": loss history does not match step count");
  // Per-epoch summaries are rebuilt from the per-step history.
  const std::size_t per_epoch = t.epoch_ > 0 ? t.step_ / t.epoch_ : 0;
  for (std::size_t i = 0; i < t.step_; ++i) {
    t.log_.step_loss.push_back(history->tensor[i]);
    t.log_.step_epoch.push_back(per_epoch > 0 ? i / per_epoch : 0);
  }
  for (std::size_t e = 0; e < t.epoch_ && per_epoch > 0; ++e) {
    double s = 0;
    for (std::size_t i = e * per_epoch; i < (e + 1) * per_epoch; ++i) s += t.log_.step_loss[i];
    t.log_.epoch_mean_loss.push_back(s / static_cast<double>(per_epoch));
    t.log_.epoch_seconds.push_back(0.0);
  }
  return t;
}

Tensor Trainer::forward_loss(const Tensor& batch, std::size_t n, Tape* tape) {
  const auto mode = nn::Mode::Train;
  auto h = encoder_.forward(batch, mode, tape);
  auto z = projector_.forward(h, mode, tape);
  switch (config_.method) {
    case Method::SimCLR:
      return ssl::nt_xent_loss(z, config_.simclr.temperature, tape);
    case Method::BYOL: {
      auto p = predictor_->forward(z, mode, tape);
      // Target network: forward only; its batch-norm statistics still move.
      auto zt = target_projector_->forward(target_encoder_->forward(batch, mode, nullptr), mode, nullptr);
      auto a = ssl::byol_loss(ops::slice_rows(p, 0, n, tape), ops::slice_rows(zt, n, 2 * n), tape);
      auto b = ssl::byol_loss(ops::slice_rows(p, n, 2 * n, tape), ops::slice_rows(zt, 0, n), tape);
      return ops::scale(ops::add(a, b, tape), 0.5f, tape);
    }
    case Method::SwAV: {
      auto z1 = ops::slice_rows(z, 0, n, tape), z2 = ops::slice_rows(z, n, 2 * n, tape);
      return ssl::swav_loss(z1, z2, prototypes_, config_.swav, tape).loss;
    }
  }
  throw ContractError("unhandled method");
}

double Trainer::train_step(std::span<const Frame> frames, std::span<const std::size_t> indices) {
  const std::size_t n = indices.size();
  if (n == 0) throw DimensionError("train_step: empty batch");
  const auto& enc = config_.encoder;
  // Rows [0,n) hold the first view of each sample, rows [n,2n) the second.
  std::vector<Frame> views(2 * n);
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t i = indices[b];
    Rng rng = Rng::substream(config_.seed, {stream::kAugment, epoch_, i});
    auto [v1, v2] = make_views(frames[i], config_.augmentation, rng, enc.input_height, enc.input_width);
    views[b] = std::move(v1);
    views[n + b] = std::move(v2);
  }
  const Tensor batch = frames_to_batch(views, enc.input_height, enc.input_width);

  const auto params = online_parameters();
  zero_grad(params);
  if (config_.method == Method::SwAV) prototypes_.zero_grad();

  Tape tape;
  auto loss = forward_loss(batch, n, &tape);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw NumericalError(method_name(config_.method) + " loss is " + std::to_string(value) + " at step " +
                         std::to_string(step_));
  }
  backward(tape, loss);

  sgd_step(params, optimizer_);
  if (config_.method == Method::SwAV) {
    const std::vector<NamedTensor> protos{{"swav/prototypes", prototypes_}};
    if (step_ < config_.swav.prototype_freeze_steps) {
      prototypes_.zero_grad();
    } else {
      sgd_step(protos, prototype_optimizer_);
    }
    Rng rng = Rng::substream(config_.seed, {stream::kPrototypes, step_});
    ssl::prototype_renormalize(prototypes_, rng);
  }
  if (config_.method == Method::BYOL) {
    auto online = encoder_.parameters("encoder");
    projector_.parameters("projector", online);
    ssl::ema_update(target_parameters(), online, config_.byol.ema_tau);
  }

  log_.step_loss.push_back(value);
  log_.step_epoch.push_back(epoch_);
  ++step_;
  return value;
}

void Trainer::run_epoch(std::span<const Frame> frames, const TrainOptions& options) {
  if (frames.empty()) throw ContractError("cannot train on an empty dataset");
  const std::size_t bs = config_.batch_size;
  if (frames.size() < bs) {
    throw ConfigError("dataset has " + std::to_string(frames.size()) + " frames, fewer than batch_size " +
                      std::to_string(bs));
  }
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::substream(config_.seed, {stream::kEpochOrder, epoch_});
  rng.shuffle(order.begin(), order.end());

  const std::size_t batches = frames.size() / bs;
  double total = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    const double loss = train_step(frames, std::span<const std::size_t>(order).subspan(b * bs, bs));
    total += loss;
    if (options.on_step) options.on_step(step_ - 1, epoch_, loss);
  }
  log_.epoch_mean_loss.push_back(total / static_cast<double>(batches));
  log_.epoch_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  log::info(method_name(config_.method) + " epoch " + std::to_string(epoch_ + 1) + "/" +
            std::to_string(config_.epochs) + " mean loss " + std::to_string(log_.epoch_mean_loss.back()));
  ++epoch_;
}

void Trainer::fit(std::span<const Frame> frames, const TrainOptions& options) {
  if (frames.empty()) throw ContractError("cannot train on an empty dataset");
  const auto& enc = config_.encoder;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].height != enc.input_height || frames[i].width != enc.input_width) {
      throw DimensionError("frame " + std::to_string(i) + " is " + std::to_string(frames[i].height) + "x" +
                           std::to_string(frames[i].width) + ", encoder expects " + std::to_string(enc.input_height) +
                           "x" + std::to_string(enc.input_width));
    }
  }
  while (epoch_ < config_.epochs) {
    try {
      run_epoch(frames, options);
    } catch (const NumericalError& e) {
      if (!options.checkpoint_path.empty()) {
        throw NumericalError(std::string(e.what()) + "; last good checkpoint: " + options.checkpoint_path.string());
      }
      throw;
    }
    if (!options.checkpoint_path.empty()) save(options.checkpoint_path);
  }
}

TrainResult train(std::span<const Frame> frames, const TrainConfig& config, const TrainOptions& options) {
  Trainer t(config);
  t.fit(frames, options);
  return {t.encoder().clone(), t.log()};
}

}  // namespace gamessl
