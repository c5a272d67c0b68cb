#include "gamessl/experiment.hpp"

#include <chrono>
#include <fstream>
#include <set>

#include "gamessl/error.hpp"
#include "gamessl/games.hpp"
#include "gamessl/log.hpp"
#include "gamessl/report.hpp"

namespace gamessl {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Typed access to one JSON object that remembers which keys were read so
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  void get(const char* key, std::size_t& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0) fail(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, std::uint64_t& out, bool) {
    if (const auto* v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0) fail(key, "a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const auto* v = find(key)) {
      if (!v->is_boolean()) fail(key, "true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const auto* v = find(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, fs::path& out) {
    std::string s;
    if (find(key) != nullptr) {
      get(key, s);
      out = s;
    }
  }
  void get(const char* key, std::vector<std::size_t>& out) {
    if (const auto* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of non-negative integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer() || e.get<long long>() < 0) fail(key, "an array of non-negative integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }

  const json* find(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError("unknown config key '" + path_ + "." + it.key() + "'");
    }
  }

 private:
  [[noreturn]] void fail(const char* key, const char* expected) const {
    throw ConfigError(path_ + "." + key + ": expected " + expected);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void parse_encoder(Section s, EncoderConfig& c) {
  s.get("input_height", c.input_height);
  s.get("input_width", c.input_width);
  s.get("stage_channels", c.stage_channels);
  s.get("blocks_per_stage", c.blocks_per_stage);
  s.get("embedding_dim", c.embedding_dim);
  s.finish();
}

void parse_augmentation(Section s, AugmentationPolicy& p) {
  s.get("crop_scale_min", p.crop_scale_min);
  s.get("crop_scale_max", p.crop_scale_max);
  s.get("flip_probability", p.flip_probability);
  s.get("brightness_jitter", p.brightness_jitter);
  s.get("contrast_jitter", p.contrast_jitter);
  s.get("grayscale_probability", p.grayscale_probability);
  s.get("rotation_degrees", p.rotation_degrees);
  s.get("seed", p.seed, true);
  s.finish();
}

void parse_train(Section s, TrainConfig& c) {
  std::string method = method_name(c.method);
  s.get("method", method);
  c.method = parse_method(method);
  s.get("epochs", c.epochs);
  s.get("batch_size", c.batch_size);
  s.get("learning_rate", c.learning_rate);
  s.get("momentum", c.momentum);
  s.get("weight_decay", c.weight_decay);
  s.get("seed", c.seed, true);
  if (const auto* v = s.find("encoder")) parse_encoder(Section(*v, s.path("encoder")), c.encoder);
  if (const auto* v = s.find("augmentation")) parse_augmentation(Section(*v, s.path("augmentation")), c.augmentation);
  if (const auto* v = s.find("projector")) {
    Section p(*v, s.path("projector"));
    p.get("hidden_dim", c.projector.hidden_dim);
    p.get("output_dim", c.projector.output_dim);
    p.finish();
  }
  if (const auto* v = s.find("simclr")) {
    Section p(*v, s.path("simclr"));
    p.get("temperature", c.simclr.temperature);
    p.finish();
  }
  if (const auto* v = s.find("byol")) {
    Section p(*v, s.path("byol"));
    p.get("ema_tau", c.byol.ema_tau);
    p.get("predictor_hidden_dim", c.byol.predictor_hidden_dim);
    p.finish();
  }
  if (const auto* v = s.find("swav")) {
    Section p(*v, s.path("swav"));
    p.get("num_prototypes", c.swav.num_prototypes);
    p.get("sinkhorn_epsilon", c.swav.sinkhorn_epsilon);
    p.get("sinkhorn_iterations", c.swav.sinkhorn_iterations);
    p.get("temperature", c.swav.temperature);
    p.get("prototype_freeze_steps", c.swav.prototype_freeze_steps);
    p.finish();
  }
  s.finish();
}

fs::path write_config_snapshot(const fs::path& out, const json& j) {
  fs::create_directories(out);
  const auto path = out / "config.json";
  std::ofstream f(path);
  f << j.dump(2) << "\n";
  return path;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "config");
  if (const auto* v = root.find("dataset")) {
    Section s(*v, "dataset");
    s.get("env", c.dataset.env);
    s.get("train", c.dataset.train);
    s.get("eval", c.dataset.eval);
    s.get("seed", c.dataset.seed, true);
    s.get("players_per_team", c.dataset.players_per_team);
    s.get("height", c.dataset.height);
    s.get("width", c.dataset.width);
    s.get("train_manifest", c.dataset.train_manifest);
    s.get("eval_manifest", c.dataset.eval_manifest);
    s.finish();
  }
  c.train.augmentation = AugmentationPolicy::for_env(c.dataset.env);
  if (const auto* v = root.find("train")) parse_train(Section(*v, "train"), c.train);
  if (const auto* v = root.find("probe")) {
    Section s(*v, "probe");
    s.get("damping", c.probe.damping);
    s.get("split_half", c.probe.split_half);
    if (const auto* g = s.find("groups")) {
      if (!g->is_object()) throw ConfigError("probe.groups: expected an object of name -> index list");
      for (auto it = g->begin(); it != g->end(); ++it) {
        probe::Group group{it.key(), {}};
        const json holder{{"indices", it.value()}};
        Section wrapper(holder, "probe.groups." + it.key());
        wrapper.get("indices", group.indices);
        c.probe.groups.push_back(std::move(group));
      }
    }
    s.finish();
  }
  if (const auto* v = root.find("report")) {
    Section s(*v, "report");
    s.get("out", c.report.out);
    s.get("baseline", c.report.baseline);
    s.finish();
  }
  root.finish();
  return c;
}

json ExperimentConfig::to_json() const {
  const auto& t = train;
  const auto& a = t.augmentation;
  json groups = json::object();
  for (const auto& g : probe.groups) groups[g.name] = g.indices;
  return {
      {"dataset",
       {{"env", dataset.env},
        {"train", dataset.train},
        {"eval", dataset.eval},
        {"seed", dataset.seed},
        {"players_per_team", dataset.players_per_team},
        {"height", dataset.height},
        {"width", dataset.width},
        {"train_manifest", dataset.train_manifest.string()},
        {"eval_manifest", dataset.eval_manifest.string()}}},
      {"train",
       {{"method", method_name(t.method)},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"momentum", t.momentum},
        {"weight_decay", t.weight_decay},
        {"seed", t.seed},
        {"encoder",
         {{"input_height", t.encoder.input_height},
          {"input_width", t.encoder.input_width},
          {"stage_channels", t.encoder.stage_channels},
          {"blocks_per_stage", t.encoder.blocks_per_stage},
          {"embedding_dim", t.encoder.embedding_dim}}},
        {"augmentation",
         {{"crop_scale_min", a.crop_scale_min},
          {"crop_scale_max", a.crop_scale_max},
          {"flip_probability", a.flip_probability},
          {"brightness_jitter", a.brightness_jitter},
          {"contrast_jitter", a.contrast_jitter},
          {"grayscale_probability", a.grayscale_probability},
          {"rotation_degrees", a.rotation_degrees},
          {"seed", a.seed}}},
        {"projector", {{"hidden_dim", t.projector.hidden_dim}, {"output_dim", t.projector.output_dim}}},
        {"simclr", {{"temperature", t.simclr.temperature}}},
        {"byol", {{"ema_tau", t.byol.ema_tau}, {"predictor_hidden_dim", t.byol.predictor_hidden_dim}}},
        {"swav",
         {{"num_prototypes", t.swav.num_prototypes},
          {"sinkhorn_epsilon", t.swav.sinkhorn_epsilon},
          {"sinkhorn_iterations", t.swav.sinkhorn_iterations},
          {"temperature", t.swav.temperature},
          {"prototype_freeze_steps", t.swav.prototype_freeze_steps}}}}},
      {"probe", {{"damping", probe.damping}, {"split_half", probe.split_half}, {"groups", groups}}},
      {"report", {{"out", report.out.string()}, {"baseline", report.baseline.string()}}}};
}

void ExperimentConfig::validate() const {
  train.validate();
  const bool external = !dataset.train_manifest.empty() || !dataset.eval_manifest.empty();
  if (!external) {
    games::parse_env(dataset.env);
    if (dataset.train == 0 || dataset.eval == 0) throw ConfigError("dataset.train and dataset.eval must be positive");
    if (dataset.players_per_team == 0) throw ConfigError("dataset.players_per_team must be positive");
    if (dataset.height == 0 || dataset.width == 0) throw ConfigError("dataset frame size must be positive");
  }
  for (const auto* p : {&dataset.train_manifest, &dataset.eval_manifest, &report.baseline}) {
    if (!p->empty() && !fs::exists(*p)) throw ConfigError("path does not exist: " + p->string());
  }
  if (!(probe.damping >= 0.0)) throw ConfigError("probe.damping must be >= 0");
  for (const auto& g : probe.groups) {
    if (g.indices.empty()) throw ConfigError("probe group '" + g.name + "' is empty");
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &doc;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const auto part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw ConfigError("--set: bad key '" + key + "'");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("--set: '" + key + "' descends into a non-object");
      *node = json::object();
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  *node = value;
}

ExperimentConfig load_experiment(const fs::path& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return ExperimentConfig::from_json(doc);
}

DataPaths generate_data(const DatasetSection& dataset, const fs::path& out) {
  games::GenerateOptions g;
  g.env = games::parse_env(dataset.env);
  g.seed = dataset.seed;
  g.height = dataset.height;
  g.width = dataset.width;
  g.players_per_team = dataset.players_per_team;
  DataPaths paths;
  g.count = dataset.train;
  g.split = games::Split::Train;
  g.out_dir = out / "train";
  paths.train_manifest = games::generate_dataset(g);
  g.count = dataset.eval;
  g.split = games::Split::Eval;
  g.out_dir = out / "eval";
  paths.eval_manifest = games::generate_dataset(g);
  return paths;
}

Trainer run_training(const TrainConfig& config, const fs::path& train_manifest, const fs::path& out, bool resume) {
  const auto manifest = load_manifest(train_manifest);
  const auto frames = load_frames(manifest, config.encoder.input_height, config.encoder.input_width);
  fs::create_directories(out);
  const auto checkpoint = out / "checkpoint.sslg";
  Trainer trainer = resume && fs::exists(checkpoint) ? Trainer::restore(checkpoint, config) : Trainer(config);
  try {
    trainer.fit(frames, {checkpoint, nullptr});
  } catch (const NumericalError&) {
    trainer.log().write_csv(out / "train_log.csv");
    throw;
  }
  trainer.log().write_csv(out / "train_log.csv");
  return trainer;
}

probe::ProbeReport run_probe(Encoder& encoder, const fs::path& eval_manifest, const ProbeSection& options,
                             const std::string& label) {
  const auto manifest = load_manifest(eval_manifest);
  auto report = probe::probe_all(encoder, manifest, {options.damping, options.split_half});
  report.label = label;
  report.groups = probe::group_average(report, options.groups);
  return report;
}

void write_probe_outputs(const fs::path& out, const probe::ProbeReport& report, const probe::ProbeReport* baseline) {
  report::write_per_variable_csv(out / "probe_per_variable.csv", report);
  report::write_summary_json(out / "probe_summary.json", report, baseline);
  if (baseline != nullptr) {
    report::write_bar_chart_svg(out / "improvement.svg", "R2 improvement over " + baseline->label + " (%)",
                                report.variable_names, report::improvement_series(*baseline, {report}),
                                "improvement (%)");
  } else {
    report::write_bar_chart_svg(out / "improvement.svg", "R2 per state variable (no baseline given)",
                                report.variable_names, {{report.label, report.r2}}, "R2");
  }
}

MatrixResult run_matrix(const ExperimentConfig& config, const std::vector<Method>& methods, const fs::path& out) {
  config.validate();
  fs::create_directories(out);
  write_config_snapshot(out, config.to_json());
  DataPaths data{config.dataset.train_manifest, config.dataset.eval_manifest};
  if (data.train_manifest.empty() || data.eval_manifest.empty()) {
    log::info("generating " + config.dataset.env + " data under " + (out / "data").string());
    data = generate_data(config.dataset, out / "data");
  }

  MatrixResult result;
  {
    Encoder baseline = build_encoder(config.train.encoder, config.train.seed);
    result.baseline = run_probe(baseline, data.eval_manifest, config.probe, "random-init");
    write_probe_outputs(out / "random-init", result.baseline, nullptr);
  }
  for (auto m : methods) {
    TrainConfig tc = config.train;
    tc.method = m;
    const auto dir = out / method_name(m);
    log::info("training " + method_name(m));
    const auto start = std::chrono::steady_clock::now();
    auto trainer = run_training(tc, data.train_manifest, dir);
    auto report = run_probe(trainer.encoder(), data.eval_manifest, config.probe, method_name(m));
    write_probe_outputs(dir, report, &result.baseline);
    result.methods.push_back(std::move(report));
    result.method_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::vector<probe::ProbeReport> all{result.baseline};
  all.insert(all.end(), result.methods.begin(), result.methods.end());
  result.table = report::format_table(all);
  {
    std::ofstream f(out / "probe_summary.json");
    f << report::matrix_json(result.baseline, result.methods);
    if (!f) throw IoError("failed writing " + (out / "probe_summary.json").string());
  }
  if (!result.methods.empty()) {
    report::write_bar_chart_svg(out / "improvement.svg", "R2 improvement over the random-init baseline (%)",
                                result.baseline.variable_names,
                                report::improvement_series(result.baseline, result.methods), "improvement (%)");
  }
  return result;
}

}  // namespace gamessl
