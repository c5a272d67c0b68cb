#include "gamessl/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>

#include "gamessl/error.hpp"
#include "gamessl/experiment.hpp"
#include "gamessl/games.hpp"
#include "gamessl/log.hpp"
#include "gamessl/report.hpp"
#include "gamessl/selftest.hpp"

namespace gamessl::cli {

namespace {

namespace fs = std::filesystem;

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
};

void add_config_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment JSON file");
  cmd->add_option("--set", f.overrides, "override a config value, e.g. train.epochs=5")->allow_extra_args(false);
}

std::string frame_size(const Manifest& m) {
  if (m.entries.empty()) return "-";
  const auto f = read_png(m.image_path(0));
  return std::to_string(f.width) + "x" + std::to_string(f.height);
}

int cmd_gen_data(const CommonFlags& common, const fs::path& out_dir, std::ostream& out) {
  const auto config = load_experiment(common.config, common.overrides);
  config.validate();
  const auto paths = generate_data(config.dataset, out_dir);
  const auto train = load_manifest(paths.train_manifest, false), eval = load_manifest(paths.eval_manifest, false);
  out << "env       split  frames  state_dim  frame\n";
  char buf[160];
  for (const auto* m : {&train, &eval}) {
    std::snprintf(buf, sizeof buf, "%-9s %-6s %6zu  %9zu  %s\n", m->env.c_str(), m == &train ? "train" : "eval",
                  m->entries.size(), m->num_variables(), frame_size(*m).c_str());
    out << buf;
  }
  out << "state dimension: " << train.num_variables() << "\n";
  out << "train manifest: " << paths.train_manifest.string() << "\n";
  out << "eval manifest: " << paths.eval_manifest.string() << "\n";
  return kOk;
}

int cmd_train(const CommonFlags& common, const fs::path& data, const fs::path& out_dir, bool resume,
              std::ostream& out) {
  auto config = load_experiment(common.config, common.overrides);
  if (!data.empty()) config.dataset.train_manifest = data;
  config.validate();
  if (config.dataset.train_manifest.empty()) {
    throw ConfigError("no training data: pass --data or set dataset.train_manifest");
  }
  const auto trainer = run_training(config.train, config.dataset.train_manifest, out_dir, resume);
  const auto& log = trainer.log();
  out << method_name(config.train.method) << ": " << log.step_loss.size() << " steps over " << trainer.epochs_completed()
      << " epochs\n";
  char buf[96];
  for (std::size_t e = 0; e < log.epoch_mean_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "epoch %zu mean loss %.6f\n", e + 1, log.epoch_mean_loss[e]);
    out << buf;
  }
  out << "checkpoint: " << (out_dir / "checkpoint.sslg").string() << "\n";
  out << "train log: " << (out_dir / "train_log.csv").string() << "\n";
  return kOk;
}

struct ProbeFlags {
  std::string checkpoint;
  bool random_init = false;
  std::string eval;
  std::string baseline;
  std::vector<std::string> groups;
  std::string label;
  double damping = -1;
  bool split_half = false;
};

int cmd_probe(const CommonFlags& common, const ProbeFlags& f, const fs::path& out_dir, std::ostream& out) {
  auto config = load_experiment(common.config, common.overrides);
  if (!f.eval.empty()) config.dataset.eval_manifest = f.eval;
  if (!f.baseline.empty()) config.report.baseline = f.baseline;
  if (f.damping >= 0) config.probe.damping = f.damping;
  if (f.split_half) config.probe.split_half = true;
  for (const auto& g : f.groups) config.probe.groups.push_back(probe::parse_group(g));
  if (f.random_init == !f.checkpoint.empty()) throw ConfigError("pass exactly one of --checkpoint or --random-init");
  if (!f.checkpoint.empty() && !fs::exists(f.checkpoint)) throw ConfigError("checkpoint not found: " + f.checkpoint);
  config.validate();
  if (config.dataset.eval_manifest.empty()) throw ConfigError("no eval data: pass --eval or set dataset.eval_manifest");

  Encoder encoder = f.random_init ? build_encoder(config.train.encoder, config.train.seed) : load_encoder(f.checkpoint);
  std::string label = f.label;
  if (label.empty()) label = f.random_init ? "random-init" : fs::path(f.checkpoint).parent_path().filename().string();
  if (label.empty()) label = "encoder";
  const auto report = run_probe(encoder, config.dataset.eval_manifest, config.probe, label);

  probe::ProbeReport baseline;
  const bool has_baseline = !config.report.baseline.empty();
  if (has_baseline) baseline = report::read_summary_json(config.report.baseline);
  write_probe_outputs(out_dir, report, has_baseline ? &baseline : nullptr);

  std::vector<probe::ProbeReport> columns;
  if (has_baseline) columns.push_back(baseline);
  columns.push_back(report);
  out << report::format_table(columns);
  if (has_baseline) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "avg R2 improvement over %s: %.1f%%\n", baseline.label.c_str(),
                  probe::improvement(baseline.avg(), report.avg()));
    out << buf;
  }
  for (const auto& g : report.groups) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "group %s: %.3f\n", g.name.c_str(), g.r2);
    out << buf;
  }
  out << "report: " << (out_dir / "probe_summary.json").string() << "\n";
  return kOk;
}

int cmd_selftest(const std::string& fault, std::ostream& out) {
  const auto checks = selftest::run({fault});
  std::size_t failed = 0;
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
    failed += c.passed ? 0 : 1;
  }
  if (failed > 0) {
    out << failed << " of " << checks.size() << " checks failed:";
    for (const auto& c : checks)
      if (!c.passed) out << " " << c.name << ";";
    out << "\n";
    return kCheckFailed;
  }
  out << "all " << checks.size() << " checks passed\n";
  return kOk;
}

int cmd_run_matrix(const CommonFlags& common, const std::string& methods_flag, const fs::path& out_dir,
                   std::ostream& out) {
  const auto config = load_experiment(common.config, common.overrides);
  std::vector<Method> methods;
  std::size_t pos = 0;
  while (pos <= methods_flag.size()) {
    const auto comma = std::min(methods_flag.find(',', pos), methods_flag.size());
    methods.push_back(parse_method(methods_flag.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  const auto result = run_matrix(config, methods, out_dir);
  out << result.table;
  for (std::size_t i = 0; i < result.methods.size(); ++i) {
    const auto& m = result.methods[i];
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s avg R2 improvement: %.1f%% (%.1f min)\n", m.label.c_str(),
                  probe::improvement(result.baseline.avg(), m.avg()), result.method_seconds[i] / 60);
    out << buf;
  }
  out << "report: " << (out_dir / "probe_summary.json").string() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised representation learning on synthetic game frames"};
  app.name("gamessl");
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "log progress to stderr");

  CommonFlags common;
  std::string out_dir = "runs";

  auto* gen = app.add_subcommand("gen-data", "render train and eval datasets");
  add_config_flags(gen, common);
  gen->add_option("--out", out_dir, "output directory")->required();
  std::string env;
  std::size_t n_train = 0, n_eval = 0, players = 0, height = 0, width = 0;
  std::uint64_t seed = 0;
  gen->add_option("--env", env, "pitch or corridor");
  gen->add_option("--train", n_train, "number of training frames");
  gen->add_option("--eval", n_eval, "number of evaluation frames");
  gen->add_option("--seed", seed, "dataset seed");
  gen->add_option("--players", players, "players per team (pitch)");
  gen->add_option("--height", height, "frame height");
  gen->add_option("--width", width, "frame width");

  auto* train = app.add_subcommand("train", "pretrain an encoder with one SSL method");
  add_config_flags(train, common);
  train->add_option("--out", out_dir, "output directory")->required();
  std::string method, data;
  std::size_t epochs = 0, batch = 0;
  std::uint64_t train_seed = 0;
  bool resume = false;
  train->add_option("--method", method, "simclr, byol or swav");
  train->add_option("--data", data, "training manifest");
  train->add_option("--epochs", epochs, "number of epochs");
  train->add_option("--batch-size", batch, "batch size");
  train->add_option("--seed", train_seed, "training seed");
  train->add_flag("--resume", resume, "continue from out/checkpoint.sslg when present");

  auto* probe_cmd = app.add_subcommand("probe", "linear-probe a frozen encoder");
  add_config_flags(probe_cmd, common);
  probe_cmd->add_option("--out", out_dir, "output directory")->required();
  ProbeFlags pf;
  probe_cmd->add_option("--checkpoint", pf.checkpoint, "encoder or training checkpoint");
  probe_cmd->add_flag("--random-init", pf.random_init, "probe the untrained encoder built from the config seed");
  probe_cmd->add_option("--eval", pf.eval, "evaluation manifest");
  probe_cmd->add_option("--baseline", pf.baseline, "probe_summary.json to compare against");
  probe_cmd->add_option("--groups", pf.groups, "named variable group, e.g. defenders=0,1,2,3");
  probe_cmd->add_option("--label", pf.label, "name used in reports");
  probe_cmd->add_option("--damping", pf.damping, "relative ridge damping (default 1e-8)");
  probe_cmd->add_flag("--split-half", pf.split_half, "fit on half of the rows and score on the rest");

  auto* self = app.add_subcommand("selftest", "gradient checks and numerical oracles");
  std::string fault;
  self->add_option("--inject-fault", fault)->group("");

  auto* matrix = app.add_subcommand("run-matrix", "baseline plus all methods, one combined report");
  add_config_flags(matrix, common);
  matrix->add_option("--out", out_dir, "output directory")->required();
  std::string methods = "simclr,byol,swav";
  matrix->add_option("--methods", methods, "comma-separated methods");

  std::vector<std::string> argv_store{"gamessl"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  log::set_verbose(verbose);
  // Flags become config overrides so the config file stays the single source.
  auto set = [&](const std::string& key, const std::string& value) { common.overrides.push_back(key + "=" + value); };
  auto quoted = [](const std::string& s) { return nlohmann::json(s).dump(); };
  if (gen->parsed()) {
    if (!env.empty()) set("dataset.env", quoted(env));
    if (gen->count("--train")) set("dataset.train", std::to_string(n_train));
    if (gen->count("--eval")) set("dataset.eval", std::to_string(n_eval));
    if (gen->count("--seed")) set("dataset.seed", std::to_string(seed));
    if (gen->count("--players")) set("dataset.players_per_team", std::to_string(players));
    if (gen->count("--height")) set("dataset.height", std::to_string(height));
    if (gen->count("--width")) set("dataset.width", std::to_string(width));
  }
  if (train->parsed()) {
    if (!method.empty()) set("train.method", quoted(method));
    if (train->count("--epochs")) set("train.epochs", std::to_string(epochs));
    if (train->count("--batch-size")) set("train.batch_size", std::to_string(batch));
    if (train->count("--seed")) set("train.seed", std::to_string(train_seed));
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, out_dir, out);
    if (train->parsed()) return cmd_train(common, data, out_dir, resume, out);
    if (probe_cmd->parsed()) return cmd_probe(common, pf, out_dir, out);
    if (self->parsed()) return cmd_selftest(fault, out);
    if (matrix->parsed()) return cmd_run_matrix(common, methods, out_dir, out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsage;
}

}  // namespace gamessl::cli
