#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "gamessl/probe.hpp"
#include "gamessl/trainer.hpp"

namespace gamessl {

struct DatasetSection {
  std::string env = "pitch";
  std::size_t train = 2000;
  std::size_t eval = 500;
  std::uint64_t seed = 7;
  std::size_t players_per_team = 2;
  std::size_t height = 64;
  std::size_t width = 64;
  // When set, these manifests are used instead of generating data.
  std::filesystem::path train_manifest;
  std::filesystem::path eval_manifest;
};

struct ProbeSection {
  double damping = probe::kDefaultDamping;
  bool split_half = false;
  std::vector<probe::Group> groups;
};

struct ReportSection {
  std::filesystem::path out = "runs";
  std::filesystem::path baseline;
};

// JSON experiment file:
//   {"dataset": {...}, "train": {..., "encoder": {...}, "augmentation": {...},
//    "projector": {...}, "simclr": {...}, "byol": {...}, "swav": {...}},
//    "probe": {"damping": 1e-8, "split_half": false, "groups": {"name": [0, 1]}},
//    "report": {"out": "...", "baseline": "..."}}
// Every section and key is optional; unknown keys and wrong types are
// ConfigErrors. Augmentation defaults follow the dataset environment.
struct ExperimentConfig {
  DatasetSection dataset;
  TrainConfig train;
  ProbeSection probe;
  ReportSection report;

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  // Config values plus checks that referenced paths exist.
  void validate() const;
};

// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
// possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Reads the file (when given), applies overrides and parses the result.
ExperimentConfig load_experiment(const std::filesystem::path& path, const std::vector<std::string>& overrides);

struct DataPaths {
  std::filesystem::path train_manifest;
  std::filesystem::path eval_manifest;
};

// Generates out/train and out/eval for a synthetic environment.
DataPaths generate_data(const DatasetSection& dataset, const std::filesystem::path& out);

// Trains on the manifest's frames and writes out/checkpoint.sslg and
// out/train_log.csv. With resume, continues from an existing checkpoint.
Trainer run_training(const TrainConfig& config, const std::filesystem::path& train_manifest,
                     const std::filesystem::path& out, bool resume = false);

probe::ProbeReport run_probe(Encoder& encoder, const std::filesystem::path& eval_manifest, const ProbeSection& options,
                             const std::string& label);

// probe_per_variable.csv, probe_summary.json and improvement.svg under out.
// Without a baseline the chart shows R² values instead of improvements.
void write_probe_outputs(const std::filesystem::path& out, const probe::ProbeReport& report,
                         const probe::ProbeReport* baseline);

struct MatrixResult {
  probe::ProbeReport baseline;
  std::vector<probe::ProbeReport> methods;
  // Wall time to train and probe each method.
  std::vector<double> method_seconds;
  std::string table;
};

// Random-init baseline plus one trained encoder per method, all probed on
// the same eval manifest; writes per-run outputs under out/<label>/ and a
// combined probe_summary.json and improvement.svg under out.
MatrixResult run_matrix(const ExperimentConfig& config, const std::vector<Method>& methods,
                        const std::filesystem::path& out);

}  // namespace gamessl
