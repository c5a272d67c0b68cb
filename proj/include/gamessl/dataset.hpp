#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gamessl/image.hpp"

namespace gamessl {

// Values of k state variables. Invalid positions hold NaN in memory and
// null in manifest files.
struct StateVector {
  std::vector<double> values;
  std::vector<bool> valid;

  std::size_t size() const { return values.size(); }
  bool operator==(const StateVector& other) const;
};

struct ManifestEntry {
  // Relative to the manifest's directory unless absolute.
  std::string image;
  StateVector state;
};

struct Manifest {
  std::string schema_version = "1";
  std::string env;
  std::vector<std::string> variable_names;
  std::vector<ManifestEntry> entries;
  // Directory used to resolve relative image paths; not serialized.
  std::filesystem::path base_dir;

  std::size_t num_variables() const { return variable_names.size(); }
  std::filesystem::path image_path(std::size_t i) const;
  bool operator==(const Manifest& other) const;
};

inline constexpr const char* kManifestSchemaVersion = "1";

// Manifest JSON:
//   {"schema_version": "1", "env": "...", "variable_names": [...],
//    "entries": [{"image": "frames/000000.png", "state": [0.1, null, ...],
//                 "valid": [true, false, ...]}, ...]}
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

// Validates schema version, array lengths and value/validity agreement
// (FormatError naming the entry and field) and, when `check_images` is set,
// that every referenced image exists (IoError naming the path).
Manifest load_manifest(const std::filesystem::path& path, bool check_images = true);

// Generic CSV export: header "image,<var_1>,...,<var_k>", one row per frame,
// empty cell = invalid. Image paths are relative to the CSV's directory.
Manifest import_csv(const std::filesystem::path& path, bool check_images = true);

// Indices of entries whose variable j is valid, in manifest order.
std::vector<std::size_t> filter_valid(const Manifest& manifest, std::size_t j);

// Decodes entry i and bilinearly resizes it to height x width (no-op when
// the sizes already match).
Frame load_frame(const Manifest& manifest, std::size_t i, std::size_t height, std::size_t width);
std::vector<Frame> load_frames(const Manifest& manifest, std::size_t height, std::size_t width);

struct Batch {
  std::vector<std::size_t> indices;
  std::vector<Frame> frames;
  std::vector<StateVector> states;
};

// Seeded-permutation batches over a manifest. The final partial batch is
// dropped, so there are floor(n / batch_size) batches.
class BatchIterator {
 public:
  BatchIterator(const Manifest& manifest, std::size_t batch_size, std::uint64_t seed, std::size_t height,
                std::size_t width);

  std::size_t num_batches() const { return order_.size() / batch_size_; }
  // Fills `batch` and returns true, or returns false when exhausted.
  bool next(Batch& batch);

 private:
  const Manifest& manifest_;
  std::size_t batch_size_;
  std::size_t height_;
  std::size_t width_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace gamessl
