#include "gamessl/dataset.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "gamessl/error.hpp"
#include "gamessl/random.hpp"

namespace gamessl {

namespace fs = std::filesystem;
using nlohmann::json;

bool StateVector::operator==(const StateVector& other) const {
  if (valid != other.valid || values.size() != other.values.size()) return false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (valid[i] && values[i] != other.values[i]) return false;
  }
  return true;
}

fs::path Manifest::image_path(std::size_t i) const {
  fs::path p(entries.at(i).image);
  return p.is_absolute() ? p : base_dir / p;
}

bool Manifest::operator==(const Manifest& other) const {
  if (schema_version != other.schema_version || env != other.env || variable_names != other.variable_names ||
      entries.size() != other.entries.size()) {
    return false;
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].image != other.entries[i].image || !(entries[i].state == other.entries[i].state)) return false;
  }
  return true;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  json doc;
  doc["schema_version"] = manifest.schema_version;
  doc["env"] = manifest.env;
  doc["variable_names"] = manifest.variable_names;
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    json state = json::array(), valid = json::array();
    for (std::size_t j = 0; j < e.state.size(); ++j) {
      const bool ok = e.state.valid[j];
      if (ok) {
        state.push_back(e.state.values[j]);
      } else {
        state.push_back(nullptr);
      }
      valid.push_back(ok);
    }
    entries.push_back({{"image", e.image}, {"state", std::move(state)}, {"valid", std::move(valid)}});
  }
  doc["entries"] = std::move(entries);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << doc.dump(1) << '\n';
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move manifest into place at " + path.string() + ": " + ec.message());
}

namespace {

[[noreturn]] void bad(const fs::path& path, const std::string& what) {
  throw FormatError(path.string() + ": " + what);
}

}  // namespace

Manifest load_manifest(const fs::path& path, bool check_images) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    bad(path, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) bad(path, "top level must be an object");
  if (!doc.contains("schema_version") || !doc["schema_version"].is_string()) bad(path, "missing schema_version");
  Manifest m;
  m.schema_version = doc["schema_version"].get<std::string>();
  if (m.schema_version != kManifestSchemaVersion) bad(path, "unknown schema_version \"" + m.schema_version + "\"");
  if (doc.contains("env")) {
    if (!doc["env"].is_string()) bad(path, "env must be a string");
    m.env = doc["env"].get<std::string>();
  }
  if (!doc.contains("variable_names") || !doc["variable_names"].is_array()) bad(path, "missing variable_names array");
  for (const auto& v : doc["variable_names"]) {
    if (!v.is_string()) bad(path, "variable_names must be strings");
    m.variable_names.push_back(v.get<std::string>());
  }
  const std::size_t k = m.variable_names.size();
  if (!doc.contains("entries") || !doc["entries"].is_array()) bad(path, "missing entries array");
  m.base_dir = path.parent_path();
  const auto& entries = doc["entries"];
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const std::string where = "entry " + std::to_string(i);
    if (!e.is_object()) bad(path, where + " is not an object");
    if (!e.contains("image") || !e["image"].is_string()) bad(path, where + ": missing image");
    if (!e.contains("state") || !e["state"].is_array()) bad(path, where + ": missing state array");
    if (!e.contains("valid") || !e["valid"].is_array()) bad(path, where + ": missing valid array");
    const auto& state = e["state"];
    const auto& valid = e["valid"];
    if (state.size() != k) {
      bad(path, where + ": state has " + std::to_string(state.size()) + " values, expected " + std::to_string(k) +
                    (state.size() < k ? " (first missing field state[" + std::to_string(state.size()) + "])" : ""));
    }
    if (valid.size() != k) {
      bad(path, where + ": valid has " + std::to_string(valid.size()) + " flags, expected " + std::to_string(k));
    }
    ManifestEntry entry;
    entry.image = e["image"].get<std::string>();
    entry.state.values.resize(k);
    entry.state.valid.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      const std::string field = where + ": state[" + std::to_string(j) + "]";
      if (!valid[j].is_boolean()) bad(path, where + ": valid[" + std::to_string(j) + "] is not a boolean");
      const bool ok = valid[j].get<bool>();
      entry.state.valid[j] = ok;
      if (ok) {
        if (!state[j].is_number()) bad(path, field + " is marked valid but is not a number");
        entry.state.values[j] = state[j].get<double>();
        if (!std::isfinite(entry.state.values[j])) bad(path, field + " is not finite");
      } else {
        if (!state[j].is_null() && !state[j].is_number()) bad(path, field + " must be null or a number");
        entry.state.values[j] = std::numeric_limits<double>::quiet_NaN();
      }
    }
    m.entries.push_back(std::move(entry));
  }
  if (check_images) {
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      const auto p = m.image_path(i);
      if (!fs::exists(p)) throw IoError(path.string() + ": entry " + std::to_string(i) + " references missing image " + p.string());
    }
  }
  return m;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  for (auto& c : cells) {
    while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
    while (!c.empty() && c.front() == ' ') c.erase(c.begin());
  }
  return cells;
}

}  // namespace

Manifest import_csv(const fs::path& path, bool check_images) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV " + path.string());
  std::string line;
  if (!std::getline(in, line)) bad(path, "empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "image") bad(path, "header must start with \"image\" followed by variable names");
  Manifest m;
  m.env = "external";
  m.variable_names.assign(header.begin() + 1, header.end());
  m.base_dir = path.parent_path();
  const std::size_t k = m.variable_names.size();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != k + 1) {
      bad(path, "line " + std::to_string(line_no) + ": " + std::to_string(cells.size()) + " cells, expected " +
                    std::to_string(k + 1));
    }
    ManifestEntry e;
    e.image = cells[0];
    e.state.values.resize(k);
    e.state.valid.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      const auto& c = cells[j + 1];
      if (c.empty()) {
        e.state.values[j] = std::numeric_limits<double>::quiet_NaN();
        e.state.valid[j] = false;
        continue;
      }
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != c.size() || !std::isfinite(v)) {
        bad(path, "line " + std::to_string(line_no) + ", column " + m.variable_names[j] + ": not a number: \"" + c + "\"");
      }
      e.state.values[j] = v;
      e.state.valid[j] = true;
    }
    m.entries.push_back(std::move(e));
  }
  if (check_images) {
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      if (!fs::exists(m.image_path(i))) throw IoError(path.string() + ": missing image " + m.image_path(i).string());
    }
  }
  return m;
}

std::vector<std::size_t> filter_valid(const Manifest& manifest, std::size_t j) {
  if (j >= manifest.num_variables()) {
    throw DimensionError("filter_valid: variable index " + std::to_string(j) + " out of range for " +
                         std::to_string(manifest.num_variables()) + " variables");
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    if (manifest.entries[i].state.valid[j]) out.push_back(i);
  }
  return out;
}

Frame load_frame(const Manifest& manifest, std::size_t i, std::size_t height, std::size_t width) {
  return resize_bilinear(read_png(manifest.image_path(i)), height, width);
}

std::vector<Frame> load_frames(const Manifest& manifest, std::size_t height, std::size_t width) {
  std::vector<Frame> frames;
  frames.reserve(manifest.entries.size());
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) frames.push_back(load_frame(manifest, i, height, width));
  return frames;
}

BatchIterator::BatchIterator(const Manifest& manifest, std::size_t batch_size, std::uint64_t seed, std::size_t height,
                             std::size_t width)
    : manifest_(manifest), batch_size_(batch_size), height_(height), width_(width) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  order_.resize(manifest.entries.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  auto rng = Rng::substream(seed, {stream::kBatches});
  rng.shuffle(order_.begin(), order_.end());
}

bool BatchIterator::next(Batch& batch) {
  if (cursor_ + batch_size_ > order_.size()) return false;
  batch.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                       order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
  cursor_ += batch_size_;
  batch.frames.clear();
  batch.states.clear();
  for (auto i : batch.indices) {
    batch.frames.push_back(load_frame(manifest_, i, height_, width_));
    batch.states.push_back(manifest_.entries[i].state);
  }
  return true;
}

}  // namespace gamessl
