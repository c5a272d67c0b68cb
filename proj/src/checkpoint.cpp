#include "gamessl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "gamessl/error.hpp"

namespace gamessl::checkpoint {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'L', 'G'};
constexpr std::uint8_t kDtypeF32 = 0;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                        std::to_string(pos_));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    need(n, what);
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const std::vector<NamedTensor>& tensors) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.push_back(kDtypeF32);
    for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<NamedTensor> deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  const auto* magic = in.take(4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not an SSLG checkpoint (bad magic)");
  const auto version = in.u32("version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported SSLG format version " + std::to_string(version));
  }
  const auto count = in.u32("tensor count");
  std::vector<NamedTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.u32("name length");
    const auto* name_bytes = in.take(name_len, "name");
    std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
    const auto rank = in.u32("rank");
    if (rank == 0) throw FormatError("tensor '" + name + "' has rank 0");
    Shape shape;
    std::size_t total = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = in.u32("dims");
      if (d == 0) throw FormatError("tensor '" + name + "' has a zero dimension");
      shape.push_back(d);
      total *= d;
    }
    const auto dtype = in.u8("dtype");
    if (dtype != kDtypeF32) throw FormatError("tensor '" + name + "' has unsupported dtype tag " + std::to_string(dtype));
    in.need(total * 4, "payload");
    std::vector<float> data(total);
    for (auto& v : data) v = std::bit_cast<float>(in.u32("payload"));
    tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  if (!in.done()) throw FormatError("trailing bytes after last tensor");
  return tensors;
}

void save(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const auto bytes = serialize(tensors);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

std::vector<NamedTensor> load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void assign(const std::vector<NamedTensor>& target, const std::vector<NamedTensor>& source) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& s : source) by_name[s.name] = &s.tensor;
  for (const auto& t : target) {
    auto it = by_name.find(t.name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing tensor '" + t.name + "'");
    if (it->second->shape() != t.tensor.shape()) {
      throw FormatError("checkpoint tensor '" + t.name + "' has shape " + to_string(it->second->shape()) +
                        ", expected " + to_string(t.tensor.shape()));
    }
  }
  for (const auto& t : target) {
    Tensor dst = t.tensor;
    const auto src = by_name.at(t.name)->data();
    std::copy(src.begin(), src.end(), dst.data().begin());
  }
}

const NamedTensor* find(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

}  // namespace gamessl::checkpoint
