#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gamessl/tensor.hpp"

// SSLG checkpoint container. Layout, all integers little-endian:
//
//   "SSLG"            4 bytes magic
//   version           u32 (currently 1)
//   tensor count      u32
//   per tensor:
//     name length     u32
//     name            UTF-8 bytes, no terminator
//     rank            u32
//     dims            u32 x rank
//     dtype tag       u8 (0 = f32)
//     payload         product(dims) little-endian IEEE-754 f32 values
namespace gamessl::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

std::vector<std::uint8_t> serialize(const std::vector<NamedTensor>& tensors);
// Parses a complete buffer; throws FormatError on bad magic, version,
// dtype, truncation or trailing bytes.
std::vector<NamedTensor> deserialize(const std::vector<std::uint8_t>& bytes);

// Writes through a temporary file and renames it into place.
void save(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load(const std::filesystem::path& path);

// Copies values from `source` into the same-named tensors of `target`.
// Every target name must be present with an identical shape; nothing is
// written unless all of them match.
void assign(const std::vector<NamedTensor>& target, const std::vector<NamedTensor>& source);

const NamedTensor* find(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace gamessl::checkpoint
