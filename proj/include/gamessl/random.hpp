#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <utility>

namespace gamessl {

// Seeded random source. Distributions are computed here from raw 64-bit draws
// rather than through <random> distribution objects, whose output is
// implementation-defined, so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream keyed by (seed, path...). Used for per-sample and
  // per-epoch randomness so results never depend on iteration order.
  static Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      using std::swap;
      swap(first[i - 1], first[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Fixed stream tags so unrelated consumers of one seed never collide.
namespace stream {
inline constexpr std::uint64_t kInit = 0x696e6974;
inline constexpr std::uint64_t kEpochOrder = 0x6f726472;
inline constexpr std::uint64_t kAugment = 0x61756731;
inline constexpr std::uint64_t kTrainSplit = 0x74726e;
inline constexpr std::uint64_t kEvalSplit = 0x6576616c;
inline constexpr std::uint64_t kBatches = 0x62617463;
inline constexpr std::uint64_t kPrototypes = 0x70726f74;
}  // namespace stream

}  // namespace gamessl
