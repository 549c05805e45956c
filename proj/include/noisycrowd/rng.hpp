#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace noisycrowd {

// Per-purpose stream ids used when deriving child streams from a repetition
// stream. Values are part of the reproducibility contract; do not renumber.
enum class StreamPurpose : std::uint64_t {
  kSubsample = 1,
  kNoise = 2,
  kInitWeights = 3,
  kClassifier = 4,
  kTrusted = 5,
  kOffline = 6,
  kRates = 7,
};

// Seeded xoshiro256** generator keyed by (seed, stream_id).
//
// All draws are produced with integer arithmetic and explicit bit-to-double
// conversion so the sequence is identical across compilers and platforms
// (the <random> distributions are not). Deriving a child stream depends only
// on the (seed, stream_id) pair, never on how many draws were consumed.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  [[nodiscard]] RngStream derive(std::uint64_t purpose) const;
  [[nodiscard]] RngStream derive(StreamPurpose purpose) const {
    return derive(static_cast<std::uint64_t>(purpose));
  }

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform on [0, n); n must be positive. Rejection sampling, no modulo bias.
  std::size_t uniform_index(std::size_t n);
  // Standard normal via Box-Muller (one draw per call, second value discarded).
  double normal();

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t state_[4];
};

}  // namespace noisycrowd
