// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace pseudobound {

/// 64-bit FNV-1a; stable across platforms, used for seeds and config hashes.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/**
 * Seeded random stream. Every consumer of randomness takes one of these
 * explicitly so parallel workers can own independent streams.
 */
class Rng {
public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Named sub-stream of a global seed. Changing how many draws one
  /// component makes never perturbs another component's stream.
  static Rng substream(std::uint64_t seed, std::string_view name) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(fnv1a(name)),
                      static_cast<std::uint32_t>(fnv1a(name) >> 32)};
    Rng rng;
    rng.engine_.seed(seq);
    return rng;
  }

  /// Uniform real in [lo, hi).
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  /// Uniform integer in the closed range [lo, hi].
  long long uniform_int(long long lo, long long hi) {
    return std::uniform_int_distribution<long long>(lo, hi)(engine_);
  }

  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  std::uint64_t next_u64() { return engine_(); }

  engine_type &engine() noexcept { return engine_; }

  std::string serialize() const;
  void deserialize(const std::string &state);

private:
  engine_type engine_;
};

} // namespace pseudobound
