#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace frcnn {

/// splitmix64 step. Used only to expand seeds into generator state.
std::uint64_t splitmix64(std::uint64_t& state);

/// xoshiro256** seeded through splitmix64.
///
/// Every stochastic consumer (weight init, anchor sampling, data generation)
/// owns its own stream, derived from a run seed and a stream name, so that
/// adding draws to one consumer never perturbs another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Stream for `name` under `seed`; equal inputs give equal streams.
  static Rng stream(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();

  /// Uniform integer in [0, n). n must be > 0. Unbiased (rejection).
  std::uint64_t below(std::uint64_t n);

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t range(std::int64_t lo, std::int64_t hi);

  /// Standard normal via Box-Muller (the spare value is cached).
  double normal();

  bool operator==(const Rng& other) const = default;

 private:
  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// FNV-1a of a name; mixes stream names into seeds.
std::uint64_t fnv1a64(std::string_view text);

}  // namespace frcnn
