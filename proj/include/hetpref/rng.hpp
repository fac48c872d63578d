#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace hetpref {

/// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed of sub-stream `stream` derived from `base`. Streams are indexed
/// (annotator index, restart index, ...) so results do not depend on the
/// order in which streams are consumed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Portable random source.
///
/// std::mt19937_64's output sequence is fixed by the standard, but the
/// standard distributions are not, so every draw used by the library goes
/// through the helpers below to keep datasets bit-identical across
/// toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  /// Index drawn with probability proportional to `weights` (nonnegative, positive sum).
  std::size_t categorical(std::span<const double> weights);

  /// k distinct values from [0, n) in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  /// Standard exponential variate.
  double exponential();

  /// Standard normal variate (Box-Muller, no cached second value).
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace hetpref
