#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace taskwise {

/// Seedable generator whose output is identical on every platform: the engine is
/// std::mt19937_64 (fully specified by the standard) and all samplers are
/// implemented here instead of using the implementation-defined <random>
/// distributions. Golden outputs are tied to `kName`.
class Rng {
 public:
  static constexpr std::string_view kName = "mt19937_64/taskwise-samplers-v1";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  double gamma(double shape);
  double beta(double a, double b);

  /// Index drawn with probability proportional to `weights`.
  std::size_t categorical(std::span<const double> weights);

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer, used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

}  // namespace taskwise
