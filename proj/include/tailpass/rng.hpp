#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace tailpass {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of substream `stream` under `master`. Substreams with different
/// indices are statistically independent for practical purposes.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t s = master;
  const std::uint64_t a = splitmix64(s);
  std::uint64_t t = stream ^ 0xD1B54A32D192ED03ULL;
  const std::uint64_t b = splitmix64(t);
  std::uint64_t mix = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  return splitmix64(mix);
}

/// xoshiro256** seeded through SplitMix64. Satisfies UniformRandomBitGenerator
/// so it composes with <random> distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
  }

  /// Independent stream `stream` of the master seed.
  static Rng stream(std::uint64_t master, std::uint64_t stream) {
    return Rng(derive_seed(master, stream));
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(*this); }

  /// Symmetric-or-not Dirichlet draw. An infinite concentration returns the
  /// mean exactly.
  std::vector<double> dirichlet(std::span<const double> alpha) {
    std::vector<double> out(alpha.size());
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      if (std::isinf(alpha[i])) {
        std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(alpha.size()));
        return out;
      }
      out[i] = std::gamma_distribution<double>(alpha[i], 1.0)(*this);
      total += out[i];
    }
    if (total <= 0.0) {
      // every gamma draw underflowed (tiny alpha); fall back to a vertex
      std::fill(out.begin(), out.end(), 0.0);
      out[static_cast<std::size_t>(uniform() * static_cast<double>(out.size()))] = 1.0;
      return out;
    }
    for (auto& v : out) v /= total;
    return out;
  }

  std::vector<double> dirichlet(std::size_t n, double alpha) {
    std::vector<double> a(n, alpha);
    return dirichlet(a);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
};

}  // namespace tailpass
