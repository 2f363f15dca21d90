#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "ouro/grid.hpp"

namespace ouro {

// FNV-1a, used to derive sub-stream seeds from names and to hash configs.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  return h;
}

// Seeded Gaussian source. Every consumer of randomness gets its own named
// sub-stream so adding draws in one place never shifts another.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::string_view stream) : engine_(mix(seed, fnv1a(stream))) {}

  double normal() { return dist_(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

  Grid sample(const Shape& shape) {
    Grid g(shape);
    for (double& v : g.values()) v = normal();
    return g;
  }

 private:
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  }

  std::mt19937_64 engine_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

// Returns all zeros; handy for identity checks of the diffusion plumbing.
struct ZeroNoise {
  Grid sample(const Shape& shape) const { return Grid(shape); }
};

template <class S>
concept GridSampler = requires(S s, const Shape& shape) {
  { s.sample(shape) } -> std::same_as<Grid>;
};

}  // namespace ouro
