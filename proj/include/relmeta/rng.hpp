#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

#include "relmeta/common.hpp"

namespace relmeta {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic random stream. Distribution mappings are spelled out here
// (not delegated to std:: distributions) so that identical seeds give
// bit-identical draws on every platform and stdlib.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  // Derives an independent stream from a master seed and a path of ids,
  // e.g. substream(seed, {stream::sa, epoch, task}). Streams with different
  // paths are decorrelated regardless of evaluation order or parallelism.
  static Rng substream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(master);
    for (std::uint64_t id : path) s = splitmix64(s ^ splitmix64(id + 0x632be59bd9b4e019ull));
    return Rng(s);
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Multiply-shift; bias is O(n / 2^64).
  int uniform_int(int n) {
    require(n > 0, "Rng::uniform_int: n must be positive");
    return static_cast<int>((static_cast<__uint128_t>(next_u64()) * static_cast<__uint128_t>(n)) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 gen_;
};

// Stream ids; one per independent use of randomness.
namespace stream {
inline constexpr std::uint64_t task_gen = 1;
inline constexpr std::uint64_t library_init = 2;
inline constexpr std::uint64_t proposal_init = 3;
inline constexpr std::uint64_t structure_init = 4;
inline constexpr std::uint64_t sa = 5;
inline constexpr std::uint64_t meta_test = 6;
inline constexpr std::uint64_t latent = 7;
inline constexpr std::uint64_t batch_sel = 8;
}  // namespace stream

}  // namespace relmeta
