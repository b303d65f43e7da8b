#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace dcsflow {

/// splitmix64 step; used for seed derivation only.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a sub-seed from (master seed, stage name, trial index).
/// Every stochastic call in the pipeline gets its own stream this way, so
/// trials can run in parallel and still reproduce bit-for-bit.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage, std::uint64_t index);

/// Seeded RNG with explicitly coded value mappings. The engine (mt19937_64)
/// is fully specified by the standard and the mappings below avoid the
/// implementation-defined std distributions, so identical seeds give
/// identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller.
  double normal();

  /// Uniform integer on [0, n), rejection-sampled (unbiased).
  std::size_t uniform_index(std::size_t n);

  /// k distinct indices drawn uniformly from [0, n), in draw order.
  std::vector<int> sample_without_replacement(int k, int n);

  /// In-place Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace dcsflow
