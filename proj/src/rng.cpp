#include "dcsflow/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dcsflow {

std::uint64_t derive_seed(std::uint64_t master, std::string_view stage, std::uint64_t index) {
  // FNV-1a over the stage name, then two splitmix rounds to mix in master and
  // index. Collisions across (stage, index) pairs are what matter here, not
  // cryptographic strength.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : stage) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t state = master ^ h;
  splitmix64(state);
  state ^= index * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL;
  return splitmix64(state);
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  // Box-Muller; u1 shifted away from 0 so the log stays finite.
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t draw;
  do {
    draw = next_u64();
  } while (draw >= limit);
  return static_cast<std::size_t>(draw % n);
}

std::vector<int> Rng::sample_without_replacement(int k, int n) {
  if (k < 0 || k > n) throw std::invalid_argument("sample_without_replacement: need 0 <= k <= n");
  // Partial Fisher-Yates on the index pool; keeps draw order.
  std::vector<int> pool(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  std::vector<int> out(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(static_cast<std::size_t>(n - i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    out[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(i)];
  }
  return out;
}

}  // namespace dcsflow
