#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string_view>

namespace cbm {

// Deterministic splittable RNG. Every consumer derives its own stream from
// (master seed, component tag, indices...), so adding a draw in one component
// never shifts the values another component sees, and any epoch can be
// replayed without saving generator state.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t state) : state_(state) {}

  std::uint64_t next_u64() {
    // splitmix64 step
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [lo, hi]
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // uniform integer in [lo, hi], inclusive
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::uint64_t state_ = 0x853c49e6748fea9bULL;
};

inline std::uint64_t hash_mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  std::uint64_t z = h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derive an independent stream from a master seed, a component tag and any
// number of indices (epoch, sequence id, clip id, ...).
inline RngStream derive_stream(std::uint64_t seed, std::string_view tag,
                               std::initializer_list<std::uint64_t> indices = {}) {
  std::uint64_t h = hash_mix(0x6a09e667f3bcc909ULL, seed);
  for (char c : tag) h = hash_mix(h, static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
  for (std::uint64_t ix : indices) h = hash_mix(h, ix + 1);
  return RngStream(h);
}

}  // namespace cbm
