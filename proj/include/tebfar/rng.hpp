#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace tebfar {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives a child seed from a master seed and a sequence of task keys. The
// mapping is order sensitive, so (seed, a, b) and (seed, b, a) differ.
inline constexpr std::uint64_t derive_seed(std::uint64_t master,
                                           std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = splitmix64(master ^ 0x6a09e667f3bcc909ULL);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x3c6ef372fe94f82bULL));
  return h;
}

inline std::uint64_t seed_key(double value) noexcept { return std::bit_cast<std::uint64_t>(value); }

/// xoshiro256** stream with fork semantics.
///
/// Satisfies UniformRandomBitGenerator so the <random> distributions can draw
/// from it. Results are reproducible on one platform and standard library; the
/// distribution algorithms are implementation defined, so streams are not
/// promised to match across toolchains.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) {
      x = splitmix64(x);
      s = x;
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = std::rotl(state_[3], 45);
    return result;
  }

  // Independent substream for task `index`; does not advance this stream.
  Rng fork(std::uint64_t index) const noexcept { return Rng(derive_seed(seed_, {index})); }

  std::uint64_t seed() const noexcept { return seed_; }

  double normal() { return normal_(*this); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(*this); }

  // Gamma with shape/rate parameterization.
  double gamma(double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(*this);
  }
  double inverse_gamma(double shape, double rate) { return 1.0 / gamma(shape, rate); }
  double exponential(double rate = 1.0) { return std::exponential_distribution<double>(rate)(*this); }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace tebfar
