#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace rbi {

using Seed = std::array<std::uint8_t, 32>;

// Initializes libsodium once; every crypto entry point calls it.
void init_crypto();

// Expands a 64-bit user seed plus a purpose label into a 32-byte stream key.
Seed derive_seed(std::uint64_t value, std::string_view label);
Seed derive_seed(const Seed& parent, std::string_view label);

// Fresh seed from the operating system.
Seed system_seed();

// Deterministic ChaCha20 keystream generator.
//
// The same seed and stream id always produce the same sequence on every
// platform, so all sampling helpers below avoid <random> distributions (their
// output is implementation defined).
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(const Seed& seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }
  std::uint64_t next_u64();

  // Uniform in [0, bound). bound must be nonzero.
  std::uint64_t uniform(std::uint64_t bound);
  // Uniform in [lo, hi], inclusive.
  std::int64_t uniform_in(std::int64_t lo, std::int64_t hi);
  bool coin() { return (next_u64() & 1U) != 0; }
  double unit();  // [0, 1)

  void fill(std::span<std::uint8_t> out);
  std::vector<std::uint8_t> bytes(std::size_t n);

  // Independent child generator keyed by this generator's output and label.
  Rng fork(std::string_view label);

 private:
  void refill();

  Seed key_;
  std::array<std::uint8_t, 8> nonce_{};
  std::uint64_t counter_ = 0;
  std::array<std::uint8_t, 256> buffer_{};
  std::size_t pos_ = 256;
};

// Unbiased Fisher-Yates permutation of 0..n-1.
std::vector<std::uint32_t> random_permutation(std::size_t n, Rng& rng);

}  // namespace rbi
