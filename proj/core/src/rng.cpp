#include "rbi/rng.hpp"

#include <sodium.h>

#include <cstring>
#include <numeric>

#include "rbi/error.hpp"

namespace rbi {
void init_crypto() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw Error("libsodium initialization failed");
}

namespace {

Seed hash_seed(std::span<const std::uint8_t> data, std::string_view label) {
  init_crypto();
  Seed out{};
  crypto_generichash_state st;
  crypto_generichash_init(&st, nullptr, 0, out.size());
  crypto_generichash_update(&st, reinterpret_cast<const unsigned char*>(label.data()),
                            label.size());
  const unsigned char sep = 0;
  crypto_generichash_update(&st, &sep, 1);
  crypto_generichash_update(&st, data.data(), data.size());
  crypto_generichash_final(&st, out.data(), out.size());
  return out;
}

}  // namespace

Seed derive_seed(std::uint64_t value, std::string_view label) {
  std::array<std::uint8_t, 8> le{};
  for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(value >> (8 * i));
  return hash_seed(le, label);
}

Seed derive_seed(const Seed& parent, std::string_view label) { return hash_seed(parent, label); }

Seed system_seed() {
  init_crypto();
  Seed s{};
  randombytes_buf(s.data(), s.size());
  return s;
}

Rng::Rng(const Seed& seed, std::uint64_t stream) : key_(seed) {
  init_crypto();
  for (int i = 0; i < 8; ++i) nonce_[i] = static_cast<std::uint8_t>(stream >> (8 * i));
}

void Rng::refill() {
  buffer_.fill(0);
  crypto_stream_chacha20_xor_ic(buffer_.data(), buffer_.data(), buffer_.size(), nonce_.data(),
                                counter_, key_.data());
  counter_ += buffer_.size() / 64;
  pos_ = 0;
}

std::uint64_t Rng::next_u64() {
  if (pos_ + 8 > buffer_.size()) refill();
  std::uint64_t v = 0;
  std::memcpy(&v, buffer_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::uint64_t Rng::uniform(std::uint64_t bound) {
  if (bound == 0) throw Error("Rng::uniform: zero bound");
  // Lemire's multiply-shift rejection.
  std::uint64_t x = next_u64();
  unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      x = next_u64();
      m = static_cast<unsigned __int128>(x) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

std::int64_t Rng::uniform_in(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw Error("Rng::uniform_in: empty range");
  const auto span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo);
  if (span == std::numeric_limits<std::uint64_t>::max()) return static_cast<std::int64_t>(next_u64());
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(lo) + uniform(span + 1));
}

double Rng::unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

void Rng::fill(std::span<std::uint8_t> out) {
  for (auto& b : out) {
    if (pos_ >= buffer_.size()) refill();
    b = buffer_[pos_++];
  }
}

std::vector<std::uint8_t> Rng::bytes(std::size_t n) {
  std::vector<std::uint8_t> out(n);
  fill(out);
  return out;
}

Rng Rng::fork(std::string_view label) {
  Seed child{};
  fill(child);
  return Rng(derive_seed(child, label));
}

std::vector<std::uint32_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0U);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

}  // namespace rbi
