#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <span>

#include "rbi/rng.hpp"
#include "rbi/wire.hpp"

namespace rbi {

mpz_class random_bits(Rng& rng, int bits);
mpz_class random_below(Rng& rng, const mpz_class& bound);

// Fixed-width big-endian encoding; throws RangeError if x does not fit.
void write_mpz(std::span<std::uint8_t> out, const mpz_class& x);
mpz_class read_mpz(std::span<const std::uint8_t> in);

// Paillier with g = n + 1. Encryption randomness is h^x for a public
// h = rho^n mod n^2 and a short random exponent x, which costs a 256-bit
// exponentiation instead of a full-size one.
struct PaillierPublicKey {
  mpz_class n;
  mpz_class n2;
  mpz_class h;

  static constexpr int kRandomizerBits = 256;

  PaillierPublicKey() = default;
  PaillierPublicKey(mpz_class modulus, mpz_class base);

  int modulus_bits() const { return static_cast<int>(mpz_sizeinbase(n.get_mpz_t(), 2)); }
  std::size_t modulus_bytes() const { return (mpz_sizeinbase(n.get_mpz_t(), 2) + 7) / 8; }
  std::size_t ciphertext_bytes() const { return 2 * modulus_bytes(); }

  mpz_class randomizer(Rng& rng) const;
  // m is reduced mod n, so negative plaintexts work.
  mpz_class encrypt(const mpz_class& m, Rng& rng) const;
  mpz_class add(const mpz_class& a, const mpz_class& b) const;
  mpz_class scale(const mpz_class& c, const mpz_class& k) const;
  mpz_class rerandomize(const mpz_class& c, Rng& rng) const;
  // Range-checks a ciphertext received from the wire.
  bool valid_ciphertext(const mpz_class& c) const;

  void serialize(ByteWriter& w) const;
  static PaillierPublicKey deserialize(ByteReader& r);
};

class PaillierKeyPair {
 public:
  static PaillierKeyPair generate(int modulus_bits, Rng& rng);

  const PaillierPublicKey& pub() const { return pub_; }
  mpz_class decrypt(const mpz_class& c) const;
  // Same distribution as pub().encrypt, computed with the factorization.
  mpz_class encrypt(const mpz_class& m, Rng& rng) const;
  // Whether c encrypts 0, without a full decryption.
  bool is_zero(const mpz_class& c) const;

 private:
  PaillierPublicKey pub_;
  mpz_class p_, q_, p2_, q2_, pm1_, qm1_;
  mpz_class lambda_, mu_;
  mpz_class hp_, hq_, q2_inv_p2_;
};

}  // namespace rbi
