#include "rbi/paillier.hpp"

#include <algorithm>

#include "rbi/error.hpp"

namespace rbi {

mpz_class random_bits(Rng& rng, int bits) {
  const auto nbytes = static_cast<std::size_t>((bits + 7) / 8);
  const auto buf = rng.bytes(nbytes);
  mpz_class x = read_mpz(buf);
  const auto extra = static_cast<int>(nbytes * 8) - bits;
  if (extra > 0) x >>= extra;
  return x;
}

mpz_class random_below(Rng& rng, const mpz_class& bound) {
  const int bits = static_cast<int>(mpz_sizeinbase(bound.get_mpz_t(), 2));
  while (true) {
    mpz_class x = random_bits(rng, bits);
    if (x < bound) return x;
  }
}

void write_mpz(std::span<std::uint8_t> out, const mpz_class& x) {
  if (x < 0) throw RangeError("write_mpz: negative value");
  const auto need = (mpz_sizeinbase(x.get_mpz_t(), 2) + 7) / 8;
  if (x != 0 && need > out.size()) throw RangeError("write_mpz: value too wide");
  std::fill(out.begin(), out.end(), 0);
  if (x == 0) return;
  std::size_t count = 0;
  mpz_export(out.data() + (out.size() - need), &count, 1, 1, 1, 0, x.get_mpz_t());
}

mpz_class read_mpz(std::span<const std::uint8_t> in) {
  mpz_class x;
  if (!in.empty()) mpz_import(x.get_mpz_t(), in.size(), 1, 1, 1, 0, in.data());
  return x;
}

PaillierPublicKey::PaillierPublicKey(mpz_class modulus, mpz_class base)
    : n(std::move(modulus)), n2(n * n), h(std::move(base)) {}

mpz_class PaillierPublicKey::randomizer(Rng& rng) const {
  const mpz_class x = random_bits(rng, kRandomizerBits);
  mpz_class out;
  mpz_powm(out.get_mpz_t(), h.get_mpz_t(), x.get_mpz_t(), n2.get_mpz_t());
  return out;
}

mpz_class PaillierPublicKey::encrypt(const mpz_class& m, Rng& rng) const {
  mpz_class mm;
  mpz_mod(mm.get_mpz_t(), m.get_mpz_t(), n.get_mpz_t());
  mpz_class c = mm * n + 1;
  c *= randomizer(rng);
  mpz_mod(c.get_mpz_t(), c.get_mpz_t(), n2.get_mpz_t());
  return c;
}

mpz_class PaillierPublicKey::add(const mpz_class& a, const mpz_class& b) const {
  mpz_class c = a * b;
  mpz_mod(c.get_mpz_t(), c.get_mpz_t(), n2.get_mpz_t());
  return c;
}

mpz_class PaillierPublicKey::scale(const mpz_class& c, const mpz_class& k) const {
  mpz_class kk;
  mpz_mod(kk.get_mpz_t(), k.get_mpz_t(), n.get_mpz_t());
  mpz_class out;
  mpz_powm(out.get_mpz_t(), c.get_mpz_t(), kk.get_mpz_t(), n2.get_mpz_t());
  return out;
}

mpz_class PaillierPublicKey::rerandomize(const mpz_class& c, Rng& rng) const {
  return add(c, randomizer(rng));
}

bool PaillierPublicKey::valid_ciphertext(const mpz_class& c) const {
  if (c <= 0 || c >= n2) return false;
  mpz_class g;
  mpz_gcd(g.get_mpz_t(), c.get_mpz_t(), n.get_mpz_t());
  return g == 1;
}

void PaillierPublicKey::serialize(ByteWriter& w) const {
  const auto nb = modulus_bytes();
  w.u16(static_cast<std::uint16_t>(nb));
  write_mpz({w.grow(nb), nb}, n);
  write_mpz({w.grow(2 * nb), 2 * nb}, h);
}

PaillierPublicKey PaillierPublicKey::deserialize(ByteReader& r) {
  const std::size_t nb = r.u16();
  if (nb < 32 || nb > 1024) throw ProtocolViolation("paillier modulus size out of range");
  mpz_class n = read_mpz(r.bytes(nb));
  mpz_class h = read_mpz(r.bytes(2 * nb));
  if (mpz_even_p(n.get_mpz_t()) || n < 3) throw ProtocolViolation("bad paillier modulus");
  PaillierPublicKey key(std::move(n), std::move(h));
  if (!key.valid_ciphertext(key.h)) throw ProtocolViolation("bad paillier randomizer base");
  return key;
}

namespace {

mpz_class random_prime(Rng& rng, int bits) {
  mpz_class x = random_bits(rng, bits);
  mpz_setbit(x.get_mpz_t(), static_cast<mp_bitcnt_t>(bits - 1));
  mpz_setbit(x.get_mpz_t(), static_cast<mp_bitcnt_t>(bits - 2));
  mpz_class p;
  mpz_nextprime(p.get_mpz_t(), x.get_mpz_t());
  return p;
}

}  // namespace

PaillierKeyPair PaillierKeyPair::generate(int modulus_bits, Rng& rng) {
  if (modulus_bits < 256 || modulus_bits % 2 != 0) {
    throw UsageError("paillier modulus must be an even bit count >= 256");
  }
  PaillierKeyPair kp;
  const int half = modulus_bits / 2;
  mpz_class n;
  do {
    kp.p_ = random_prime(rng, half);
    kp.q_ = random_prime(rng, half);
    n = kp.p_ * kp.q_;
  } while (kp.p_ == kp.q_ || static_cast<int>(mpz_sizeinbase(n.get_mpz_t(), 2)) != modulus_bits);
  kp.p2_ = kp.p_ * kp.p_;
  kp.q2_ = kp.q_ * kp.q_;
  kp.pm1_ = kp.p_ - 1;
  kp.qm1_ = kp.q_ - 1;
  mpz_lcm(kp.lambda_.get_mpz_t(), kp.pm1_.get_mpz_t(), kp.qm1_.get_mpz_t());
  if (mpz_invert(kp.mu_.get_mpz_t(), kp.lambda_.get_mpz_t(), n.get_mpz_t()) == 0) {
    throw Error("paillier: lambda not invertible");
  }

  const mpz_class n2 = n * n;
  mpz_class rho, h, g;
  do {
    rho = random_below(rng, n);
    mpz_gcd(g.get_mpz_t(), rho.get_mpz_t(), n.get_mpz_t());
  } while (rho < 2 || g != 1);
  mpz_powm(h.get_mpz_t(), rho.get_mpz_t(), n.get_mpz_t(), n2.get_mpz_t());
  kp.pub_ = PaillierPublicKey(n, h);
  mpz_mod(kp.hp_.get_mpz_t(), h.get_mpz_t(), kp.p2_.get_mpz_t());
  mpz_mod(kp.hq_.get_mpz_t(), h.get_mpz_t(), kp.q2_.get_mpz_t());
  mpz_invert(kp.q2_inv_p2_.get_mpz_t(), kp.q2_.get_mpz_t(), kp.p2_.get_mpz_t());
  return kp;
}

mpz_class PaillierKeyPair::decrypt(const mpz_class& c) const {
  mpz_class u;
  mpz_powm(u.get_mpz_t(), c.get_mpz_t(), lambda_.get_mpz_t(), pub_.n2.get_mpz_t());
  mpz_class l = (u - 1) / pub_.n;
  mpz_class m = l * mu_;
  mpz_mod(m.get_mpz_t(), m.get_mpz_t(), pub_.n.get_mpz_t());
  return m;
}

mpz_class PaillierKeyPair::encrypt(const mpz_class& m, Rng& rng) const {
  const mpz_class x = random_bits(rng, PaillierPublicKey::kRandomizerBits);
  mpz_class rp, rq;
  mpz_powm(rp.get_mpz_t(), hp_.get_mpz_t(), x.get_mpz_t(), p2_.get_mpz_t());
  mpz_powm(rq.get_mpz_t(), hq_.get_mpz_t(), x.get_mpz_t(), q2_.get_mpz_t());
  // Garner: r = rq + q^2 * ((rp - rq) * q^-2 mod p^2).
  mpz_class t = (rp - rq) * q2_inv_p2_;
  mpz_mod(t.get_mpz_t(), t.get_mpz_t(), p2_.get_mpz_t());
  const mpz_class r = rq + q2_ * t;
  mpz_class mm;
  mpz_mod(mm.get_mpz_t(), m.get_mpz_t(), pub_.n.get_mpz_t());
  mpz_class c = (mm * pub_.n + 1) * r;
  mpz_mod(c.get_mpz_t(), c.get_mpz_t(), pub_.n2.get_mpz_t());
  return c;
}

bool PaillierKeyPair::is_zero(const mpz_class& c) const {
  // c encrypts m with m = 0 (mod p) iff c^(p-1) = 1 (mod p^2); same for q.
  mpz_class t;
  mpz_powm(t.get_mpz_t(), c.get_mpz_t(), pm1_.get_mpz_t(), p2_.get_mpz_t());
  if (t != 1) return false;
  mpz_powm(t.get_mpz_t(), c.get_mpz_t(), qm1_.get_mpz_t(), q2_.get_mpz_t());
  return t == 1;
}

}  // namespace rbi
