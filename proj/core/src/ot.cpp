#include "rbi/ot.hpp"

#include <sodium.h>

#include <algorithm>

#include "rbi/error.hpp"

namespace rbi {
namespace {

OtPoint read_point(std::span<const std::uint8_t> in) {
  if (in.size() != kOtPointBytes) throw ProtocolViolation("ot: bad point length");
  OtPoint p{};
  std::copy(in.begin(), in.end(), p.begin());
  if (crypto_core_ristretto255_is_valid_point(p.data()) != 1) {
    throw ProtocolViolation("ot: invalid group element");
  }
  return p;
}

std::array<std::uint8_t, kOtMaxMessage> pad(const OtPoint& shared, std::uint64_t id, int index) {
  std::array<std::uint8_t, kOtMaxMessage> out{};
  std::uint8_t tail[9];
  for (int i = 0; i < 8; ++i) tail[i] = static_cast<std::uint8_t>(id >> (8 * i));
  tail[8] = static_cast<std::uint8_t>(index);
  crypto_generichash_state st;
  crypto_generichash_init(&st, nullptr, 0, out.size());
  crypto_generichash_update(&st, shared.data(), shared.size());
  crypto_generichash_update(&st, tail, sizeof tail);
  crypto_generichash_final(&st, out.data(), out.size());
  return out;
}

}  // namespace

OtScalar random_scalar(Rng& rng) {
  init_crypto();
  std::array<std::uint8_t, crypto_core_ristretto255_NONREDUCEDSCALARBYTES> wide{};
  OtScalar s{};
  do {
    rng.fill(wide);
    crypto_core_ristretto255_scalar_reduce(s.data(), wide.data());
  } while (std::all_of(s.begin(), s.end(), [](std::uint8_t b) { return b == 0; }));
  return s;
}

OtSender::OtSender(Rng& rng) {
  const auto c = random_scalar(rng);
  if (crypto_scalarmult_ristretto255_base(c_point_.data(), c.data()) != 0) {
    throw Error("ot: degenerate setup scalar");
  }
}

Bytes OtSender::answer(std::span<const std::uint8_t> query, std::span<const std::uint8_t> m0,
                       std::span<const std::uint8_t> m1, std::uint64_t transfer_id,
                       Rng& rng) const {
  if (m0.size() != m1.size() || m0.size() > kOtMaxMessage) {
    throw Error("ot: messages must have equal length <= 64");
  }
  std::array<OtPoint, 2> pk{read_point(query), OtPoint{}};
  crypto_core_ristretto255_sub(pk[1].data(), c_point_.data(), pk[0].data());

  ByteWriter w;
  const std::array<std::span<const std::uint8_t>, 2> msgs{m0, m1};
  for (int j = 0; j < 2; ++j) {
    OtPoint r_point{}, shared{};
    OtScalar r{};
    do {
      r = random_scalar(rng);
    } while (crypto_scalarmult_ristretto255_base(r_point.data(), r.data()) != 0 ||
             crypto_scalarmult_ristretto255(shared.data(), r.data(), pk[j].data()) != 0);
    const auto key = pad(shared, transfer_id, j);
    w.bytes(r_point);
    auto* e = w.grow(msgs[j].size());
    for (std::size_t i = 0; i < msgs[j].size(); ++i) e[i] = msgs[j][i] ^ key[i];
  }
  return w.take();
}

OtReceiver::OtReceiver(std::span<const std::uint8_t> setup_point)
    : c_point_(read_point(setup_point)) {}

Bytes OtReceiver::query(bool choice, Rng& rng, Pending& pending) const {
  pending.choice = choice;
  OtPoint kg{};
  do {
    pending.k = random_scalar(rng);
  } while (crypto_scalarmult_ristretto255_base(kg.data(), pending.k.data()) != 0);
  OtPoint pk0{};
  if (choice) {
    crypto_core_ristretto255_sub(pk0.data(), c_point_.data(), kg.data());
  } else {
    pk0 = kg;
  }
  return Bytes(pk0.begin(), pk0.end());
}

Bytes OtReceiver::finish(const Pending& pending, std::span<const std::uint8_t> reply,
                         std::uint64_t transfer_id, std::size_t message_size) const {
  if (message_size > kOtMaxMessage) throw Error("ot: message too long");
  if (reply.size() != 2 * (kOtPointBytes + message_size)) {
    throw ProtocolViolation("ot: bad reply length");
  }
  const int j = pending.choice ? 1 : 0;
  const auto part = reply.subspan(static_cast<std::size_t>(j) * (kOtPointBytes + message_size),
                                  kOtPointBytes + message_size);
  const OtPoint r_point = read_point(part.first(kOtPointBytes));
  OtPoint shared{};
  if (crypto_scalarmult_ristretto255(shared.data(), pending.k.data(), r_point.data()) != 0) {
    throw ProtocolViolation("ot: degenerate sender point");
  }
  const auto key = pad(shared, transfer_id, j);
  Bytes out(message_size);
  for (std::size_t i = 0; i < message_size; ++i) out[i] = part[kOtPointBytes + i] ^ key[i];
  return out;
}

}  // namespace rbi
