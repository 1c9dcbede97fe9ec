#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "rbi/rng.hpp"
#include "rbi/wire.hpp"

namespace rbi {

// 1-out-of-2 oblivious transfer over ristretto255 (Bellare-Micali style).
// The sender publishes C once; per transfer the receiver sends one point and
// the sender answers with two ElGamal-like encryptions of which the receiver
// can open exactly one.
inline constexpr std::size_t kOtPointBytes = 32;
inline constexpr std::size_t kOtMaxMessage = 64;

using OtPoint = std::array<std::uint8_t, kOtPointBytes>;
using OtScalar = std::array<std::uint8_t, 32>;

OtScalar random_scalar(Rng& rng);

class OtSender {
 public:
  explicit OtSender(Rng& rng);

  const OtPoint& setup_point() const { return c_point_; }

  // query: the receiver's PK0. Messages must have equal length <= kOtMaxMessage.
  // Throws ProtocolViolation for an invalid point.
  Bytes answer(std::span<const std::uint8_t> query, std::span<const std::uint8_t> m0,
               std::span<const std::uint8_t> m1, std::uint64_t transfer_id, Rng& rng) const;

 private:
  OtPoint c_point_{};
};

class OtReceiver {
 public:
  struct Pending {
    bool choice = false;
    OtScalar k{};
  };

  OtReceiver() = default;
  // Throws ProtocolViolation for an invalid point.
  explicit OtReceiver(std::span<const std::uint8_t> setup_point);

  Bytes query(bool choice, Rng& rng, Pending& pending) const;
  Bytes finish(const Pending& pending, std::span<const std::uint8_t> reply,
               std::uint64_t transfer_id, std::size_t message_size) const;

 private:
  OtPoint c_point_{};
};

}  // namespace rbi
