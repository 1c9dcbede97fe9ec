#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <span>
#include <vector>

#include "rbi/image.hpp"
#include "rbi/wire.hpp"

namespace rbi {

enum class Direction : std::uint8_t { kSent = 0, kReceived = 1, kLocal = 2 };

struct TranscriptEntry {
  Direction direction = Direction::kSent;
  std::uint64_t timestamp_ns = 0;
  std::array<std::uint8_t, 32> hash{};  // BLAKE2b-256 of the payload
  MessageType type = MessageType::kError;
  std::uint32_t payload_size = 0;
  bool has_payload = false;
  Bytes payload;
};

// Append-only log of every frame a party sent or received.
//
// In debug mode payloads are kept verbatim and the client may add kLocal
// records holding its own secrets (window pixels, plane permutation) for the
// leakage audit. Outside debug mode only headers and hashes are kept.
//
// File format: "RBITRAN1", u8 debug flag, then per entry
//   u8 direction, u64 timestamp_ns, 32-byte hash, u32 payload length,
//   u8 type, payload bytes (debug only).
class Transcript {
 public:
  explicit Transcript(bool debug = false);
  Transcript(const Transcript& other);
  Transcript& operator=(const Transcript& other);

  bool debug() const { return debug_; }
  void append(Direction direction, const Frame& frame);
  const std::vector<TranscriptEntry>& entries() const { return entries_; }

  Bytes serialize() const;
  static Transcript deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static Transcript load(const std::filesystem::path& path);

 private:
  bool debug_ = false;
  std::chrono::steady_clock::time_point start_;
  std::vector<TranscriptEntry> entries_;
  mutable std::mutex mu_;
};

struct SecretWindowRecord {
  std::uint64_t window_id = 0;
  GrayImage window;
  std::vector<std::uint32_t> permutation;
};

Frame encode_secret_window(const SecretWindowRecord& record);
SecretWindowRecord decode_secret_window(const Frame& frame);

}  // namespace rbi
