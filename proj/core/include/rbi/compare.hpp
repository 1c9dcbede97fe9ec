#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rbi/channel.hpp"
#include "rbi/integral.hpp"
#include "rbi/ot.hpp"
#include "rbi/paillier.hpp"
#include "rbi/rng.hpp"
#include "rbi/wire.hpp"

namespace rbi {

enum class CompareBackend : std::uint8_t { kMock = 0, kPaillier = 1 };

enum class CompareSubtype : std::uint8_t {
  kCompareQuery = 1,
  kCompareReply = 2,
  kTransferQuery = 3,
  kTransferReply = 4,
};

// Payload of the 0x22..0x25 frames.
struct ComparisonMessage {
  std::uint32_t id = 0;
  CompareSubtype subtype = CompareSubtype::kCompareQuery;
  Bytes body;
};

Frame encode_comparison(MessageType type, const ComparisonMessage& m);
ComparisonMessage decode_comparison(const Frame& f, MessageType expected);

// Maps a signed operand into [0, 2^bits); throws RangeError outside
// [-2^(bits-1), 2^(bits-1)).
std::uint64_t offset_operand(std::int64_t v, int bits);

struct CompareOptions {
  CompareBackend backend = CompareBackend::kMock;
  int bits = kCompareBits;
  int key_bits = 1024;
};

// Alice's half. She always holds the left operand and learns a > b.
class ComparisonClient {
 public:
  struct PendingTransfer {
    bool choice = false;
    OtReceiver::Pending ot;
  };

  virtual ~ComparisonClient() = default;

  virtual CompareBackend backend() const = 0;
  int bits() const { return bits_; }

  Frame setup_frame() const;
  virtual void on_setup_ack(const Frame& ack) = 0;

  virtual Bytes compare_query(std::int64_t a) = 0;
  virtual bool compare_result(std::int64_t a, std::span<const std::uint8_t> reply) = 0;

  virtual Bytes transfer_query(bool choice, PendingTransfer& pending) = 0;
  virtual Bytes transfer_result(const PendingTransfer& pending, std::span<const std::uint8_t> reply,
                                std::uint64_t transfer_id, std::size_t size) = 0;

 protected:
  explicit ComparisonClient(int bits) : bits_(bits) {}
  virtual void write_setup(ByteWriter& w) const = 0;

 private:
  int bits_;
};

// Bob's half. He holds the right operand and the two transfer messages.
class ComparisonServer {
 public:
  virtual ~ComparisonServer() = default;

  virtual CompareBackend backend() const = 0;
  int bits() const { return bits_; }

  virtual Frame setup_ack() const = 0;
  virtual Bytes compare_reply(std::span<const std::uint8_t> query, std::int64_t b) = 0;
  virtual Bytes transfer_reply(std::span<const std::uint8_t> query, std::span<const std::uint8_t> m0,
                               std::span<const std::uint8_t> m1, std::uint64_t transfer_id) = 0;

 protected:
  explicit ComparisonServer(int bits) : bits_(bits) {}

 private:
  int bits_;
};

std::unique_ptr<ComparisonClient> make_comparison_client(const CompareOptions& options, Rng rng);
// Builds Bob's half from Alice's CMP_SETUP frame. Throws ProtocolViolation.
std::unique_ptr<ComparisonServer> make_comparison_server(const Frame& setup, Rng rng);

// Standalone Bob for comparison-only sessions: answers CMP_SETUP, then each
// query with the next queued operand or message pair.
class ComparisonPeer final : public FrameHandler {
 public:
  explicit ComparisonPeer(Rng rng) : rng_(std::move(rng)) {}

  void push_operand(std::int64_t b) { operands_.push_back(b); }
  void push_transfer(std::int64_t m0, std::int64_t m1) { transfers_.push_back({m0, m1}); }

  void on_frame(const Frame& in, std::vector<Frame>& out) override;

 private:
  Rng rng_;
  std::unique_ptr<ComparisonServer> server_;
  std::vector<std::int64_t> operands_;
  std::vector<std::pair<std::int64_t, std::int64_t>> transfers_;
  std::size_t next_operand_ = 0;
  std::size_t next_transfer_ = 0;
};

// Runs CMP_SETUP / CMP_SETUP_ACK.
void comparison_handshake(Channel& channel, ComparisonClient& client);

// Queries in flight before the client starts reading replies. Keeps both
// socket buffers from filling up when a stage has many slots.
inline constexpr std::size_t kPipelineDepth = 8;

// Alice learns a[i] > b[i] for each i; query i carries id first_id + i.
std::vector<bool> millionaire_batch(Channel& channel, ComparisonClient& client,
                                    std::uint32_t first_id, std::span<const std::int64_t> a);
bool millionaire(Channel& channel, ComparisonClient& client, std::uint32_t id, std::int64_t a);

// Alice obtains (bits[i] ? m1 : m0) for each i as a signed 64-bit value.
std::vector<std::int64_t> blinded_leaf_batch(Channel& channel, ComparisonClient& client,
                                             std::uint32_t first_id, const std::vector<bool>& bits);
std::int64_t blinded_leaf_transfer(Channel& channel, ComparisonClient& client, std::uint32_t id,
                                   bool bit);

// Alice learns sum_c > sum_s.
bool final_sum_compare(Channel& channel, ComparisonClient& client, std::uint32_t id,
                       std::int64_t sum_c);

Bytes encode_leaf(std::int64_t v);
std::int64_t decode_leaf(std::span<const std::uint8_t> b);

}  // namespace rbi
