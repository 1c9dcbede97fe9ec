#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rbi {

using Bytes = std::vector<std::uint8_t>;

// Frame layout: u32 big-endian payload length, u8 type, payload.
enum class MessageType : std::uint8_t {
  kHello = 0x01,
  kHelloAck = 0x02,
  kWindowBases = 0x10,
  kStageResponses = 0x11,
  kCompareSetup = 0x20,
  kCompareSetupAck = 0x21,
  kCompareQuery = 0x22,
  kCompareReply = 0x23,
  kTransferQuery = 0x24,
  kTransferReply = 0x25,
  kStageControl = 0x30,
  kWindowDone = 0x31,
  kError = 0x3F,
  // Never sent; client-side transcript records of debug secrets.
  kSecretWindow = 0xF0,
};

std::string_view message_name(MessageType type);
bool is_comparison_message(MessageType type);

inline constexpr std::size_t kFrameHeaderSize = 5;
inline constexpr std::uint32_t kMaxPayload = 64U << 20;
inline constexpr std::uint16_t kProtocolVersion = 1;

struct Frame {
  MessageType type = MessageType::kError;
  Bytes payload;
};

Bytes encode_frame(const Frame& frame);
// Parses a complete frame; throws ProtocolViolation on malformed input.
Frame decode_frame(std::span<const std::uint8_t> bytes);

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void str16(std::string_view s);    // u16 length prefix
  void blob16(std::span<const std::uint8_t> b);  // u16 length prefix
  std::uint8_t* grow(std::size_t n);

  Bytes& buffer() { return buf_; }
  Bytes take() { return std::move(buf_); }

 private:
  Bytes buf_;
};

// Bounds-checked reader; every underflow is a ProtocolViolation.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : buf_(b) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  std::span<const std::uint8_t> bytes(std::size_t n);
  std::string str16();
  std::span<const std::uint8_t> blob16();

  std::size_t remaining() const { return buf_.size() - pos_; }
  void expect_end() const;

 private:
  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

enum class StageMode : std::uint8_t { kShortCircuit = 0, kConstantStages = 1 };

struct HelloMsg {
  std::uint16_t version = kProtocolVersion;
  std::string cascade_id;
  std::uint16_t planes = 256;
  StageMode mode = StageMode::kShortCircuit;
};

struct HelloAckMsg {
  std::uint16_t window_width = 0;
  std::uint16_t window_height = 0;
  std::vector<std::uint16_t> announced;  // per-stage slot counts
};

struct WindowBasesMsg {
  std::uint64_t window_id = 0;
  std::uint16_t planes = 0;
  Bytes packed;  // planes * ceil(W*H/8) bytes
};

struct StageResponsesMsg {
  std::uint64_t window_id = 0;
  std::uint16_t stage = 0;
  std::vector<std::int64_t> values;  // slot-major: values[n * M + m]
};

struct StageControlMsg {
  std::uint64_t window_id = 0;
  bool proceed = false;
};

Frame encode(const HelloMsg& m);
Frame encode(const HelloAckMsg& m);
Frame encode(const WindowBasesMsg& m);
Frame encode(const StageResponsesMsg& m);
Frame encode(const StageControlMsg& m);
Frame encode_window_done(std::uint64_t window_id);
Frame encode_error(std::string_view message);

HelloMsg decode_hello(const Frame& f);
HelloAckMsg decode_hello_ack(const Frame& f);
WindowBasesMsg decode_window_bases(const Frame& f);
StageResponsesMsg decode_stage_responses(const Frame& f);
StageControlMsg decode_stage_control(const Frame& f);
std::uint64_t decode_window_done(const Frame& f);
std::string decode_error(const Frame& f);

// Throws ProtocolViolation unless f.type == expected. A kError frame from the
// peer is surfaced as a SessionError with the peer's message.
void expect_type(const Frame& f, MessageType expected);

}  // namespace rbi
