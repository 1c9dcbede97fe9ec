#include "rbi/wire.hpp"

#include <cstring>

#include "rbi/error.hpp"

namespace rbi {

std::string_view message_name(MessageType type) {
  switch (type) {
    case MessageType::kHello: return "HELLO";
    case MessageType::kHelloAck: return "HELLO_ACK";
    case MessageType::kWindowBases: return "WINDOW_BASES";
    case MessageType::kStageResponses: return "STAGE_RESPONSES";
    case MessageType::kCompareSetup: return "CMP_SETUP";
    case MessageType::kCompareSetupAck: return "CMP_SETUP_ACK";
    case MessageType::kCompareQuery: return "CMP_QUERY";
    case MessageType::kCompareReply: return "CMP_REPLY";
    case MessageType::kTransferQuery: return "OT_QUERY";
    case MessageType::kTransferReply: return "OT_REPLY";
    case MessageType::kStageControl: return "STAGE_CONTROL";
    case MessageType::kWindowDone: return "WINDOW_DONE";
    case MessageType::kError: return "ERROR";
    case MessageType::kSecretWindow: return "SECRET_WINDOW";
  }
  return "UNKNOWN";
}

bool is_comparison_message(MessageType type) {
  const auto t = static_cast<std::uint8_t>(type);
  return t >= 0x20 && t <= 0x2F;
}

Bytes encode_frame(const Frame& frame) {
  if (frame.payload.size() > kMaxPayload) throw ProtocolViolation("frame payload too large");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(frame.payload.size()));
  w.u8(static_cast<std::uint8_t>(frame.type));
  w.bytes(frame.payload);
  return w.take();
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto len = r.u32();
  if (len > kMaxPayload) throw ProtocolViolation("frame payload too large");
  Frame f;
  f.type = static_cast<MessageType>(r.u8());
  const auto body = r.bytes(len);
  f.payload.assign(body.begin(), body.end());
  r.expect_end();
  return f;
}

void ByteWriter::u16(std::uint16_t v) {
  buf_.push_back(static_cast<std::uint8_t>(v >> 8));
  buf_.push_back(static_cast<std::uint8_t>(v));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> s));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> s));
}

void ByteWriter::str16(std::string_view s) {
  blob16({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

void ByteWriter::blob16(std::span<const std::uint8_t> b) {
  if (b.size() > 0xFFFF) throw ProtocolViolation("field longer than 65535 bytes");
  u16(static_cast<std::uint16_t>(b.size()));
  bytes(b);
}

std::uint8_t* ByteWriter::grow(std::size_t n) {
  const auto old = buf_.size();
  buf_.resize(old + n);
  return buf_.data() + old;
}

std::uint8_t ByteReader::u8() { return bytes(1)[0]; }

std::uint16_t ByteReader::u16() {
  const auto b = bytes(2);
  return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
}

std::uint32_t ByteReader::u32() {
  const auto b = bytes(4);
  std::uint32_t v = 0;
  for (const auto x : b) v = (v << 8) | x;
  return v;
}

std::uint64_t ByteReader::u64() {
  const auto b = bytes(8);
  std::uint64_t v = 0;
  for (const auto x : b) v = (v << 8) | x;
  return v;
}

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
  if (n > remaining()) throw ProtocolViolation("message truncated");
  const auto out = buf_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::string ByteReader::str16() {
  const auto b = blob16();
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

std::span<const std::uint8_t> ByteReader::blob16() { return bytes(u16()); }

void ByteReader::expect_end() const {
  if (remaining() != 0) throw ProtocolViolation("trailing bytes in message");
}

void expect_type(const Frame& f, MessageType expected) {
  if (f.type == expected) return;
  if (f.type == MessageType::kError) throw SessionError("peer error: " + decode_error(f));
  throw ProtocolViolation("expected " + std::string(message_name(expected)) + ", got " +
                          std::string(message_name(f.type)));
}

Frame encode(const HelloMsg& m) {
  ByteWriter w;
  w.u16(m.version);
  w.str16(m.cascade_id);
  w.u16(m.planes);
  w.u8(static_cast<std::uint8_t>(m.mode));
  return {MessageType::kHello, w.take()};
}

HelloMsg decode_hello(const Frame& f) {
  expect_type(f, MessageType::kHello);
  ByteReader r(f.payload);
  HelloMsg m;
  m.version = r.u16();
  m.cascade_id = r.str16();
  m.planes = r.u16();
  const auto mode = r.u8();
  if (mode > 1) throw ProtocolViolation("unknown stage mode");
  m.mode = static_cast<StageMode>(mode);
  r.expect_end();
  return m;
}

Frame encode(const HelloAckMsg& m) {
  ByteWriter w;
  w.u16(m.window_width);
  w.u16(m.window_height);
  w.u16(static_cast<std::uint16_t>(m.announced.size()));
  for (const auto c : m.announced) w.u16(c);
  return {MessageType::kHelloAck, w.take()};
}

HelloAckMsg decode_hello_ack(const Frame& f) {
  expect_type(f, MessageType::kHelloAck);
  ByteReader r(f.payload);
  HelloAckMsg m;
  m.window_width = r.u16();
  m.window_height = r.u16();
  const auto n = r.u16();
  for (std::uint16_t i = 0; i < n; ++i) m.announced.push_back(r.u16());
  r.expect_end();
  return m;
}

Frame encode(const WindowBasesMsg& m) {
  ByteWriter w;
  w.u64(m.window_id);
  w.u16(m.planes);
  w.bytes(m.packed);
  return {MessageType::kWindowBases, w.take()};
}

WindowBasesMsg decode_window_bases(const Frame& f) {
  expect_type(f, MessageType::kWindowBases);
  ByteReader r(f.payload);
  WindowBasesMsg m;
  m.window_id = r.u64();
  m.planes = r.u16();
  const auto rest = r.bytes(r.remaining());
  m.packed.assign(rest.begin(), rest.end());
  return m;
}

Frame encode(const StageResponsesMsg& m) {
  ByteWriter w;
  w.buffer().reserve(10 + m.values.size() * 8);
  w.u64(m.window_id);
  w.u16(m.stage);
  auto* out = w.grow(m.values.size() * 8);
  for (const auto v : m.values) {
    const auto u = static_cast<std::uint64_t>(v);
    for (int s = 56; s >= 0; s -= 8) *out++ = static_cast<std::uint8_t>(u >> s);
  }
  return {MessageType::kStageResponses, w.take()};
}

StageResponsesMsg decode_stage_responses(const Frame& f) {
  expect_type(f, MessageType::kStageResponses);
  ByteReader r(f.payload);
  StageResponsesMsg m;
  m.window_id = r.u64();
  m.stage = r.u16();
  if (r.remaining() % 8 != 0) throw ProtocolViolation("response payload not a multiple of 8");
  const auto raw = r.bytes(r.remaining());
  m.values.resize(raw.size() / 8);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    std::uint64_t u = 0;
    for (int k = 0; k < 8; ++k) u = (u << 8) | raw[i * 8 + k];
    m.values[i] = static_cast<std::int64_t>(u);
  }
  return m;
}

Frame encode(const StageControlMsg& m) {
  ByteWriter w;
  w.u64(m.window_id);
  w.u8(m.proceed ? 1 : 0);
  return {MessageType::kStageControl, w.take()};
}

StageControlMsg decode_stage_control(const Frame& f) {
  expect_type(f, MessageType::kStageControl);
  ByteReader r(f.payload);
  StageControlMsg m;
  m.window_id = r.u64();
  const auto v = r.u8();
  if (v > 1) throw ProtocolViolation("bad stage control flag");
  m.proceed = v == 1;
  r.expect_end();
  return m;
}

Frame encode_window_done(std::uint64_t window_id) {
  ByteWriter w;
  w.u64(window_id);
  return {MessageType::kWindowDone, w.take()};
}

std::uint64_t decode_window_done(const Frame& f) {
  expect_type(f, MessageType::kWindowDone);
  ByteReader r(f.payload);
  const auto id = r.u64();
  r.expect_end();
  return id;
}

Frame encode_error(std::string_view message) {
  ByteWriter w;
  w.str16(message.substr(0, 1024));
  return {MessageType::kError, w.take()};
}

std::string decode_error(const Frame& f) {
  if (f.type != MessageType::kError) throw ProtocolViolation("not an error frame");
  ByteReader r(f.payload);
  return r.str16();
}

}  // namespace rbi
