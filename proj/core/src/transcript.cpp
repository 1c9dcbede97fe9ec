#include "rbi/transcript.hpp"

#include <sodium.h>

#include <fstream>
#include <iterator>

#include "rbi/error.hpp"
#include "rbi/rng.hpp"

namespace rbi {
namespace {

constexpr std::string_view kMagic = "RBITRAN1";

}  // namespace

Transcript::Transcript(bool debug) : debug_(debug), start_(std::chrono::steady_clock::now()) {}

Transcript::Transcript(const Transcript& other) {
  std::lock_guard lock(other.mu_);
  debug_ = other.debug_;
  start_ = other.start_;
  entries_ = other.entries_;
}

Transcript& Transcript::operator=(const Transcript& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  debug_ = other.debug_;
  start_ = other.start_;
  entries_ = other.entries_;
  return *this;
}

void Transcript::append(Direction direction, const Frame& frame) {
  if (direction == Direction::kLocal && !debug_) return;
  TranscriptEntry e;
  e.direction = direction;
  e.timestamp_ns = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start_)
          .count());
  init_crypto();
  crypto_generichash(e.hash.data(), e.hash.size(), frame.payload.data(), frame.payload.size(),
                     nullptr, 0);
  e.type = frame.type;
  e.payload_size = static_cast<std::uint32_t>(frame.payload.size());
  if (debug_) {
    e.has_payload = true;
    e.payload = frame.payload;
  }
  std::lock_guard lock(mu_);
  entries_.push_back(std::move(e));
}

Bytes Transcript::serialize() const {
  std::lock_guard lock(mu_);
  ByteWriter w;
  w.bytes({reinterpret_cast<const std::uint8_t*>(kMagic.data()), kMagic.size()});
  w.u8(debug_ ? 1 : 0);
  for (const auto& e : entries_) {
    w.u8(static_cast<std::uint8_t>(e.direction));
    w.u64(e.timestamp_ns);
    w.bytes(e.hash);
    w.u32(e.payload_size);
    w.u8(static_cast<std::uint8_t>(e.type));
    if (e.has_payload) w.bytes(e.payload);
  }
  return w.take();
}

Transcript Transcript::deserialize(std::span<const std::uint8_t> bytes) {
  try {
    ByteReader r(bytes);
    const auto magic = r.bytes(kMagic.size());
    if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
      throw ParseError("not a transcript file");
    }
    Transcript t(r.u8() != 0);
    while (r.remaining() > 0) {
      TranscriptEntry e;
      const auto dir = r.u8();
      if (dir > 2) throw ParseError("bad transcript direction");
      e.direction = static_cast<Direction>(dir);
      e.timestamp_ns = r.u64();
      const auto h = r.bytes(e.hash.size());
      std::copy(h.begin(), h.end(), e.hash.begin());
      e.payload_size = r.u32();
      e.type = static_cast<MessageType>(r.u8());
      if (t.debug_) {
        const auto p = r.bytes(e.payload_size);
        e.has_payload = true;
        e.payload.assign(p.begin(), p.end());
      }
      t.entries_.push_back(std::move(e));
    }
    return t;
  } catch (const ProtocolViolation& e) {
    throw ParseError(std::string("truncated transcript: ") + e.what());
  }
}

void Transcript::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write transcript " + path.string());
  const auto bytes = serialize();
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Transcript Transcript::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open transcript " + path.string());
  const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

Frame encode_secret_window(const SecretWindowRecord& record) {
  ByteWriter w;
  w.u64(record.window_id);
  w.u16(static_cast<std::uint16_t>(record.window.width));
  w.u16(static_cast<std::uint16_t>(record.window.height));
  w.bytes(record.window.pixels);
  w.u16(static_cast<std::uint16_t>(record.permutation.size()));
  for (const auto p : record.permutation) w.u16(static_cast<std::uint16_t>(p));
  return {MessageType::kSecretWindow, w.take()};
}

SecretWindowRecord decode_secret_window(const Frame& frame) {
  expect_type(frame, MessageType::kSecretWindow);
  ByteReader r(frame.payload);
  SecretWindowRecord rec;
  rec.window_id = r.u64();
  const int w = r.u16();
  const int h = r.u16();
  rec.window = GrayImage(w, h);
  const auto px = r.bytes(static_cast<std::size_t>(w) * h);
  std::copy(px.begin(), px.end(), rec.window.pixels.begin());
  const auto m = r.u16();
  for (std::uint16_t i = 0; i < m; ++i) rec.permutation.push_back(r.u16());
  r.expect_end();
  return rec;
}

}  // namespace rbi
