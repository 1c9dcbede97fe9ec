#include "rbi/compare.hpp"

#include "rbi/error.hpp"

namespace rbi {

Frame encode_comparison(MessageType type, const ComparisonMessage& m) {
  ByteWriter w;
  w.u32(m.id);
  w.u8(static_cast<std::uint8_t>(m.subtype));
  w.bytes(m.body);
  return {type, w.take()};
}

ComparisonMessage decode_comparison(const Frame& f, MessageType expected) {
  expect_type(f, expected);
  ByteReader r(f.payload);
  ComparisonMessage m;
  m.id = r.u32();
  const auto sub = r.u8();
  if (sub < 1 || sub > 4) throw ProtocolViolation("unknown comparison sub-type");
  m.subtype = static_cast<CompareSubtype>(sub);
  const auto body = r.bytes(r.remaining());
  m.body.assign(body.begin(), body.end());
  return m;
}

std::uint64_t offset_operand(std::int64_t v, int bits) {
  if (bits < 2 || bits > 63) throw RangeError("comparison width must be in [2, 63]");
  const std::int64_t bound = std::int64_t{1} << (bits - 1);
  if (v < -bound || v >= bound) {
    throw RangeError("comparison operand " + std::to_string(v) + " outside " +
                     std::to_string(bits) + "-bit domain");
  }
  return static_cast<std::uint64_t>(v + bound);
}

Bytes encode_leaf(std::int64_t v) {
  ByteWriter w;
  w.i64(v);
  return w.take();
}

std::int64_t decode_leaf(std::span<const std::uint8_t> b) {
  ByteReader r(b);
  const auto v = r.i64();
  r.expect_end();
  return v;
}

Frame ComparisonClient::setup_frame() const {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(backend()));
  w.u16(static_cast<std::uint16_t>(bits_));
  write_setup(w);
  return {MessageType::kCompareSetup, w.take()};
}

namespace {

// Mock backend: same message flow, but Bob's inputs travel in the clear.
class MockClient final : public ComparisonClient {
 public:
  explicit MockClient(int bits) : ComparisonClient(bits) {}

  CompareBackend backend() const override { return CompareBackend::kMock; }
  void on_setup_ack(const Frame& ack) override {
    expect_type(ack, MessageType::kCompareSetupAck);
  }

  Bytes compare_query(std::int64_t a) override {
    offset_operand(a, bits());
    return {};
  }

  bool compare_result(std::int64_t a, std::span<const std::uint8_t> reply) override {
    const std::int64_t b = decode_leaf(reply);
    return offset_operand(a, bits()) > offset_operand(b, bits());
  }

  Bytes transfer_query(bool choice, PendingTransfer& pending) override {
    pending.choice = choice;
    return {};
  }

  Bytes transfer_result(const PendingTransfer& pending, std::span<const std::uint8_t> reply,
                        std::uint64_t, std::size_t size) override {
    if (reply.size() != 2 * size) throw ProtocolViolation("mock transfer: bad reply length");
    const auto part = reply.subspan(pending.choice ? size : 0, size);
    return Bytes(part.begin(), part.end());
  }

 protected:
  void write_setup(ByteWriter&) const override {}
};

class MockServer final : public ComparisonServer {
 public:
  explicit MockServer(int bits) : ComparisonServer(bits) {}

  CompareBackend backend() const override { return CompareBackend::kMock; }
  Frame setup_ack() const override { return {MessageType::kCompareSetupAck, {}}; }

  Bytes compare_reply(std::span<const std::uint8_t> query, std::int64_t b) override {
    if (!query.empty()) throw ProtocolViolation("mock compare: unexpected query body");
    offset_operand(b, bits());
    return encode_leaf(b);
  }

  Bytes transfer_reply(std::span<const std::uint8_t> query, std::span<const std::uint8_t> m0,
                       std::span<const std::uint8_t> m1, std::uint64_t) override {
    if (!query.empty()) throw ProtocolViolation("mock transfer: unexpected query body");
    Bytes out(m0.begin(), m0.end());
    out.insert(out.end(), m1.begin(), m1.end());
    return out;
  }
};

void write_ciphertext(ByteWriter& w, const PaillierPublicKey& pk, const mpz_class& c) {
  const auto nb = pk.ciphertext_bytes();
  w.u16(static_cast<std::uint16_t>(nb));
  write_mpz({w.grow(nb), nb}, c);
}

std::vector<mpz_class> read_ciphertexts(std::span<const std::uint8_t> body,
                                        const PaillierPublicKey& pk, int bits) {
  ByteReader r(body);
  if (r.u16() != bits) throw ProtocolViolation("paillier compare: wrong ciphertext count");
  std::vector<mpz_class> out;
  out.reserve(static_cast<std::size_t>(bits));
  for (int i = 0; i < bits; ++i) {
    const auto blob = r.blob16();
    if (blob.size() != pk.ciphertext_bytes()) {
      throw ProtocolViolation("paillier compare: bad ciphertext length");
    }
    out.push_back(read_mpz(blob));
    if (!pk.valid_ciphertext(out.back())) throw ProtocolViolation("paillier compare: bad ciphertext");
  }
  r.expect_end();
  return out;
}

// Bit-encoding comparison: Alice's 1-encoding against Bob's 0-encoding.
// Alice: for each bit i with a_i = 1 the prefix a >> i, otherwise 0 (never
// matches, since every code word is odd). Bob: for each bit with b_i = 0 the
// code ((b >> (i+1)) << 1) | 1. a > b iff some position holds equal codes.
class PaillierClient final : public ComparisonClient {
 public:
  PaillierClient(int bits, int key_bits, Rng rng)
      : ComparisonClient(bits), rng_(std::move(rng)), keys_(PaillierKeyPair::generate(key_bits, rng_)) {}

  CompareBackend backend() const override { return CompareBackend::kPaillier; }

  void on_setup_ack(const Frame& ack) override {
    expect_type(ack, MessageType::kCompareSetupAck);
    ot_ = OtReceiver(ack.payload);
  }

  Bytes compare_query(std::int64_t a) override {
    const std::uint64_t u = offset_operand(a, bits());
    const auto& pk = keys_.pub();
    ByteWriter w;
    w.u16(static_cast<std::uint16_t>(bits()));
    for (int i = bits() - 1; i >= 0; --i) {
      const std::uint64_t code = ((u >> i) & 1U) != 0 ? (u >> i) : 0;
      write_ciphertext(w, pk, keys_.encrypt(mpz_class(static_cast<unsigned long>(code)), rng_));
    }
    return w.take();
  }

  bool compare_result(std::int64_t, std::span<const std::uint8_t> reply) override {
    bool hit = false;
    for (const auto& c : read_ciphertexts(reply, keys_.pub(), bits())) {
      if (keys_.is_zero(c)) hit = true;
    }
    return hit;
  }

  Bytes transfer_query(bool choice, PendingTransfer& pending) override {
    pending.choice = choice;
    return ot_.query(choice, rng_, pending.ot);
  }

  Bytes transfer_result(const PendingTransfer& pending, std::span<const std::uint8_t> reply,
                        std::uint64_t transfer_id, std::size_t size) override {
    return ot_.finish(pending.ot, reply, transfer_id, size);
  }

 protected:
  void write_setup(ByteWriter& w) const override { keys_.pub().serialize(w); }

 private:
  Rng rng_;
  PaillierKeyPair keys_;
  OtReceiver ot_;
};

class PaillierServer final : public ComparisonServer {
 public:
  PaillierServer(int bits, PaillierPublicKey pk, Rng rng)
      : ComparisonServer(bits), pk_(std::move(pk)), rng_(std::move(rng)), ot_(rng_) {}

  CompareBackend backend() const override { return CompareBackend::kPaillier; }

  Frame setup_ack() const override {
    const auto& c = ot_.setup_point();
    return {MessageType::kCompareSetupAck, Bytes(c.begin(), c.end())};
  }

  Bytes compare_reply(std::span<const std::uint8_t> query, std::int64_t b) override {
    const std::uint64_t ub = offset_operand(b, bits());
    auto cts = read_ciphertexts(query, pk_, bits());
    std::vector<mpz_class> out;
    out.reserve(cts.size());
    const mpz_class n_minus_1 = pk_.n - 1;
    for (int j = 0; j < bits(); ++j) {
      const int i = bits() - 1 - j;
      const mpz_class r = random_below(rng_, n_minus_1) + 1;
      if (((ub >> i) & 1U) == 0) {
        const std::uint64_t code = ((ub >> (i + 1)) << 1) | 1U;
        // E(u - v) = c * (1 + (n - v) n), then randomize the plaintext by r.
        mpz_class neg = pk_.n - mpz_class(static_cast<unsigned long>(code));
        mpz_class diff = pk_.add(cts[static_cast<std::size_t>(j)], neg * pk_.n + 1);
        out.push_back(pk_.rerandomize(pk_.scale(diff, r), rng_));
      } else {
        out.push_back(pk_.encrypt(r, rng_));
      }
    }
    for (std::size_t k = out.size(); k > 1; --k) {
      std::swap(out[k - 1], out[rng_.uniform(k)]);
    }
    ByteWriter w;
    w.u16(static_cast<std::uint16_t>(bits()));
    for (const auto& c : out) write_ciphertext(w, pk_, c);
    return w.take();
  }

  Bytes transfer_reply(std::span<const std::uint8_t> query, std::span<const std::uint8_t> m0,
                       std::span<const std::uint8_t> m1, std::uint64_t transfer_id) override {
    return ot_.answer(query, m0, m1, transfer_id, rng_);
  }

 private:
  PaillierPublicKey pk_;
  Rng rng_;
  OtSender ot_;
};

}  // namespace

std::unique_ptr<ComparisonClient> make_comparison_client(const CompareOptions& options, Rng rng) {
  offset_operand(0, options.bits);
  switch (options.backend) {
    case CompareBackend::kMock:
      return std::make_unique<MockClient>(options.bits);
    case CompareBackend::kPaillier:
      if (options.key_bits < 2 * options.bits + 64) {
        throw UsageError("paillier modulus too small for the comparison width");
      }
      return std::make_unique<PaillierClient>(options.bits, options.key_bits, std::move(rng));
  }
  throw UsageError("unknown comparison backend");
}

std::unique_ptr<ComparisonServer> make_comparison_server(const Frame& setup, Rng rng) {
  expect_type(setup, MessageType::kCompareSetup);
  ByteReader r(setup.payload);
  const auto kind = r.u8();
  const int bits = r.u16();
  if (bits < 2 || bits > 63) throw ProtocolViolation("comparison width out of range");
  switch (static_cast<CompareBackend>(kind)) {
    case CompareBackend::kMock:
      r.expect_end();
      return std::make_unique<MockServer>(bits);
    case CompareBackend::kPaillier: {
      auto pk = PaillierPublicKey::deserialize(r);
      r.expect_end();
      if (pk.modulus_bits() < 2 * bits + 64) throw ProtocolViolation("paillier modulus too small");
      return std::make_unique<PaillierServer>(bits, std::move(pk), std::move(rng));
    }
  }
  throw ProtocolViolation("unknown comparison backend");
}

void ComparisonPeer::on_frame(const Frame& in, std::vector<Frame>& out) {
  if (in.type == MessageType::kCompareSetup) {
    server_ = make_comparison_server(in, rng_.fork("comparison"));
    out.push_back(server_->setup_ack());
    return;
  }
  if (!server_) throw ProtocolViolation("comparison query before setup");
  if (in.type == MessageType::kCompareQuery) {
    const auto q = decode_comparison(in, MessageType::kCompareQuery);
    if (next_operand_ >= operands_.size()) throw ProtocolViolation("no operand queued");
    const auto b = operands_[next_operand_++];
    out.push_back(encode_comparison(MessageType::kCompareReply,
                                    {q.id, CompareSubtype::kCompareReply,
                                     server_->compare_reply(q.body, b)}));
    return;
  }
  if (in.type == MessageType::kTransferQuery) {
    const auto q = decode_comparison(in, MessageType::kTransferQuery);
    if (next_transfer_ >= transfers_.size()) throw ProtocolViolation("no transfer queued");
    const auto [m0, m1] = transfers_[next_transfer_++];
    out.push_back(encode_comparison(
        MessageType::kTransferReply,
        {q.id, CompareSubtype::kTransferReply,
         server_->transfer_reply(q.body, encode_leaf(m0), encode_leaf(m1), q.id)}));
    return;
  }
  throw ProtocolViolation(std::string("unexpected ") + std::string(message_name(in.type)));
}

void comparison_handshake(Channel& channel, ComparisonClient& client) {
  channel.send(client.setup_frame());
  client.on_setup_ack(channel.receive());
}

namespace {

ComparisonMessage expect_reply(Channel& channel, MessageType type, CompareSubtype sub,
                               std::uint32_t id) {
  auto m = decode_comparison(channel.receive(), type);
  if (m.subtype != sub || m.id != id) throw ProtocolViolation("comparison reply out of order");
  return m;
}

}  // namespace

std::vector<bool> millionaire_batch(Channel& channel, ComparisonClient& client,
                                    std::uint32_t first_id, std::span<const std::int64_t> a) {
  std::vector<bool> out(a.size());
  std::size_t sent = 0;
  for (std::size_t done = 0; done < a.size(); ++done) {
    for (; sent < a.size() && sent - done < kPipelineDepth; ++sent) {
      const auto id = first_id + static_cast<std::uint32_t>(sent);
      channel.send(encode_comparison(MessageType::kCompareQuery,
                                     {id, CompareSubtype::kCompareQuery, client.compare_query(a[sent])}));
    }
    const auto id = first_id + static_cast<std::uint32_t>(done);
    const auto m = expect_reply(channel, MessageType::kCompareReply, CompareSubtype::kCompareReply, id);
    out[done] = client.compare_result(a[done], m.body);
  }
  return out;
}

bool millionaire(Channel& channel, ComparisonClient& client, std::uint32_t id, std::int64_t a) {
  const std::int64_t v[1] = {a};
  return millionaire_batch(channel, client, id, v)[0];
}

std::vector<std::int64_t> blinded_leaf_batch(Channel& channel, ComparisonClient& client,
                                             std::uint32_t first_id, const std::vector<bool>& bits) {
  std::vector<std::int64_t> out(bits.size());
  std::vector<ComparisonClient::PendingTransfer> pending(bits.size());
  std::size_t sent = 0;
  for (std::size_t done = 0; done < bits.size(); ++done) {
    for (; sent < bits.size() && sent - done < kPipelineDepth; ++sent) {
      const auto id = first_id + static_cast<std::uint32_t>(sent);
      channel.send(encode_comparison(
          MessageType::kTransferQuery,
          {id, CompareSubtype::kTransferQuery, client.transfer_query(bits[sent], pending[sent])}));
    }
    const auto id = first_id + static_cast<std::uint32_t>(done);
    const auto m = expect_reply(channel, MessageType::kTransferReply, CompareSubtype::kTransferReply, id);
    out[done] = decode_leaf(client.transfer_result(pending[done], m.body, id, 8));
  }
  return out;
}

std::int64_t blinded_leaf_transfer(Channel& channel, ComparisonClient& client, std::uint32_t id,
                                   bool bit) {
  return blinded_leaf_batch(channel, client, id, {bit})[0];
}

bool final_sum_compare(Channel& channel, ComparisonClient& client, std::uint32_t id,
                       std::int64_t sum_c) {
  return millionaire(channel, client, id, sum_c);
}

}  // namespace rbi
