#include "rbi/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>
#include <unordered_set>

#include "rbi/error.hpp"

namespace rbi {
namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t elapsed_ns(Clock::time_point since) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - since).count());
}

std::int64_t checked_sum(std::span<const std::int64_t> values) {
  __int128 sum = 0;
  for (const auto v : values) sum += v;
  if (sum >= kCompareBound || sum <= -kCompareBound) {
    throw RangeError("stage sum exceeds the comparison domain");
  }
  return static_cast<std::int64_t>(sum);
}

}  // namespace

std::int64_t ObfuscatedStage::final_operand() const {
  std::vector<std::int64_t> terms(blinds);
  terms.push_back(threshold - 1);
  return checked_sum(terms);
}

QuantizedWeak make_fake_classifier(const QuantizedStage& stage, int window_width,
                                   int window_height, Rng& rng) {
  QuantizedWeak fake;
  auto& f = fake.feature;
  f.count = 2;
  const bool split_x = window_width >= 2 && (window_height < 2 || rng.coin());
  if (split_x) {
    const int half = static_cast<int>(rng.uniform_in(1, window_width / 2));
    const int h = static_cast<int>(rng.uniform_in(1, window_height));
    const int x = static_cast<int>(rng.uniform_in(0, window_width - 2 * half));
    const int y = static_cast<int>(rng.uniform_in(0, window_height - h));
    f.rects[0] = {x, y, 2 * half, h, -kFeatureScale};
    f.rects[1] = {x + (rng.coin() ? half : 0), y, half, h, 2 * kFeatureScale};
  } else {
    const int half = static_cast<int>(rng.uniform_in(1, window_height / 2));
    const int w = static_cast<int>(rng.uniform_in(1, window_width));
    const int x = static_cast<int>(rng.uniform_in(0, window_width - w));
    const int y = static_cast<int>(rng.uniform_in(0, window_height - 2 * half));
    f.rects[0] = {x, y, w, 2 * half, -kFeatureScale};
    f.rects[1] = {x, y + (rng.coin() ? half : 0), w, half, 2 * kFeatureScale};
  }
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  if (!stage.weak.empty()) {
    const auto [mn, mx] = std::minmax_element(
        stage.weak.begin(), stage.weak.end(),
        [](const QuantizedWeak& a, const QuantizedWeak& b) { return a.theta < b.theta; });
    lo = mn->theta;
    hi = mx->theta;
  }
  fake.theta = rng.uniform_in(lo, hi);
  return fake;
}

ObfuscatedStage inject_fakes(const QuantizedStage& stage, int k, int window_width,
                             int window_height, Rng& rng) {
  if (k < 0) throw UsageError("fake classifier count must be >= 0");
  const auto n = stage.weak.size();
  std::vector<QuantizedWeak> all(stage.weak);
  for (int i = 0; i < k; ++i) {
    all.push_back(make_fake_classifier(stage, window_width, window_height, rng));
  }
  const auto perm = random_permutation(all.size(), rng);
  ObfuscatedStage out;
  out.threshold = stage.threshold;
  out.slots.reserve(all.size());
  for (const auto src : perm) {
    out.slots.push_back(all[src]);
    out.origin.push_back(src < n ? static_cast<int>(src) : -1);
    out.blinds.push_back(rng.uniform_in(1, kMaxBlind));
  }
  return out;
}

std::vector<std::int64_t> stage_responses(const ObfuscatedStage& stage,
                                          std::span<const PlaneIntegral> planes) {
  const auto m_count = planes.size();
  std::vector<std::int64_t> values(stage.size() * m_count);
  for (std::size_t n = 0; n < stage.size(); ++n) {
    const auto& f = stage.slots[n].feature;
    auto* row = values.data() + n * m_count;
    for (std::size_t m = 0; m < m_count; ++m) row[m] = eval_feature(planes[m], f, Offset{});
  }
  return values;
}

struct BobSession::Impl {
  enum class State { kHello, kSetup, kIdle, kCompare, kTransfer, kFinal, kControl, kDone, kDead };

  ServerConfig config;
  const QuantizedCascade& cascade;
  std::string cascade_id;
  Rng rng;
  State state = State::kHello;
  StageMode mode = StageMode::kShortCircuit;
  int planes = 0;
  std::unique_ptr<ComparisonServer> compare;
  std::vector<std::optional<ObfuscatedStage>> fixed;

  std::uint64_t window_id = 0;
  std::vector<PlaneIntegral> integrals;
  std::size_t stage = 0;
  const ObfuscatedStage* current = nullptr;
  ObfuscatedStage fresh;
  std::uint32_t base = 0;
  std::size_t cursor = 0;
  std::uint32_t next_id = 0;

  Impl(ServerConfig cfg)
      : config(std::move(cfg)),
        cascade(*config.cascade),
        cascade_id(config.cascade_id.empty() ? cascade.name : config.cascade_id),
        rng(config.seed),
        fixed(cascade.stages.size()) {}

  const ObfuscatedStage& obfuscation(std::size_t s) {
    if (config.reshuffle) {
      fresh = inject_fakes(cascade.stages[s], config.k_fakes, cascade.window_width,
                           cascade.window_height, rng);
      return fresh;
    }
    if (!fixed[s]) {
      fixed[s] = inject_fakes(cascade.stages[s], config.k_fakes, cascade.window_width,
                              cascade.window_height, rng);
    }
    return *fixed[s];
  }

  void begin_stage(std::vector<Frame>& out, ServerCounters& counters) {
    current = &obfuscation(stage);
    base = next_id;
    cursor = 0;
    const auto t = Clock::now();
    StageResponsesMsg msg;
    msg.window_id = window_id;
    msg.stage = static_cast<std::uint16_t>(stage);
    msg.values = stage_responses(*current, integrals);
    counters.response_ns += elapsed_ns(t);
    ++counters.stage_runs;
    counters.slot_runs += current->size();
    counters.feature_lookups += current->size() * integrals.size();
    out.push_back(encode(msg));
    state = current->size() == 0 ? State::kFinal : State::kCompare;
  }

  void on_window(const Frame& in, std::vector<Frame>& out, ServerCounters& counters) {
    auto msg = decode_window_bases(in);
    if (msg.planes != planes) throw ProtocolViolation("plane count differs from HELLO");
    const BitPlane probe(cascade.window_width, cascade.window_height);
    const auto plane_bytes = probe.serialized_size();
    if (msg.packed.size() != plane_bytes * static_cast<std::size_t>(planes)) {
      throw ProtocolViolation("WINDOW_BASES payload has the wrong length");
    }
    const auto t = Clock::now();
    integrals.clear();
    integrals.reserve(static_cast<std::size_t>(planes));
    const std::span<const std::uint8_t> packed(msg.packed);
    for (int m = 0; m < planes; ++m) {
      const auto plane = BitPlane::deserialize(
          packed.subspan(static_cast<std::size_t>(m) * plane_bytes, plane_bytes),
          cascade.window_width, cascade.window_height);
      integrals.push_back(plane_integral(plane));
    }
    counters.integral_ns += elapsed_ns(t);
    counters.integral_builds += static_cast<std::uint64_t>(planes);
    window_id = msg.window_id;
    stage = 0;
    begin_stage(out, counters);
  }

  void on_compare(const Frame& in, std::vector<Frame>& out, ServerCounters& counters) {
    const auto q = decode_comparison(in, MessageType::kCompareQuery);
    if (q.subtype != CompareSubtype::kCompareQuery) throw ProtocolViolation("bad comparison sub-type");
    const auto t = Clock::now();
    std::int64_t operand = 0;
    if (state == State::kCompare) {
      if (q.id != base + cursor) throw ProtocolViolation("comparison id out of order");
      operand = current->slots[cursor].theta;
      if (++cursor == current->size()) {
        state = State::kTransfer;
        cursor = 0;
      }
    } else {
      if (q.id != base + current->size()) throw ProtocolViolation("comparison id out of order");
      operand = current->final_operand();
      next_id = base + static_cast<std::uint32_t>(current->size()) + 1;
      state = stage + 1 == cascade.stages.size() ? State::kDone : State::kControl;
    }
    out.push_back(encode_comparison(MessageType::kCompareReply,
                                    {q.id, CompareSubtype::kCompareReply,
                                     compare->compare_reply(q.body, operand)}));
    counters.compare_ns += elapsed_ns(t);
    ++counters.comparisons;
  }

  void on_transfer(const Frame& in, std::vector<Frame>& out, ServerCounters& counters) {
    const auto q = decode_comparison(in, MessageType::kTransferQuery);
    if (q.subtype != CompareSubtype::kTransferQuery) throw ProtocolViolation("bad transfer sub-type");
    if (q.id != base + cursor) throw ProtocolViolation("transfer id out of order");
    const auto t = Clock::now();
    const auto& wc = current->slots[cursor];
    const auto s = current->blinds[cursor];
    const auto reply = compare->transfer_reply(q.body, encode_leaf(wc.beta + s),
                                               encode_leaf(wc.alpha + s), q.id);
    out.push_back(encode_comparison(MessageType::kTransferReply,
                                    {q.id, CompareSubtype::kTransferReply, reply}));
    counters.compare_ns += elapsed_ns(t);
    ++counters.transfers;
    if (++cursor == current->size()) state = State::kFinal;
  }

  void dispatch(const Frame& in, std::vector<Frame>& out, ServerCounters& counters) {
    if (in.type == MessageType::kError) {
      throw SessionError("peer reported: " + decode_error(in));
    }
    switch (state) {
      case State::kHello: {
        const auto hello = decode_hello(in);
        if (hello.version != kProtocolVersion) throw ProtocolViolation("unsupported protocol version");
        if (!hello.cascade_id.empty() && hello.cascade_id != cascade_id) {
          throw SessionError("unknown cascade id '" + hello.cascade_id + "'");
        }
        if (hello.planes < 2 || hello.planes > kDefaultPlaneCount) {
          throw ProtocolViolation("plane count out of range");
        }
        planes = hello.planes;
        mode = hello.mode;
        out.push_back(encode(announcement()));
        state = State::kSetup;
        return;
      }
      case State::kSetup:
        compare = make_comparison_server(in, rng.fork("comparison"));
        out.push_back(compare->setup_ack());
        state = State::kIdle;
        return;
      case State::kIdle:
        on_window(in, out, counters);
        return;
      case State::kCompare:
      case State::kFinal:
        on_compare(in, out, counters);
        return;
      case State::kTransfer:
        on_transfer(in, out, counters);
        return;
      case State::kControl: {
        const auto ctl = decode_stage_control(in);
        if (ctl.window_id != window_id) throw ProtocolViolation("STAGE_CONTROL for another window");
        if (ctl.proceed) {
          ++stage;
          begin_stage(out, counters);
        } else {
          if (mode == StageMode::kConstantStages) {
            throw ProtocolViolation("abort in constant-stages mode");
          }
          state = State::kDone;
        }
        return;
      }
      case State::kDone: {
        if (decode_window_done(in) != window_id) throw ProtocolViolation("WINDOW_DONE for another window");
        ++counters.windows;
        integrals.clear();
        current = nullptr;
        state = State::kIdle;
        return;
      }
      case State::kDead:
        throw SessionError("session closed after an earlier error");
    }
  }

  HelloAckMsg announcement() const {
    HelloAckMsg ack;
    ack.window_width = static_cast<std::uint16_t>(cascade.window_width);
    ack.window_height = static_cast<std::uint16_t>(cascade.window_height);
    for (const auto& s : cascade.stages) {
      ack.announced.push_back(static_cast<std::uint16_t>(s.weak.size() + config.k_fakes));
    }
    return ack;
  }
};

BobSession::BobSession(ServerConfig config) {
  if (!config.cascade) throw UsageError("server needs a cascade");
  if (config.k_fakes < 0) throw UsageError("fake classifier count must be >= 0");
  for (const auto& s : config.cascade->stages) {
    if (s.weak.size() + static_cast<std::size_t>(config.k_fakes) > 0xFFFF) {
      throw UsageError("too many classifiers in one stage");
    }
  }
  impl_ = std::make_unique<Impl>(std::move(config));
}

BobSession::~BobSession() = default;

HelloAckMsg BobSession::announcement() const { return impl_->announcement(); }

void BobSession::on_frame(const Frame& in, std::vector<Frame>& out) {
  try {
    impl_->dispatch(in, out, counters_);
  } catch (...) {
    impl_->state = Impl::State::kDead;
    throw;
  }
}

AliceSession::AliceSession(Channel& channel, ClientConfig config)
    : channel_(channel), config_(std::move(config)), rng_(config_.seed) {
  if (config_.planes < 2 || config_.planes > kDefaultPlaneCount) {
    throw UsageError("plane count must be in [2, 256]");
  }
  HelloMsg hello;
  hello.cascade_id = config_.cascade_id;
  hello.planes = static_cast<std::uint16_t>(config_.planes);
  hello.mode = config_.mode;
  channel_.send(encode(hello));
  ack_ = decode_hello_ack(channel_.receive());
  if (ack_.window_width == 0 || ack_.window_height == 0) {
    throw ProtocolViolation("server announced an empty window");
  }
  compare_ = make_comparison_client(config_.compare, rng_.fork("comparison"));
  comparison_handshake(channel_, *compare_);
}

AliceSession::~AliceSession() = default;

WindowVerdict AliceSession::run_window(const GrayImage& window, std::uint64_t window_id) {
  if (window.width != window_width() || window.height != window_height()) {
    throw UsageError("window does not match the cascade size");
  }
  auto t = Clock::now();
  const auto set = factorize(window, rng_, config_.planes);
  const auto shuffled = shuffle(set, rng_);
  counters_.factorize_ns += elapsed_ns(t);
  if (config_.secrets != nullptr && config_.secrets->debug()) {
    config_.secrets->append(Direction::kLocal,
                            encode_secret_window({window_id, window, shuffled.permutation}));
  }

  WindowBasesMsg bases;
  bases.window_id = window_id;
  bases.planes = static_cast<std::uint16_t>(config_.planes);
  const auto plane_bytes = shuffled.planes.front().serialized_size();
  bases.packed.resize(plane_bytes * shuffled.planes.size());
  for (std::size_t m = 0; m < shuffled.planes.size(); ++m) {
    shuffled.planes[m].serialize(std::span(bases.packed).subspan(m * plane_bytes, plane_bytes));
  }
  channel_.send(encode(bases));

  WindowVerdict verdict;
  verdict.window_id = window_id;
  const auto stages = announced().size();
  const auto m_count = static_cast<std::size_t>(config_.planes);
  for (std::size_t s = 0; s < stages; ++s) {
    t = Clock::now();
    const auto msg = decode_stage_responses(channel_.receive());
    counters_.wait_ns += elapsed_ns(t);
    const std::size_t slots = announced()[s];
    if (msg.window_id != window_id || msg.stage != s) {
      throw ProtocolViolation("STAGE_RESPONSES out of order");
    }
    if (msg.values.size() != slots * m_count) {
      throw ProtocolViolation("STAGE_RESPONSES dimensions differ from the announcement");
    }

    t = Clock::now();
    std::vector<std::int64_t> responses(slots);
    for (std::size_t n = 0; n < slots; ++n) {
      responses[n] = recombine(std::span(msg.values).subspan(n * m_count, m_count), shuffled.weights);
    }
    counters_.recombine_ns += elapsed_ns(t);

    t = Clock::now();
    const std::uint32_t base = next_id_;
    const auto bits = millionaire_batch(channel_, *compare_, base, responses);
    const auto blinded = blinded_leaf_batch(channel_, *compare_, base, bits);
    const bool pass = final_sum_compare(channel_, *compare_,
                                        base + static_cast<std::uint32_t>(slots),
                                        checked_sum(blinded));
    next_id_ = base + static_cast<std::uint32_t>(slots) + 1;
    counters_.compare_ns += elapsed_ns(t);
    counters_.comparisons += slots + 1;
    counters_.transfers += slots;
    ++counters_.stages;

    ++verdict.stages_run;
    if (!pass && verdict.stage_reached == 0) verdict.stage_reached = static_cast<int>(s) + 1;
    if (s + 1 == stages) break;
    if (config_.mode == StageMode::kShortCircuit) {
      channel_.send(encode(StageControlMsg{window_id, pass}));
      if (!pass) break;
    } else {
      channel_.send(encode(StageControlMsg{window_id, true}));
    }
  }
  channel_.send(encode_window_done(window_id));
  verdict.accepted = verdict.stage_reached == 0;
  if (verdict.accepted) verdict.stage_reached = static_cast<int>(stages);
  ++counters_.windows;
  return verdict;
}

WindowVerdict alice_run_window(AliceSession& session, const GrayImage& window) {
  return session.run_window(window, session.rng().next_u64());
}

SecureScan alice_detect_secure(const GrayImage& img, const DetectParams& params,
                               std::span<AliceSession* const> sessions) {
  if (sessions.empty()) throw UsageError("secure detection needs at least one session");
  if (params.normalize) throw UsageError("variance normalization is not available in secure mode");
  auto& lead = *sessions.front();
  for (auto* s : sessions) {
    if (s->window_width() != lead.window_width() || s->window_height() != lead.window_height()) {
      throw SessionError("sessions disagree on the window size");
    }
  }
  const auto set = enumerate_windows(img, lead.window_width(), lead.window_height(), params);
  SecureScan scan;
  scan.windows = set.count();

  scan.submission_order = random_permutation(set.count(), lead.rng());
  const auto& order = scan.submission_order;
  std::unordered_set<std::uint64_t> used;
  scan.submission_ids.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::uint64_t id = 0;
    do {
      id = lead.rng().next_u64();
    } while (!used.insert(id).second);
    scan.submission_ids.push_back(id);
  }

  const auto jobs = sessions.size();
  std::vector<std::vector<Detection>> found(jobs);
  auto work = [&](std::size_t j) {
    for (std::size_t i = j; i < order.size(); i += jobs) {
      const auto& pos = set.windows[order[i]];
      const auto v = sessions[j]->run_window(set.window_image(pos), scan.submission_ids[i]);
      if (v.accepted) found[j].push_back(set.box(pos, v.stage_reached));
    }
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> threads;
    for (std::size_t j = 0; j < jobs; ++j) {
      threads.emplace_back([&, j] {
        try {
          work(j);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      });
    }
    for (auto& th : threads) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  for (auto& f : found) scan.raw.insert(scan.raw.end(), f.begin(), f.end());
  scan.detections = group_detections(scan.raw, params.min_neighbors);
  return scan;
}

SecureScan alice_detect_secure(const GrayImage& img, const DetectParams& params,
                               AliceSession& session) {
  AliceSession* one[1] = {&session};
  return alice_detect_secure(img, params, one);
}

void serve(TcpListener& listener, const ServerConfig& config,
           const std::function<void(std::uint64_t, const ServerCounters&, const ChannelStats&,
                                    const std::string&)>& on_session_end) {
  std::mutex mu;
  std::vector<std::thread> threads;
  std::vector<TcpChannel*> live;
  std::uint64_t next_session = 0;
  while (auto conn = listener.accept()) {
    const auto session_id = next_session++;
    auto* raw = conn.get();
    {
      std::lock_guard lock(mu);
      live.push_back(raw);
    }
    ServerConfig cfg = config;
    cfg.seed = derive_seed(config.seed, "session-" + std::to_string(session_id));
    threads.emplace_back([&, session_id, cfg = std::move(cfg), conn = std::move(conn)]() mutable {
      std::string error;
      BobSession bob(std::move(cfg));
      try {
        error = serve_connection(*conn, bob);
      } catch (const std::exception& e) {
        error = e.what();
      }
      {
        std::lock_guard lock(mu);
        live.erase(std::find(live.begin(), live.end(), conn.get()));
      }
      if (on_session_end) on_session_end(session_id, bob.counters(), conn->stats(), error);
    });
  }
  {
    std::lock_guard lock(mu);
    for (auto* c : live) c->shutdown();
  }
  for (auto& th : threads) th.join();
}

}  // namespace rbi
