#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <thread>

#include "oracles.hpp"
#include "rbi/cascade.hpp"
#include "rbi/error.hpp"
#include "rbi/protocol.hpp"
#include "rbi/synth.hpp"

namespace {

using namespace rbi;

std::shared_ptr<const QuantizedCascade> alt() {
  static const auto qc = std::make_shared<const QuantizedCascade>(
      quantize(load_cascade(RBI_FIXTURE_DIR "/cascades/haarcascade_frontalface_alt.xml")));
  return qc;
}

std::shared_ptr<const QuantizedCascade> small_cascade(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "cascade"));
  const std::vector<int> sizes{3, 5, 4, 6};
  return std::make_shared<const QuantizedCascade>(quantize(random_cascade("small", 12, 10, sizes, rng)));
}

struct Pair {
  BobSession bob;
  LoopbackChannel channel;
  AliceSession alice;

  Pair(std::shared_ptr<const QuantizedCascade> qc, int k, StageMode mode, std::uint64_t seed,
       CompareBackend backend = CompareBackend::kMock, bool reshuffle = true)
      : bob(server(std::move(qc), k, seed, reshuffle)), channel(bob), alice(channel, client(mode, seed, backend)) {}

  static ServerConfig server(std::shared_ptr<const QuantizedCascade> qc, int k, std::uint64_t seed, bool reshuffle) {
    ServerConfig c;
    c.cascade = std::move(qc);
    c.k_fakes = k;
    c.reshuffle = reshuffle;
    c.seed = derive_seed(seed, "bob");
    return c;
  }
  static ClientConfig client(StageMode mode, std::uint64_t seed, CompareBackend backend) {
    ClientConfig c;
    c.mode = mode;
    c.seed = derive_seed(seed, "alice");
    c.compare.backend = backend;
    c.compare.key_bits = 512;
    return c;
  }
};

TEST(Fakes, AnnouncedCount) {
  Rng rng(derive_seed(71, "fakes"));
  const auto& stage = alt()->stages[0];
  ASSERT_EQ(stage.weak.size(), 3U);
  const auto obf = inject_fakes(stage, 8, 20, 20, rng);
  EXPECT_EQ(obf.size(), 11U);
  EXPECT_EQ(std::count(obf.origin.begin(), obf.origin.end(), -1), 8);
  for (std::size_t i = 0; i < obf.size(); ++i) {
    EXPECT_GE(obf.blinds[i], 1);
    EXPECT_LE(obf.blinds[i], kMaxBlind);
    if (obf.origin[i] < 0) {
      EXPECT_EQ(obf.slots[i].alpha, 0);
      EXPECT_EQ(obf.slots[i].beta, 0);
    } else {
      EXPECT_EQ(obf.slots[i], stage.weak[static_cast<std::size_t>(obf.origin[i])]);
    }
  }
  Pair p(alt(), 8, StageMode::kShortCircuit, 71);
  EXPECT_EQ(p.alice.announced().front(), 11);
  EXPECT_EQ(p.alice.announced().back(), 213 + 8);
}

TEST(Fakes, ZeroKIsPermutationOfTrueSlots) {
  Rng rng(derive_seed(72, "k0"));
  const auto& stage = alt()->stages[5];
  const auto obf = inject_fakes(stage, 0, 20, 20, rng);
  std::vector<int> origin = obf.origin;
  std::sort(origin.begin(), origin.end());
  for (std::size_t i = 0; i < origin.size(); ++i) EXPECT_EQ(origin[i], static_cast<int>(i));
}

TEST(Fakes, FinalOperand) {
  ObfuscatedStage s;
  s.blinds = {10, 20, 30};
  s.threshold = 5;
  EXPECT_EQ(s.final_operand(), 64);
}

TEST(Responses, ZeroPlanesGiveZeros) {
  Rng rng(derive_seed(73, "zero"));
  const auto obf = inject_fakes(alt()->stages[2], 4, 20, 20, rng);
  std::vector<PlaneIntegral> planes(16, plane_integral(BitPlane(20, 20)));
  for (const auto v : stage_responses(obf, planes)) EXPECT_EQ(v, 0);
}

TEST(Responses, RecombineToPlainFeatures) {
  Rng rng(derive_seed(74, "responses"));
  for (int trial = 0; trial < 20; ++trial) {
    const auto window = random_image(20, 20, rng);
    const auto shuffled = shuffle(factorize(window, rng), rng);
    std::vector<PlaneIntegral> integrals;
    for (const auto& p : shuffled.planes) integrals.push_back(plane_integral(p));
    const auto& stage = alt()->stages[rng.uniform(alt()->stages.size())];
    const auto obf = inject_fakes(stage, 6, 20, 20, rng);
    const auto values = stage_responses(obf, integrals);
    const auto m = integrals.size();
    const auto ii = integral(window);
    for (std::size_t n = 0; n < obf.size(); ++n) {
      const std::span<const std::int64_t> row(values.data() + n * m, m);
      EXPECT_EQ(recombine(row, shuffled.weights), eval_feature(ii, obf.slots[n], {}));
    }
  }
}

void expect_matches_plain(Pair& p, const QuantizedCascade& qc, int windows, std::uint64_t seed,
                          bool constant) {
  Rng rng(derive_seed(seed, "windows"));
  int accepted = 0;
  for (int i = 0; i < windows; ++i) {
    GrayImage w = random_image(qc.window_width, qc.window_height, rng);
    if (i % 4 == 0) {
      if (auto hit = find_accepted_window(qc, rng)) w = *hit;
    }
    const auto plain = classify_window(integral(w), qc, {});
    const auto v = alice_run_window(p.alice, w);
    ASSERT_EQ(v.accepted, plain.accepted) << "window " << i;
    EXPECT_EQ(v.stage_reached, plain.stage_reached);
    const int stages = static_cast<int>(qc.stages.size());
    EXPECT_EQ(v.stages_run, constant ? stages : plain.stage_reached);
    accepted += v.accepted;
  }
  EXPECT_GT(accepted, 0);
}

TEST(Secure, ShortCircuitMatchesPlain) {
  Pair p(alt(), 4, StageMode::kShortCircuit, 75);
  expect_matches_plain(p, *alt(), 40, 75, false);
}

TEST(Secure, ConstantStagesMatchesPlain) {
  Pair p(alt(), 4, StageMode::kConstantStages, 76);
  expect_matches_plain(p, *alt(), 12, 76, true);
}

TEST(Secure, SmallCascadeManyWindows) {
  const auto qc = small_cascade(77);
  for (const auto mode : {StageMode::kShortCircuit, StageMode::kConstantStages}) {
    Pair p(qc, 3, mode, 77);
    expect_matches_plain(p, *qc, 200, 77, mode == StageMode::kConstantStages);
  }
}

TEST(Secure, PaillierBackendMatchesPlain) {
  const auto qc = small_cascade(78);
  Pair p(qc, 2, StageMode::kShortCircuit, 78, CompareBackend::kPaillier);
  expect_matches_plain(p, *qc, 4, 78, false);
}

TEST(Secure, FakesDoNotChangeVerdicts) {
  Pair a(alt(), 0, StageMode::kShortCircuit, 79);
  Pair b(alt(), 32, StageMode::kShortCircuit, 80);
  Rng rng(derive_seed(79, "paired"));
  for (int i = 0; i < 60; ++i) {
    const auto w = random_image(20, 20, rng);
    const auto va = alice_run_window(a.alice, w);
    const auto vb = alice_run_window(b.alice, w);
    EXPECT_EQ(va.accepted, vb.accepted);
    EXPECT_EQ(va.stage_reached, vb.stage_reached);
  }
}

TEST(Secure, WorkCounters) {
  Pair p(alt(), 5, StageMode::kConstantStages, 81);
  Rng rng(derive_seed(81, "work"));
  alice_run_window(p.alice, random_image(20, 20, rng));
  const auto& c = p.bob.counters();
  std::uint64_t slots = 0;
  for (const auto n : p.alice.announced()) slots += n;
  EXPECT_EQ(c.integral_builds, 256U);
  EXPECT_EQ(c.stage_runs, 22U);
  EXPECT_EQ(c.feature_lookups, slots * 256);
  EXPECT_EQ(c.comparisons, slots + 22);
  EXPECT_EQ(c.transfers, slots);
}

TEST(Secure, DetectMatchesPlain) {
  Rng rng(derive_seed(82, "scene"));
  const auto patch = find_accepted_window(*alt(), rng);
  ASSERT_TRUE(patch);
  const std::vector<GrayImage> patches{*patch};
  const auto img = synthetic_scene(60, 60, patches, 2, rng);
  DetectParams params;
  params.min_neighbors = 1;
  const auto plain = detect(img, *alt(), params);
  ASSERT_FALSE(plain.empty());
  Pair p(alt(), 8, StageMode::kShortCircuit, 82);
  const auto secure = alice_detect_secure(img, params, p.alice);
  EXPECT_EQ(secure.detections, plain);
  EXPECT_EQ(format_detections(secure.detections), format_detections(plain));
}

TEST(Secure, SmallImageSendsNothing) {
  Pair p(alt(), 0, StageMode::kShortCircuit, 83);
  const auto before = p.channel.stats();
  const auto scan = alice_detect_secure(GrayImage(19, 19), DetectParams{}, p.alice);
  EXPECT_TRUE(scan.detections.empty());
  EXPECT_EQ(scan.windows, 0U);
  EXPECT_EQ(p.channel.stats().frames_sent, before.frames_sent);
}

TEST(Secure, SubmissionOrderIsShuffled) {
  Rng rng(derive_seed(84, "order"));
  const auto img = random_image(40, 40, rng);
  Pair a(small_cascade(84), 0, StageMode::kShortCircuit, 84);
  Pair b(small_cascade(84), 0, StageMode::kShortCircuit, 85);
  const auto sa = alice_detect_secure(img, DetectParams{}, a.alice);
  const auto sb = alice_detect_secure(img, DetectParams{}, b.alice);
  EXPECT_NE(sa.submission_order, sb.submission_order);
  auto x = sa.submission_order, y = sb.submission_order;
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  EXPECT_EQ(x, y);
  EXPECT_EQ(std::set<std::uint64_t>(sa.submission_ids.begin(), sa.submission_ids.end()).size(), sa.windows);
  EXPECT_EQ(sa.detections, sb.detections);
}

TEST(Secure, Deterministic) {
  Rng rng(derive_seed(86, "det"));
  const auto img = random_image(40, 40, rng);
  Pair a(small_cascade(86), 2, StageMode::kShortCircuit, 86);
  Pair b(small_cascade(86), 2, StageMode::kShortCircuit, 86);
  EXPECT_EQ(alice_detect_secure(img, DetectParams{}, a.alice).submission_ids,
            alice_detect_secure(img, DetectParams{}, b.alice).submission_ids);
}

TEST(Secure, NormalizeRejected) {
  Pair p(alt(), 0, StageMode::kShortCircuit, 87);
  DetectParams params;
  params.normalize = true;
  EXPECT_THROW(alice_detect_secure(GrayImage(30, 30), params, p.alice), UsageError);
}

TEST(Session, UnknownCascadeId) {
  ServerConfig sc;
  sc.cascade = alt();
  BobSession bob(sc);
  LoopbackChannel ch(bob);
  ClientConfig cc;
  cc.cascade_id = "haarcascade_eye";
  EXPECT_THROW(AliceSession(ch, cc), SessionError);
}

TEST(Session, BadPlaneCount) {
  ServerConfig sc;
  sc.cascade = alt();
  BobSession bob(sc);
  std::vector<Frame> out;
  HelloMsg hello;
  hello.planes = 300;
  EXPECT_FALSE(serve_frame(bob, encode(hello), out));
  ASSERT_EQ(out.size(), 1U);
  EXPECT_EQ(out[0].type, MessageType::kError);
}

TEST(Session, OutOfOrderFrame) {
  ServerConfig sc;
  sc.cascade = alt();
  BobSession bob(sc);
  std::vector<Frame> out;
  EXPECT_FALSE(serve_frame(bob, encode_window_done(1), out));
  EXPECT_EQ(out.back().type, MessageType::kError);
}

TEST(Session, WrongWindowSize) {
  Pair p(alt(), 0, StageMode::kShortCircuit, 88);
  EXPECT_THROW(alice_run_window(p.alice, GrayImage(24, 24)), Error);
}

TEST(Wire, FrameRoundTrip) {
  Frame f{MessageType::kStageResponses, {1, 2, 3}};
  const auto bytes = encode_frame(f);
  ASSERT_EQ(bytes.size(), 8U);
  EXPECT_EQ(bytes[3], 3);
  EXPECT_EQ(bytes[4], 0x11);
  const auto g = decode_frame(bytes);
  EXPECT_EQ(g.type, f.type);
  EXPECT_EQ(g.payload, f.payload);
  EXPECT_THROW(decode_frame(std::span(bytes).first(6)), ProtocolViolation);
}

TEST(Wire, MessagesRoundTrip) {
  HelloAckMsg ack{24, 24, {11, 24}};
  const auto a = decode_hello_ack(encode(ack));
  EXPECT_EQ(a.announced, ack.announced);
  StageResponsesMsg r{0xDEADBEEFULL, 3, {-1, 2, std::numeric_limits<std::int64_t>::min()}};
  const auto rr = decode_stage_responses(encode(r));
  EXPECT_EQ(rr.values, r.values);
  EXPECT_EQ(rr.window_id, r.window_id);
  const auto c = decode_stage_control(encode(StageControlMsg{7, true}));
  EXPECT_TRUE(c.proceed);
  EXPECT_EQ(decode_window_done(encode_window_done(9)), 9U);
  EXPECT_THROW(decode_hello(encode_window_done(9)), ProtocolViolation);
  EXPECT_THROW(expect_type(encode_error("boom"), MessageType::kHelloAck), SessionError);
}

TEST(Tcp, TwoConcurrentClients) {
  TcpListener listener("127.0.0.1", 0);
  ServerConfig sc;
  sc.cascade = alt();
  sc.k_fakes = 4;
  sc.seed = derive_seed(89, "server");
  std::mutex mu;
  std::vector<std::string> errors;
  std::thread server([&] {
    serve(listener, sc, [&](std::uint64_t, const ServerCounters&, const ChannelStats&, const std::string& e) {
      std::lock_guard lock(mu);
      errors.push_back(e);
    });
  });

  Rng rng(derive_seed(89, "scene"));
  const auto patch = find_accepted_window(*alt(), rng);
  ASSERT_TRUE(patch);
  const std::vector<GrayImage> patches{*patch};
  const std::vector<GrayImage> images{synthetic_scene(48, 48, patches, 1, rng),
                                      synthetic_scene(48, 48, patches, 2, rng)};
  DetectParams params;
  params.min_neighbors = 1;
  std::vector<std::vector<Detection>> got(2);
  std::vector<std::thread> clients;
  for (int c = 0; c < 2; ++c) {
    clients.emplace_back([&, c] {
      auto ch = TcpChannel::connect("127.0.0.1", listener.port());
      ClientConfig cc;
      cc.seed = derive_seed(90 + c, "client");
      AliceSession alice(*ch, cc);
      got[c] = alice_detect_secure(images[c], params, alice).detections;
    });
  }
  for (auto& t : clients) t.join();
  // Sessions report once the clients hang up.
  for (int i = 0; i < 200; ++i) {
    {
      std::lock_guard lock(mu);
      if (errors.size() == 2) break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  listener.close();
  server.join();
  for (int c = 0; c < 2; ++c) EXPECT_EQ(got[c], detect(images[c], *alt(), params));
  EXPECT_FALSE(got[1].empty());
  ASSERT_EQ(errors.size(), 2U);
  for (const auto& e : errors) EXPECT_EQ(e, "");
}

TEST(Secure, TwoSessionsInParallel) {
  const auto qc = small_cascade(91);
  BobSession b1(Pair::server(qc, 1, 91, true)), b2(Pair::server(qc, 1, 92, true));
  LoopbackChannel c1(b1), c2(b2);
  AliceSession a1(c1, Pair::client(StageMode::kShortCircuit, 91, CompareBackend::kMock));
  AliceSession a2(c2, Pair::client(StageMode::kShortCircuit, 92, CompareBackend::kMock));
  Rng rng(derive_seed(91, "img"));
  const auto img = random_image(50, 50, rng);
  DetectParams params;
  params.min_neighbors = 0;
  AliceSession* sessions[] = {&a1, &a2};
  const auto scan = alice_detect_secure(img, params, sessions);
  EXPECT_EQ(scan.detections, detect(img, *qc, params));
  EXPECT_GT(a1.counters().windows, 0U);
  EXPECT_GT(a2.counters().windows, 0U);
}

TEST(Tcp, SplitHostPort) {
  EXPECT_EQ(split_host_port("localhost:80"), std::make_pair(std::string("localhost"), std::uint16_t{80}));
  EXPECT_EQ(split_host_port("[::1]:9").first, "::1");
  EXPECT_THROW(split_host_port("nohost"), UsageError);
  EXPECT_THROW(split_host_port("h:99999"), UsageError);
}

}  // namespace
