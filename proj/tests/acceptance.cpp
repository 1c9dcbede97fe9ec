// Acceptance checks, one line per criterion:
//   rbi_acceptance [--criterion N]...
// Exit status is nonzero if any selected criterion fails.

#include <CLI11.hpp>
#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <chrono>
#include <cstdio>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <unordered_set>

#include "bench.hpp"
#include "oracles.hpp"
#include "rbi/audit.hpp"
#include "rbi/cascade.hpp"
#include "rbi/compare.hpp"
#include "rbi/protocol.hpp"
#include "rbi/rbi_codec.hpp"
#include "rbi/synth.hpp"

namespace {

using namespace rbi;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::shared_ptr<const QuantizedCascade> fixture(const char* name) {
  return std::make_shared<const QuantizedCascade>(
      quantize(load_cascade(std::string(RBI_FIXTURE_DIR "/cascades/") + name)));
}

GrayImage noise(int w, int h, Rng& rng, int lo = 0) {
  GrayImage g(w, h);
  for (auto& p : g.pixels) p = static_cast<std::uint8_t>(lo + static_cast<int>(rng.uniform(256 - lo)));
  return g;
}

struct Loop {
  BobSession bob;
  LoopbackChannel channel;
  AliceSession alice;

  Loop(std::shared_ptr<const QuantizedCascade> qc, int k, StageMode mode, const std::string& seed)
      : bob(server(std::move(qc), k, seed)), channel(bob), alice(channel, client(mode, seed)) {}

  static ServerConfig server(std::shared_ptr<const QuantizedCascade> qc, int k, const std::string& seed) {
    ServerConfig c;
    c.cascade = std::move(qc);
    c.k_fakes = k;
    c.seed = derive_seed(1, "bob-" + seed);
    return c;
  }
  static ClientConfig client(StageMode mode, const std::string& seed) {
    ClientConfig c;
    c.mode = mode;
    c.seed = derive_seed(1, "alice-" + seed);
    return c;
  }
};

// Scan windows of 20 synthetic scenes: every window the plain detector
// accepts plus a random sample of the rest, 250 per image.
struct Sample {
  GrayImage window;
  ClassifyResult plain;
};

std::vector<Sample> scene_windows(const QuantizedCascade& qc, int images, std::size_t per_image,
                                  std::uint64_t seed) {
  Rng rng(derive_seed(seed, "scenes"));
  std::vector<GrayImage> patches;
  for (int i = 0; i < 3; ++i) {
    if (auto p = find_accepted_window(qc, rng)) patches.push_back(*p);
  }
  std::vector<Sample> out;
  for (int i = 0; i < images; ++i) {
    const auto img = synthetic_scene(100, 100, patches, 2, rng);
    const auto set = enumerate_windows(img, qc.window_width, qc.window_height, DetectParams{});
    std::vector<IntegralImage> ii;
    for (const auto& level : set.levels) ii.push_back(integral(level.image));
    std::vector<std::uint32_t> accepted, rejected;
    for (std::uint32_t w = 0; w < set.count(); ++w) {
      const auto& pos = set.windows[w];
      (classify_window(ii[pos.level], qc, pos.offset).accepted ? accepted : rejected).push_back(w);
    }
    const auto order = random_permutation(rejected.size(), rng);
    std::vector<std::uint32_t> chosen = accepted;
    for (std::size_t j = 0; chosen.size() < per_image && j < order.size(); ++j) chosen.push_back(rejected[order[j]]);
    for (const auto w : chosen) {
      const auto& pos = set.windows[w];
      out.push_back({set.window_image(pos), classify_window(ii[pos.level], qc, pos.offset)});
    }
  }
  return out;
}

Outcome c1() {
  const auto qc = fixture("haarcascade_frontalface_alt.xml");
  const auto t0 = Clock::now();
  const auto samples = scene_windows(*qc, 20, 250, 1);
  std::size_t positives = 0;
  for (const auto& s : samples) positives += s.plain.accepted;
  std::size_t mismatches = 0, checked = 0;
  std::string configs;
  for (const auto mode : {StageMode::kShortCircuit, StageMode::kConstantStages}) {
    for (const int k : {0, 8, 32}) {
      Loop loop(qc, k, mode, "c1-" + std::to_string(k) + "-" + std::to_string(static_cast<int>(mode)));
      std::uint64_t id = 0;
      for (const auto& s : samples) {
        const auto v = loop.alice.run_window(s.window, ++id);
        mismatches += v.accepted != s.plain.accepted || v.stage_reached != s.plain.stage_reached;
        ++checked;
      }
    }
  }
  return {mismatches == 0 && samples.size() >= 5000 && positives > 0,
          fmt("oracle equivalence: %zu windows x 6 configs (short/constant, K=0/8/32), %zu accepted by plain, "
              "%zu mismatches of %zu, %.0fs",
              samples.size(), positives, mismatches, checked, seconds_since(t0))};
}

Outcome c2() {
  const auto t0 = Clock::now();
  Rng rng(derive_seed(2, "roundtrip"));
  std::size_t bad = 0;
  const auto pixels = noise(1000, 100, rng);
  const auto set = factorize(pixels, rng);
  bad += reconstruct(set) != pixels;
  for (int p = 0; p < 100000; ++p) {
    int sum = 0;
    for (std::size_t m = 1; m < set.planes.size(); ++m) {
      if (set.planes[m].test(p)) sum += static_cast<int>(m);
    }
    bad += sum != pixels.pixels[static_cast<std::size_t>(p)];
  }
  for (int i = 0; i < 1000; ++i) {
    const auto w = i % 2 ? noise(24, 24, rng) : random_image(24, 24, rng);
    bad += reconstruct(shuffle(factorize(w, rng), rng)) != w;
  }
  const double s = seconds_since(t0);
  return {bad == 0 && s < 60, fmt("rbi round-trip: 1e5 pixels + 1000 windows, %zu failures, %.1fs", bad, s)};
}

Outcome c3() {
  Rng rng(derive_seed(3, "dot"));
  std::size_t bad = 0, pairs = 0;
  for (int perm = 0; perm < 100; ++perm) {
    const auto window = noise(24, 24, rng);
    const auto shuffled = shuffle(factorize(window, rng), rng);
    std::vector<PlaneIntegral> integrals;
    for (const auto& p : shuffled.planes) integrals.push_back(plane_integral(p));
    std::vector<std::int64_t> resp(integrals.size());
    for (int i = 0; i < 100; ++i) {
      QuantizedFeature f;
      for (const auto& r : random_haar_feature(24, 24, rng).rects) {
        f.rects[static_cast<std::size_t>(f.count++)] = {r.x, r.y, r.w, r.h,
                                                        static_cast<std::int64_t>(r.weight * kFeatureScale)};
      }
      for (std::size_t m = 0; m < integrals.size(); ++m) resp[m] = eval_feature(integrals[m], f, {});
      bad += recombine(resp, shuffled.weights) != oracle::dot(window, oracle::rasterize(f, 24, 24));
      ++pairs;
    }
  }
  return {bad == 0, fmt("dot-product exactness: %zu pairs under 100 permutations, %zu mismatches", pairs, bad)};
}

struct Comparer {
  ComparisonPeer peer;
  LoopbackChannel channel;
  std::unique_ptr<ComparisonClient> client;
  std::uint32_t next = 0;

  Comparer(CompareBackend backend, int bits) : peer(Rng(derive_seed(4, "bob"))), channel(peer) {
    CompareOptions o;
    o.backend = backend;
    o.bits = bits;
    client = make_comparison_client(o, Rng(derive_seed(4, "alice")));
    comparison_handshake(channel, *client);
  }

  std::vector<bool> run(const std::vector<std::pair<std::int64_t, std::int64_t>>& pairs) {
    std::vector<std::int64_t> a;
    for (const auto& [x, y] : pairs) {
      a.push_back(x);
      peer.push_operand(y);
    }
    const auto first = next;
    next += static_cast<std::uint32_t>(pairs.size());
    return millionaire_batch(channel, *client, first, a);
  }
};

Outcome c4() {
  const auto t0 = Clock::now();
  std::vector<std::pair<std::int64_t, std::int64_t>> exhaustive;
  for (int a = -32; a < 32; ++a) {
    for (int b = -32; b < 32; ++b) exhaustive.emplace_back(a, b);
  }
  Rng rng(derive_seed(4, "wide"));
  std::vector<std::pair<std::int64_t, std::int64_t>> wide;
  for (int i = 0; i < 10000; ++i) {
    const auto a = rng.uniform_in(-kCompareBound, kCompareBound - 1);
    // Every eighth pair sits next to a tie.
    const auto b = i % 8 == 0 ? std::clamp(a + rng.uniform_in(-1, 1), -kCompareBound, kCompareBound - 1)
                              : rng.uniform_in(-kCompareBound, kCompareBound - 1);
    wide.emplace_back(a, b);
  }
  std::map<std::string, std::size_t> wrong;
  std::map<CompareBackend, std::vector<bool>> sweep;
  for (const auto backend : {CompareBackend::kMock, CompareBackend::kPaillier}) {
    const std::string name = backend == CompareBackend::kMock ? "mock" : "paillier";
    Comparer small(backend, 6);
    sweep[backend] = small.run(exhaustive);
    for (std::size_t i = 0; i < exhaustive.size(); ++i) {
      wrong[name] += sweep[backend][i] != (exhaustive[i].first > exhaustive[i].second);
    }
    Comparer big(backend, kCompareBits);
    for (std::size_t start = 0; start < wide.size(); start += 500) {
      const std::vector<std::pair<std::int64_t, std::int64_t>> chunk(wide.begin() + static_cast<std::ptrdiff_t>(start),
                                                                     wide.begin() + static_cast<std::ptrdiff_t>(start + 500));
      const auto got = big.run(chunk);
      for (std::size_t i = 0; i < chunk.size(); ++i) wrong[name] += got[i] != (chunk[i].first > chunk[i].second);
    }
  }
  const bool agree = sweep[CompareBackend::kMock] == sweep[CompareBackend::kPaillier];
  return {wrong["mock"] == 0 && wrong["paillier"] == 0 && agree,
          fmt("millionaire: 4096 exhaustive 6-bit + 10000 random 48-bit pairs; wrong mock=%zu paillier=%zu; "
              "mock/paillier sweep %s; %.0fs",
              wrong["mock"], wrong["paillier"], agree ? "identical" : "DIFFERENT", seconds_since(t0))};
}

Outcome c5() {
  const auto qc = fixture("haarcascade_frontalface_alt.xml");
  const auto samples = scene_windows(*qc, 4, 250, 5);
  Loop a(qc, 0, StageMode::kShortCircuit, "c5-a");
  Loop b(qc, 32, StageMode::kShortCircuit, "c5-b");
  std::size_t differ = 0, accepted = 0;
  std::uint64_t id = 0;
  for (const auto& s : samples) {
    ++id;
    const auto va = a.alice.run_window(s.window, id);
    const auto vb = b.alice.run_window(s.window, id);
    differ += va.accepted != vb.accepted || va.stage_reached != vb.stage_reached;
    accepted += va.accepted;
  }
  return {differ == 0 && samples.size() >= 1000,
          fmt("fake neutrality: K=0 vs K=32 on %zu windows (%zu accepted), %zu differ", samples.size(), accepted,
              differ)};
}

Outcome c6() {
  const auto s = cascade_stats(load_cascade(RBI_FIXTURE_DIR "/cascades/haarcascade_frontalface_alt.xml"));
  const bool ok = s.stage_count == 22 && s.weak_per_stage.front() == 3 && s.max_weak == 213 && s.total_weak == 2135;
  return {ok, fmt("cascade fixture: %zu stages, first %zu, max %zu, total %zu", s.stage_count,
                  s.weak_per_stage.front(), s.max_weak, s.total_weak)};
}

Outcome c7() {
  const auto qc = fixture("haarcascade_frontalface_alt.xml");
  Rng rng(derive_seed(7, "scaling"));
  std::vector<GrayImage> windows;
  for (int i = 0; i < 16; ++i) windows.push_back(random_image(20, 20, rng));
  const std::vector<int> ks{0, 100, 200, 400, 800};
  const auto points = cli::bench_scaling(windows, *qc, ks, 7, 9);
  const auto fit = cli::fit_line(points);
  std::string table;
  for (const auto& p : points) table += fmt(" %.0f:%.1fus", p.mean_slots, p.per_stage_us);

  // L: same stage structure, 19x19 vs 24x24 windows.
  const std::vector<int> sizes{9, 16, 27, 32, 52};
  Rng crng(derive_seed(7, "cascades"));
  const auto c19 = quantize(random_cascade("l19", 19, 19, sizes, crng));
  const auto c24 = quantize(random_cascade("l24", 24, 24, sizes, crng));
  std::vector<GrayImage> w19, w24;
  for (int i = 0; i < 32; ++i) {
    w19.push_back(random_image(19, 19, rng));
    w24.push_back(random_image(24, 24, rng));
  }
  // Alternate the two sizes so host noise hits both.
  std::vector<double> s19, s24;
  for (std::uint64_t rep = 0; rep < 9; ++rep) {
    s19.push_back(cli::bob_window_seconds(w19, c19, 0, 7 + rep, 1));
    s24.push_back(cli::bob_window_seconds(w24, c24, 0, 7 + rep, 1));
  }
  std::ranges::sort(s19);
  std::ranges::sort(s24);
  const double t19 = s19[s19.size() / 2];
  const double t24 = s24[s24.size() / 2];
  const bool linear = fit.r2 >= 0.95 && fit.max_relative_deviation <= 0.30;
  const bool monotone = t24 > t19;
  return {linear && monotone,
          fmt("complexity scaling: per-stage response vs N+K%s; slope %.3fus/slot, R2 %.4f, max local slope "
              "deviation %.0f%%; Bob per-window L=361 %.2fms < L=576 %.2fms: %s",
              table.c_str(), fit.slope, fit.r2, 100 * fit.max_relative_deviation, 1e3 * t19, 1e3 * t24,
              monotone ? "yes" : "no")};
}

Outcome c8() {
  const auto qc = fixture("haarcascade_frontalface_alt.xml");
  Rng rng(derive_seed(8, "image"));
  const auto img = random_image(100, 100, rng);
  cli::BenchOptions o;
  o.modes = {cli::BenchMode::kPlain, cli::BenchMode::kSecureMock};
  o.repetitions = 3;
  o.seed = 8;
  const auto runs = cli::bench_image(img, *qc, o);
  double plain = 0, secure = 0, ratio = 0;
  for (const auto& r : runs) {
    if (r.mode == cli::BenchMode::kPlain) plain = r.median;
    if (r.mode == cli::BenchMode::kSecureMock) {
      secure = r.median;
      ratio = r.ratio.value_or(0);
    }
  }
  return {plain > 0 && plain < 5 && secure > 0 && secure < 1800,
          fmt("timing: 100x100 plain %.3fs (<5s), secure-mock %.2fs (<1800s), measured ratio %.1fx vs published "
              "%.3fs/%.3fs = %.1fx",
              plain, secure, ratio, cli::kPublishedSecureSeconds, cli::kPublishedPlainSeconds,
              cli::kPublishedSecureSeconds / cli::kPublishedPlainSeconds)};
}

AuditReport audit_run(bool reshuffle) {
  ServerConfig sc;
  sc.cascade = fixture("haarcascade_frontalface_default.xml");
  sc.k_fakes = 8;
  sc.reshuffle = reshuffle;
  sc.seed = derive_seed(9, "bob");
  BobSession bob(sc);
  LoopbackChannel lb(bob);
  Transcript t(true);
  RecordingChannel ch(lb, t);
  ClientConfig cc;
  cc.seed = derive_seed(9, "alice");
  cc.secrets = &t;
  AliceSession alice(ch, cc);
  Rng rng(derive_seed(9, "windows"));
  for (int i = 0; i < kRankWindows; ++i) alice_run_window(alice, noise(24, 24, rng, 128));
  return audit_transcript(t);
}

Outcome c9() {
  const auto fixed = audit_run(false);
  const auto fresh = audit_run(true);
  const bool ok = fixed.plaintext_available && !fixed.plaintext_found && fresh.plaintext_available &&
                  !fresh.plaintext_found && fixed.filters_recoverable() && fixed.min_rank == 576 &&
                  fresh.alignment_ambiguity();
  return {ok, fmt("leakage audit: no plaintext (%zu+%zu payloads); reshuffle off rank %d/%d after %d windows "
                  "(%s); reshuffle on %d/%d slots inconsistent (%s)",
                  fixed.payloads_scanned, fresh.payloads_scanned, fixed.min_rank, fixed.unknowns, fixed.rank_windows,
                  fixed.filters_recoverable() ? "recoverable" : "not recoverable",
                  fresh.slots - fresh.consistent_slots, fresh.slots,
                  fresh.alignment_ambiguity() ? "alignment ambiguity" : "no ambiguity")};
}

Outcome c10() {
  Rng rng(derive_seed(10, "shuffle"));
  const auto set = factorize(GrayImage(4, 4, 5), rng, 4);
  std::map<std::vector<std::uint32_t>, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[shuffle(set, rng).permutation];
  const double expected = n / 24.0;
  double chi2 = 0;
  for (const auto& [perm, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  chi2 += static_cast<double>(24 - counts.size()) * expected;
  const double critical = boost::math::quantile(boost::math::chi_squared(23), 0.999);
  return {counts.size() == 24 && chi2 < critical,
          fmt("shuffle uniformity: M=4, %d shuffles, %zu/24 permutations seen, chi2 %.2f < %.2f (df 23, alpha 0.001)",
              n, counts.size(), chi2, critical)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> selected;
  app.add_option("--criterion,-c", selected, "Criterion number 1-10 (repeatable); all when omitted")
      ->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) {
    for (int i = 1; i <= 10; ++i) selected.push_back(i);
  }
  const std::vector<Outcome (*)()> checks{c1, c2, c3, c4, c5, c6, c7, c8, c9, c10};
  int failed = 0;
  for (const int c : selected) {
    Outcome o;
    try {
      o = checks[static_cast<std::size_t>(c - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("C%d %s %s\n", c, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
