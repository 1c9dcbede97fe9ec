#include <benchmark/benchmark.h>

#include <memory>

#include "rbi/cascade.hpp"
#include "rbi/compare.hpp"
#include "rbi/detector.hpp"
#include "rbi/protocol.hpp"
#include "rbi/rbi_codec.hpp"
#include "rbi/synth.hpp"

namespace {

using namespace rbi;

const QuantizedCascade& frontal() {
  static const auto qc = quantize(load_cascade(RBI_FIXTURE_DIR "/cascades/haarcascade_frontalface_alt.xml"));
  return qc;
}

GrayImage textured(int w, int h, Rng& rng) {
  GrayImage g(w, h);
  for (auto& p : g.pixels) p = static_cast<std::uint8_t>(rng.uniform(256));
  return g;
}

void BM_Factorize(benchmark::State& state) {
  Rng rng(derive_seed(1, "factorize"));
  const auto window = textured(20, 20, rng);
  for (auto _ : state) benchmark::DoNotOptimize(factorize(window, rng, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_Factorize)->Arg(32)->Arg(256);

void BM_ShuffleReconstruct(benchmark::State& state) {
  Rng rng(derive_seed(1, "shuffle"));
  const auto set = factorize(textured(20, 20, rng), rng);
  for (auto _ : state) benchmark::DoNotOptimize(reconstruct(shuffle(set, rng)));
}
BENCHMARK(BM_ShuffleReconstruct);

void BM_PlaneIntegrals(benchmark::State& state) {
  Rng rng(derive_seed(1, "planes"));
  const auto set = factorize(textured(20, 20, rng), rng);
  for (auto _ : state) {
    for (const auto& p : set.planes) benchmark::DoNotOptimize(plane_integral(p));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(set.planes.size()));
}
BENCHMARK(BM_PlaneIntegrals);

// Bob's response matrix for stage 12 of frontalface_alt with K fakes.
void BM_StageResponses(benchmark::State& state) {
  Rng rng(derive_seed(1, "responses"));
  const auto& qc = frontal();
  const auto set = factorize(textured(qc.window_width, qc.window_height, rng), rng);
  std::vector<PlaneIntegral> integrals;
  for (const auto& p : set.planes) integrals.push_back(plane_integral(p));
  const auto stage = inject_fakes(qc.stages[12], static_cast<int>(state.range(0)), qc.window_width,
                                  qc.window_height, rng);
  for (auto _ : state) benchmark::DoNotOptimize(stage_responses(stage, integrals));
  state.counters["slots"] = static_cast<double>(stage.size());
}
BENCHMARK(BM_StageResponses)->Arg(0)->Arg(32)->Arg(128);

void BM_PlainClassify(benchmark::State& state) {
  Rng rng(derive_seed(1, "classify"));
  const auto& qc = frontal();
  const auto img = random_image(100, 100, rng);
  for (auto _ : state) benchmark::DoNotOptimize(detect(img, qc, DetectParams{}));
}
BENCHMARK(BM_PlainClassify)->Unit(benchmark::kMillisecond);

void BM_Millionaire(benchmark::State& state) {
  CompareOptions opt;
  opt.backend = static_cast<CompareBackend>(state.range(0));
  ComparisonPeer peer(Rng(derive_seed(2, "bob")));
  LoopbackChannel ch(peer);
  auto client = make_comparison_client(opt, Rng(derive_seed(2, "alice")));
  comparison_handshake(ch, *client);
  Rng rng(derive_seed(2, "operands"));
  std::uint32_t id = 0;
  for (auto _ : state) {
    const auto b = static_cast<std::int64_t>(rng.uniform(std::uint64_t{1} << 40));
    peer.push_operand(b);
    benchmark::DoNotOptimize(millionaire(ch, *client, id++, b + 1));
  }
}
BENCHMARK(BM_Millionaire)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_LeafTransfer(benchmark::State& state) {
  CompareOptions opt;
  opt.backend = CompareBackend::kPaillier;
  ComparisonPeer peer(Rng(derive_seed(3, "bob")));
  LoopbackChannel ch(peer);
  auto client = make_comparison_client(opt, Rng(derive_seed(3, "alice")));
  comparison_handshake(ch, *client);
  std::uint32_t id = 0;
  for (auto _ : state) {
    peer.push_transfer(-5, 7);
    benchmark::DoNotOptimize(blinded_leaf_transfer(ch, *client, id++, (id & 1) != 0));
  }
}
BENCHMARK(BM_LeafTransfer)->Unit(benchmark::kMicrosecond);

void BM_SecureWindow(benchmark::State& state) {
  auto qc = std::make_shared<QuantizedCascade>(frontal());
  ServerConfig sc;
  sc.cascade = qc;
  sc.k_fakes = static_cast<int>(state.range(0));
  sc.seed = derive_seed(4, "bob");
  BobSession bob(sc);
  LoopbackChannel ch(bob);
  ClientConfig cc;
  cc.seed = derive_seed(4, "alice");
  AliceSession alice(ch, cc);
  Rng rng(derive_seed(4, "windows"));
  const auto window = random_image(qc->window_width, qc->window_height, rng);
  for (auto _ : state) benchmark::DoNotOptimize(alice_run_window(alice, window));
}
BENCHMARK(BM_SecureWindow)->Arg(0)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
