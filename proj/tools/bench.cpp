#include "bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>

#include "rbi/error.hpp"

namespace rbi::cli {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

struct Sample {
  double wall = 0;
  PhaseTimes phases;
};

Sample run_plain(const GrayImage& img, const QuantizedCascade& qc, const BenchOptions& o) {
  const auto t = Clock::now();
  const auto d = detect(img, qc, o.params);
  Sample s;
  s.wall = seconds_since(t);
  (void)d;
  return s;
}

Sample run_secure(const GrayImage& img, const QuantizedCascade& qc, const BenchOptions& o,
                  BenchMode mode, int rep) {
  ClientConfig cc;
  cc.mode = o.stage_mode;
  cc.compare.backend = mode == BenchMode::kSecureReal ? CompareBackend::kPaillier : CompareBackend::kMock;
  cc.compare.key_bits = o.key_bits;
  cc.seed = derive_seed(o.seed + static_cast<std::uint64_t>(rep), "bench-client");

  std::unique_ptr<BobSession> bob;
  std::unique_ptr<Channel> base;
  if (o.server.empty()) {
    ServerConfig sc;
    sc.cascade = std::make_shared<QuantizedCascade>(qc);
    sc.k_fakes = o.k_fakes;
    sc.seed = derive_seed(o.seed + static_cast<std::uint64_t>(rep), "bench-server");
    bob = std::make_unique<BobSession>(sc);
    base = std::make_unique<LoopbackChannel>(*bob);
  } else {
    const auto [host, port] = split_host_port(o.server);
    base = TcpChannel::connect(host, port);
  }
  LatencyChannel delayed(*base, std::chrono::microseconds(static_cast<long long>(o.latency_ms * 1000)));
  Channel& ch = o.latency_ms > 0 ? static_cast<Channel&>(delayed) : *base;
  AliceSession alice(ch, cc);

  const auto t = Clock::now();
  alice_detect_secure(img, o.params, alice);
  Sample s;
  s.wall = seconds_since(t);
  const auto& a = alice.counters();
  s.phases.factorize = a.factorize_ns * 1e-9;
  s.phases.comparisons = a.compare_ns * 1e-9;
  if (bob) {
    s.phases.integral = bob->counters().integral_ns * 1e-9;
    s.phases.responses = bob->counters().response_ns * 1e-9;
  }
  const double other = s.phases.factorize + s.phases.comparisons + s.phases.integral +
                       s.phases.responses + a.recombine_ns * 1e-9;
  s.phases.transport = std::max(0.0, s.wall - other);
  return s;
}

}  // namespace

std::string mode_name(BenchMode mode) {
  switch (mode) {
    case BenchMode::kPlain:
      return "plain";
    case BenchMode::kSecureMock:
      return "secure-mock";
    case BenchMode::kSecureReal:
      return "secure-real";
  }
  return "?";
}

BenchMode parse_mode(const std::string& name) {
  if (name == "plain") return BenchMode::kPlain;
  if (name == "secure-mock") return BenchMode::kSecureMock;
  if (name == "secure-real") return BenchMode::kSecureReal;
  throw UsageError("unknown bench mode '" + name + "'");
}

std::vector<BenchRun> bench_image(const GrayImage& img, const QuantizedCascade& qc,
                                  const BenchOptions& options) {
  if (options.repetitions < 1) throw UsageError("repetitions must be >= 1");
  const auto windows = enumerate_windows(img, qc.window_width, qc.window_height, options.params).count();
  std::vector<BenchRun> runs;
  std::optional<double> plain;
  for (const auto mode : options.modes) {
    BenchRun run;
    run.mode = mode;
    run.width = img.width;
    run.height = img.height;
    run.windows = windows;
    std::vector<Sample> samples;
    for (int rep = -1; rep < options.repetitions; ++rep) {
      auto s = mode == BenchMode::kPlain ? run_plain(img, qc, options)
                                         : run_secure(img, qc, options, mode, rep);
      if (rep >= 0) samples.push_back(s);
    }
    for (const auto& s : samples) run.samples.push_back(s.wall);
    run.median = median_of(run.samples);
    const auto mid = std::min_element(samples.begin(), samples.end(), [&](const Sample& a, const Sample& b) {
      return std::abs(a.wall - run.median) < std::abs(b.wall - run.median);
    });
    run.phases = mid->phases;
    if (mode == BenchMode::kPlain) plain = run.median;
    runs.push_back(std::move(run));
  }
  if (plain && *plain > 0) {
    for (auto& r : runs) {
      if (r.mode != BenchMode::kPlain) r.ratio = r.median / *plain;
    }
  }
  return runs;
}

std::vector<ScalingPoint> bench_scaling(const std::vector<GrayImage>& windows,
                                        const QuantizedCascade& qc, const std::vector<int>& k_values,
                                        std::uint64_t seed, int repetitions) {
  auto shared = std::make_shared<QuantizedCascade>(qc);
  std::vector<std::vector<double>> per_stage(k_values.size());
  std::vector<double> slots(k_values.size());
  // Repetitions outermost so host noise spreads across every K.
  for (int rep = 0; rep < repetitions; ++rep) {
    for (std::size_t i = 0; i < k_values.size(); ++i) {
      ServerConfig sc;
      sc.cascade = shared;
      sc.k_fakes = k_values[i];
      sc.seed = derive_seed(seed + static_cast<std::uint64_t>(rep), "scaling-server");
      BobSession bob(sc);
      LoopbackChannel ch(bob);
      ClientConfig cc;
      cc.mode = StageMode::kConstantStages;
      cc.seed = derive_seed(seed + static_cast<std::uint64_t>(rep), "scaling-client");
      AliceSession alice(ch, cc);
      for (const auto& w : windows) alice_run_window(alice, w);
      const auto& c = bob.counters();
      per_stage[i].push_back(static_cast<double>(c.response_ns) / 1e3 / static_cast<double>(c.stage_runs));
      slots[i] = static_cast<double>(c.slot_runs) / static_cast<double>(c.stage_runs);
    }
  }
  std::vector<ScalingPoint> out;
  for (std::size_t i = 0; i < k_values.size(); ++i) out.push_back({k_values[i], slots[i], median_of(per_stage[i])});
  return out;
}

double bob_window_seconds(const std::vector<GrayImage>& windows, const QuantizedCascade& qc,
                          int k_fakes, std::uint64_t seed, int repetitions) {
  auto shared = std::make_shared<QuantizedCascade>(qc);
  std::vector<double> samples;
  for (int rep = 0; rep < repetitions; ++rep) {
    ServerConfig sc;
    sc.cascade = shared;
    sc.k_fakes = k_fakes;
    sc.seed = derive_seed(seed + static_cast<std::uint64_t>(rep), "window-server");
    BobSession bob(sc);
    LoopbackChannel ch(bob);
    ClientConfig cc;
    cc.mode = StageMode::kConstantStages;
    cc.seed = derive_seed(seed + static_cast<std::uint64_t>(rep), "window-client");
    AliceSession alice(ch, cc);
    for (const auto& w : windows) alice_run_window(alice, w);
    const auto& c = bob.counters();
    samples.push_back(static_cast<double>(c.integral_ns + c.response_ns) * 1e-9 /
                      static_cast<double>(windows.size()));
  }
  return median_of(samples);
}

ScalingFit fit_line(const std::vector<ScalingPoint>& points) {
  ScalingFit fit;
  const auto n = static_cast<double>(points.size());
  if (points.size() < 2) return fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (const auto& p : points) {
    sx += p.mean_slots;
    sy += p.per_stage_us;
    sxx += p.mean_slots * p.mean_slots;
    sxy += p.mean_slots * p.per_stage_us;
    syy += p.per_stage_us * p.per_stage_us;
  }
  const double vx = sxx - sx * sx / n;
  const double vy = syy - sy * sy / n;
  const double cxy = sxy - sx * sy / n;
  if (vx <= 0) return fit;
  fit.slope = cxy / vx;
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.r2 = vy > 0 ? (cxy * cxy) / (vx * vy) : 1.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double dx = points[i].mean_slots - points[i - 1].mean_slots;
    if (dx <= 0) continue;
    const double local = (points[i].per_stage_us - points[i - 1].per_stage_us) / dx;
    fit.max_relative_deviation = std::max(fit.max_relative_deviation, std::abs(local / fit.slope - 1.0));
  }
  return fit;
}

std::string format_report(const std::vector<BenchRun>& runs, const std::vector<ScalingPoint>& scaling,
                          bool csv) {
  std::string out;
  char buf[512];
  if (csv) {
    out += "mode,width,height,windows,samples,median_s,factorize_s,transport_s,integral_s,responses_s,"
           "comparisons_s,ratio\n";
    for (const auto& r : runs) {
      std::string samples;
      for (const auto s : r.samples) {
        if (!samples.empty()) samples += ';';
        std::snprintf(buf, sizeof buf, "%.6f", s);
        samples += buf;
      }
      std::snprintf(buf, sizeof buf, "%s,%d,%d,%zu,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,", mode_name(r.mode).c_str(),
                    r.width, r.height, r.windows, samples.c_str(), r.median, r.phases.factorize,
                    r.phases.transport, r.phases.integral, r.phases.responses, r.phases.comparisons);
      out += buf;
      if (r.ratio) {
        std::snprintf(buf, sizeof buf, "%.3f", *r.ratio);
        out += buf;
      }
      out += '\n';
    }
    if (!scaling.empty()) {
      out += "scaling_k,mean_slots,per_stage_us\n";
      for (const auto& p : scaling) {
        std::snprintf(buf, sizeof buf, "%d,%.3f,%.3f\n", p.k_fakes, p.mean_slots, p.per_stage_us);
        out += buf;
      }
    }
    return out;
  }

  std::snprintf(buf, sizeof buf, "%-12s %-9s %8s %4s %10s %10s %10s %10s %10s %11s %9s\n", "mode", "size",
                "windows", "reps", "median_s", "factorize", "transport", "integral", "responses",
                "comparisons", "ratio");
  out += buf;
  for (const auto& r : runs) {
    const auto size = std::to_string(r.width) + "x" + std::to_string(r.height);
    std::string ratio = "-";
    if (r.ratio) {
      std::snprintf(buf, sizeof buf, "%.1fx", *r.ratio);
      ratio = buf;
    }
    std::snprintf(buf, sizeof buf, "%-12s %-9s %8zu %4zu %10.4f %10.4f %10.4f %10.4f %10.4f %11.4f %9s\n",
                  mode_name(r.mode).c_str(), size.c_str(), r.windows, r.samples.size(), r.median,
                  r.phases.factorize, r.phases.transport, r.phases.integral, r.phases.responses,
                  r.phases.comparisons, ratio.c_str());
    out += buf;
  }
  for (const auto& r : runs) {
    if (!r.ratio) continue;
    std::snprintf(buf, sizeof buf, "measured %s/plain ratio: %.1fx (published figure: %.3fs / %.3fs = %.1fx)\n",
                  mode_name(r.mode).c_str(), *r.ratio, kPublishedSecureSeconds, kPublishedPlainSeconds,
                  kPublishedSecureSeconds / kPublishedPlainSeconds);
    out += buf;
  }
  for (const auto& r : runs) {
    std::string samples;
    for (const auto s : r.samples) {
      std::snprintf(buf, sizeof buf, " %.4f", s);
      samples += buf;
    }
    std::snprintf(buf, sizeof buf, "samples %s:%s (median %.4f)\n", mode_name(r.mode).c_str(), samples.c_str(),
                  r.median);
    out += buf;
  }
  if (!scaling.empty()) {
    out += "bob response time per stage vs N+K\n";
    std::snprintf(buf, sizeof buf, "%6s %12s %14s\n", "k", "mean_slots", "per_stage_us");
    out += buf;
    for (const auto& p : scaling) {
      std::snprintf(buf, sizeof buf, "%6d %12.2f %14.3f\n", p.k_fakes, p.mean_slots, p.per_stage_us);
      out += buf;
    }
    const auto fit = fit_line(scaling);
    std::snprintf(buf, sizeof buf, "linear fit: %.4f us/slot + %.3f us, R^2 = %.4f, worst local slope deviation %.1f%%\n",
                  fit.slope, fit.intercept, fit.r2, fit.max_relative_deviation * 100);
    out += buf;
  }
  return out;
}

}  // namespace rbi::cli
