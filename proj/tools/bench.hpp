#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rbi/detector.hpp"
#include "rbi/image.hpp"
#include "rbi/integral.hpp"
#include "rbi/protocol.hpp"

namespace rbi::cli {

enum class BenchMode { kPlain, kSecureMock, kSecureReal };

std::string mode_name(BenchMode mode);
BenchMode parse_mode(const std::string& name);

struct PhaseTimes {
  double factorize = 0;
  double transport = 0;
  double integral = 0;
  double responses = 0;
  double comparisons = 0;
};

struct BenchRun {
  BenchMode mode = BenchMode::kPlain;
  int width = 0;
  int height = 0;
  std::size_t windows = 0;
  std::vector<double> samples;  // seconds, warm-up excluded
  double median = 0;
  PhaseTimes phases;  // of the median sample
  std::optional<double> ratio;  // secure / plain on the same image
};

struct ScalingPoint {
  int k_fakes = 0;
  double mean_slots = 0;     // N + K averaged over stage runs
  double per_stage_us = 0;   // Bob response time per stage run
};

struct ScalingFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
  double max_relative_deviation = 0;  // worst |local slope / fit slope - 1|
};

ScalingFit fit_line(const std::vector<ScalingPoint>& points);

struct BenchOptions {
  std::vector<BenchMode> modes{BenchMode::kPlain, BenchMode::kSecureMock};
  int repetitions = 5;
  DetectParams params{1.25, 2, 3, false};
  int k_fakes = 0;
  StageMode stage_mode = StageMode::kShortCircuit;
  int key_bits = 1024;
  double latency_ms = 0;
  std::uint64_t seed = 1;
  std::string server;  // host:port; empty runs Bob in process
};

// Times full scans of img, median of `repetitions` after one warm-up run.
std::vector<BenchRun> bench_image(const GrayImage& img, const QuantizedCascade& qc,
                                  const BenchOptions& options);

// Bob's per-stage response time for each K, from constant-stages runs over
// the given windows.
std::vector<ScalingPoint> bench_scaling(const std::vector<GrayImage>& windows,
                                        const QuantizedCascade& qc, const std::vector<int>& k_values,
                                        std::uint64_t seed, int repetitions = 3);

// Bob's per-window work (plane integrals plus stage responses), median over
// repetitions, for windows of the cascade's size.
double bob_window_seconds(const std::vector<GrayImage>& windows, const QuantizedCascade& qc,
                          int k_fakes, std::uint64_t seed, int repetitions = 3);

inline constexpr double kPublishedSecureSeconds = 143.852;
inline constexpr double kPublishedPlainSeconds = 0.380;

std::string format_report(const std::vector<BenchRun>& runs, const std::vector<ScalingPoint>& scaling,
                          bool csv);

}  // namespace rbi::cli
