#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rbi/image.hpp"
#include "rbi/integral.hpp"

namespace rbi {

struct DetectParams {
  double scale_factor = 1.25;
  int step = 2;
  int min_neighbors = 3;
  bool normalize = false;

  void validate() const;
};

struct Detection {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  double scale = 1.0;
  int stage_reached = 0;

  bool operator==(const Detection&) const = default;
};

struct PyramidLevel {
  double scale = 1.0;
  GrayImage image;
};

struct WindowPos {
  std::uint32_t level = 0;
  Offset offset;
};

// The scan of one image: downscaled pyramid levels plus every window origin,
// level by level, rows then columns.
struct WindowSet {
  int source_width = 0;
  int source_height = 0;
  int window_width = 0;
  int window_height = 0;
  std::vector<PyramidLevel> levels;
  std::vector<WindowPos> windows;

  std::size_t count() const { return windows.size(); }
  GrayImage window_image(const WindowPos& pos) const;
  // Box of the window in source image coordinates.
  Detection box(const WindowPos& pos, int stage_reached) const;
};

WindowSet enumerate_windows(const GrayImage& img, int window_width, int window_height,
                            const DetectParams& params);

struct ClassifyResult {
  bool accepted = false;
  int stage_reached = 0;  // number of stages evaluated

  bool operator==(const ClassifyResult&) const = default;
};

// Runs stages in order and stops at the first failing one. With a squared
// integral the stump thresholds are scaled by the window's standard deviation.
ClassifyResult classify_window(const IntegralImage& ii, const QuantizedCascade& qc, Offset offset,
                               const IntegralImage* squared = nullptr);

// Evaluates every stage; accepted iff all pass. stage_reached is the index of
// the first failing stage plus one, or the stage count.
ClassifyResult classify_window_full(const IntegralImage& ii, const QuantizedCascade& qc,
                                    Offset offset);

// Clusters boxes whose Jaccard overlap is at least 0.4 (transitively), drops
// clusters smaller than min_neighbors and emits each cluster's mean box.
// min_neighbors == 0 disables grouping. Output is sorted and independent of
// input order.
std::vector<Detection> group_detections(std::span<const Detection> raw, int min_neighbors);

double jaccard(const Detection& a, const Detection& b);

std::vector<Detection> detect(const GrayImage& img, const QuantizedCascade& qc,
                              const DetectParams& params);

// One "x y w h scale stage_reached" line per detection, LF terminated.
std::string format_detections(std::span<const Detection> detections);

}  // namespace rbi
