#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rbi/cascade.hpp"
#include "rbi/image.hpp"

namespace rbi {

inline constexpr std::int64_t kFeatureScale = std::int64_t{1} << 12;  // Q_FEAT
inline constexpr std::int64_t kLeafScale = std::int64_t{1} << 16;     // Q_LEAF
inline constexpr int kCompareBits = 48;
// Every operand of a secure comparison must satisfy |v| < kCompareBound.
inline constexpr std::int64_t kCompareBound = std::int64_t{1} << (kCompareBits - 1);

struct Offset {
  int x = 0;
  int y = 0;
};

// (width+1) x (height+1) prefix-sum table; row 0 and column 0 are zero.
template <typename T>
class IntegralTable {
 public:
  IntegralTable() = default;
  IntegralTable(int width, int height)
      : width_(width), height_(height), table_(static_cast<std::size_t>(width + 1) * (height + 1)) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int stride() const { return width_ + 1; }

  T at(int x, int y) const { return table_[static_cast<std::size_t>(y) * stride() + x]; }
  T& at(int x, int y) { return table_[static_cast<std::size_t>(y) * stride() + x]; }

  T rect_sum(int x, int y, int w, int h) const {
    return at(x + w, y + h) - at(x, y + h) - at(x + w, y) + at(x, y);
  }

  const std::vector<T>& data() const { return table_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> table_;
};

using IntegralImage = IntegralTable<std::uint64_t>;

IntegralImage integral(const GrayImage& img);
// Prefix sums of squared pixels, for the optional variance normalization.
IntegralImage squared_integral(const GrayImage& img);

struct QuantizedRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  std::int64_t weight = 0;

  bool operator==(const QuantizedRect&) const = default;
};

struct QuantizedFeature {
  std::array<QuantizedRect, 3> rects{};
  int count = 0;

  bool operator==(const QuantizedFeature&) const = default;
};

struct QuantizedWeak {
  QuantizedFeature feature;
  std::int64_t theta = 0;
  std::int64_t alpha = 0;
  std::int64_t beta = 0;

  bool operator==(const QuantizedWeak&) const = default;
};

struct QuantizedStage {
  std::vector<QuantizedWeak> weak;
  std::int64_t threshold = 0;
};

// Integer mirror of a Cascade: rect weights scaled by q_feat, thresholds by
// q_feat * window area, leaf values and stage thresholds by q_leaf.
struct QuantizedCascade {
  std::string name;
  int window_width = 0;
  int window_height = 0;
  std::int64_t q_feat = kFeatureScale;
  std::int64_t q_leaf = kLeafScale;
  std::vector<QuantizedStage> stages;

  int window_area() const { return window_width * window_height; }
};

// Throws UnsupportedCascade for tilted features and QuantizationError when a
// parameter or worst-case response does not fit the comparison domain.
QuantizedCascade quantize(const Cascade& cascade, std::int64_t q_feat = kFeatureScale,
                          std::int64_t q_leaf = kLeafScale);

// Largest possible |F(n)| for any 8-bit window.
std::int64_t max_abs_response(const QuantizedFeature& f);

template <typename T>
std::int64_t eval_feature(const IntegralTable<T>& ii, const QuantizedFeature& f, Offset o) {
  std::int64_t sum = 0;
  for (int i = 0; i < f.count; ++i) {
    const auto& r = f.rects[i];
    sum += r.weight * static_cast<std::int64_t>(ii.rect_sum(o.x + r.x, o.y + r.y, r.w, r.h));
  }
  return sum;
}

inline std::int64_t weak_output(const QuantizedWeak& wc, std::int64_t response) {
  return response > wc.theta ? wc.alpha : wc.beta;
}

struct StageResult {
  bool pass = false;
  std::int64_t score = 0;
};

template <typename T>
StageResult eval_stage(const IntegralTable<T>& ii, const QuantizedStage& stage, Offset o) {
  std::int64_t score = 0;
  for (const auto& wc : stage.weak) score += weak_output(wc, eval_feature(ii, wc, o));
  return {score >= stage.threshold, score};
}

template <typename T>
std::int64_t eval_feature(const IntegralTable<T>& ii, const QuantizedWeak& wc, Offset o) {
  return eval_feature(ii, wc.feature, o);
}

}  // namespace rbi
