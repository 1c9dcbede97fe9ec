#include "rbi/integral.hpp"

#include <cmath>
#include <cstdlib>

#include "rbi/error.hpp"

namespace rbi {

IntegralImage integral(const GrayImage& img) {
  IntegralImage ii(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    std::uint64_t row = 0;
    for (int x = 0; x < img.width; ++x) {
      row += img.at(x, y);
      ii.at(x + 1, y + 1) = ii.at(x + 1, y) + row;
    }
  }
  return ii;
}

IntegralImage squared_integral(const GrayImage& img) {
  IntegralImage ii(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    std::uint64_t row = 0;
    for (int x = 0; x < img.width; ++x) {
      const std::uint64_t p = img.at(x, y);
      row += p * p;
      ii.at(x + 1, y + 1) = ii.at(x + 1, y) + row;
    }
  }
  return ii;
}

namespace {

std::int64_t round_checked(double v, const char* what) {
  const double r = std::round(v);
  if (!std::isfinite(r) || std::fabs(r) >= static_cast<double>(kCompareBound)) {
    throw QuantizationError(std::string(what) + " exceeds the comparison domain");
  }
  return static_cast<std::int64_t>(r);
}

bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

std::int64_t max_abs_response(const QuantizedFeature& f) {
  std::int64_t bound = 0;
  for (int i = 0; i < f.count; ++i) {
    const auto& r = f.rects[i];
    bound += std::llabs(r.weight) * 255 * r.w * r.h;
  }
  return bound;
}

QuantizedCascade quantize(const Cascade& cascade, std::int64_t q_feat, std::int64_t q_leaf) {
  if (!is_power_of_two(q_feat) || !is_power_of_two(q_leaf)) {
    throw QuantizationError("quantization scales must be powers of two");
  }
  if (uses_tilted_features(cascade)) {
    throw UnsupportedCascade("tilted features cannot be evaluated");
  }
  QuantizedCascade qc;
  qc.name = cascade.name;
  qc.window_width = cascade.window_width;
  qc.window_height = cascade.window_height;
  qc.q_feat = q_feat;
  qc.q_leaf = q_leaf;
  const double area = static_cast<double>(cascade.window_width) * cascade.window_height;

  for (const auto& stage : cascade.stages) {
    QuantizedStage qs;
    qs.threshold = round_checked(stage.threshold * static_cast<double>(q_leaf), "stage threshold");
    for (const auto& wc : stage.weak) {
      QuantizedWeak qw;
      for (const auto& r : wc.feature.rects) {
        auto& qr = qw.feature.rects[qw.feature.count++];
        qr = {r.x, r.y, r.w, r.h, round_checked(r.weight * static_cast<double>(q_feat), "rect weight")};
      }
      if (max_abs_response(qw.feature) >= kCompareBound) {
        throw QuantizationError("worst-case feature response exceeds the comparison domain");
      }
      qw.theta = round_checked(wc.theta * area * static_cast<double>(q_feat), "threshold");
      qw.alpha = round_checked(wc.alpha * static_cast<double>(q_leaf), "alpha");
      qw.beta = round_checked(wc.beta * static_cast<double>(q_leaf), "beta");
      if (std::llabs(qw.alpha) >= (std::int64_t{1} << 32) || std::llabs(qw.beta) >= (std::int64_t{1} << 32)) {
        throw QuantizationError("leaf value does not fit 32 bits");
      }
      qs.weak.push_back(qw);
    }
    qc.stages.push_back(std::move(qs));
  }
  return qc;
}

}  // namespace rbi
