#include "oracles.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace oracle {

std::int64_t rect_sum(const rbi::GrayImage& img, int x, int y, int w, int h) {
  std::int64_t s = 0;
  for (int j = y; j < y + h; ++j) {
    for (int i = x; i < x + w; ++i) s += img.at(i, j);
  }
  return s;
}

std::vector<std::int64_t> rasterize(const rbi::QuantizedFeature& f, int window_width,
                                    int window_height) {
  std::vector<std::int64_t> y(static_cast<std::size_t>(window_width) * window_height, 0);
  for (int r = 0; r < f.count; ++r) {
    const auto& rect = f.rects[r];
    for (int j = rect.y; j < rect.y + rect.h; ++j) {
      for (int i = rect.x; i < rect.x + rect.w; ++i) {
        y[static_cast<std::size_t>(j) * window_width + i] += rect.weight;
      }
    }
  }
  return y;
}

std::int64_t dot(const rbi::GrayImage& window, const std::vector<std::int64_t>& weights) {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * window.pixels[i];
  return s;
}

bool stage_passes(const rbi::GrayImage& window, const rbi::QuantizedStage& stage) {
  std::int64_t score = 0;
  for (const auto& wc : stage.weak) {
    std::int64_t f = 0;
    for (int r = 0; r < wc.feature.count; ++r) {
      const auto& rect = wc.feature.rects[r];
      f += rect.weight * rect_sum(window, rect.x, rect.y, rect.w, rect.h);
    }
    score += f > wc.theta ? wc.alpha : wc.beta;
  }
  return score >= stage.threshold;
}

Verdict classify(const rbi::GrayImage& window, const rbi::QuantizedCascade& qc) {
  Verdict v;
  for (const auto& stage : qc.stages) {
    ++v.stage_reached;
    if (!stage_passes(window, stage)) return v;
  }
  v.accepted = true;
  return v;
}

std::size_t window_count(int width, int height, int ww, int wh, double scale_factor, int step) {
  std::size_t total = 0;
  for (double s = 1.0;; s *= scale_factor) {
    const int lw = static_cast<int>(std::floor(width / s));
    const int lh = static_cast<int>(std::floor(height / s));
    if (lw < ww || lh < wh) break;
    total += static_cast<std::size_t>((lw - ww) / step + 1) * static_cast<std::size_t>((lh - wh) / step + 1);
  }
  return total;
}

XmlTally tally_old_format(const std::string& xml) {
  // Each stage closes with <stage_threshold>; its features precede it.
  XmlTally t;
  std::size_t pos = 0;
  std::size_t features = 0;
  while (true) {
    const auto f = xml.find("<feature>", pos);
    const auto s = xml.find("<stage_threshold>", pos);
    if (s == std::string::npos) break;
    if (f != std::string::npos && f < s) {
      ++features;
      pos = f + 1;
    } else {
      t.weak_per_stage.push_back(features);
      t.total += features;
      features = 0;
      pos = s + 1;
    }
  }
  return t;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace oracle
