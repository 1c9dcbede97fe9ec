#include "rbi/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <tuple>

#include "rbi/error.hpp"

namespace rbi {

void DetectParams::validate() const {
  if (!(scale_factor > 1.0) || !std::isfinite(scale_factor)) {
    throw UsageError("scale factor must be greater than 1");
  }
  if (step < 1) throw UsageError("step must be at least 1");
  if (min_neighbors < 0) throw UsageError("min_neighbors must be non-negative");
}

GrayImage WindowSet::window_image(const WindowPos& pos) const {
  return crop(levels.at(pos.level).image, pos.offset.x, pos.offset.y, window_width, window_height);
}

Detection WindowSet::box(const WindowPos& pos, int stage_reached) const {
  const auto& level = levels.at(pos.level);
  const auto lw = static_cast<long long>(level.image.width);
  const auto lh = static_cast<long long>(level.image.height);
  const auto x0 = static_cast<int>(pos.offset.x * static_cast<long long>(source_width) / lw);
  const auto y0 = static_cast<int>(pos.offset.y * static_cast<long long>(source_height) / lh);
  const auto x1 =
      static_cast<int>((pos.offset.x + window_width) * static_cast<long long>(source_width) / lw);
  const auto y1 =
      static_cast<int>((pos.offset.y + window_height) * static_cast<long long>(source_height) / lh);
  return {x0, y0, x1 - x0, y1 - y0, level.scale, stage_reached};
}

WindowSet enumerate_windows(const GrayImage& img, int window_width, int window_height,
                            const DetectParams& params) {
  params.validate();
  WindowSet set;
  set.source_width = img.width;
  set.source_height = img.height;
  set.window_width = window_width;
  set.window_height = window_height;

  double scale = 1.0;
  while (true) {
    const int lw = static_cast<int>(std::floor(img.width / scale));
    const int lh = static_cast<int>(std::floor(img.height / scale));
    if (lw < window_width || lh < window_height) break;
    const auto level = static_cast<std::uint32_t>(set.levels.size());
    set.levels.push_back({scale, downscale_area(img, lw, lh)});
    for (int y = 0; y + window_height <= lh; y += params.step) {
      for (int x = 0; x + window_width <= lw; x += params.step) {
        set.windows.push_back({level, {x, y}});
      }
    }
    scale *= params.scale_factor;
  }
  return set;
}

namespace {

double window_stddev(const IntegralImage& ii, const IntegralImage& sq, Offset o, int w, int h) {
  const double area = static_cast<double>(w) * h;
  const auto sum = static_cast<double>(ii.rect_sum(o.x, o.y, w, h));
  const auto sqsum = static_cast<double>(sq.rect_sum(o.x, o.y, w, h));
  const double var = area * sqsum - sum * sum;
  return var > 0.0 ? std::sqrt(var) / area : 1.0;
}

bool stage_passes_normalized(const IntegralImage& ii, const QuantizedStage& stage, Offset o,
                             double sigma) {
  std::int64_t score = 0;
  for (const auto& wc : stage.weak) {
    const auto f = static_cast<double>(eval_feature(ii, wc.feature, o));
    score += f > static_cast<double>(wc.theta) * sigma ? wc.alpha : wc.beta;
  }
  return score >= stage.threshold;
}

}  // namespace

ClassifyResult classify_window(const IntegralImage& ii, const QuantizedCascade& qc, Offset offset,
                               const IntegralImage* squared) {
  const double sigma =
      squared ? window_stddev(ii, *squared, offset, qc.window_width, qc.window_height) : 1.0;
  for (std::size_t s = 0; s < qc.stages.size(); ++s) {
    const bool pass = squared ? stage_passes_normalized(ii, qc.stages[s], offset, sigma)
                              : eval_stage(ii, qc.stages[s], offset).pass;
    if (!pass) return {false, static_cast<int>(s + 1)};
  }
  return {true, static_cast<int>(qc.stages.size())};
}

ClassifyResult classify_window_full(const IntegralImage& ii, const QuantizedCascade& qc,
                                    Offset offset) {
  ClassifyResult r{true, static_cast<int>(qc.stages.size())};
  for (std::size_t s = 0; s < qc.stages.size(); ++s) {
    if (!eval_stage(ii, qc.stages[s], offset).pass && r.accepted) {
      r = {false, static_cast<int>(s + 1)};
    }
  }
  return r;
}

double jaccard(const Detection& a, const Detection& b) {
  const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix) * iy;
  const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

auto box_key(const Detection& d) { return std::tie(d.y, d.x, d.h, d.w, d.scale, d.stage_reached); }

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

int rounded_mean(long long sum, long long count) {
  return static_cast<int>((2 * sum + count) / (2 * count));
}

}  // namespace

std::vector<Detection> group_detections(std::span<const Detection> raw, int min_neighbors) {
  std::vector<Detection> boxes(raw.begin(), raw.end());
  std::sort(boxes.begin(), boxes.end(),
            [](const Detection& a, const Detection& b) { return box_key(a) < box_key(b); });
  if (min_neighbors == 0) return boxes;

  std::vector<std::size_t> parent(boxes.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      if (jaccard(boxes[i], boxes[j]) >= 0.4) {
        parent[find_root(parent, i)] = find_root(parent, j);
      }
    }
  }

  std::vector<std::vector<std::size_t>> clusters(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) clusters[find_root(parent, i)].push_back(i);

  std::vector<Detection> out;
  for (const auto& members : clusters) {
    if (members.empty() || static_cast<int>(members.size()) < min_neighbors) continue;
    long long sx = 0, sy = 0, sw = 0, sh = 0;
    double scale = 0.0;
    int stage = 0;
    for (const auto i : members) {
      sx += boxes[i].x;
      sy += boxes[i].y;
      sw += boxes[i].w;
      sh += boxes[i].h;
      scale += boxes[i].scale;
      stage = std::max(stage, boxes[i].stage_reached);
    }
    const auto n = static_cast<long long>(members.size());
    out.push_back({rounded_mean(sx, n), rounded_mean(sy, n), rounded_mean(sw, n),
                   rounded_mean(sh, n), scale / static_cast<double>(n), stage});
  }
  std::sort(out.begin(), out.end(),
            [](const Detection& a, const Detection& b) { return box_key(a) < box_key(b); });
  return out;
}

std::vector<Detection> detect(const GrayImage& img, const QuantizedCascade& qc,
                              const DetectParams& params) {
  const auto set = enumerate_windows(img, qc.window_width, qc.window_height, params);
  std::vector<IntegralImage> ii;
  std::vector<IntegralImage> sq;
  for (const auto& level : set.levels) {
    ii.push_back(integral(level.image));
    if (params.normalize) sq.push_back(squared_integral(level.image));
  }
  std::vector<Detection> raw;
  for (const auto& pos : set.windows) {
    const auto r = classify_window(ii[pos.level], qc, pos.offset,
                                   params.normalize ? &sq[pos.level] : nullptr);
    if (r.accepted) raw.push_back(set.box(pos, r.stage_reached));
  }
  return group_detections(raw, params.min_neighbors);
}

std::string format_detections(std::span<const Detection> detections) {
  std::string out;
  char line[128];
  for (const auto& d : detections) {
    std::snprintf(line, sizeof(line), "%d %d %d %d %.4f %d\n", d.x, d.y, d.w, d.h, d.scale,
                  d.stage_reached);
    out += line;
  }
  return out;
}

}  // namespace rbi
