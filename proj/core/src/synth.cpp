#include "rbi/synth.hpp"

#include <algorithm>
#include <cmath>

#include "rbi/detector.hpp"
#include "rbi/error.hpp"

namespace rbi {

HaarFeature random_haar_feature(int window_width, int window_height, Rng& rng) {
  HaarFeature f;
  const int parts = rng.uniform(3) == 0 ? 3 : 2;
  const bool split_x = rng.coin();
  const int along = split_x ? window_width : window_height;
  const int across = split_x ? window_height : window_width;
  const int unit = static_cast<int>(rng.uniform_in(1, std::max(1, along / parts)));
  const int len = unit * parts;
  const int thick = static_cast<int>(rng.uniform_in(1, across));
  const int pos = static_cast<int>(rng.uniform_in(0, along - len));
  const int off = static_cast<int>(rng.uniform_in(0, across - thick));
  const int inner = parts == 3 ? 1 : static_cast<int>(rng.uniform(2));
  const double weight = parts;
  if (split_x) {
    f.rects.push_back({pos, off, len, thick, -1.0});
    f.rects.push_back({pos + inner * unit, off, unit, thick, weight});
  } else {
    f.rects.push_back({off, pos, thick, len, -1.0});
    f.rects.push_back({off, pos + inner * unit, thick, unit, weight});
  }
  return f;
}

Cascade random_cascade(std::string name, int window_width, int window_height,
                       std::span<const int> stage_sizes, Rng& rng) {
  Cascade c;
  c.name = std::move(name);
  c.window_width = window_width;
  c.window_height = window_height;
  for (const int n : stage_sizes) {
    Stage s;
    double mid = 0.0;
    for (int i = 0; i < n; ++i) {
      WeakClassifier wc;
      wc.feature = random_haar_feature(window_width, window_height, rng);
      wc.theta = (rng.unit() - 0.5) * 0.5;
      wc.alpha = std::round((rng.unit() * 2.0 - 1.0) * 1e4) / 1e4;
      wc.beta = std::round((rng.unit() * 2.0 - 1.0) * 1e4) / 1e4;
      mid += (wc.alpha + wc.beta) / 2.0;
      s.weak.push_back(std::move(wc));
    }
    s.threshold = std::round(mid * 1e4) / 1e4;
    c.stages.push_back(std::move(s));
  }
  return c;
}

GrayImage random_image(int width, int height, Rng& rng) {
  GrayImage img(width, height);
  constexpr int kCell = 8;
  const int gw = width / kCell + 2;
  const int gh = height / kCell + 2;
  std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
  for (auto& g : grid) g = 40.0 + rng.unit() * 175.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x) / kCell;
      const double fy = static_cast<double>(y) / kCell;
      const int ix = static_cast<int>(fx);
      const int iy = static_cast<int>(fy);
      const double tx = fx - ix;
      const double ty = fy - iy;
      auto g = [&](int gx, int gy) { return grid[static_cast<std::size_t>(gy) * gw + gx]; };
      const double v = (1 - tx) * (1 - ty) * g(ix, iy) + tx * (1 - ty) * g(ix + 1, iy) +
                       (1 - tx) * ty * g(ix, iy + 1) + tx * ty * g(ix + 1, iy + 1);
      const double noisy = v + (rng.unit() - 0.5) * 40.0;
      img.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(noisy), 0L, 255L));
    }
  }
  return img;
}

void paste(GrayImage& dst, const GrayImage& patch, int x, int y) {
  if (x < 0 || y < 0 || x + patch.width > dst.width || y + patch.height > dst.height) {
    throw RangeError("patch does not fit");
  }
  for (int j = 0; j < patch.height; ++j) {
    for (int i = 0; i < patch.width; ++i) dst.at(x + i, y + j) = patch.at(i, j);
  }
}

namespace {

// Lexicographic fitness: stages passed, then the margin of the first failing
// stage.
struct Fitness {
  int passed = 0;
  std::int64_t margin = 0;

  bool operator<(const Fitness& o) const {
    return passed != o.passed ? passed < o.passed : margin < o.margin;
  }
};

Fitness fitness(const GrayImage& w, const QuantizedCascade& qc) {
  const auto ii = integral(w);
  Fitness f;
  for (const auto& stage : qc.stages) {
    const auto r = eval_stage(ii, stage, Offset{});
    if (!r.pass) {
      f.margin = r.score - stage.threshold;
      return f;
    }
    ++f.passed;
  }
  return f;
}

}  // namespace

std::optional<GrayImage> find_accepted_window(const QuantizedCascade& qc, Rng& rng,
                                              int max_iterations) {
  const int w = qc.window_width;
  const int h = qc.window_height;
  const int total = static_cast<int>(qc.stages.size());
  GrayImage cur(w, h);
  for (auto& p : cur.pixels) p = static_cast<std::uint8_t>(96 + rng.uniform(64));
  Fitness best = fitness(cur, qc);
  for (int it = 0; it < max_iterations && best.passed < total; ++it) {
    GrayImage next = cur;
    const int bw = static_cast<int>(rng.uniform_in(1, std::max(1, w / 3)));
    const int bh = static_cast<int>(rng.uniform_in(1, std::max(1, h / 3)));
    const int x = static_cast<int>(rng.uniform_in(0, w - bw));
    const int y = static_cast<int>(rng.uniform_in(0, h - bh));
    const int delta = static_cast<int>(rng.uniform_in(-48, 48));
    for (int j = y; j < y + bh; ++j) {
      for (int i = x; i < x + bw; ++i) {
        next.at(i, j) = static_cast<std::uint8_t>(std::clamp(next.at(i, j) + delta, 0, 255));
      }
    }
    const auto f = fitness(next, qc);
    if (!(f < best)) {
      best = f;
      cur = std::move(next);
    }
  }
  if (best.passed < total) return std::nullopt;
  return cur;
}

GrayImage synthetic_scene(int width, int height, std::span<const GrayImage> patches, int copies,
                          Rng& rng) {
  auto img = random_image(width, height, rng);
  if (patches.empty()) return img;
  for (int c = 0; c < copies; ++c) {
    const auto& p = patches[rng.uniform(patches.size())];
    if (p.width > width || p.height > height) continue;
    const int x = 2 * static_cast<int>(rng.uniform_in(0, (width - p.width) / 2));
    const int y = 2 * static_cast<int>(rng.uniform_in(0, (height - p.height) / 2));
    paste(img, p, x, y);
  }
  return img;
}

}  // namespace rbi
