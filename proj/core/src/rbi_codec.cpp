#include "rbi/rbi_codec.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <memory>

#include "rbi/error.hpp"

namespace rbi {

BitPlane::BitPlane(int width, int height)
    : width_(width), height_(height), lanes_((static_cast<std::size_t>(width) * height + 63) / 64) {}

int BitPlane::popcount() const {
  int n = 0;
  for (const auto lane : lanes_) n += std::popcount(lane);
  return n;
}

void BitPlane::randomize(Rng& rng) {
  for (auto& lane : lanes_) lane = rng.next_u64();
  const int tail = bit_count() & 63;
  if (tail != 0) lanes_.back() &= (std::uint64_t{1} << tail) - 1;
}

void BitPlane::serialize(std::span<std::uint8_t> out) const {
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(serialized_size()), 0);
  for (int i = 0; i < bit_count(); ++i) {
    if (test(i)) out[i >> 3] |= static_cast<std::uint8_t>(0x80U >> (i & 7));
  }
}

BitPlane BitPlane::deserialize(std::span<const std::uint8_t> in, int width, int height) {
  BitPlane plane(width, height);
  if (in.size() != plane.serialized_size()) throw CorruptBaseImages("bit plane size mismatch");
  for (int i = 0; i < plane.bit_count(); ++i) {
    if (in[i >> 3] & (0x80U >> (i & 7))) plane.set(i);
  }
  const int tail = plane.bit_count() & 7;
  if (tail != 0 && (in.back() & (0xFFU >> tail)) != 0) {
    throw CorruptBaseImages("nonzero padding bits in bit plane");
  }
  return plane;
}

namespace {

constexpr int kMaxValue = 255;
constexpr int kDrawAttempts = 16;

// Draws indices uniformly among the unset ones in [1, min(residual, max_part)]
// until the residual is spent. Returns false if it paints itself into a corner,
// which only happens when max_part is small.
bool draw_indices(int value, int max_part, Rng& rng, std::vector<int>& parts) {
  std::array<bool, kMaxValue + 1> used{};
  parts.clear();
  int residual = value;
  while (residual > 0) {
    const int top = std::min(residual, max_part);
    int free = 0;
    for (int k = 1; k <= top; ++k) free += used[static_cast<std::size_t>(k)] ? 0 : 1;
    if (free == 0) return false;
    auto pick = static_cast<int>(rng.uniform(static_cast<std::uint64_t>(free)));
    int k = 1;
    for (;; ++k) {
      if (used[static_cast<std::size_t>(k)]) continue;
      if (pick-- == 0) break;
    }
    used[static_cast<std::size_t>(k)] = true;
    parts.push_back(k);
    residual -= k;
  }
  return true;
}

void greedy_indices(int value, int max_part, std::vector<int>& parts) {
  parts.clear();
  for (int k = max_part; value > 0; --k) {
    const int take = std::min(value, k);
    parts.push_back(take);
    value -= take;
    k = take;
  }
}

}  // namespace

BaseImageSet factorize(const GrayImage& window, Rng& rng, int planes) {
  if (planes < 2 || planes > kMaxValue + 1) throw RangeError("plane count must be in [2, 256]");
  const int max_part = planes - 1;

  BaseImageSet set;
  set.width = window.width;
  set.height = window.height;
  set.planes.assign(static_cast<std::size_t>(planes), BitPlane(window.width, window.height));
  set.weights.resize(static_cast<std::size_t>(planes));
  for (int i = 0; i < planes; ++i) set.weights[i] = i;

  std::vector<int> parts;
  for (int index = 0; index < window.width * window.height; ++index) {
    const int value = window.pixels[static_cast<std::size_t>(index)];
    if (value > max_part * (max_part + 1) / 2) {
      throw RangeError("pixel value not representable with the available planes");
    }
    bool drawn = false;
    for (int attempt = 0; attempt < kDrawAttempts && !drawn; ++attempt) {
      drawn = draw_indices(value, max_part, rng, parts);
    }
    if (!drawn) greedy_indices(value, max_part, parts);
    for (const int k : parts) set.planes[static_cast<std::size_t>(k)].set(index);
  }
  set.planes[0].randomize(rng);
  return set;
}

namespace {

GrayImage weighted_sum(int width, int height, std::span<const BitPlane> planes,
                       std::span<const int> weights) {
  if (planes.size() != weights.size()) throw CorruptBaseImages("plane/weight count mismatch");
  std::vector<long long> acc(static_cast<std::size_t>(width) * height, 0);
  for (std::size_t m = 0; m < planes.size(); ++m) {
    const auto& plane = planes[m];
    if (plane.width() != width || plane.height() != height) {
      throw CorruptBaseImages("plane size mismatch");
    }
    if (weights[m] == 0) continue;
    const auto lanes = plane.lanes();
    for (std::size_t l = 0; l < lanes.size(); ++l) {
      std::uint64_t bits = lanes[l];
      while (bits != 0) {
        const int b = std::countr_zero(bits);
        acc[l * 64 + static_cast<std::size_t>(b)] += weights[m];
        bits &= bits - 1;
      }
    }
  }
  GrayImage out(width, height);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    if (acc[i] < 0 || acc[i] > 255) throw CorruptBaseImages("reconstructed pixel out of range");
    out.pixels[i] = static_cast<std::uint8_t>(acc[i]);
  }
  return out;
}

}  // namespace

GrayImage reconstruct(const BaseImageSet& set) {
  return weighted_sum(set.width, set.height, set.planes, set.weights);
}

GrayImage reconstruct(const ShuffledBaseImages& set) {
  return weighted_sum(set.width, set.height, set.planes, set.weights);
}

ShuffledBaseImages shuffle_with(const BaseImageSet& set, std::span<const std::uint32_t> permutation) {
  if (permutation.size() != set.size()) throw RangeError("permutation size mismatch");
  std::vector<bool> seen(set.size(), false);
  ShuffledBaseImages out;
  out.width = set.width;
  out.height = set.height;
  out.permutation.assign(permutation.begin(), permutation.end());
  out.planes.reserve(set.size());
  out.weights.reserve(set.size());
  for (const auto src : permutation) {
    if (src >= set.size() || seen[src]) throw RangeError("not a permutation");
    seen[src] = true;
    out.planes.push_back(set.planes[src]);
    out.weights.push_back(set.weights[src]);
  }
  return out;
}

ShuffledBaseImages shuffle(const BaseImageSet& set, Rng& rng) {
  const auto perm = random_permutation(set.size(), rng);
  return shuffle_with(set, perm);
}

std::int64_t recombine(std::span<const std::int64_t> responses, std::span<const int> weights) {
  if (responses.size() != weights.size()) throw RangeError("response/weight count mismatch");
  __int128 sum = 0;
  for (std::size_t m = 0; m < responses.size(); ++m) {
    sum += static_cast<__int128>(responses[m]) * weights[m];
  }
  if (sum >= kCompareBound || sum <= -kCompareBound) {
    throw RangeError("recombined response exceeds the comparison domain");
  }
  return static_cast<std::int64_t>(sum);
}

PlaneIntegral plane_integral(const BitPlane& plane) {
  if (plane.bit_count() > 0xFFFF) throw RangeError("plane too large for 16-bit integral");
  PlaneIntegral ii(plane.width(), plane.height());
  const int w = plane.width();
  for (int y = 0; y < plane.height(); ++y) {
    std::uint16_t row = 0;
    for (int x = 0; x < w; ++x) {
      row = static_cast<std::uint16_t>(row + (plane.test(y * w + x) ? 1 : 0));
      ii.at(x + 1, y + 1) = static_cast<std::uint16_t>(ii.at(x + 1, y) + row);
    }
  }
  return ii;
}

}  // namespace rbi
