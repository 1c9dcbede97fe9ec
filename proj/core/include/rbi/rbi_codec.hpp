#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rbi/image.hpp"
#include "rbi/integral.hpp"
#include "rbi/rng.hpp"

namespace rbi {

inline constexpr int kDefaultPlaneCount = 256;  // M

// Binary image packed row-major into 64-bit lanes; bit i is pixel
// (i % width, i / width). Padding bits past width*height are always zero.
class BitPlane {
 public:
  BitPlane() = default;
  BitPlane(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  int bit_count() const { return width_ * height_; }

  bool test(int index) const { return (lanes_[index >> 6] >> (index & 63)) & 1U; }
  bool test(int x, int y) const { return test(y * width_ + x); }
  void set(int index) { lanes_[index >> 6] |= std::uint64_t{1} << (index & 63); }
  void set(int x, int y) { set(y * width_ + x); }

  int popcount() const;
  void randomize(Rng& rng);

  std::span<const std::uint64_t> lanes() const { return lanes_; }

  // ceil(width*height/8) bytes, bit i at byte i/8, most significant bit first.
  std::size_t serialized_size() const { return (static_cast<std::size_t>(bit_count()) + 7) / 8; }
  void serialize(std::span<std::uint8_t> out) const;
  static BitPlane deserialize(std::span<const std::uint8_t> in, int width, int height);

  bool operator==(const BitPlane&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint64_t> lanes_;
};

// x = sum_i weights[i] * planes[i], with weights[i] = i.
struct BaseImageSet {
  int width = 0;
  int height = 0;
  std::vector<BitPlane> planes;
  std::vector<int> weights;

  std::size_t size() const { return planes.size(); }
};

// planes[m] is the original plane permutation[m]; weights[m] = permutation[m]
// is the shuffled weight w'_m. Only the planes ever leave the client.
struct ShuffledBaseImages {
  int width = 0;
  int height = 0;
  std::vector<BitPlane> planes;
  std::vector<int> weights;
  std::vector<std::uint32_t> permutation;
};

// Splits each pixel value into distinct plane indices >= 1 that sum to it,
// drawing each index uniformly among the unused ones not above the residual.
// Plane 0 (weight 0) receives random decoy bits.
BaseImageSet factorize(const GrayImage& window, Rng& rng, int planes = kDefaultPlaneCount);

// Throws CorruptBaseImages if any pixel sum leaves [0, 255].
GrayImage reconstruct(const BaseImageSet& set);
GrayImage reconstruct(const ShuffledBaseImages& set);

ShuffledBaseImages shuffle(const BaseImageSet& set, Rng& rng);
ShuffledBaseImages shuffle_with(const BaseImageSet& set, std::span<const std::uint32_t> permutation);

// F(n) = sum_m responses[m] * weights[m]; throws RangeError outside the
// comparison domain.
std::int64_t recombine(std::span<const std::int64_t> responses, std::span<const int> weights);

using PlaneIntegral = IntegralTable<std::uint16_t>;
PlaneIntegral plane_integral(const BitPlane& plane);

}  // namespace rbi
