#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "oracles.hpp"
#include "rbi/error.hpp"
#include "rbi/image.hpp"
#include "rbi/rbi_codec.hpp"
#include "rbi/synth.hpp"

namespace {

using namespace rbi;

GrayImage noise(int w, int h, Rng& rng) {
  GrayImage g(w, h);
  for (auto& p : g.pixels) p = static_cast<std::uint8_t>(rng.uniform(256));
  return g;
}

std::vector<int> indices_at(const BaseImageSet& set, int pixel) {
  std::vector<int> out;
  for (std::size_t m = 1; m < set.planes.size(); ++m) {
    if (set.planes[m].test(pixel)) out.push_back(static_cast<int>(m));
  }
  return out;
}

TEST(Codec, ZeroPixelHasNoBits) {
  Rng rng(derive_seed(31, "zero"));
  const auto set = factorize(GrayImage(24, 24), rng);
  for (std::size_t m = 1; m < set.planes.size(); ++m) EXPECT_EQ(set.planes[m].popcount(), 0);
  EXPECT_GT(set.planes[0].popcount(), 0);
}

TEST(Codec, FullPixelIndicesDistinctAndSum) {
  Rng rng(derive_seed(32, "full"));
  for (int i = 0; i < 200; ++i) {
    const auto set = factorize(GrayImage(1, 1, 255), rng);
    const auto idx = indices_at(set, 0);
    int sum = 0;
    for (const int k : idx) {
      EXPECT_LE(k, 255);
      sum += k;
    }
    EXPECT_EQ(sum, 255);
  }
}

TEST(Codec, PixelsRoundTrip) {
  Rng rng(derive_seed(33, "pixels"));
  const auto img = noise(100, 1000, rng);
  const auto set = factorize(img, rng);
  EXPECT_EQ(reconstruct(set), img);
  for (int p = 0; p < 1000; ++p) {
    int sum = 0;
    for (const int k : indices_at(set, p)) sum += k;
    EXPECT_EQ(sum, img.pixels[static_cast<std::size_t>(p)]);
  }
}

TEST(Codec, WindowsRoundTrip) {
  Rng rng(derive_seed(34, "windows"));
  for (int i = 0; i < 1000; ++i) {
    const auto w = i % 2 == 0 ? noise(24, 24, rng) : random_image(24, 24, rng);
    ASSERT_EQ(reconstruct(factorize(w, rng)), w);
  }
}

TEST(Codec, SmallPlaneCounts) {
  Rng rng(derive_seed(35, "small"));
  for (const int m : {2, 4, 8, 23, 64}) {
    const int limit = (m - 1) * m / 2;
    GrayImage g(16, 16);
    for (auto& p : g.pixels) p = static_cast<std::uint8_t>(rng.uniform(static_cast<std::uint64_t>(std::min(limit, 255) + 1)));
    EXPECT_EQ(reconstruct(factorize(g, rng, m)), g) << m;
  }
  EXPECT_THROW(factorize(GrayImage(1, 1, 7), rng, 4), RangeError);
  EXPECT_THROW(factorize(GrayImage(1, 1), rng, 1), RangeError);
  EXPECT_THROW(factorize(GrayImage(1, 1), rng, 257), RangeError);
}

TEST(Codec, ReconstructExamples) {
  BaseImageSet set;
  set.width = set.height = 4;
  set.planes.assign(256, BitPlane(4, 4));
  for (int i = 0; i < 256; ++i) set.weights.push_back(i);
  EXPECT_EQ(reconstruct(set), GrayImage(4, 4));
  for (int i = 0; i < 16; ++i) set.planes[7].set(i);
  EXPECT_EQ(reconstruct(set), GrayImage(4, 4, 7));
  for (int i = 0; i < 16; ++i) set.planes[250].set(i);
  EXPECT_THROW(reconstruct(set), CorruptBaseImages);
}

TEST(Codec, IdentityShuffleKeepsPlanes) {
  Rng rng(derive_seed(36, "identity"));
  const auto set = factorize(noise(8, 8, rng), rng);
  std::vector<std::uint32_t> id(set.size());
  for (std::uint32_t i = 0; i < id.size(); ++i) id[i] = i;
  const auto s = shuffle_with(set, id);
  EXPECT_EQ(s.planes, set.planes);
  EXPECT_EQ(s.weights, set.weights);
}

TEST(Codec, ShufflePreservesMultiset) {
  Rng rng(derive_seed(37, "multiset"));
  const auto set = factorize(noise(24, 24, rng), rng);
  const auto s = shuffle(set, rng);
  EXPECT_EQ(reconstruct(s), reconstruct(set));
  for (std::size_t m = 0; m < s.planes.size(); ++m) {
    EXPECT_EQ(s.planes[m], set.planes[s.permutation[m]]);
    EXPECT_EQ(s.weights[m], static_cast<int>(s.permutation[m]));
  }
}

TEST(Codec, ShuffleUniformSmall) {
  Rng rng(derive_seed(38, "uniform"));
  const auto set = factorize(GrayImage(2, 2, 3), rng, 4);
  std::map<std::vector<std::uint32_t>, int> seen;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++seen[shuffle(set, rng).permutation];
  ASSERT_EQ(seen.size(), 24U);
  const double expected = n / 24.0;
  const double sigma = std::sqrt(expected * (1.0 - 1.0 / 24));
  for (const auto& [perm, count] : seen) EXPECT_LT(std::abs(count - expected), 5 * sigma);
}

TEST(Codec, Recombine) {
  const std::vector<std::int64_t> zeros(256, 0);
  std::vector<int> w(256);
  for (int i = 0; i < 256; ++i) w[i] = i;
  EXPECT_EQ(recombine(zeros, w), 0);

  Rng rng(derive_seed(39, "recombine"));
  for (int i = 0; i < 200; ++i) {
    const auto window = noise(24, 24, rng);
    const auto s = shuffle(factorize(window, rng), rng);
    QuantizedFeature f;
    const auto hf = random_haar_feature(24, 24, rng);
    for (const auto& r : hf.rects) {
      f.rects[static_cast<std::size_t>(f.count++)] = {r.x, r.y, r.w, r.h,
                                                      static_cast<std::int64_t>(r.weight * kFeatureScale)};
    }
    std::vector<std::int64_t> resp;
    for (const auto& p : s.planes) resp.push_back(eval_feature(plane_integral(p), f, {}));
    const auto expected = eval_feature(integral(window), f, {});
    EXPECT_EQ(recombine(resp, s.weights), expected);
    // Decoy plane response does not matter.
    const auto decoy = std::find(s.weights.begin(), s.weights.end(), 0) - s.weights.begin();
    resp[static_cast<std::size_t>(decoy)] = 123456789;
    EXPECT_EQ(recombine(resp, s.weights), expected);
  }
}

TEST(Codec, BitPlaneSerialization) {
  Rng rng(derive_seed(40, "serialize"));
  BitPlane p(13, 7);
  p.randomize(rng);
  std::vector<std::uint8_t> buf(p.serialized_size());
  p.serialize(buf);
  EXPECT_EQ(BitPlane::deserialize(buf, 13, 7), p);
  buf.at(buf.size() - 1) ^= 0x01;
  EXPECT_THROW(BitPlane::deserialize(buf, 13, 7), CorruptBaseImages);
  buf.pop_back();
  EXPECT_THROW(BitPlane::deserialize(buf, 13, 7), CorruptBaseImages);
}

TEST(Image, PgmRoundTrip) {
  Rng rng(derive_seed(41, "pgm"));
  const auto img = noise(37, 19, rng);
  const auto bytes = encode_pgm(img);
  EXPECT_EQ(decode_pnm(bytes), img);
  EXPECT_EQ(encode_pgm(decode_pnm(bytes)), bytes);
}

TEST(Image, PnmErrors) {
  const std::string bad = "P2\n2 2\n255\n0 0 0 0\n";
  EXPECT_THROW(decode_pnm(std::span(reinterpret_cast<const std::uint8_t*>(bad.data()), bad.size())), Error);
  const std::string short_data = "P5\n4 4\n255\nabc";
  EXPECT_THROW(
      decode_pnm(std::span(reinterpret_cast<const std::uint8_t*>(short_data.data()), short_data.size())),
      Error);
}

}  // namespace
