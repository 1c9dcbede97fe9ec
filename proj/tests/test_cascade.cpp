#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rbi/cascade.hpp"
#include "rbi/error.hpp"
#include "rbi/integral.hpp"

namespace {

using namespace rbi;

const std::string kFixtures = RBI_FIXTURE_DIR "/cascades/";

const char* kTiny = R"(<?xml version="1.0"?>
<opencv_storage>
<tiny type_id="opencv-haar-classifier">
  <size>24 24</size>
  <stages>
    <_>
      <trees>
        <_>
          <_>
            <feature>
              <rects>
                <_>0 0 24 24 -1.</_>
                <_>0 0 12 24 2.</_></rects>
              <tilted>0</tilted></feature>
            <threshold>0.5</threshold>
            <left_val>-0.25</left_val>
            <right_val>0.75</right_val></_></_></trees>
      <stage_threshold>0.125</stage_threshold>
      <parent>-1</parent>
      <next>-1</next></_></stages></tiny>
</opencv_storage>
)";

TEST(Cascade, FrontalfaceAltShape) {
  const auto c = load_cascade(kFixtures + "haarcascade_frontalface_alt.xml");
  const auto s = cascade_stats(c);
  EXPECT_EQ(s.stage_count, 22U);
  EXPECT_EQ(s.weak_per_stage.front(), 3U);
  EXPECT_EQ(s.max_weak, 213U);
  EXPECT_EQ(s.total_weak, 2135U);
  EXPECT_EQ(s.window_width, 20);
  EXPECT_EQ(s.window_height, 20);
}

TEST(Cascade, CountsMatchTextScan) {
  for (const char* name : {"haarcascade_frontalface_alt.xml", "haarcascade_frontalface_default.xml",
                           "haarcascade_eye.xml", "haarcascade_fullbody.xml"}) {
    const auto path = kFixtures + name;
    const auto tally = oracle::tally_old_format(oracle::read_file(path));
    const auto s = cascade_stats(load_cascade(path));
    EXPECT_EQ(s.weak_per_stage, tally.weak_per_stage) << name;
    EXPECT_EQ(s.total_weak, tally.total) << name;
  }
}

TEST(Cascade, TotalEqualsTraversal) {
  const auto c = load_cascade(kFixtures + "haarcascade_frontalface_default.xml");
  std::size_t n = 0;
  for (const auto& st : c.stages) {
    for (const auto& wc : st.weak) n += wc.feature.rects.empty() ? 0 : 1;
  }
  EXPECT_EQ(cascade_stats(c).total_weak, n);
}

TEST(Cascade, HandWritten) {
  const auto c = parse_cascade(kTiny);
  EXPECT_EQ(c.name, "tiny");
  EXPECT_EQ(c.window_width, 24);
  ASSERT_EQ(c.stages.size(), 1U);
  ASSERT_EQ(c.stages[0].weak.size(), 1U);
  EXPECT_DOUBLE_EQ(c.stages[0].threshold, 0.125);
  const auto& wc = c.stages[0].weak[0];
  EXPECT_DOUBLE_EQ(wc.theta, 0.5);
  EXPECT_DOUBLE_EQ(wc.alpha, 0.75);
  EXPECT_DOUBLE_EQ(wc.beta, -0.25);
  ASSERT_EQ(wc.feature.rects.size(), 2U);
  EXPECT_EQ(wc.feature.rects[1], (RectWeight{0, 0, 12, 24, 2.0}));
  EXPECT_EQ(cascade_stats(c).total_weak, 1U);
}

TEST(Cascade, Quantize) {
  const auto q = quantize(parse_cascade(kTiny));
  const auto& wc = q.stages[0].weak[0];
  EXPECT_EQ(wc.feature.rects[0].weight, -4096);
  EXPECT_EQ(wc.feature.rects[1].weight, 8192);
  EXPECT_EQ(wc.theta, 1179648);
  EXPECT_EQ(wc.alpha, 49152);
  EXPECT_EQ(wc.beta, -16384);
  EXPECT_EQ(q.stages[0].threshold, 8192);
}

TEST(Cascade, ZeroLeafQuantizesToZero) {
  auto c = parse_cascade(kTiny);
  c.stages[0].weak[0].alpha = 0.0;
  EXPECT_EQ(quantize(c).stages[0].weak[0].alpha, 0);
}

TEST(Cascade, DumpRoundTrip) {
  const auto c = load_cascade(kFixtures + "haarcascade_eye.xml");
  EXPECT_EQ(parse_cascade_dump(dump_cascade(c)), c);
}

TEST(Cascade, Errors) {
  EXPECT_THROW(parse_cascade("<opencv_storage><x"), ParseError);
  EXPECT_THROW(parse_cascade(std::string(kTiny).replace(std::string(kTiny).find("24 24"), 5, "24 x")),
               ParseError);
  EXPECT_THROW(load_cascade(kFixtures + "lbpcascade_cars_frontbackview.xml"), UnsupportedCascade);
  EXPECT_THROW(load_cascade(kFixtures + "haarcascade_eye_tree_eyeglasses.xml"), UnsupportedCascade);
  EXPECT_THROW(load_cascade(kFixtures + "missing.xml"), Error);
}

}  // namespace
