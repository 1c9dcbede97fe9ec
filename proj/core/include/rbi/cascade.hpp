#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rbi {

// One weighted rectangle of a Haar feature, in base-window coordinates.
struct RectWeight {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  double weight = 0.0;

  bool operator==(const RectWeight&) const = default;
};

struct HaarFeature {
  std::vector<RectWeight> rects;  // 2 or 3 entries
  bool tilted = false;

  bool operator==(const HaarFeature&) const = default;
};

// Decision stump h(x) = alpha if <x, feature> > theta, beta otherwise.
//
// For OpenCV cascades alpha is the document's right_val (taken when the
// response reaches the threshold) and beta is left_val.
struct WeakClassifier {
  HaarFeature feature;
  double theta = 0.0;
  double alpha = 0.0;
  double beta = 0.0;

  bool operator==(const WeakClassifier&) const = default;
};

// A rejector: passes when the sum of its stump outputs reaches threshold.
struct Stage {
  std::vector<WeakClassifier> weak;
  double threshold = 0.0;

  bool operator==(const Stage&) const = default;
};

struct Cascade {
  std::string name;
  int window_width = 0;
  int window_height = 0;
  std::vector<Stage> stages;

  bool operator==(const Cascade&) const = default;
};

struct CascadeStats {
  std::size_t stage_count = 0;
  std::vector<std::size_t> weak_per_stage;
  std::size_t total_weak = 0;
  std::size_t max_weak = 0;
  int window_width = 0;
  int window_height = 0;
};

// Parses an OpenCV old-format ("opencv-haar-classifier") cascade.
//
// Throws ParseError for malformed documents (with line or element path) and
// UnsupportedCascade for new-format files, non-stump trees, or stage trees.
Cascade parse_cascade(std::string_view xml);
Cascade load_cascade(const std::filesystem::path& path);

CascadeStats cascade_stats(const Cascade& cascade);

bool uses_tilted_features(const Cascade& cascade);

// Canonical tab-separated text form. Reals are printed with enough digits to
// round-trip exactly, so parse_cascade_dump(dump_cascade(c)) == c.
//
//   cascade <name> <window_width> <window_height> <stage_count>
//   stage   <stage_idx> <threshold> <weak_count>
//   <stage_idx> <weak_idx> <theta> <alpha> <beta> <tilted> <x,y,w,h,weight>...
std::string dump_cascade(const Cascade& cascade);
Cascade parse_cascade_dump(std::string_view text);

// Checks structural invariants shared by both parsers; throws ParseError.
void validate_cascade(const Cascade& cascade);

}  // namespace rbi
