#pragma once

// Independent reference implementations. None of them touch integral images,
// so they can check the fast paths.

#include <cstdint>
#include <string>
#include <vector>

#include "rbi/image.hpp"
#include "rbi/integral.hpp"

namespace oracle {

std::int64_t rect_sum(const rbi::GrayImage& img, int x, int y, int w, int h);

// Per-pixel weight image y_n of a feature over a window.
std::vector<std::int64_t> rasterize(const rbi::QuantizedFeature& f, int window_width,
                                    int window_height);

std::int64_t dot(const rbi::GrayImage& window, const std::vector<std::int64_t>& weights);

struct Verdict {
  bool accepted = false;
  int stage_reached = 0;
};

// Straight-line cascade evaluation on a window-sized crop.
Verdict classify(const rbi::GrayImage& window, const rbi::QuantizedCascade& qc);
bool stage_passes(const rbi::GrayImage& window, const rbi::QuantizedStage& stage);

// Window count by loop arithmetic over the pyramid sizes.
std::size_t window_count(int width, int height, int ww, int wh, double scale_factor, int step);

// Counts stage and weak-classifier elements by scanning the XML text.
struct XmlTally {
  std::vector<std::size_t> weak_per_stage;
  std::size_t total = 0;
};
XmlTally tally_old_format(const std::string& xml);

std::string read_file(const std::string& path);

}  // namespace oracle
