#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rbi/cascade.hpp"
#include "rbi/image.hpp"
#include "rbi/integral.hpp"
#include "rbi/rng.hpp"

namespace rbi {

// Random upright Haar-like feature: an outer rectangle with weight -1 and an
// inner half (weight 2) or third (weight 3).
HaarFeature random_haar_feature(int window_width, int window_height, Rng& rng);

// Random stump cascade; stage thresholds sit at each stage's mean leaf sum,
// so roughly half of random windows pass each stage.
Cascade random_cascade(std::string name, int window_width, int window_height,
                       std::span<const int> stage_sizes, Rng& rng);

// Smooth random texture: an upsampled coarse grid plus per-pixel noise.
GrayImage random_image(int width, int height, Rng& rng);

void paste(GrayImage& dst, const GrayImage& patch, int x, int y);

// Hill-climbs pixel values until the (unnormalized) cascade accepts the
// window. Returns nullopt if the budget runs out first.
std::optional<GrayImage> find_accepted_window(const QuantizedCascade& qc, Rng& rng,
                                              int max_iterations = 200000);

// random_image with `patches` pasted at random even coordinates so that
// they coincide with first-level scan windows for step 2.
GrayImage synthetic_scene(int width, int height, std::span<const GrayImage> patches, int copies,
                          Rng& rng);

}  // namespace rbi
