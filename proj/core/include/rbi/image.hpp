#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rbi {

// 8-bit grayscale image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0);

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return width == 0 || height == 0; }

  bool operator==(const GrayImage&) const = default;
};

GrayImage crop(const GrayImage& img, int x, int y, int w, int h);

// Area-average downscale to (w, h). Destination pixel i covers source columns
// [floor(i*W/w), floor((i+1)*W/w)) and likewise for rows; the mean is rounded
// half up. Integer-only, so results match bit for bit across platforms.
GrayImage downscale_area(const GrayImage& img, int w, int h);

// Binary PGM (P5, maxval 255). PPM (P6) input is converted to gray with
// integer BT.601 luma weights.
GrayImage decode_pnm(std::span<const std::uint8_t> bytes);
GrayImage read_pnm(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);

}  // namespace rbi
