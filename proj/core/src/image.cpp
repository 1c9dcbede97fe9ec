#include "rbi/image.hpp"

#include <cctype>
#include <fstream>
#include <iterator>

#include "rbi/error.hpp"

namespace rbi {

GrayImage::GrayImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
  if (w < 0 || h < 0) throw Error("negative image size");
}

GrayImage crop(const GrayImage& img, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 0 || h < 0 || x + w > img.width || y + h > img.height) {
    throw RangeError("crop outside image");
  }
  GrayImage out(w, h);
  for (int r = 0; r < h; ++r) {
    const auto* src = img.pixels.data() + static_cast<std::size_t>(y + r) * img.width + x;
    std::copy(src, src + w, out.pixels.begin() + static_cast<std::ptrdiff_t>(r) * w);
  }
  return out;
}

GrayImage downscale_area(const GrayImage& img, int w, int h) {
  if (w <= 0 || h <= 0 || w > img.width || h > img.height) {
    throw RangeError("downscale target must be within source size");
  }
  if (w == img.width && h == img.height) return img;
  GrayImage out(w, h);
  std::vector<int> x0(w + 1), y0(h + 1);
  for (int i = 0; i <= w; ++i) x0[i] = static_cast<int>(static_cast<long long>(i) * img.width / w);
  for (int j = 0; j <= h; ++j) y0[j] = static_cast<int>(static_cast<long long>(j) * img.height / h);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      std::uint64_t sum = 0;
      for (int y = y0[j]; y < y0[j + 1]; ++y) {
        for (int x = x0[i]; x < x0[i + 1]; ++x) sum += img.at(x, y);
      }
      const std::uint64_t count =
          static_cast<std::uint64_t>(x0[i + 1] - x0[i]) * static_cast<std::uint64_t>(y0[j + 1] - y0[j]);
      out.at(i, j) = static_cast<std::uint8_t>((2 * sum + count) / (2 * count));
    }
  }
  return out;
}

namespace {

class PnmHeaderReader {
 public:
  explicit PnmHeaderReader(std::span<const std::uint8_t> b) : bytes_(b) {}

  int next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) throw ParseError("PNM: bad header");
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > 1'000'000) throw ParseError("PNM: header value too large");
    }
    return static_cast<int>(v);
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw ParseError("PNM: bad header end");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

GrayImage decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw ParseError("PNM: only binary P5/P6 images are supported");
  }
  const bool color = bytes[1] == '6';
  PnmHeaderReader hdr(bytes);
  const int w = hdr.next_int();
  const int h = hdr.next_int();
  const int maxval = hdr.next_int();
  if (maxval != 255) throw ParseError("PNM: only maxval 255 is supported");
  const std::size_t start = hdr.raster_start();
  const std::size_t channels = color ? 3 : 1;
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() - start < need) throw ParseError("PNM: truncated raster");

  GrayImage img(w, h);
  const auto* src = bytes.data() + start;
  if (!color) {
    std::copy(src, src + need, img.pixels.begin());
  } else {
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      const unsigned r = src[3 * i], g = src[3 * i + 1], b = src[3 * i + 2];
      img.pixels[i] = static_cast<std::uint8_t>((77 * r + 150 * g + 29 * b + 128) >> 8);
    }
  }
  return img;
}

GrayImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_pnm(bytes);
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write image " + path.string());
  const auto bytes = encode_pgm(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace rbi
