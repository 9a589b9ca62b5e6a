// Copyright 2026 The placekit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "place/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "place/error.hpp"

namespace place {
namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& path, const std::string& header,
               const std::uint8_t* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot create " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed for " + path.string());
}

class HeaderReader {
 public:
  HeaderReader(const std::vector<std::uint8_t>& bytes, std::string_view origin)
      : bytes_(bytes), origin_(origin) {}

  void expect_magic(std::string_view magic) {
    if (bytes_.size() < 2 || bytes_[0] != magic[0] || bytes_[1] != magic[1]) {
      fail("expected magic " + std::string(magic));
    }
    pos_ = 2;
  }

  int next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) fail("expected integer");
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1 << 20) fail("dimension too large");
      ++pos_;
    }
    return static_cast<int>(value);
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing raster separator");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorCode::kMalformedHeader, std::string(origin_) + ": " + why);
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

  const std::vector<std::uint8_t>& bytes_;
  std::string_view origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint8_t quantize_unit(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

GrayImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const std::string origin = path.string();
  HeaderReader header(bytes, origin);
  header.expect_magic("P5");
  GrayImage image;
  image.width = header.next_int();
  image.height = header.next_int();
  const int maxval = header.next_int();
  if (image.width <= 0 || image.height <= 0) header.fail("empty image");
  if (maxval != 255) header.fail("maxval must be 255");
  const std::size_t start = header.raster_start();
  const std::size_t count = static_cast<std::size_t>(image.width) * image.height;
  if (bytes.size() < start + count) header.fail("truncated raster");
  image.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                      bytes.begin() + static_cast<std::ptrdiff_t>(start + count));
  return image;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  const std::string header = "P5\n" + std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n255\n";
  write_all(path, header, image.pixels.data(), image.pixels.size());
}

RgbImage read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const std::string origin = path.string();
  HeaderReader header(bytes, origin);
  header.expect_magic("P6");
  const int width = header.next_int();
  const int height = header.next_int();
  const int maxval = header.next_int();
  if (width <= 0 || height <= 0) header.fail("empty image");
  if (maxval != 255) header.fail("maxval must be 255");
  const std::size_t start = header.raster_start();
  RgbImage image(width, height);
  if (bytes.size() < start + image.pixels.size()) header.fail("truncated raster");
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    image.pixels[i] = static_cast<float>(bytes[start + i]) / 255.0f;
  }
  return image;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  std::vector<std::uint8_t> raster(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), raster.begin(),
                 [](float v) { return quantize_unit(v); });
  const std::string header = "P6\n" + std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n255\n";
  write_all(path, header, raster.data(), raster.size());
}

}  // namespace place
