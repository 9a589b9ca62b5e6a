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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "place/image_io.hpp"
#include "place/semantic_map.hpp"
#include "place/text_semantics.hpp"

namespace place {

struct Dims {
  int h = 0;
  int w = 0;
  int count() const { return h * w; }
  bool operator==(const Dims&) const = default;
};

// Half-open pixel rectangle.
struct Rect {
  int row_start = 0;
  int row_end = 0;
  int col_start = 0;
  int col_end = 0;
  int area() const { return (row_end - row_start) * (col_end - col_start); }
  bool operator==(const Rect&) const = default;
};

// A layout entry: the fraction of a token's receptive field covered by the
// channel's class, or nullopt when the class is absent there (MASKED).
using Coverage = std::optional<double>;

// tokens x channels, tokens in row-major latent order.
class LayoutControlMap {
 public:
  LayoutControlMap(Dims latent, Dims source, int channels);

  int tokens() const { return latent_.count(); }
  int channels() const { return channels_; }
  Dims latent_dims() const { return latent_; }
  Dims source_dims() const { return source_; }

  Coverage at(int token, int channel) const {
    const std::size_t i = index(token, channel);
    if (masked_[i]) return std::nullopt;
    return values_[i];
  }
  bool masked(int token, int channel) const { return masked_[index(token, channel)] != 0; }
  void set(int token, int channel, Coverage c);

  // Raw row views for the fusion kernels; masked entries read as 0.
  const double* value_row(int token) const { return values_.data() + index(token, 0); }
  const std::uint8_t* mask_row(int token) const { return masked_.data() + index(token, 0); }

  bool operator==(const LayoutControlMap&) const = default;

 private:
  std::size_t index(int token, int channel) const {
    return static_cast<std::size_t>(token) * channels_ + channel;
  }

  Dims latent_;
  Dims source_;
  int channels_;
  std::vector<double> values_;
  std::vector<std::uint8_t> masked_;
};

enum class LayoutMode { kCoverage, kNearest };

// Floor-partition tile of the source owned by a latent token: rows
// [floor(r*H/h), floor((r+1)*H/h)), columns likewise.
Rect receptive_field(int token_index, Dims latent, Dims source);

// Exact per-class coverage of every receptive field. Channels whose token
// has no class get 1.0 everywhere.
LayoutControlMap compute_lcm(const SemanticMap& map, Dims latent, const TokenClassMap& tcm);

// Nearest-neighbour resize baseline: 1.0 for the class of the pixel at
// (floor((r+0.5)*H/h), floor((c+0.5)*W/w)), MASKED elsewhere.
LayoutControlMap nearest_lcm_baseline(const SemanticMap& map, Dims latent, const TokenClassMap& tcm);

LayoutControlMap make_layout(LayoutMode mode, const SemanticMap& map, Dims latent,
                             const TokenClassMap& tcm);

// Per token, the class with the largest finite coverage (ties -> lowest
// index). Tokens without any mapped finite entry get class 0.
SemanticMap reconstruct_map(const LayoutControlMap& lcm, const TokenClassMap& tcm,
                            const std::vector<std::string>& classes);

// Majority class of every receptive field (ties -> lowest index).
SemanticMap majority_downsample(const SemanticMap& map, Dims latent);

// One grayscale slice per mapped class with round(255 * coverage), MASKED
// as 0. Returned in ascending class order.
struct LayoutSlice {
  int class_index;
  std::string file_name;  // "<class>_<h>x<w>.pgm", spaces replaced by '_'
  GrayImage image;
};
std::vector<LayoutSlice> layout_slices(const LayoutControlMap& lcm, const TokenClassMap& tcm,
                                       const std::vector<std::string>& classes);
void write_layout_slices(const std::filesystem::path& dir, const LayoutControlMap& lcm,
                         const TokenClassMap& tcm, const std::vector<std::string>& classes);

}  // namespace place
