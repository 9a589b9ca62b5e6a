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

#include "place/layout_control.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "place/error.hpp"

namespace place {
namespace {

void check_dims(Dims latent, Dims source) {
  if (latent.h < 1 || latent.w < 1) {
    throw Error(ErrorCode::kLatentLargerThanSource, "latent dims must be positive");
  }
  if (latent.h > source.h || latent.w > source.w) {
    throw Error(ErrorCode::kLatentLargerThanSource,
                std::to_string(latent.h) + "x" + std::to_string(latent.w) + " > " +
                    std::to_string(source.h) + "x" + std::to_string(source.w));
  }
}

void check_token_classes(const SemanticMap& map, const TokenClassMap& tcm) {
  std::set<int> mapped;
  for (const auto& c : tcm) {
    if (!c) continue;
    if (*c < 0 || *c >= map.num_classes()) {
      throw Error(ErrorCode::kIndexOutOfRange, "token class " + std::to_string(*c) + " not in map");
    }
    mapped.insert(*c);
  }
  for (int c : present_classes(map)) {
    if (!mapped.contains(c)) {
      throw Error(ErrorCode::kUnmappedPresentClass,
                  "class '" + map.classes()[c] + "' is present but no token maps to it");
    }
  }
}

}  // namespace

LayoutControlMap::LayoutControlMap(Dims latent, Dims source, int channels)
    : latent_(latent),
      source_(source),
      channels_(channels),
      values_(static_cast<std::size_t>(latent.count()) * channels, 0.0),
      masked_(values_.size(), 1) {}

void LayoutControlMap::set(int token, int channel, Coverage c) {
  const std::size_t i = index(token, channel);
  masked_[i] = c ? 0 : 1;
  values_[i] = c.value_or(0.0);
}

Rect receptive_field(int token_index, Dims latent, Dims source) {
  check_dims(latent, source);
  if (token_index < 0 || token_index >= latent.count()) {
    throw Error(ErrorCode::kIndexOutOfRange, "token " + std::to_string(token_index));
  }
  const long r = token_index / latent.w;
  const long c = token_index % latent.w;
  return Rect{static_cast<int>(r * source.h / latent.h), static_cast<int>((r + 1) * source.h / latent.h),
              static_cast<int>(c * source.w / latent.w), static_cast<int>((c + 1) * source.w / latent.w)};
}

LayoutControlMap compute_lcm(const SemanticMap& map, Dims latent, const TokenClassMap& tcm) {
  const Dims source{map.height(), map.width()};
  check_dims(latent, source);
  check_token_classes(map, tcm);
  LayoutControlMap lcm(latent, source, static_cast<int>(tcm.size()));
  std::vector<int> counts(map.num_classes());
  for (int token = 0; token < latent.count(); ++token) {
    const Rect rf = receptive_field(token, latent, source);
    std::fill(counts.begin(), counts.end(), 0);
    for (int r = rf.row_start; r < rf.row_end; ++r) {
      for (int c = rf.col_start; c < rf.col_end; ++c) ++counts[map.at(r, c)];
    }
    const double area = rf.area();
    for (int j = 0; j < lcm.channels(); ++j) {
      if (!tcm[j]) {
        lcm.set(token, j, 1.0);
      } else if (counts[*tcm[j]] > 0) {
        lcm.set(token, j, counts[*tcm[j]] / area);
      } else {
        lcm.set(token, j, std::nullopt);
      }
    }
  }
  return lcm;
}

LayoutControlMap nearest_lcm_baseline(const SemanticMap& map, Dims latent, const TokenClassMap& tcm) {
  const Dims source{map.height(), map.width()};
  check_dims(latent, source);
  check_token_classes(map, tcm);
  LayoutControlMap lcm(latent, source, static_cast<int>(tcm.size()));
  for (int token = 0; token < latent.count(); ++token) {
    const long r = token / latent.w;
    const long c = token % latent.w;
    // floor((r + 0.5) * H / h) in integer arithmetic
    const int sr = static_cast<int>((2 * r + 1) * source.h / (2L * latent.h));
    const int sc = static_cast<int>((2 * c + 1) * source.w / (2L * latent.w));
    const int cls = map.at(sr, sc);
    for (int j = 0; j < lcm.channels(); ++j) {
      if (!tcm[j] || *tcm[j] == cls) {
        lcm.set(token, j, 1.0);
      } else {
        lcm.set(token, j, std::nullopt);
      }
    }
  }
  return lcm;
}

LayoutControlMap make_layout(LayoutMode mode, const SemanticMap& map, Dims latent,
                             const TokenClassMap& tcm) {
  return mode == LayoutMode::kCoverage ? compute_lcm(map, latent, tcm)
                                       : nearest_lcm_baseline(map, latent, tcm);
}

SemanticMap reconstruct_map(const LayoutControlMap& lcm, const TokenClassMap& tcm,
                            const std::vector<std::string>& classes) {
  if (tcm.size() != static_cast<std::size_t>(lcm.channels())) {
    throw Error(ErrorCode::kShapeMismatch, "token class map does not match layout channels");
  }
  const Dims latent = lcm.latent_dims();
  std::vector<std::uint8_t> grid(latent.count(), 0);
  std::vector<double> best(classes.size());
  for (int token = 0; token < latent.count(); ++token) {
    std::fill(best.begin(), best.end(), -1.0);
    for (int j = 0; j < lcm.channels(); ++j) {
      if (!tcm[j] || lcm.masked(token, j)) continue;
      best.at(*tcm[j]) = std::max(best[*tcm[j]], *lcm.at(token, j));
    }
    int arg = 0;
    double top = -1.0;
    for (std::size_t c = 0; c < best.size(); ++c) {
      if (best[c] > top) {
        top = best[c];
        arg = static_cast<int>(c);
      }
    }
    grid[token] = static_cast<std::uint8_t>(arg);
  }
  return SemanticMap(latent.h, latent.w, classes, std::move(grid));
}

SemanticMap majority_downsample(const SemanticMap& map, Dims latent) {
  const Dims source{map.height(), map.width()};
  check_dims(latent, source);
  std::vector<std::uint8_t> grid(latent.count(), 0);
  std::vector<int> counts(map.num_classes());
  for (int token = 0; token < latent.count(); ++token) {
    const Rect rf = receptive_field(token, latent, source);
    std::fill(counts.begin(), counts.end(), 0);
    for (int r = rf.row_start; r < rf.row_end; ++r) {
      for (int c = rf.col_start; c < rf.col_end; ++c) ++counts[map.at(r, c)];
    }
    grid[token] = static_cast<std::uint8_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
  return SemanticMap(latent.h, latent.w, map.classes(), std::move(grid));
}

std::vector<LayoutSlice> layout_slices(const LayoutControlMap& lcm, const TokenClassMap& tcm,
                                       const std::vector<std::string>& classes) {
  std::vector<LayoutSlice> slices;
  std::set<int> done;
  const Dims latent = lcm.latent_dims();
  std::vector<std::pair<int, int>> first_channel;  // (class, channel)
  for (int j = 0; j < lcm.channels(); ++j) {
    if (tcm[j] && done.insert(*tcm[j]).second) first_channel.emplace_back(*tcm[j], j);
  }
  std::sort(first_channel.begin(), first_channel.end());
  for (const auto& [cls, j] : first_channel) {
    LayoutSlice slice;
    slice.class_index = cls;
    std::string name = classes.at(cls);
    std::replace(name.begin(), name.end(), ' ', '_');
    slice.file_name = name + "_" + std::to_string(latent.h) + "x" + std::to_string(latent.w) + ".pgm";
    slice.image.width = latent.w;
    slice.image.height = latent.h;
    slice.image.pixels.resize(latent.count());
    for (int token = 0; token < latent.count(); ++token) {
      slice.image.pixels[token] = quantize_unit(lcm.at(token, j).value_or(0.0));
    }
    slices.push_back(std::move(slice));
  }
  return slices;
}

void write_layout_slices(const std::filesystem::path& dir, const LayoutControlMap& lcm,
                         const TokenClassMap& tcm, const std::vector<std::string>& classes) {
  std::filesystem::create_directories(dir);
  for (const auto& slice : layout_slices(lcm, tcm, classes)) {
    write_pgm(dir / slice.file_name, slice.image);
  }
}

}  // namespace place
