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
#include <string>
#include <vector>

namespace place {

// Per-pixel class annotation. Class indices are contiguous from 0 and the
// class list is user supplied; class 0 is background by convention.
class SemanticMap {
 public:
  SemanticMap(int height, int width, std::vector<std::string> classes,
              std::vector<std::uint8_t> grid);

  int height() const { return height_; }
  int width() const { return width_; }
  int num_classes() const { return static_cast<int>(classes_.size()); }
  const std::vector<std::string>& classes() const { return classes_; }
  const std::vector<std::uint8_t>& grid() const { return grid_; }

  int at(int row, int col) const {
    return grid_[static_cast<std::size_t>(row) * width_ + col];
  }

  bool operator==(const SemanticMap&) const = default;

 private:
  int height_;
  int width_;
  std::vector<std::string> classes_;
  std::vector<std::uint8_t> grid_;
};

// (H*W) x C indicator matrix, row r*W+c holds a single 1 at the pixel's class.
struct OneHotLayout {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int row, int col) const {
    return data[static_cast<std::size_t>(row) * cols + col];
  }
};

// Grid from a P5 PGM (pixel value == class index) plus a JSON sidecar
// {"0": "sky", "1": "street light", ...}.
SemanticMap load_semantic_map(const std::filesystem::path& pgm_path,
                              const std::filesystem::path& sidecar_path);
void save_semantic_map(const SemanticMap& map, const std::filesystem::path& pgm_path,
                       const std::filesystem::path& sidecar_path);

std::vector<std::string> parse_class_sidecar(const std::string& json_text);
std::string class_sidecar_json(const std::vector<std::string>& classes);

OneHotLayout one_hot_layout(const SemanticMap& map);

// Distinct grid values, ascending.
std::vector<int> present_classes(const SemanticMap& map);

}  // namespace place
