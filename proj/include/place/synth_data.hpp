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

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "place/image_io.hpp"
#include "place/rng.hpp"
#include "place/semantic_map.hpp"
#include "place/text_semantics.hpp"

namespace place {

enum class ShapeKind { kCircle, kSquare, kTriangle, kStripe };

// Background plus one class per shape kind, in this index order.
const std::vector<std::string>& shape_classes();
using Color = std::array<float, 3>;
// Canonical colors indexed like shape_classes().
const std::vector<Color>& canonical_colors();

struct SynthConfig {
  int size = 32;
  int min_shapes = 1;
  int max_shapes = 3;
  float jitter = 0.05f;
  std::string heldout_class = "triangle";
  int placement_attempts = 100;

  int heldout_index() const;
};

struct ShapeInstance {
  int class_index = 0;
  ShapeKind kind = ShapeKind::kCircle;
  double center_row = 0.0;
  double center_col = 0.0;
  int size = 0;        // radius, side, base or length
  int thickness = 1;   // stripes only
  bool vertical = false;
  Color color{};
};

struct Scene {
  std::uint64_t seed = 0;
  std::vector<ShapeInstance> shapes;
  SemanticMap map;
  RgbImage image;
  std::string caption;
};

enum class HeldoutPolicy { kExclude, kAllow, kRequire };

// Deterministic in seed. kExclude never draws the held-out class; kRequire
// draws it as the first shape.
Scene gen_scene(std::uint64_t seed, const SynthConfig& config = {},
                HeldoutPolicy policy = HeldoutPolicy::kExclude);

struct LayoutFreePair {
  std::uint64_t seed = 0;
  RgbImage image;
  std::string caption;
  std::vector<int> classes;  // ascending, background included
};

LayoutFreePair gen_layout_free_pair(std::uint64_t seed, bool heldout_allowed, const SynthConfig& config = {});

// Pixels rasterized for one shape (row-major indices).
std::vector<int> rasterize(const ShapeInstance& shape, int size);

// Dataset split sizes for write_dataset; the remainder goes to "train".
struct DatasetSplits {
  double val_fraction = 0.1;
  double lf_fraction = 0.5;
  double novel_fraction = 0.0;
};

struct ManifestEntry {
  int index = 0;
  std::uint64_t seed = 0;
  std::string split;  // train | val | novel | lf
  std::string caption;
  bool has_map = false;
};

// images/NNNN.ppm for every entry, maps/NNNN.pgm for labeled entries,
// manifest.json listing seeds, captions and splits.
std::vector<ManifestEntry> write_dataset(int count, const std::filesystem::path& out_dir, std::uint64_t seed,
                                         const SynthConfig& config = {}, const DatasetSplits& splits = {},
                                         int jobs = 1);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);
std::filesystem::path dataset_image_path(const std::filesystem::path& dir, int index);
std::filesystem::path dataset_map_path(const std::filesystem::path& dir, int index);

// Maps of 1-px horizontal "wire" and vertical "pole" lines over background.
SemanticMap thin_structure_map(std::uint64_t seed, int size = 64);

// Images in [-1, 1] as the model consumes them, and back.
std::vector<float> image_to_model(const RgbImage& image);
RgbImage model_to_image(const float* data, int size);

}  // namespace place
