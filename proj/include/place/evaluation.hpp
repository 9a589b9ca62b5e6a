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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "place/image_io.hpp"
#include "place/layout_control.hpp"
#include "place/semantic_map.hpp"
#include "place/synth_data.hpp"

namespace place {

// Nearest canonical color under L-infinity within `threshold`, else class 0.
SemanticMap oracle_segment(const RgbImage& image, const std::vector<std::string>& classes = shape_classes(),
                           const std::vector<Color>& palette = canonical_colors(), float threshold = 0.15f);

struct SegmentationResult {
  double miou = 0.0;
  // IoU per class; nullopt for classes absent from the ground truth.
  std::vector<std::optional<double>> per_class;
};

SegmentationResult miou(const SemanticMap& pred, const SemanticMap& gt);

// Dataset-level IoU: intersections and unions are summed over images before
// dividing, and the mean runs over classes present in any ground truth.
class IouAccumulator {
 public:
  explicit IouAccumulator(int num_classes);
  void add(const SemanticMap& pred, const SemanticMap& gt);
  SegmentationResult result() const;
  int images() const { return images_; }

 private:
  std::vector<long long> inter_;
  std::vector<long long> uni_;
  std::vector<long long> gt_count_;
  int images_ = 0;
};

struct FidelityRow {
  int map_index = 0;
  int factor = 0;
  double lcm_accuracy = 0.0;
  double nearest_accuracy = 0.0;
};

// Pixel accuracy, at latent resolution, of the maps reconstructed from the
// coverage layout and from the nearest baseline against the majority-class
// downsample. Latent side = max(1, side / factor).
std::vector<FidelityRow> layout_fidelity_report(const std::vector<SemanticMap>& maps, const std::vector<int>& factors);
void write_fidelity_csv(const std::filesystem::path& path, const std::vector<FidelityRow>& rows);

// Identity token-to-class map covering every class of `map`.
TokenClassMap identity_token_classes(int num_classes);

double pixel_accuracy(const SemanticMap& pred, const SemanticMap& gt);

}  // namespace place
