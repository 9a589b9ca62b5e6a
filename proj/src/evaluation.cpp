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

#include "place/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "place/error.hpp"

namespace place {

SemanticMap oracle_segment(const RgbImage& image, const std::vector<std::string>& classes,
                           const std::vector<Color>& palette, float threshold) {
  if (palette.size() != classes.size()) throw Error(ErrorCode::kDimMismatch, "palette size differs from class count");
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(image.width) * image.height, 0);
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      int best = -1;
      float best_d = 0.0f;
      for (int k = 0; k < static_cast<int>(palette.size()); ++k) {
        float d = 0.0f;
        for (int ch = 0; ch < 3; ++ch) d = std::max(d, std::abs(image.at(r, c, ch) - palette[k][ch]));
        if (best < 0 || d < best_d) {
          best = k;
          best_d = d;
        }
      }
      grid[static_cast<std::size_t>(r) * image.width + c] = best_d <= threshold ? static_cast<std::uint8_t>(best) : 0;
    }
  }
  return SemanticMap(image.height, image.width, classes, std::move(grid));
}

IouAccumulator::IouAccumulator(int num_classes)
    : inter_(num_classes, 0), uni_(num_classes, 0), gt_count_(num_classes, 0) {}

void IouAccumulator::add(const SemanticMap& pred, const SemanticMap& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw Error(ErrorCode::kDimMismatch, "prediction and ground truth sizes differ");
  }
  const int n = static_cast<int>(inter_.size());
  if (pred.num_classes() > n || gt.num_classes() > n) throw Error(ErrorCode::kDimMismatch, "class count");
  const auto& p = pred.grid();
  const auto& g = gt.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    ++gt_count_[g[i]];
    if (p[i] == g[i]) {
      ++inter_[g[i]];
      ++uni_[g[i]];
    } else {
      ++uni_[g[i]];
      ++uni_[p[i]];
    }
  }
  ++images_;
}

SegmentationResult IouAccumulator::result() const {
  SegmentationResult r;
  r.per_class.assign(inter_.size(), std::nullopt);
  double sum = 0.0;
  int present = 0;
  for (std::size_t k = 0; k < inter_.size(); ++k) {
    if (gt_count_[k] == 0) continue;
    const double iou = static_cast<double>(inter_[k]) / static_cast<double>(uni_[k]);
    r.per_class[k] = iou;
    sum += iou;
    ++present;
  }
  r.miou = present ? sum / present : 0.0;
  return r;
}

SegmentationResult miou(const SemanticMap& pred, const SemanticMap& gt) {
  IouAccumulator acc(std::max(pred.num_classes(), gt.num_classes()));
  acc.add(pred, gt);
  return acc.result();
}

TokenClassMap identity_token_classes(int num_classes) {
  TokenClassMap tcm(num_classes);
  for (int k = 0; k < num_classes; ++k) tcm[k] = k;
  return tcm;
}

double pixel_accuracy(const SemanticMap& pred, const SemanticMap& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw Error(ErrorCode::kDimMismatch, "prediction and ground truth sizes differ");
  }
  long long hit = 0;
  for (std::size_t i = 0; i < gt.grid().size(); ++i) hit += pred.grid()[i] == gt.grid()[i];
  return static_cast<double>(hit) / static_cast<double>(gt.grid().size());
}

std::vector<FidelityRow> layout_fidelity_report(const std::vector<SemanticMap>& maps, const std::vector<int>& factors) {
  std::vector<FidelityRow> rows;
  for (std::size_t m = 0; m < maps.size(); ++m) {
    const SemanticMap& map = maps[m];
    const TokenClassMap tcm = identity_token_classes(map.num_classes());
    for (int f : factors) {
      if (f < 1) throw Error(ErrorCode::kMalformedConfig, "downsample factor must be positive");
      const Dims latent{std::max(1, map.height() / f), std::max(1, map.width() / f)};
      const SemanticMap truth = majority_downsample(map, latent);
      const SemanticMap via_lcm = reconstruct_map(compute_lcm(map, latent, tcm), tcm, map.classes());
      const SemanticMap via_nearest = reconstruct_map(nearest_lcm_baseline(map, latent, tcm), tcm, map.classes());
      rows.push_back({static_cast<int>(m), f, pixel_accuracy(via_lcm, truth), pixel_accuracy(via_nearest, truth)});
    }
  }
  return rows;
}

void write_fidelity_csv(const std::filesystem::path& path, const std::vector<FidelityRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out << "map,factor,lcm_accuracy,nearest_accuracy\n";
  for (const auto& r : rows) {
    out << r.map_index << ',' << r.factor << ',' << r.lcm_accuracy << ',' << r.nearest_accuracy << '\n';
  }
}

}  // namespace place
