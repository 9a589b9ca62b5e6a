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

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "place/error.hpp"
#include "place/rng.hpp"
#include "place/semantic_map.hpp"
#include "place/tensor.hpp"

namespace place::testing {

inline std::vector<std::string> class_names(int n) {
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("c" + std::to_string(i));
  return names;
}

// Blocky random map: rectangles of random classes painted over class 0, so
// coverage fractions are not all 0 or 1.
inline SemanticMap random_map(Rng& rng, int h, int w, int classes) {
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(h) * w, 0);
  const int rects = static_cast<int>(rng.uniform_int(1, 6));
  for (int k = 0; k < rects; ++k) {
    const int r0 = static_cast<int>(rng.uniform_int(0, h - 1));
    const int c0 = static_cast<int>(rng.uniform_int(0, w - 1));
    const int r1 = static_cast<int>(rng.uniform_int(r0 + 1, h));
    const int c1 = static_cast<int>(rng.uniform_int(c0 + 1, w));
    const auto cls = static_cast<std::uint8_t>(rng.uniform_int(0, classes - 1));
    for (int r = r0; r < r1; ++r) {
      for (int c = c0; c < c1; ++c) grid[static_cast<std::size_t>(r) * w + c] = cls;
    }
  }
  // A sprinkling of single pixels.
  const int dots = static_cast<int>(rng.uniform_int(0, h * w / 8));
  for (int k = 0; k < dots; ++k) {
    grid[rng.uniform_int(0, h * w - 1)] = static_cast<std::uint8_t>(rng.uniform_int(0, classes - 1));
  }
  return SemanticMap(h, w, class_names(classes), std::move(grid));
}

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(scale * rng.normal());
  return t;
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max(1e-6, std::max(std::abs(a), std::abs(b)));
}

template <typename F>
ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected place::Error");
}

}  // namespace place::testing
