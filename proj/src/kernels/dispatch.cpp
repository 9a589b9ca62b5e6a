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

#include <algorithm>
#include <cstdlib>
#include <string>
#include <vector>

#include "place/error.hpp"
#include "place/kernels.hpp"

namespace place::kernels {

#ifndef PLACE_HAVE_AVX2
const KernelTable* avx2_kernels() { return nullptr; }
#endif

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const KernelTable* best_available() {
  if (avx2_kernels() != nullptr && cpu_supports_avx2()) return avx2_kernels();
  return &scalar_kernels();
}

const KernelTable* initial_table() {
  const char* env = std::getenv("PLACE_KERNELS");
  if (env == nullptr || std::string(env) == "auto" || std::string(env).empty()) {
    return best_available();
  }
  if (parse_backend(env) == Backend::kScalar) return &scalar_kernels();
  return best_available();
}

const KernelTable*& current() {
  static const KernelTable* table = initial_table();
  return table;
}

}  // namespace

Backend parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::kScalar;
  if (name == "avx2") return Backend::kAvx2;
  throw std::invalid_argument("unknown kernel backend: " + std::string(name));
}

const KernelTable& active() { return *current(); }

void select_backend(Backend backend) {
  if (backend == Backend::kScalar) {
    current() = &scalar_kernels();
    return;
  }
  if (avx2_kernels() == nullptr || !cpu_supports_avx2()) {
    throw std::runtime_error("avx2 kernels are not available on this machine");
  }
  current() = avx2_kernels();
}

namespace {

// dst[c * rows + r] = src[r * cols + c], in cache-sized tiles.
void transpose(const float* src, int rows, int cols, float* dst) {
  constexpr int kTile = 32;
  for (int r0 = 0; r0 < rows; r0 += kTile) {
    const int r1 = std::min(rows, r0 + kTile);
    for (int c0 = 0; c0 < cols; c0 += kTile) {
      const int c1 = std::min(cols, c0 + kTile);
      for (int r = r0; r < r1; ++r) {
        const float* s = src + static_cast<std::size_t>(r) * cols;
        for (int c = c0; c < c1; ++c) dst[static_cast<std::size_t>(c) * rows + r] = s[c];
      }
    }
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a,
          const float* b, float* c, bool accumulate) {
  thread_local std::vector<float> pack_b;
  if (trans_b) {
    // b is stored n x k
    pack_b.resize(static_cast<std::size_t>(k) * n);
    transpose(b, n, k, pack_b.data());
    b = pack_b.data();
  }
    // A stored k x m when transposed.
  if (trans_a) {
    active().gemm(m, n, k, a, 1, m, b, n, c, n, accumulate);
  } else {
    active().gemm(m, n, k, a, k, 1, b, n, c, n, accumulate);
  }
}

}  // namespace place::kernels
