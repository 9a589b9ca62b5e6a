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

#include <immintrin.h>

#include <cstddef>
#include <vector>

#include "place/kernels.hpp"

namespace place::kernels {
namespace {

constexpr int kRows = 6;

inline __m256i tail_mask(int cols) {
  alignas(32) static const int kLanes[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                             0,  0,  0,  0,  0,  0,  0,  0};
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(kLanes + 8 - cols));
}

// Kernels read A from a packed panel: element (r, p) at a[p * R + r].
// R rows x 16 columns.
template <int R>
inline void block16(int k, const float* a, const float* b, int ldb, float* c, int ldc,
                    bool accumulate) {
  __m256 lo[R];
  __m256 hi[R];
  for (int r = 0; r < R; ++r) {
    if (accumulate) {
      lo[r] = _mm256_loadu_ps(c + r * ldc);
      hi[r] = _mm256_loadu_ps(c + r * ldc + 8);
    } else {
      lo[r] = _mm256_setzero_ps();
      hi[r] = _mm256_setzero_ps();
    }
  }
  for (int p = 0; p < k; ++p) {
    const float* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
    const __m256 b0 = _mm256_loadu_ps(brow);
    const __m256 b1 = _mm256_loadu_ps(brow + 8);
    const float* ap = a + p * R;
    for (int r = 0; r < R; ++r) {
      const __m256 av = _mm256_broadcast_ss(ap + r);
      lo[r] = _mm256_fmadd_ps(av, b0, lo[r]);
      hi[r] = _mm256_fmadd_ps(av, b1, hi[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    _mm256_storeu_ps(c + r * ldc, lo[r]);
    _mm256_storeu_ps(c + r * ldc + 8, hi[r]);
  }
}

// R rows x `cols` (1..8) columns.
template <int R>
inline void block8(int k, int cols, const float* a, const float* b, int ldb, float* c, int ldc,
                   bool accumulate) {
  const __m256i mask = tail_mask(cols);
  __m256 acc[R];
  for (int r = 0; r < R; ++r) {
    acc[r] = accumulate ? _mm256_maskload_ps(c + r * ldc, mask) : _mm256_setzero_ps();
  }
  for (int p = 0; p < k; ++p) {
    const __m256 bv = _mm256_maskload_ps(b + static_cast<std::ptrdiff_t>(p) * ldb, mask);
    const float* ap = a + p * R;
    for (int r = 0; r < R; ++r) {
      acc[r] = _mm256_fmadd_ps(_mm256_broadcast_ss(ap + r), bv, acc[r]);
    }
  }
  for (int r = 0; r < R; ++r) _mm256_maskstore_ps(c + r * ldc, mask, acc[r]);
}

template <int R>
void row_panel(int n, int k, const float* a, int a_row, int a_col, const float* b, int ldb, float* c,
               int ldc, bool accumulate, float* pack) {
  if (a_col == 1) {
    for (int r = 0; r < R; ++r) {
      const float* src = a + static_cast<std::ptrdiff_t>(r) * a_row;
      for (int p = 0; p < k; ++p) pack[p * R + r] = src[p];
    }
  } else {
    for (int p = 0; p < k; ++p) {
      const float* src = a + static_cast<std::ptrdiff_t>(p) * a_col;
      for (int r = 0; r < R; ++r) pack[p * R + r] = src[static_cast<std::ptrdiff_t>(r) * a_row];
    }
  }
  int j = 0;
  for (; j + 16 <= n; j += 16) {
    block16<R>(k, pack, b + j, ldb, c + j, ldc, accumulate);
  }
  for (; j < n; j += 8) {
    const int cols = n - j < 8 ? n - j : 8;
    block8<R>(k, cols, pack, b + j, ldb, c + j, ldc, accumulate);
  }
}

// Blocking over k keeps the B slab cache resident. Each C element still
// sees its products in ascending k order, so results do not depend on the
// block size.
constexpr int kDepth = 256;

void gemm_avx2(int m, int n, int k, const float* a, int a_row, int a_col, const float* b,
               int ldb, float* c, int ldc, bool accumulate) {
  thread_local std::vector<float> pack;
  pack.resize(static_cast<std::size_t>(kRows) * kDepth);
  if (k == 0) {
    if (!accumulate) {
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) c[static_cast<std::ptrdiff_t>(i) * ldc + j] = 0.0f;
      }
    }
    return;
  }
  for (int p0 = 0; p0 < k; p0 += kDepth) {
    const int kc = k - p0 < kDepth ? k - p0 : kDepth;
    const bool acc = accumulate || p0 > 0;
    const float* ak = a + static_cast<std::ptrdiff_t>(p0) * a_col;
    const float* bk = b + static_cast<std::ptrdiff_t>(p0) * ldb;
    int i = 0;
    for (; i + kRows <= m; i += kRows) {
      row_panel<kRows>(n, kc, ak + static_cast<std::ptrdiff_t>(i) * a_row, a_row, a_col, bk, ldb,
                       c + static_cast<std::ptrdiff_t>(i) * ldc, ldc, acc, pack.data());
    }
    const float* ai = ak + static_cast<std::ptrdiff_t>(i) * a_row;
    float* ci = c + static_cast<std::ptrdiff_t>(i) * ldc;
    switch (m - i) {
      case 5: row_panel<5>(n, kc, ai, a_row, a_col, bk, ldb, ci, ldc, acc, pack.data()); break;
      case 4: row_panel<4>(n, kc, ai, a_row, a_col, bk, ldb, ci, ldc, acc, pack.data()); break;
      case 3: row_panel<3>(n, kc, ai, a_row, a_col, bk, ldb, ci, ldc, acc, pack.data()); break;
      case 2: row_panel<2>(n, kc, ai, a_row, a_col, bk, ldb, ci, ldc, acc, pack.data()); break;
      case 1: row_panel<1>(n, kc, ai, a_row, a_col, bk, ldb, ci, ldc, acc, pack.data()); break;
      default: break;
    }
  }
}

float dot_avx2(const float* x, const float* y, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
  }
  const __m256 acc = _mm256_add_ps(acc0, acc1);
  __m128 s = _mm_add_ps(_mm256_castps256_ps128(acc), _mm256_extractf128_ps(acc, 1));
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_movehdup_ps(s));
  float sum = _mm_cvtss_f32(s);
  for (; i < n; ++i) sum += x[i] * y[i];
  return sum;
}

void axpy_avx2(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{Backend::kAvx2, "avx2", &gemm_avx2, &dot_avx2,
                                 &axpy_avx2};
  return &table;
}

}  // namespace place::kernels
