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

#include <cstddef>
#include <string_view>

namespace place::kernels {

// Dense float kernels behind the tensor engine. Every backend computes each
// output element with the same operation order (one multiply-add per k step,
// k ascending), so results do not depend on how rows are blocked; backends
// differ only in whether the multiply-add is fused.

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  Backend backend;
  std::string_view name;
  // C[m,n] (+)= A[m,k] * B[k,n]. A element (i, p) lives at
  // a[i * a_row + p * a_col], so a transposed A needs no copy. B and C are
  // row-major with leading dimensions.
  void (*gemm)(int m, int n, int k, const float* a, int a_row, int a_col, const float* b,
               int ldb, float* c, int ldc, bool accumulate);
  float (*dot)(const float* x, const float* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(std::size_t n, float alpha, const float* x, float* y);
};

const KernelTable& scalar_kernels();
// nullptr when the build has no AVX2 translation unit.
const KernelTable* avx2_kernels();

bool cpu_supports_avx2();

// The table used by the tensor engine. Chosen once from PLACE_KERNELS
// (scalar | avx2 | auto, default auto) and overridable at runtime.
const KernelTable& active();
void select_backend(Backend backend);
Backend parse_backend(std::string_view name);

// C (+)= op(A) * op(B) with op = transpose when the flag is set. A is m x k
// after op, B is k x n after op; inputs are densely packed.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a,
          const float* b, float* c, bool accumulate);

}  // namespace place::kernels
