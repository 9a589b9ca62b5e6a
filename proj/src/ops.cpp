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

#include "place/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "place/error.hpp"
#include "place/kernels.hpp"

namespace place::ag {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kShapeMismatch, what);
}

void accumulate(Tensor& dst, const Tensor& src) {
  float* d = dst.data();
  const float* s = src.data();
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += s[i];
}

Tensor& grad_of(const Var& v) { return v.node()->ensure_grad(); }

struct Nhwc {
  int b, h, w, c;
  explicit Nhwc(const Tensor& t) : b(t.dim(0)), h(t.dim(1)), w(t.dim(2)), c(t.dim(3)) {}
};

void im2col(const float* x, int h, int w, int c, float* col) {
  const int row_len = 9 * c;
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      float* dst = col + static_cast<std::size_t>(y * w + xx) * row_len;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = xx + kx - 1;
          float* cell = dst + (ky * 3 + kx) * c;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
            std::fill(cell, cell + c, 0.0f);
          } else {
            std::copy_n(x + static_cast<std::size_t>(sy * w + sx) * c, c, cell);
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, int h, int w, int c, float* dx) {
  const int row_len = 9 * c;
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      const float* src = col + static_cast<std::size_t>(y * w + xx) * row_len;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = xx + kx - 1;
          if (sx < 0 || sx >= w) continue;
          const float* cell = src + (ky * 3 + kx) * c;
          float* out = dx + static_cast<std::size_t>(sy * w + sx) * c;
          for (int ci = 0; ci < c; ++ci) out[ci] += cell[ci];
        }
      }
    }
  }
}

void softmax_rows(float* data, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    float* row = data + static_cast<std::size_t>(r) * cols;
    const float mx = *std::max_element(row, row + cols);
    float sum = 0.0f;
    for (int j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    const float inv = 1.0f / sum;
    for (int j = 0; j < cols; ++j) row[j] *= inv;
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor out = a.value();
  accumulate(out, b.value());
  return Var::make(std::move(out), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) accumulate(grad_of(a), self.grad);
    if (b.requires_grad()) accumulate(grad_of(b), self.grad);
  });
}

Var scale(const Var& a, float s) {
  Tensor out = a.value();
  for (float& v : out.storage()) v *= s;
  return Var::make(std::move(out), {a}, [a, s](Node& self) {
    Tensor& g = grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var reshape(const Var& x, Shape shape) {
  return Var::make(x.value().reshaped(std::move(shape)), {x}, [x](Node& self) {
    accumulate(grad_of(x), self.grad);
  });
}

Var linear(const Var& x, const Var& w) { return linear(x, w, Var()); }

Var linear(const Var& x, const Var& w, const Var& b) {
  const int k = w.value().dim(0);
  const int n = w.value().dim(1);
  require(x.value().rank() >= 1 && x.value().dim(-1) == k,
          "linear: input " + shape_string(x.shape()) + " vs weight " + shape_string(w.shape()));
  const int m = static_cast<int>(x.value().size() / k);
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  kernels::gemm(false, false, m, n, k, x.value().data(), w.value().data(), out.data(), false);
  if (b.defined()) {
    require(b.value().size() == static_cast<std::size_t>(n), "linear: bias size");
    for (int i = 0; i < m; ++i) {
      kernels::active().axpy(n, 1.0f, b.value().data(), out.data() + static_cast<std::size_t>(i) * n);
    }
  }
  std::vector<Var> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return Var::make(std::move(out), std::move(parents), [x, w, b, m, n, k](Node& self) {
    const float* dy = self.grad.data();
    if (x.requires_grad()) kernels::gemm(false, true, m, k, n, dy, w.value().data(), grad_of(x).data(), true);
    if (w.requires_grad()) kernels::gemm(true, false, k, n, m, x.value().data(), dy, grad_of(w).data(), true);
    if (b.defined() && b.requires_grad()) {
      float* db = grad_of(b).data();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) db[j] += dy[static_cast<std::size_t>(i) * n + j];
      }
    }
  });
}

Var conv3x3(const Var& x, const Var& w, const Var& b) {
  require(x.value().rank() == 4, "conv3x3: input must be NHWC");
  const Nhwc s(x.value());
  const int cout = w.value().dim(1);
  require(w.value().dim(0) == 9 * s.c, "conv3x3: weight rows must be 9*cin");
  const int hw = s.h * s.w;
  Tensor out({s.b, s.h, s.w, cout});
  std::vector<float> col(static_cast<std::size_t>(hw) * 9 * s.c);
  for (int bi = 0; bi < s.b; ++bi) {
    im2col(x.value().data() + static_cast<std::size_t>(bi) * hw * s.c, s.h, s.w, s.c, col.data());
    float* y = out.data() + static_cast<std::size_t>(bi) * hw * cout;
    kernels::gemm(false, false, hw, cout, 9 * s.c, col.data(), w.value().data(), y, false);
    for (int p = 0; p < hw; ++p) {
      kernels::active().axpy(cout, 1.0f, b.value().data(), y + static_cast<std::size_t>(p) * cout);
    }
  }
  return Var::make(std::move(out), {x, w, b}, [x, w, b, s, cout, hw](Node& self) {
    std::vector<float> col(static_cast<std::size_t>(hw) * 9 * s.c);
    for (int bi = 0; bi < s.b; ++bi) {
      const float* dy = self.grad.data() + static_cast<std::size_t>(bi) * hw * cout;
      if (w.requires_grad()) {
        im2col(x.value().data() + static_cast<std::size_t>(bi) * hw * s.c, s.h, s.w, s.c, col.data());
        kernels::gemm(true, false, 9 * s.c, cout, hw, col.data(), dy, grad_of(w).data(), true);
      }
      if (x.requires_grad()) {
        kernels::gemm(false, true, hw, 9 * s.c, cout, dy, w.value().data(), col.data(), false);
        col2im_add(col.data(), s.h, s.w, s.c, grad_of(x).data() + static_cast<std::size_t>(bi) * hw * s.c);
      }
      if (b.requires_grad()) {
        float* db = grad_of(b).data();
        for (int p = 0; p < hw; ++p) {
          for (int j = 0; j < cout; ++j) db[j] += dy[static_cast<std::size_t>(p) * cout + j];
        }
      }
    }
  });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, float eps) {
  require(x.value().rank() == 4, "group_norm: input must be NHWC");
  const Nhwc s(x.value());
  require(s.c % groups == 0, "group_norm: channels not divisible by groups");
  const int cg = s.c / groups;
  const int hw = s.h * s.w;
  const double count = static_cast<double>(hw) * cg;
  auto mean = std::make_shared<std::vector<float>>(static_cast<std::size_t>(s.b) * groups);
  auto rstd = std::make_shared<std::vector<float>>(mean->size());
  Tensor out(x.shape());
  const float* xv = x.value().data();
  const float* gv = gamma.value().data();
  const float* bv = beta.value().data();
  for (int bi = 0; bi < s.b; ++bi) {
    const float* xb = xv + static_cast<std::size_t>(bi) * hw * s.c;
    float* yb = out.data() + static_cast<std::size_t>(bi) * hw * s.c;
    for (int g = 0; g < groups; ++g) {
      double sum = 0.0;
      double sq = 0.0;
      for (int p = 0; p < hw; ++p) {
        for (int ci = g * cg; ci < (g + 1) * cg; ++ci) {
          const double v = xb[static_cast<std::size_t>(p) * s.c + ci];
          sum += v;
          sq += v * v;
        }
      }
      const double mu = sum / count;
      const double var = std::max(0.0, sq / count - mu * mu);
      const float r = static_cast<float>(1.0 / std::sqrt(var + eps));
      (*mean)[bi * groups + g] = static_cast<float>(mu);
      (*rstd)[bi * groups + g] = r;
      for (int p = 0; p < hw; ++p) {
        for (int ci = g * cg; ci < (g + 1) * cg; ++ci) {
          const std::size_t idx = static_cast<std::size_t>(p) * s.c + ci;
          yb[idx] = (xb[idx] - static_cast<float>(mu)) * r * gv[ci] + bv[ci];
        }
      }
    }
  }
  return Var::make(std::move(out), {x, gamma, beta},
                   [x, gamma, beta, s, groups, cg, hw, count, mean, rstd](Node& self) {
    const float* xv = x.value().data();
    const float* gv = gamma.value().data();
    const float* dy = self.grad.data();
    float* dx = x.requires_grad() ? grad_of(x).data() : nullptr;
    float* dg = gamma.requires_grad() ? grad_of(gamma).data() : nullptr;
    float* db = beta.requires_grad() ? grad_of(beta).data() : nullptr;
    for (int bi = 0; bi < s.b; ++bi) {
      const std::size_t base = static_cast<std::size_t>(bi) * hw * s.c;
      for (int g = 0; g < groups; ++g) {
        const float mu = (*mean)[bi * groups + g];
        const float r = (*rstd)[bi * groups + g];
        double sum_dxhat = 0.0;
        double sum_dxhat_xhat = 0.0;
        for (int p = 0; p < hw; ++p) {
          for (int ci = g * cg; ci < (g + 1) * cg; ++ci) {
            const std::size_t idx = base + static_cast<std::size_t>(p) * s.c + ci;
            const float xhat = (xv[idx] - mu) * r;
            const float dxhat = dy[idx] * gv[ci];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += static_cast<double>(dxhat) * xhat;
            if (dg) dg[ci] += dy[idx] * xhat;
            if (db) db[ci] += dy[idx];
          }
        }
        if (!dx) continue;
        const float m1 = static_cast<float>(sum_dxhat / count);
        const float m2 = static_cast<float>(sum_dxhat_xhat / count);
        for (int p = 0; p < hw; ++p) {
          for (int ci = g * cg; ci < (g + 1) * cg; ++ci) {
            const std::size_t idx = base + static_cast<std::size_t>(p) * s.c + ci;
            const float xhat = (xv[idx] - mu) * r;
            dx[idx] += r * (dy[idx] * gv[ci] - m1 - xhat * m2);
          }
        }
      }
    }
  });
}

Var silu(const Var& x) {
  Tensor out(x.shape());
  const float* xv = x.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] / (1.0f + std::exp(-xv[i]));
  return Var::make(std::move(out), {x}, [x](Node& self) {
    const float* xv = x.value().data();
    float* dx = grad_of(x).data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const float sg = 1.0f / (1.0f + std::exp(-xv[i]));
      dx[i] += self.grad[i] * sg * (1.0f + xv[i] * (1.0f - sg));
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x.shape());
  const float* xv = x.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0f / (1.0f + std::exp(-xv[i]));
  return Var::make(std::move(out), {x}, [x](Node& self) {
    float* dx = grad_of(x).data();
    const Tensor& y = self.value;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i] * y[i] * (1.0f - y[i]);
  });
}

Var add_channel(const Var& x, const Var& v) {
  const Nhwc s(x.value());
  require(v.value().rank() == 2 && v.value().dim(0) == s.b && v.value().dim(1) == s.c,
          "add_channel: " + shape_string(v.shape()) + " vs " + shape_string(x.shape()));
  Tensor out = x.value();
  const int hw = s.h * s.w;
  for (int bi = 0; bi < s.b; ++bi) {
    for (int p = 0; p < hw; ++p) {
      float* px = out.data() + (static_cast<std::size_t>(bi) * hw + p) * s.c;
      const float* pv = v.value().data() + static_cast<std::size_t>(bi) * s.c;
      for (int ci = 0; ci < s.c; ++ci) px[ci] += pv[ci];
    }
  }
  return Var::make(std::move(out), {x, v}, [x, v, s, hw](Node& self) {
    if (x.requires_grad()) accumulate(grad_of(x), self.grad);
    if (v.requires_grad()) {
      float* dv = grad_of(v).data();
      for (int bi = 0; bi < s.b; ++bi) {
        for (int p = 0; p < hw; ++p) {
          const float* g = self.grad.data() + (static_cast<std::size_t>(bi) * hw + p) * s.c;
          for (int ci = 0; ci < s.c; ++ci) dv[bi * s.c + ci] += g[ci];
        }
      }
    }
  });
}

Var avg_pool2(const Var& x) {
  const Nhwc s(x.value());
  require(s.h % 2 == 0 && s.w % 2 == 0, "avg_pool2: odd spatial size");
  const int oh = s.h / 2;
  const int ow = s.w / 2;
  Tensor out({s.b, oh, ow, s.c});
  const float* xv = x.value().data();
  for (int bi = 0; bi < s.b; ++bi) {
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        float* o = out.data() + ((static_cast<std::size_t>(bi) * oh + y) * ow + xx) * s.c;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const float* src = xv + ((static_cast<std::size_t>(bi) * s.h + 2 * y + dy) * s.w + 2 * xx + dx) * s.c;
            for (int ci = 0; ci < s.c; ++ci) o[ci] += 0.25f * src[ci];
          }
        }
      }
    }
  }
  return Var::make(std::move(out), {x}, [x, s, oh, ow](Node& self) {
    float* dxv = grad_of(x).data();
    for (int bi = 0; bi < s.b; ++bi) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          const float* g = self.grad.data() + ((static_cast<std::size_t>(bi) * oh + y) * ow + xx) * s.c;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              float* dst = dxv + ((static_cast<std::size_t>(bi) * s.h + 2 * y + dy) * s.w + 2 * xx + dx) * s.c;
              for (int ci = 0; ci < s.c; ++ci) dst[ci] += 0.25f * g[ci];
            }
          }
        }
      }
    }
  });
}

Var upsample2(const Var& x) {
  const Nhwc s(x.value());
  const int oh = s.h * 2;
  const int ow = s.w * 2;
  Tensor out({s.b, oh, ow, s.c});
  const float* xv = x.value().data();
  for (int bi = 0; bi < s.b; ++bi) {
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        const float* src = xv + ((static_cast<std::size_t>(bi) * s.h + y / 2) * s.w + xx / 2) * s.c;
        std::copy_n(src, s.c, out.data() + ((static_cast<std::size_t>(bi) * oh + y) * ow + xx) * s.c);
      }
    }
  }
  return Var::make(std::move(out), {x}, [x, s, oh, ow](Node& self) {
    float* dxv = grad_of(x).data();
    for (int bi = 0; bi < s.b; ++bi) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          const float* g = self.grad.data() + ((static_cast<std::size_t>(bi) * oh + y) * ow + xx) * s.c;
          float* dst = dxv + ((static_cast<std::size_t>(bi) * s.h + y / 2) * s.w + xx / 2) * s.c;
          for (int ci = 0; ci < s.c; ++ci) dst[ci] += g[ci];
        }
      }
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Nhwc sa(a.value());
  const Nhwc sb(b.value());
  require(sa.b == sb.b && sa.h == sb.h && sa.w == sb.w, "concat_channels: spatial mismatch");
  const int c = sa.c + sb.c;
  const std::size_t pixels = static_cast<std::size_t>(sa.b) * sa.h * sa.w;
  Tensor out({sa.b, sa.h, sa.w, c});
  for (std::size_t p = 0; p < pixels; ++p) {
    std::copy_n(a.value().data() + p * sa.c, sa.c, out.data() + p * c);
    std::copy_n(b.value().data() + p * sb.c, sb.c, out.data() + p * c + sa.c);
  }
  return Var::make(std::move(out), {a, b}, [a, b, sa, sb, c, pixels](Node& self) {
    for (std::size_t p = 0; p < pixels; ++p) {
      const float* g = self.grad.data() + p * c;
      if (a.requires_grad()) {
        float* da = grad_of(a).data() + p * sa.c;
        for (int ci = 0; ci < sa.c; ++ci) da[ci] += g[ci];
      }
      if (b.requires_grad()) {
        float* db = grad_of(b).data() + p * sb.c;
        for (int ci = 0; ci < sb.c; ++ci) db[ci] += g[sa.c + ci];
      }
    }
  });
}

Var embedding(const Var& table, const std::vector<int>& indices) {
  const int vocab = table.value().dim(0);
  const int d = table.value().dim(1);
  Tensor out({static_cast<int>(indices.size()), d});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= vocab) {
      throw Error(ErrorCode::kIndexOutOfRange,
                  "token " + std::to_string(indices[i]) + " outside vocabulary of " + std::to_string(vocab));
    }
    std::copy_n(table.value().data() + static_cast<std::size_t>(indices[i]) * d, d, out.data() + i * d);
  }
  return Var::make(std::move(out), {table}, [table, indices, d](Node& self) {
    float* dt = grad_of(table).data();
    for (std::size_t i = 0; i < indices.size(); ++i) {
      float* row = dt + static_cast<std::size_t>(indices[i]) * d;
      for (int j = 0; j < d; ++j) row[j] += self.grad[i * d + j];
    }
  });
}

Var attention_probs(const Var& q, const Var& k, float scale) {
  require(q.value().rank() == 3 && k.value().rank() == 3 && q.value().dim(0) == k.value().dim(0) &&
              q.value().dim(2) == k.value().dim(2),
          "attention_probs: " + shape_string(q.shape()) + " vs " + shape_string(k.shape()));
  const int batch = q.value().dim(0);
  const int t = q.value().dim(1);
  const int sk = k.value().dim(1);
  const int d = q.value().dim(2);
  Tensor out({batch, t, sk});
  for (int bi = 0; bi < batch; ++bi) {
    float* a = out.data() + static_cast<std::size_t>(bi) * t * sk;
    kernels::gemm(false, true, t, sk, d, q.value().data() + static_cast<std::size_t>(bi) * t * d,
                  k.value().data() + static_cast<std::size_t>(bi) * sk * d, a, false);
    for (std::size_t i = 0; i < static_cast<std::size_t>(t) * sk; ++i) a[i] *= scale;
    softmax_rows(a, t, sk);
  }
  return Var::make(std::move(out), {q, k}, [q, k, batch, t, sk, d, scale](Node& self) {
    std::vector<float> ds(static_cast<std::size_t>(t) * sk);
    for (int bi = 0; bi < batch; ++bi) {
      const float* a = self.value.data() + static_cast<std::size_t>(bi) * t * sk;
      const float* da = self.grad.data() + static_cast<std::size_t>(bi) * t * sk;
      for (int i = 0; i < t; ++i) {
        const std::size_t row = static_cast<std::size_t>(i) * sk;
        const float inner = kernels::active().dot(a + row, da + row, sk);
        for (int j = 0; j < sk; ++j) ds[row + j] = a[row + j] * (da[row + j] - inner) * scale;
      }
      if (q.requires_grad()) {
        kernels::gemm(false, false, t, d, sk, ds.data(), k.value().data() + static_cast<std::size_t>(bi) * sk * d,
                      grad_of(q).data() + static_cast<std::size_t>(bi) * t * d, true);
      }
      if (k.requires_grad()) {
        kernels::gemm(true, false, sk, d, t, ds.data(), q.value().data() + static_cast<std::size_t>(bi) * t * d,
                      grad_of(k).data() + static_cast<std::size_t>(bi) * sk * d, true);
      }
    }
  });
}

Var bmm(const Var& a, const Var& c) {
  require(a.value().rank() == 3 && c.value().rank() == 3 && a.value().dim(0) == c.value().dim(0) &&
              a.value().dim(2) == c.value().dim(1),
          "bmm: " + shape_string(a.shape()) + " vs " + shape_string(c.shape()));
  const int batch = a.value().dim(0);
  const int m = a.value().dim(1);
  const int k = a.value().dim(2);
  const int n = c.value().dim(2);
  Tensor out({batch, m, n});
  for (int bi = 0; bi < batch; ++bi) {
    kernels::gemm(false, false, m, n, k, a.value().data() + static_cast<std::size_t>(bi) * m * k,
                  c.value().data() + static_cast<std::size_t>(bi) * k * n,
                  out.data() + static_cast<std::size_t>(bi) * m * n, false);
  }
  return Var::make(std::move(out), {a, c}, [a, c, batch, m, k, n](Node& self) {
    for (int bi = 0; bi < batch; ++bi) {
      const float* dy = self.grad.data() + static_cast<std::size_t>(bi) * m * n;
      if (a.requires_grad()) {
        kernels::gemm(false, true, m, k, n, dy, c.value().data() + static_cast<std::size_t>(bi) * k * n,
                      grad_of(a).data() + static_cast<std::size_t>(bi) * m * k, true);
      }
      if (c.requires_grad()) {
        kernels::gemm(true, false, k, n, m, a.value().data() + static_cast<std::size_t>(bi) * m * k, dy,
                      grad_of(c).data() + static_cast<std::size_t>(bi) * k * n, true);
      }
    }
  });
}

Var mse(const Var& pred, const Tensor& target) {
  require(pred.value().shape() == target.shape(),
          "mse: " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
  double sum = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = static_cast<double>(pred.value()[i]) - target[i];
    sum += d * d;
  }
  const double n = static_cast<double>(target.size());
  return Var::make(Tensor({1}, {static_cast<float>(sum / n)}), {pred}, [pred, target, n](Node& self) {
    float* dp = grad_of(pred).data();
    const float g = static_cast<float>(2.0 / n) * self.grad[0];
    for (std::size_t i = 0; i < target.size(); ++i) dp[i] += g * (pred.value()[i] - target[i]);
  });
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<float>& weights) {
  require(terms.size() == weights.size(), "weighted_sum: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require(terms[i].value().size() == 1, "weighted_sum: terms must be scalars");
    total += static_cast<double>(weights[i]) * terms[i].value()[0];
  }
  return Var::make(Tensor({1}, {static_cast<float>(total)}), terms, [terms, weights](Node& self) {
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (terms[i].requires_grad()) grad_of(terms[i])[0] += weights[i] * self.grad[0];
    }
  });
}

}  // namespace place::ag
