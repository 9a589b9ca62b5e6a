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

#include <doctest.h>

#include "place/losses.hpp"
#include "place/ops.hpp"
#include "util.hpp"

using namespace place;
using place::testing::error_code_of;

namespace {

Matrix<double> row_stochastic(Rng& rng, int r, int c) {
  Matrix<double> m(r, c);
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += (m(i, j) = rng.uniform(0.01, 1.0));
    for (int j = 0; j < c; ++j) m(i, j) /= s;
  }
  return m;
}

// sum_i sum_p (sum_j F[j,i] * A[j,p] - F[p,i])^2, written as nested loops.
double brute_sa(const Matrix<double>& f, const Matrix<double>& a) {
  const int hw = f.rows, n = f.cols;
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < hw; ++p) {
      double w = 0.0;
      for (int j = 0; j < hw; ++j) w += f(j, i) * a(j, p);
      loss += (w - f(p, i)) * (w - f(p, i));
    }
  }
  return loss;
}

}  // namespace

TEST_CASE("ldm loss") {
  const std::vector<double> e{1.0, -2.0, 0.5};
  CHECK(ldm_loss<double>(e, e) == 0.0);
  const std::vector<double> shifted{3.0, 0.0, 2.5};
  CHECK(ldm_loss<double>(e, shifted) == 4.0);
  Rng rng(51);
  std::vector<double> a(97), b(97);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
    sum += (a[i] - b[i]) * (a[i] - b[i]);
  }
  CHECK(std::abs(ldm_loss<double>(a, b) - sum / 97.0) < 1e-12);
  CHECK(error_code_of([&] { ldm_loss<double>(a, std::vector<double>(3)); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("ldm loss gradient") {
  Rng rng(55);
  for (int k = 0; k < 20; ++k) {
    const int n = rng.uniform_int(1, 40);
    std::vector<double> truth(n), pred(n), grad(n, 0.0);
    for (int i = 0; i < n; ++i) {
      truth[i] = rng.normal();
      pred[i] = rng.normal();
    }
    ldm_loss_backward<double>(truth, pred, 1.0, grad);
    for (int i = 0; i < n; ++i) {
      const double keep = pred[i];
      pred[i] = keep + 1e-3;
      const double up = ldm_loss<double>(truth, pred);
      pred[i] = keep - 1e-3;
      const double down = ldm_loss<double>(truth, pred);
      pred[i] = keep;
      CHECK(place::testing::rel_error((up - down) / 2e-3, grad[i]) < 1e-6);
    }
  }
}

TEST_CASE("lfp loss") {
  const std::vector<double> e{1.0, 2.0};
  const std::vector<double> p{0.0, 2.5};
  CHECK(lfp_loss<double>(e, e, true) == 0.0);
  CHECK(lfp_loss<double>(e, p, true) == ldm_loss<double>(e, p));
  CHECK(error_code_of([&] { lfp_loss<double>(e, p, false); }) == ErrorCode::kAlphaNotForcedToZero);
}

TEST_CASE("total loss") {
  CHECK(total_loss(1, 2, 3).total == 6.0);
  CHECK(total_loss(0, 0, 0).total == 0.0);
  CHECK(total_loss(1, 2, 3, 1.0, 0.0).total == 3.0);
  CHECK(error_code_of([] { total_loss(1, -2, 3); }) == ErrorCode::kNegativeComponent);
}

TEST_CASE("semantic alignment loss special cases") {
  Rng rng(52);
  const int hw = 9;
  const Matrix<double> f = row_stochastic(rng, hw, 3);
  Matrix<double> eye(hw, hw);
  for (int i = 0; i < hw; ++i) eye(i, i) = 1.0;
  CHECK(sa_loss(f, eye) == 0.0);

  Matrix<double> uniform_f(hw, 2, 1.0 / hw);
  // Doubly stochastic: a cyclic shift mixed with the uniform matrix.
  Matrix<double> ds(hw, hw);
  for (int i = 0; i < hw; ++i) {
    for (int j = 0; j < hw; ++j) ds(i, j) = 0.5 / hw + (j == (i + 2) % hw ? 0.5 : 0.0);
  }
  CHECK(sa_loss(uniform_f, ds) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  CHECK(error_code_of([&] { sa_loss(f, Matrix<double>(hw, hw - 1)); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("semantic alignment loss matches brute force") {
  Rng rng(53);
  for (int hw = 1; hw <= 16; ++hw) {
    for (int n = 1; n <= 4; ++n) {
      const Matrix<double> f = row_stochastic(rng, hw, n);
      const Matrix<double> a = row_stochastic(rng, hw, hw);
      CHECK(std::abs(sa_loss(f, a) - brute_sa(f, a)) < 1e-10);
    }
  }
}

TEST_CASE("semantic alignment gradients match finite differences") {
  Rng rng(54);
  for (int k = 0; k < 20; ++k) {
    const int hw = rng.uniform_int(1, 9), n = rng.uniform_int(1, 4);
    Matrix<double> f = row_stochastic(rng, hw, n);
    Matrix<double> a = row_stochastic(rng, hw, hw);
    std::vector<double> df(f.data.size(), 0.0), da(a.data.size(), 0.0);
    sa_loss_backward(f.data.data(), a.data.data(), hw, n, 1.0, df.data(), da.data());
    for (auto [m, grad] : {std::pair{&f, &df}, {&a, &da}}) {
      for (std::size_t i = 0; i < m->data.size(); ++i) {
        const double keep = m->data[i];
        m->data[i] = keep + 1e-3;
        const double up = sa_loss(f, a);
        m->data[i] = keep - 1e-3;
        const double down = sa_loss(f, a);
        m->data[i] = keep;
        const double fd = (up - down) / 2e-3;
        if (std::abs(fd) < 1e-8 && std::abs((*grad)[i]) < 1e-8) continue;
        REQUIRE(place::testing::rel_error(fd, (*grad)[i]) < 1e-3);
      }
    }
  }
}

TEST_CASE("batched semantic alignment loss averages layout samples only") {
  Rng rng(55);
  const int tokens = 4;
  ag::FusionBatch batch;
  batch.tokens = tokens;
  batch.samples = {{0, 2, nullptr, ag::AlphaMode::kFixed, 1.0f},
                   {2, 3, nullptr, ag::AlphaMode::kForcedZero, 0.0f},
                   {5, 1, nullptr, ag::AlphaMode::kAdaptive, 1.0f}};
  Tensor f({tokens * 6});
  Tensor a({3, tokens, tokens});
  std::vector<Matrix<double>> fm, am;
  for (int b = 0; b < 3; ++b) {
    const int n = batch.samples[b].text_count;
    fm.push_back(row_stochastic(rng, tokens, n));
    am.push_back(row_stochastic(rng, tokens, tokens));
    for (int i = 0; i < tokens * n; ++i) f[tokens * batch.samples[b].text_offset + i] = static_cast<float>(fm[b].data[i]);
    for (int i = 0; i < tokens * tokens; ++i) a[b * tokens * tokens + i] = static_cast<float>(am[b].data[i]);
  }
  const ag::Var fv = ag::Var::parameter(f);
  const ag::Var av = ag::Var::parameter(a);
  const ag::Var loss = ag::sa_loss(fv, av, batch);
  const double expected = (sa_loss(fm[0], am[0]) + sa_loss(fm[2], am[2])) / 2.0;
  CHECK(loss.value()[0] == doctest::Approx(expected).epsilon(1e-5));
  ag::backward(loss);
  for (int i = 0; i < tokens * 3; ++i) CHECK(fv.grad()[tokens * 2 + i] == 0.0f);
  for (int i = 0; i < tokens * tokens; ++i) CHECK(av.grad()[tokens * tokens + i] == 0.0f);
  CHECK(error_code_of([&] { ag::sa_loss(fv, ag::Var::constant(Tensor({2, tokens, tokens})), batch); }) ==
        ErrorCode::kShapeMismatch);
}
