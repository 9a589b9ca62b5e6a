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

#include <functional>

#include "place/kernels.hpp"
#include "place/ops.hpp"
#include "util.hpp"

using namespace place;
using place::testing::random_tensor;

namespace {

using Op = std::function<ag::Var(const std::vector<ag::Var>&)>;

double weighted(const ag::Var& out, const Tensor& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += double(g[i]) * out.value()[i];
  return s;
}

// Compares backward() of sum(G * op(inputs)) with central differences.
void check_op_gradient(const Op& op, std::vector<Tensor> inputs, std::uint64_t seed, double tol = 2e-2) {
  Rng rng(seed);
  std::vector<ag::Var> params;
  for (const Tensor& t : inputs) params.push_back(ag::Var::parameter(t));
  const ag::Var out = op(params);
  const Tensor g = random_tensor(rng, out.shape());
  Tensor target = out.value();
  const float half = static_cast<float>(out.value().size()) / 2.0f;
  for (std::size_t i = 0; i < target.size(); ++i) target[i] -= g[i] * half;
  ag::backward(ag::mse(out, target));

  for (std::size_t which = 0; which < inputs.size(); ++which) {
    for (std::size_t i = 0; i < inputs[which].size(); ++i) {
      auto eval = [&](float delta) {
        std::vector<ag::Var> c;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          Tensor t = inputs[k];
          if (k == which) t[i] += delta;
          c.push_back(ag::Var::constant(t));
        }
        return weighted(op(c), g);
      };
      const double fd = (eval(5e-3f) - eval(-5e-3f)) / 1e-2;
      const double an = params[which].grad()[i];
      INFO("input " << which << " element " << i);
      REQUIRE(std::abs(fd - an) <= tol * std::max(1.0, std::abs(fd)));
    }
  }
}

}  // namespace

TEST_CASE("elementwise and shape ops") {
  Rng rng(61);
  check_op_gradient([](auto& v) { return ag::add(v[0], v[1]); }, {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})}, 1);
  check_op_gradient([](auto& v) { return ag::scale(v[0], -1.5f); }, {random_tensor(rng, {5})}, 2);
  check_op_gradient([](auto& v) { return ag::silu(v[0]); }, {random_tensor(rng, {7})}, 3);
  check_op_gradient([](auto& v) { return ag::sigmoid(v[0]); }, {random_tensor(rng, {7})}, 4);
  check_op_gradient([](auto& v) { return ag::reshape(v[0], {3, 2}); }, {random_tensor(rng, {2, 3})}, 5);
  check_op_gradient([](auto& v) { return ag::add_channel(v[0], v[1]); },
                    {random_tensor(rng, {2, 3, 3, 4}), random_tensor(rng, {2, 4})}, 6);
  check_op_gradient([](auto& v) { return ag::avg_pool2(v[0]); }, {random_tensor(rng, {2, 4, 4, 3})}, 7);
  check_op_gradient([](auto& v) { return ag::upsample2(v[0]); }, {random_tensor(rng, {1, 2, 3, 2})}, 8);
  check_op_gradient([](auto& v) { return ag::concat_channels(v[0], v[1]); },
                    {random_tensor(rng, {2, 2, 2, 3}), random_tensor(rng, {2, 2, 2, 1})}, 9);
  check_op_gradient([](auto& v) { return ag::embedding(v[0], {2, 0, 2}); }, {random_tensor(rng, {4, 3})}, 10);
  check_op_gradient(
      [](auto& v) { return ag::weighted_sum({ag::mse(v[0], Tensor({3}, 0.5f)), ag::mse(v[1], Tensor({2}))}, {2.0f, 0.25f}); },
      {random_tensor(rng, {3}), random_tensor(rng, {2})}, 11);
}

TEST_CASE("linear, convolution and normalization") {
  Rng rng(62);
  check_op_gradient([](auto& v) { return ag::linear(v[0], v[1], v[2]); },
                    {random_tensor(rng, {2, 3, 5}), random_tensor(rng, {5, 4}, 0.5), random_tensor(rng, {4})}, 21);
  check_op_gradient([](auto& v) { return ag::conv3x3(v[0], v[1], v[2]); },
                    {random_tensor(rng, {2, 4, 5, 3}), random_tensor(rng, {27, 2}, 0.3), random_tensor(rng, {2})}, 22);
  check_op_gradient([](auto& v) { return ag::group_norm(v[0], v[1], v[2], 2); },
                    {random_tensor(rng, {2, 3, 3, 4}), random_tensor(rng, {4}), random_tensor(rng, {4})}, 23, 3e-2);
}

TEST_CASE("attention ops") {
  Rng rng(63);
  check_op_gradient([](auto& v) { return ag::attention_probs(v[0], v[1], 0.5f); },
                    {random_tensor(rng, {2, 4, 3}), random_tensor(rng, {2, 4, 3})}, 31);
  check_op_gradient([](auto& v) { return ag::bmm(v[0], v[1]); },
                    {random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 4, 5})}, 32);
}

TEST_CASE("conv3x3 matches a direct loop") {
  Rng rng(64);
  const Tensor x = random_tensor(rng, {1, 3, 4, 2});
  const Tensor w = random_tensor(rng, {18, 3});
  const Tensor b = random_tensor(rng, {3});
  const ag::Var y = ag::conv3x3(ag::Var::constant(x), ag::Var::constant(w), ag::Var::constant(b));
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      for (int co = 0; co < 3; ++co) {
        double s = b[co];
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const int rr = r + ky - 1, cc = c + kx - 1;
            if (rr < 0 || rr >= 3 || cc < 0 || cc >= 4) continue;
            for (int ci = 0; ci < 2; ++ci) s += double(x[(rr * 4 + cc) * 2 + ci]) * w[((ky * 3 + kx) * 2 + ci) * 3 + co];
          }
        }
        CHECK(y.value()[(r * 4 + c) * 3 + co] == doctest::Approx(s).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("ops give the same values on both kernel backends") {
  if (kernels::avx2_kernels() == nullptr || !kernels::cpu_supports_avx2()) return;
  Rng rng(65);
  const Tensor x = random_tensor(rng, {2, 8, 8, 16});
  const Tensor w = random_tensor(rng, {144, 32}, 0.1);
  const Tensor b = random_tensor(rng, {32});
  const kernels::Backend before = kernels::active().backend;
  auto run = [&](kernels::Backend be) {
    kernels::select_backend(be);
    const ag::Var y = ag::conv3x3(ag::Var::constant(x), ag::Var::constant(w), ag::Var::constant(b));
    return y.value();
  };
  const Tensor s = run(kernels::Backend::kScalar);
  const Tensor v = run(kernels::Backend::kAvx2);
  kernels::select_backend(before);
  for (std::size_t i = 0; i < s.size(); ++i) REQUIRE(std::abs(s[i] - v[i]) < 1e-4f);
}

TEST_CASE("no-grad guard drops the graph") {
  const ag::Var p = ag::Var::parameter(Tensor({2}, 1.0f));
  {
    ag::NoGradGuard guard;
    CHECK(!ag::grad_enabled());
    const ag::Var y = ag::scale(p, 2.0f);
    CHECK(!y.requires_grad());
  }
  CHECK(ag::grad_enabled());
  CHECK(ag::scale(p, 2.0f).requires_grad());
}
