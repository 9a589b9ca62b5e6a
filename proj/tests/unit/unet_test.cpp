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

#include <cmath>

#include "place/ops.hpp"
#include "tiny.hpp"

using namespace place;
using place::testing::error_code_of;
using place::testing::random_tensor;
using place::testing::scene_map;
using place::testing::tiny_config;

namespace {

struct Fixture {
  UNetConfig config = tiny_config();
  PlaceModel model{config, place::testing::shape_vocab(config.text_dim), 7};
  Rng rng{81};
  Tensor z = random_tensor(rng, {3, 8, 8, 3});
  std::vector<int> t{5, 500, 999};
  std::vector<Conditioning> cond{
      layout_conditioning(scene_map(1), model.vocab(), config, LayoutMode::kCoverage),
      layout_conditioning(scene_map(2), model.vocab(), config, LayoutMode::kNearest),
      null_conditioning()};
};

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, double(std::abs(a[i] - b[i])));
  return m;
}

}  // namespace

TEST_CASE("configuration validation") {
  UNetConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.attention_resolutions = {3};
  CHECK(error_code_of([&] { c.validate(); }) == ErrorCode::kMalformedConfig);
  c = tiny_config();
  c.base_channels = 6;
  CHECK(error_code_of([&] { c.validate(); }) == ErrorCode::kMalformedConfig);
  c = tiny_config();
  c.fixed_alpha = 1.5f;
  CHECK(error_code_of([&] { c.validate(); }) == ErrorCode::kMalformedConfig);
  CHECK(UNetConfig{}.level_resolution(2) == 8);
}

TEST_CASE("default model size") {
  const PlaceModel m(UNetConfig{}, place::testing::shape_vocab(64), 0);
  CHECK(m.parameters().scalar_count() > 100000);
  CHECK(m.parameters().find("conv_out.w") != nullptr);
  CHECK(m.parameters().find("text.embedding") != nullptr);
  // Two attention levels on the way down, one on the way up.
  CHECK(m.block_alphas(0).size() == 3);
}

TEST_CASE("forward shapes, traces and determinism") {
  Fixture f;
  place::testing::jitter_parameters(f.model, 1);
  const UNetOutput a = f.model.forward(ag::Var::constant(f.z), f.t, f.cond);
  const UNetOutput b = f.model.forward(ag::Var::constant(f.z), f.t, f.cond);
  CHECK(a.eps.shape() == f.z.shape());
  CHECK(a.eps.value().storage() == b.eps.value().storage());
  REQUIRE(a.blocks.size() == f.model.block_alphas(0).size());
  for (const BlockTrace& blk : a.blocks) {
    CHECK(blk.resolution == 4);
    CHECK(blk.alpha.size() == 3);
    CHECK(blk.alpha[2] == 0.0f);
    CHECK(blk.alpha[0] > 0.0f);
    CHECK(blk.self_attn.shape() == Shape{3, 16, 16});
  }
}

TEST_CASE("layout-free path equals layouts with alpha forced to zero") {
  Fixture f;
  place::testing::jitter_parameters(f.model, 2);
  std::vector<Conditioning> free;
  for (const Conditioning& c : f.cond) free.push_back(layout_free_conditioning(c.prompt));
  const ag::Var z = ag::Var::constant(f.z);
  const Tensor none = f.model.forward(z, f.t, free).eps.value();
  ForwardOptions forced;
  forced.force_alpha_zero = true;
  CHECK(max_abs_diff(none, f.model.forward(z, f.t, f.cond, forced).eps.value()) < 1e-6);
  ForwardOptions zero;
  zero.alpha_override = 0.0f;
  CHECK(max_abs_diff(none, f.model.forward(z, f.t, f.cond, zero).eps.value()) < 1e-6);
  // With a nonzero alpha the layout changes the prediction.
  CHECK(max_abs_diff(none, f.model.forward(z, f.t, f.cond).eps.value()) > 1e-4);
}

TEST_CASE("samples in a batch are independent") {
  Fixture f;
  place::testing::jitter_parameters(f.model, 3);
  const Tensor all = f.model.forward(ag::Var::constant(f.z), f.t, f.cond).eps.value();
  const std::size_t per = 8 * 8 * 3;
  for (int b = 0; b < 3; ++b) {
    Tensor one({1, 8, 8, 3}, std::vector<float>(f.z.data() + b * per, f.z.data() + (b + 1) * per));
    const Tensor out = f.model.forward(ag::Var::constant(one), {f.t[b]}, {f.cond[b]}).eps.value();
    for (std::size_t i = 0; i < per; ++i) REQUIRE(std::abs(out[i] - all[b * per + i]) < 1e-5f);
  }
}

TEST_CASE("alpha at initialization and fixed alpha") {
  Fixture f;
  for (const auto& [name, a] : f.model.block_alphas(300)) {
    CHECK(a == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-6));
  }
  UNetConfig fixed = tiny_config();
  fixed.adaptive_alpha = false;
  fixed.fixed_alpha = 0.25f;
  const PlaceModel m(fixed, place::testing::shape_vocab(fixed.text_dim), 1);
  for (const auto& [name, a] : m.block_alphas(900)) CHECK(a == 0.25f);
  const UNetOutput out = m.forward(ag::Var::constant(f.z), f.t, f.cond);
  CHECK(out.blocks[0].alpha == std::vector<float>{0.25f, 0.25f, 0.0f});
}

TEST_CASE("forward errors") {
  Fixture f;
  const ag::Var z = ag::Var::constant(f.z);
  CHECK(error_code_of([&] { f.model.forward(z, {1, 2}, f.cond); }) == ErrorCode::kShapeMismatch);
  CHECK(error_code_of([&] { f.model.forward(z, {1, 2, 1000}, f.cond); }) == ErrorCode::kTimestepOutOfRange);
  CHECK(error_code_of([&] { f.model.forward(ag::Var::constant(Tensor({3, 4, 4, 3})), f.t, f.cond); }) ==
        ErrorCode::kShapeMismatch);
  std::vector<Conditioning> missing = f.cond;
  missing[0].layouts.clear();
  missing[0].layouts[8] = f.cond[0].layouts.at(4);
  CHECK(error_code_of([&] { f.model.forward(z, f.t, missing); }) == ErrorCode::kMissingResolutionLcm);
  ForwardOptions bad;
  bad.alpha_override = 2.0f;
  CHECK(error_code_of([&] { f.model.forward(z, f.t, f.cond, bad); }) == ErrorCode::kAlphaOutOfRange);
  Tensor inf = f.z;
  inf[0] = std::numeric_limits<float>::infinity();
  CHECK(error_code_of([&] { f.model.forward(ag::Var::constant(inf), f.t, f.cond); }) ==
        ErrorCode::kNonFiniteActivation);
  std::vector<Conditioning> bad_token = f.cond;
  bad_token[2].prompt.prompt.tokens[0] = 99;
  CHECK(error_code_of([&] { f.model.forward(z, f.t, bad_token); }) == ErrorCode::kIndexOutOfRange);
}

TEST_CASE("end-to-end gradients match finite differences") {
  Fixture f;
  place::testing::jitter_parameters(f.model, 4);
  const Tensor target = random_tensor(f.rng, f.z.shape());
  auto loss_value = [&] {
    ag::NoGradGuard guard;
    const Tensor eps = f.model.forward(ag::Var::constant(f.z), f.t, f.cond).eps.value();
    double s = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) s += (double(eps[i]) - target[i]) * (double(eps[i]) - target[i]);
    return s / double(eps.size());
  };
  f.model.parameters().zero_grad();
  ag::backward(ag::mse(f.model.forward(ag::Var::constant(f.z), f.t, f.cond).eps, target));
  int checked = 0;
  for (auto& [name, var] : f.model.parameters().entries()) {
    Tensor& value = const_cast<ag::Var&>(var).mutable_value();
    for (std::size_t i : {std::size_t{0}, value.size() / 2, value.size() - 1}) {
      const float keep = value[i];
      value[i] = keep + 1e-2f;
      const double up = loss_value();
      value[i] = keep - 1e-2f;
      const double down = loss_value();
      value[i] = keep;
      const double fd = (up - down) / 2e-2;
      const double an = var.grad().empty() ? 0.0 : var.grad()[i];
      INFO(name << "[" << i << "] fd " << fd << " analytic " << an);
      CHECK(std::abs(fd - an) <= 5e-2 * std::max(std::abs(fd), 1e-2));
      ++checked;
    }
  }
  CHECK(checked > 60);
}
