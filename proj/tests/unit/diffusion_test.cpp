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

#include "place/diffusion.hpp"
#include "place/ops.hpp"
#include "util.hpp"

using namespace place;
using place::testing::error_code_of;
using place::testing::random_tensor;

TEST_CASE("linear schedule") {
  const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  CHECK(s.steps() == 1000);
  CHECK(s.beta(0) == doctest::Approx(1e-4));
  CHECK(s.beta(999) == doctest::Approx(0.02));
  for (int t = 1; t < 1000; ++t) {
    REQUIRE(s.beta(t) > s.beta(t - 1));
    REQUIRE(s.alpha_cumprod(t) < s.alpha_cumprod(t - 1));
  }
  CHECK(s.alpha_cumprod(0) == doctest::Approx(1.0 - 1e-4));
  CHECK(s.alpha_cumprod(999) > 0.0);
}

TEST_CASE("forward noising") {
  const NoiseSchedule s = NoiseSchedule::linear();
  Rng rng(71);
  const Tensor x0 = random_tensor(rng, {2, 4, 4, 3});
  const Tensor eps = random_tensor(rng, {2, 4, 4, 3});
  const Tensor z0 = q_sample(s, x0, 0, eps);
  float eps_max = 0.0f;
  float x_max = 0.0f;
  for (float e : eps.values()) eps_max = std::max(eps_max, std::abs(e));
  for (float x : x0.values()) x_max = std::max(x_max, std::abs(x));
  // The signal is also shrunk by sqrt(abar), so that term joins the bound.
  const double shrink = (1.0 - std::sqrt(s.alpha_cumprod(0))) * x_max;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    CHECK(std::abs(z0[i] - x0[i]) < std::sqrt(1.0 - s.alpha_cumprod(0)) * eps_max + shrink + 1e-6);
  }
  const Tensor zero_eps(x0.shape());
  const Tensor z = q_sample(s, x0, 500, zero_eps);
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(z[i] == doctest::Approx(std::sqrt(s.alpha_cumprod(500)) * x0[i]));

  const Tensor zb = q_sample_batch(s, x0, {0, 500}, eps);
  const std::size_t half = x0.size() / 2;
  const Tensor z500 = q_sample(s, x0, 500, eps);
  for (std::size_t i = 0; i < half; ++i) CHECK(zb[i] == z0[i]);
  for (std::size_t i = half; i < x0.size(); ++i) CHECK(zb[i] == z500[i]);

  CHECK(error_code_of([&] { q_sample(s, x0, 1000, eps); }) == ErrorCode::kTimestepOutOfRange);
  CHECK(error_code_of([&] { q_sample(s, x0, -1, eps); }) == ErrorCode::kTimestepOutOfRange);
  CHECK(error_code_of([&] { q_sample(s, x0, 3, Tensor({3})); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("noised variance matches the schedule") {
  const NoiseSchedule s = NoiseSchedule::linear();
  Rng rng(72);
  const Tensor x0({10000});
  const Tensor eps = random_tensor(rng, {10000});
  for (int t : {10, 300, 900}) {
    const Tensor z = q_sample(s, x0, t, eps);
    double mean = 0.0, sq = 0.0;
    for (float v : z.values()) {
      mean += v;
      sq += double(v) * v;
    }
    mean /= 1e4;
    const double var = sq / 1e4 - mean * mean;
    CHECK(var == doctest::Approx(1.0 - s.alpha_cumprod(t)).epsilon(0.05));
  }
}

TEST_CASE("sinusoidal embedding") {
  const auto e0 = sinusoidal_embedding(0.0, 8);
  CHECK(e0 == std::vector<double>{1, 1, 1, 1, 0, 0, 0, 0});
  const auto e = sinusoidal_embedding(37.0, 8);
  for (int i = 0; i < 4; ++i) {
    const double f = std::exp(-std::log(10000.0) * i / 4.0);
    CHECK(e[i] == doctest::Approx(std::cos(37.0 * f)));
    CHECK(e[4 + i] == doctest::Approx(std::sin(37.0 * f)));
  }
  CHECK(sinusoidal_embedding(37.0, 8) == e);
}

TEST_CASE("clean estimate inverts noising") {
  const NoiseSchedule s = NoiseSchedule::linear();
  Rng rng(73);
  const Tensor x0 = random_tensor(rng, {3, 5});
  const Tensor eps = random_tensor(rng, {3, 5});
  const Tensor back = predicted_clean(s, q_sample(s, x0, 640, eps), 640, eps);
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(back[i] == doctest::Approx(x0[i]).epsilon(1e-4));
}

TEST_CASE("sampling timesteps") {
  const NoiseSchedule s = NoiseSchedule::linear();
  const auto ts = plms_timesteps(s, 50);
  REQUIRE(ts.size() == 50);
  CHECK(ts.front() == 0);
  CHECK(ts[1] == 20);
  CHECK(ts.back() == 980);
  CHECK(error_code_of([&] { plms_timesteps(s, 1001); }) == ErrorCode::kStepsExceedSchedule);
}

TEST_CASE("first PLMS steps match a double-precision reference") {
  const NoiseSchedule s = NoiseSchedule::linear();
  // A smooth fake noise predictor standing in for a tiny model.
  auto eps_d = [](double x, int t) { return std::tanh(0.7 * x + 0.001 * t) - 0.1 * x; };
  const EpsFn eps_fn = [&](const Tensor& x, int t) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(eps_d(x[i], t));
    return out;
  };
  Rng rng(74);
  const Tensor x_init = random_tensor(rng, {6});
  const int steps = 10;
  std::vector<Tensor> x0s;
  plms_loop(s, steps, x_init, eps_fn, [&](const PlmsStepInfo& info) { x0s.push_back(*info.x0_estimate); });
  REQUIRE(x0s.size() == static_cast<std::size_t>(steps));

  const int stride = 1000 / steps;
  for (std::size_t k = 0; k < x_init.size(); ++k) {
    double x = x_init[k];
    std::vector<double> history;
    for (int i = 0; i < 4; ++i) {
      const int t = (steps - 1 - i) * stride;
      const int t_prev = t - stride;
      const double a = s.alpha_cumprod(t), ap = s.alpha_cumprod(t_prev);
      auto ddim = [&](double xx, double e) {
        const double x0 = (xx - std::sqrt(1 - a) * e) / std::sqrt(a);
        return std::pair{std::sqrt(ap) * x0 + std::sqrt(1 - ap) * e, x0};
      };
      const double e = eps_d(x, t);
      double ep = 0.0;
      switch (i) {
        case 0: ep = 0.5 * (e + eps_d(ddim(x, e).first, t_prev)); break;
        case 1: ep = (3 * e - history[0]) / 2; break;
        case 2: ep = (23 * e - 16 * history[1] + 5 * history[0]) / 12; break;
        default: ep = (55 * e - 59 * history[2] + 37 * history[1] - 9 * history[0]) / 24; break;
      }
      const auto [x_next, x0] = ddim(x, ep);
      CHECK(x0s[i][k] == doctest::Approx(x0).epsilon(1e-6).scale(1.0));
      history.push_back(e);
      x = x_next;
    }
  }
}
