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

#include "place/fusion_attention.hpp"
#include "place/layout_control.hpp"
#include "place/ops.hpp"
#include "util.hpp"

using namespace place;
using place::testing::error_code_of;

namespace {

Matrix<double> random_matrix(Rng& rng, int r, int c, double scale = 1.0) {
  Matrix<double> m(r, c);
  for (double& v : m.data) v = scale * rng.normal();
  return m;
}

// A layout for hw = side*side tokens over n channels: a random map with
// n classes at twice the latent resolution, identity tokens.
LayoutControlMap random_layout(Rng& rng, int side, int n) {
  const SemanticMap map = place::testing::random_map(rng, 2 * side, 2 * side, n);
  TokenClassMap tcm;
  for (int j = 0; j < n; ++j) tcm.push_back(j);
  return compute_lcm(map, {side, side}, tcm);
}

struct Instance {
  Matrix<double> image, text;
  PlaceAttentionParams<double> params;
  LayoutControlMap lcm;
  std::vector<double> temb;
};

Instance random_instance(Rng& rng, FusionDomain domain) {
  const int side = rng.uniform_int(1, 3);
  const int n = rng.uniform_int(1, 4);
  const int dm = rng.uniform_int(2, 5), dt = rng.uniform_int(2, 4), d = rng.uniform_int(2, 4);
  Instance in{random_matrix(rng, side * side, dm), random_matrix(rng, n, dt), {}, random_layout(rng, side, n), {}};
  in.params.proj = {random_matrix(rng, dm, d, 0.7), random_matrix(rng, dt, d, 0.7), random_matrix(rng, dt, dm, 0.7)};
  in.params.domain = domain;
  for (int i = 0; i < 3; ++i) {
    in.temb.push_back(rng.normal());
    in.params.alpha.weight.push_back(0.5 * rng.normal());
  }
  in.params.alpha.bias = rng.normal();
  return in;
}

double weighted_output(const Instance& in, const Matrix<double>& g) {
  const auto out = place_attention_forward(in.image, in.text, &in.lcm, in.temb, in.params);
  double s = 0.0;
  for (std::size_t i = 0; i < g.data.size(); ++i) s += g.data[i] * out.output.data[i];
  return s;
}

// Central differences over every entry of `target`, compared to `analytic`.
template <typename Mutate>
void check_fd(std::vector<double>& target, const std::vector<double>& analytic, Mutate eval) {
  REQUIRE(target.size() == analytic.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double keep = target[i];
    target[i] = keep + 1e-3;
    const double up = eval();
    target[i] = keep - 1e-3;
    const double down = eval();
    target[i] = keep;
    const double fd = (up - down) / 2e-3;
    if (std::abs(fd) < 1e-7 && std::abs(analytic[i]) < 1e-7) continue;
    REQUIRE(place::testing::rel_error(fd, analytic[i]) < 1e-3);
  }
}

}  // namespace

TEST_CASE("cross-attention maps") {
  Rng rng(41);
  const Matrix<double> image = random_matrix(rng, 4, 3);
  Projections<double> proj{random_matrix(rng, 3, 2), random_matrix(rng, 5, 2), random_matrix(rng, 5, 3)};
  const auto single = cross_attention_maps(image, random_matrix(rng, 1, 5), proj);
  for (int i = 0; i < 4; ++i) CHECK(single.maps.probs(i, 0) == 1.0);

  Matrix<double> same(3, 5);
  for (int j = 0; j < 3; ++j) {
    for (int p = 0; p < 5; ++p) same(j, p) = 0.1 * p;
  }
  const auto uniform = cross_attention_maps(image, same, proj);
  for (double v : uniform.maps.probs.data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  const auto att = cross_attention_maps(image, random_matrix(rng, 6, 5), proj);
  for (int i = 0; i < 4; ++i) {
    double mx = -1e300, sum = 0.0;
    for (int j = 0; j < 6; ++j) mx = std::max(mx, att.maps.raw_logits(i, j));
    for (int j = 0; j < 6; ++j) sum += std::exp(att.maps.raw_logits(i, j) - mx);
    for (int j = 0; j < 6; ++j) {
      CHECK(std::abs(att.maps.probs(i, j) - std::exp(att.maps.raw_logits(i, j) - mx) / sum) < 1e-12);
    }
  }
  Matrix<double> bad = image;
  bad(0, 0) = std::nan("");
  CHECK(error_code_of([&] { cross_attention_maps(bad, same, proj); }) == ErrorCode::kNonFiniteInput);
}

TEST_CASE("adaptive alpha") {
  AdaptiveAlpha a{{0.0, 0.0}, 0.0};
  const std::vector<double> emb{3.0, -1.0};
  CHECK(a.value(emb) == 0.5);
  a.bias = 60.0;
  CHECK(a.value(emb) == doctest::Approx(1.0).epsilon(1e-15));
  a = AdaptiveAlpha{{1.0, 2.0}, 0.5};
  CHECK(a.logit(emb) == doctest::Approx(1.5));
  CHECK(error_code_of([&] { a.logit(std::vector<double>{1.0}); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("fusion examples") {
  Rng rng(42);
  const LayoutControlMap lcm = random_layout(rng, 3, 3);
  const Matrix<double> image = random_matrix(rng, 9, 4);
  const Projections<double> proj{random_matrix(rng, 4, 3), random_matrix(rng, 2, 3), random_matrix(rng, 2, 4)};
  const auto att = cross_attention_maps(image, random_matrix(rng, 3, 2), proj);

  const auto zero = fuse(lcm, att.maps, 0.0);
  CHECK(zero.data.data == att.maps.probs.data);

  const auto full = fuse(lcm, att.maps, 1.0);
  for (int i = 0; i < 9; ++i) {
    int finite = 0, hot = -1;
    for (int j = 0; j < 3; ++j) {
      if (!lcm.masked(i, j)) {
        ++finite;
        hot = j;
      }
    }
    if (finite != 1) continue;
    for (int j = 0; j < 3; ++j) CHECK(full.data(i, j) == (j == hot ? 1.0 : 0.0));
  }

  CHECK(error_code_of([&] { fuse(lcm, att.maps, 1.5); }) == ErrorCode::kAlphaOutOfRange);
  CHECK(error_code_of([&] { fuse(nullptr, att.maps, 0.5); }) == ErrorCode::kAlphaNotForcedToZero);
  LayoutControlMap all_masked(Dims{3, 3}, Dims{6, 6}, 3);
  for (int t = 0; t < 9; ++t) {
    for (int j = 0; j < 3; ++j) all_masked.set(t, j, std::nullopt);
  }
  CHECK(error_code_of([&] { fuse(all_masked, att.maps, 0.5); }) == ErrorCode::kAllMaskedRow);
}

TEST_CASE("fused rows are stochastic in both domains") {
  Rng rng(43);
  for (FusionDomain domain : {FusionDomain::kProduct, FusionDomain::kLogit}) {
    for (int k = 0; k < 200; ++k) {
      const int side = rng.uniform_int(1, 4), n = rng.uniform_int(1, 6);
      const LayoutControlMap lcm = random_layout(rng, side, n);
      const Projections<double> proj{random_matrix(rng, 3, 2), random_matrix(rng, 3, 2), random_matrix(rng, 3, 3)};
      const auto att = cross_attention_maps(random_matrix(rng, side * side, 3, 3.0), random_matrix(rng, n, 3), proj);
      const auto f = fuse(lcm, att.maps, rng.uniform(), domain);
      for (int i = 0; i < side * side; ++i) {
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
          REQUIRE(f.data(i, j) >= 0.0);
          sum += f.data(i, j);
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("scaling finite coverage keeps rows stochastic") {
  Rng rng(44);
  LayoutControlMap lcm = random_layout(rng, 3, 4);
  const Projections<double> proj{random_matrix(rng, 3, 2), random_matrix(rng, 3, 2), random_matrix(rng, 3, 3)};
  const auto att = cross_attention_maps(random_matrix(rng, 9, 3), random_matrix(rng, 4, 3), proj);
  for (int t = 0; t < 9; ++t) {
    for (int j = 0; j < 4; ++j) {
      if (auto c = lcm.at(t, j)) lcm.set(t, j, *c * 7.5);
    }
  }
  const auto f = fuse(lcm, att.maps, 1.0);
  for (int i = 0; i < 9; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 4; ++j) sum += f.data(i, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("place attention without layout is vanilla cross-attention") {
  Rng rng(45);
  Instance in = random_instance(rng, FusionDomain::kProduct);
  const auto free = place_attention_forward(in.image, in.text, nullptr, in.temb, in.params);
  CHECK(free.fusion.alpha == 0.0);
  const auto att = cross_attention_maps(in.image, in.text, in.params.proj);
  const Matrix<double> vanilla = detail::matmul(att.maps.probs, att.v);
  for (std::size_t i = 0; i < vanilla.data.size(); ++i) CHECK(std::abs(free.output.data[i] - vanilla.data[i]) < 1e-12);
  const auto forced = place_attention_forward(in.image, in.text, &in.lcm, in.temb, in.params, std::optional<double>(0.0));
  for (std::size_t i = 0; i < vanilla.data.size(); ++i) CHECK(std::abs(forced.output.data[i] - vanilla.data[i]) < 1e-12);
}

TEST_CASE("one-hot fusion rows select value rows") {
  Rng rng(46);
  // Factor 1 layout: every token has exactly one finite channel.
  const SemanticMap map = place::testing::random_map(rng, 3, 3, 3);
  const LayoutControlMap lcm = compute_lcm(map, {3, 3}, {0, 1, 2});
  Instance in = random_instance(rng, FusionDomain::kProduct);
  in.image = random_matrix(rng, 9, in.image.cols);
  in.text = random_matrix(rng, 3, in.text.cols);
  const auto out = place_attention_forward(in.image, in.text, &lcm, in.temb, in.params, std::optional<double>(1.0));
  for (int i = 0; i < 9; ++i) {
    const int cls = map.grid()[i];
    for (int p = 0; p < out.output.cols; ++p) {
      CHECK(out.output(i, p) == doctest::Approx(out.attention.v(cls, p)).epsilon(1e-12));
    }
  }
}

TEST_CASE("place attention gradients match finite differences") {
  Rng rng(47);
  for (FusionDomain domain : {FusionDomain::kProduct, FusionDomain::kLogit}) {
    for (int k = 0; k < 20; ++k) {
      Instance in = random_instance(rng, domain);
      const auto fwd = place_attention_forward(in.image, in.text, &in.lcm, in.temb, in.params);
      const Matrix<double> g = random_matrix(rng, fwd.output.rows, fwd.output.cols);
      const auto grads = place_attention_backward(in.image, in.text, &in.lcm, in.temb, in.params, fwd, g);
      auto eval = [&] { return weighted_output(in, g); };
      check_fd(in.image.data, grads.d_image.data, eval);
      check_fd(in.text.data, grads.d_text.data, eval);
      check_fd(in.params.proj.w_q.data, grads.d_wq.data, eval);
      check_fd(in.params.proj.w_k.data, grads.d_wk.data, eval);
      check_fd(in.params.proj.w_v.data, grads.d_wv.data, eval);
      check_fd(in.params.alpha.weight, grads.d_alpha_weight, eval);
      std::vector<double> bias{in.params.alpha.bias};
      auto eval_bias = [&] {
        in.params.alpha.bias = bias[0];
        return weighted_output(in, g);
      };
      check_fd(bias, {grads.d_alpha_bias}, eval_bias);
      in.params.alpha.bias = bias[0];
    }
  }
}

TEST_CASE("fuse gradient with respect to raw logits") {
  // F as a function of the logits alone (A_ca = softmax(logits)).
  Rng rng(48);
  for (FusionDomain domain : {FusionDomain::kProduct, FusionDomain::kLogit}) {
    for (int k = 0; k < 20; ++k) {
      const int side = rng.uniform_int(1, 3), n = rng.uniform_int(1, 5);
      const LayoutControlMap lcm = random_layout(rng, side, n);
      const int hw = side * side;
      Matrix<double> logits = random_matrix(rng, hw, n, 2.0);
      const double alpha = rng.uniform();
      const Matrix<double> g = random_matrix(rng, hw, n);
      auto eval = [&] {
        AttentionMaps<double> maps{logits, Matrix<double>(hw, n)};
        for (int i = 0; i < hw; ++i) softmax_row(logits.row(i), n, maps.probs.row(i));
        const auto f = fuse(lcm, maps, alpha, domain);
        double s = 0.0;
        for (std::size_t i = 0; i < g.data.size(); ++i) s += g.data[i] * f.data.data[i];
        return s;
      };
      AttentionMaps<double> maps{logits, Matrix<double>(hw, n)};
      for (int i = 0; i < hw; ++i) softmax_row(logits.row(i), n, maps.probs.row(i));
      const auto f = fuse(lcm, maps, alpha, domain);
      Matrix<double> d_logits(hw, n);
      double d_alpha = 0.0;
      for (int i = 0; i < hw; ++i) {
        d_alpha += fuse_row_backward(maps.probs.row(i), f.layout_term.row(i), lcm.value_row(i), lcm.mask_row(i), n,
                                     alpha, domain, g.row(i), d_logits.row(i));
      }
      check_fd(logits.data, d_logits.data, eval);
      double a = alpha;
      auto eval_alpha = [&] {
        const auto ff = fuse(lcm, maps, a, domain);
        double s = 0.0;
        for (std::size_t i = 0; i < g.data.size(); ++i) s += g.data[i] * ff.data.data[i];
        return s;
      };
      if (alpha > 2e-3 && alpha < 1.0 - 2e-3) {
        std::vector<double> av{a};
        auto eval_av = [&] {
          a = av[0];
          return eval_alpha();
        };
        check_fd(av, {d_alpha}, eval_av);
      }
    }
  }
}

TEST_CASE("batched fusion op agrees with the matrix reference") {
  Rng rng(49);
  for (FusionDomain domain : {FusionDomain::kProduct, FusionDomain::kLogit}) {
    const int side = 2, tokens = 4, d = 3;
    std::vector<int> counts{3, 2, 4};
    ag::FusionBatch batch;
    batch.tokens = tokens;
    batch.domain = domain;
    int offset = 0;
    std::vector<std::shared_ptr<const LayoutControlMap>> layouts;
    for (std::size_t b = 0; b < counts.size(); ++b) {
      ag::FusionSample s;
      s.text_offset = offset;
      s.text_count = counts[b];
      offset += counts[b];
      if (b == 0) s.mode = ag::AlphaMode::kAdaptive;
      if (b == 1) s.mode = ag::AlphaMode::kFixed, s.fixed_alpha = 0.3f;
      if (b < 2) s.layout = std::make_shared<LayoutControlMap>(random_layout(rng, side, counts[b]));
      batch.samples.push_back(s);
    }
    const ag::Var q = ag::Var::parameter(place::testing::random_tensor(rng, {3 * tokens, d}));
    const ag::Var k = ag::Var::parameter(place::testing::random_tensor(rng, {offset, d}));
    const ag::Var alpha = ag::Var::parameter(Tensor({3}, std::vector<float>{0.7f, 0.0f, 0.0f}));
    const ag::Var f = ag::fusion_map(q, k, alpha, batch);
    const std::vector<float> eff = ag::effective_alpha(alpha, batch);
    CHECK(eff == std::vector<float>{0.7f, 0.3f, 0.0f});
    for (std::size_t b = 0; b < counts.size(); ++b) {
      const int n = counts[b];
      Matrix<double> qm(tokens, d), km(n, d);
      for (int i = 0; i < tokens; ++i) {
        for (int p = 0; p < d; ++p) qm(i, p) = q.value()[(b * tokens + i) * d + p];
      }
      for (int j = 0; j < n; ++j) {
        for (int p = 0; p < d; ++p) km(j, p) = k.value()[(batch.samples[b].text_offset + j) * d + p];
      }
      AttentionMaps<double> maps{Matrix<double>(tokens, n), Matrix<double>(tokens, n)};
      for (int i = 0; i < tokens; ++i) {
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int p = 0; p < d; ++p) s += qm(i, p) * km(j, p);
          maps.raw_logits(i, j) = s / std::sqrt(double(d));
        }
        softmax_row(maps.raw_logits.row(i), n, maps.probs.row(i));
      }
      const auto ref = fuse(batch.samples[b].layout.get(), maps, static_cast<double>(eff[b]), domain);
      for (int i = 0; i < tokens; ++i) {
        for (int j = 0; j < n; ++j) {
          CHECK(f.value()[tokens * batch.samples[b].text_offset + i * n + j] ==
                doctest::Approx(ref.data(i, j)).epsilon(1e-5));
        }
      }
    }

    // Gradient of a weighted sum of the output, against float finite
    // differences with a loose tolerance.
    const Tensor g = place::testing::random_tensor(rng, f.shape());
    const ag::Var v = ag::Var::parameter(place::testing::random_tensor(rng, {offset, 2}));
    auto loss_of = [&](const ag::Var& qq, const ag::Var& kk, const ag::Var& aa) {
      const ag::Var out = ag::apply_fusion(ag::fusion_map(qq, kk, aa, batch), v, batch);
      Tensor target = out.value();
      for (std::size_t i = 0; i < target.size(); ++i) target[i] -= static_cast<float>(target.size()) / 2.0f;
      return ag::mse(out, target);  // d/d out = 1
    };
    const ag::Var loss = loss_of(q, k, alpha);
    ag::backward(loss);
    auto value_with = [&](const ag::Var& which, std::size_t i, float delta) {
      Tensor qv = q.value(), kv = k.value(), av = alpha.value();
      Tensor* t = &which == &q ? &qv : &which == &k ? &kv : &av;
      (*t)[i] += delta;
      const ag::Var out = ag::apply_fusion(ag::fusion_map(ag::Var::constant(qv), ag::Var::constant(kv),
                                                          ag::Var::constant(av), batch),
                                           ag::Var::constant(v.value()), batch);
      double s = 0.0;
      for (float x : out.value().values()) s += x;
      return s;
    };
    for (const ag::Var* which : {&q, &k}) {
      for (std::size_t i = 0; i < which->value().size(); ++i) {
        const double fd = (value_with(*which, i, 1e-2f) - value_with(*which, i, -1e-2f)) / 2e-2;
        CHECK(which->grad()[i] == doctest::Approx(fd).epsilon(2e-2).scale(1.0));
      }
    }
    const double fd_alpha = (value_with(alpha, 0, 1e-2f) - value_with(alpha, 0, -1e-2f)) / 2e-2;
    CHECK(alpha.grad()[0] == doctest::Approx(fd_alpha).epsilon(2e-2).scale(1.0));
    CHECK(alpha.grad()[1] == 0.0f);
  }
}
