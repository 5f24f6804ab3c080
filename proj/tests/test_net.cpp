#include <cmath>
#include <random>

#include "doctest.h"
#include "lagds/net.hpp"

using namespace lagds;

namespace {

Tensor normal_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Tensor t(s);
  for (double& v : t.values()) v = d(rng);
  return t;
}

ModelConfig small_config(int max_scale) {
  ModelConfig c;
  c.in_channels = 2;
  c.lr_size = 8;
  c.max_scale = max_scale;
  c.base_width = 16;
  c.min_width = 8;
  c.proj_channels = 4;
  c.seed = 42;
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor upsample(const Tensor& t) {
  return ag::upsample2(ag::Var(t)).value();
}

}  // namespace

TEST_CASE("config validation and widths") {
  ModelConfig c = small_config(64);
  CHECK(c.num_stages() == 6);
  CHECK(c.widths() == std::vector<int>{16, 8, 8, 8, 8, 8, 8});
  ModelConfig d;
  d.max_scale = 64;
  CHECK(d.widths() == std::vector<int>{256, 128, 64, 32, 32, 32, 32});
  c.max_scale = 12;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config(4);
  c.width_schedule = {8};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.width_schedule = {8, 4};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("block counts follow log2 of the scale") {
  CHECK(build_generator(small_config(4)).stages() == 2);
  CHECK(build_generator(small_config(64)).stages() == 6);
  CHECK(build_critic(small_config(64)).stages() == 6);
  CHECK(build_generator(small_config(8)).params() == build_generator(small_config(8)).params());
}

TEST_CASE("shape law across stages") {
  const ModelConfig c = small_config(64);
  const Generator g = build_generator(c);
  const Critic d = build_critic(c);
  const Tensor y = normal_tensor({1, 2, 8, 8}, 1);
  const Tensor z = normal_tensor({1, 2, 8, 8}, 2);
  for (int s = 1; s <= 6; ++s) {
    const Tensor out = g.forward(y, z, {s, 1.0});
    CHECK(out.shape() == Shape{1, 2, 8 << s, 8 << s});
    const Tensor proj = d.project(out, y, {s, 1.0});
    CHECK(proj.shape() == Shape{1, 4, 8, 8});
  }
}

TEST_CASE("fade-in is affine in alpha") {
  const ModelConfig c = small_config(16);
  const Generator g = build_generator(c);
  const Tensor y = normal_tensor({2, 2, 8, 8}, 3);
  const Tensor z = normal_tensor({2, 2, 8, 8}, 4);
  for (int s = 2; s <= 4; ++s) {
    const Tensor o0 = g.forward(y, z, {s, 0.0});
    const Tensor o1 = g.forward(y, z, {s, 1.0});
    CHECK(max_abs_diff(o0, upsample(g.forward(y, z, {s - 1, 1.0}))) <= 1e-6);
    for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const Tensor oa = g.forward(y, z, {s, a});
      Tensor mix(oa.shape());
      for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * o1[i] + (1 - a) * o0[i];
      CHECK(max_abs_diff(oa, mix) <= 1e-5);
    }
  }
  CHECK_THROWS_AS(g.forward(y, z, {1, 0.5}), std::invalid_argument);
}

TEST_CASE("growing keeps old parameters and output at alpha 0") {
  const ModelConfig c = small_config(8);
  Generator g(c, 2);
  Critic d(c, 2);
  const ParamSet before = g.params();
  const Tensor y = normal_tensor({1, 2, 8, 8}, 5);
  const Tensor z = normal_tensor({1, 2, 8, 8}, 6);
  const Tensor x = normal_tensor({1, 2, 32, 32}, 7);
  const Tensor out2 = g.forward(y, z, {2, 1.0});
  const Tensor proj2 = d.project(x, y, {2, 1.0});

  g.grow(3);
  d.grow(3);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(g.params()[i] == before[i]);
  CHECK(max_abs_diff(g.forward(y, z, {3, 0.0}), upsample(out2)) <= 1e-6);
  const Tensor x3 = upsample(x);
  CHECK(max_abs_diff(d.project(x3, y, {3, 0.0}), proj2) <= 1e-6);

  CHECK_THROWS_AS(g.grow(3), std::invalid_argument);
  CHECK_THROWS_AS(d.grow(3), std::invalid_argument);
  CHECK(g.params() == build_generator(c).params());
  CHECK(d.params() == build_critic(c).params());

  Generator skip(c, 1);
  CHECK_THROWS_AS(skip.grow(3), std::invalid_argument);
}

TEST_CASE("determinism and latent sensitivity") {
  const ModelConfig c = small_config(8);
  const Generator g = build_generator(c);
  const Tensor y = normal_tensor({1, 2, 8, 8}, 8);
  const Tensor zero(Shape{1, 2, 8, 8});
  CHECK(g.forward(y, zero, {3, 1.0}) == g.forward(y, zero, {3, 1.0}));
  const Tensor a = g.forward(y, normal_tensor({1, 2, 8, 8}, 9), {3, 1.0});
  const Tensor b = g.forward(y, normal_tensor({1, 2, 8, 8}, 10), {3, 1.0});
  CHECK(max_abs_diff(a, b) > 1e-6);
}

TEST_CASE("input validation") {
  const Generator g = build_generator(small_config(4));
  const Critic d = build_critic(small_config(4));
  const Tensor y(Shape{1, 2, 8, 8});
  CHECK_THROWS_AS(g.forward(Tensor(Shape{1, 2, 4, 4}), y, {1, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(g.forward(y, Tensor(Shape{1, 3, 8, 8}), {1, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(g.forward(y, y, {3, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(d.project(Tensor(Shape{1, 2, 16, 16}), y, {2, 1.0}), std::invalid_argument);
}

TEST_CASE("space-to-depth and critic score") {
  const Tensor blk(Shape{1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(ag::space_to_depth2(ag::Var(blk)).value().values()[2] == 3.0);
  CHECK(critic_score(Tensor(Shape{1, 4, 1, 1})) == 0.0);
  CHECK(critic_score(Tensor(Shape{1, 4, 1, 1}, {1, 2, 3, 6})) == 3.0);
  const Tensor p = normal_tensor({1, 3, 4, 4}, 11);
  Tensor q = p;
  for (double& v : q.values()) v *= -2.5;
  CHECK(critic_score(q) == doctest::Approx(-2.5 * critic_score(p)).epsilon(1e-14));
  const Tensor batch = normal_tensor({3, 2, 2, 2}, 12);
  const Tensor per = critic_score(ag::Var(batch)).value();
  CHECK(per.shape() == Shape{3, 1, 1, 1});
}
