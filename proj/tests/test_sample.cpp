#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "lagds/sample.hpp"

using namespace lagds;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.in_channels = 2;
  c.lr_size = 4;
  c.max_scale = 4;
  c.base_width = 8;
  c.width_schedule = {8, 8};
  c.min_width = 8;
  c.proj_channels = 4;
  c.seed = 77;
  return c;
}

GridField random_lr(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(1.0, 2.0);
  GridField f = GridField::zeros(2, 4, 4);
  for (double& v : f.values) v = u(rng);
  return f;
}

struct Fixture {
  Generator gen = build_generator(small_config());
  NormalizationStats norm{{1.5, 1.5}, {0.25, 0.5}};
  Downscaler model{gen, norm};
};

}  // namespace

TEST_CASE("center prediction is deterministic and full resolution") {
  Fixture fx;
  const GridField y = random_lr(1);
  const GridField a = sample_center(fx.model, y);
  CHECK(a == sample_center(fx.model, y));
  CHECK(a.height == 16);
  CHECK(a.width == 16);
  CHECK(a.channels == 2);

  // Matches a direct zero-latent forward pass mapped back to physical units.
  const GridField yn = fx.norm.apply(y);
  Tensor yt(Shape{1, 2, 4, 4}, yn.values);
  const Tensor out = fx.gen.forward(yt, Tensor(Shape{1, 2, 4, 4}), {2, 1.0});
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k < 256; ++k) {
      CHECK(a.values[c * 256 + k] == out[c * 256 + k] * fx.norm.stddev[c] + fx.norm.mean[c]);
    }

  CHECK_THROWS_AS(sample_center(fx.model, GridField::zeros(2, 8, 8)), std::invalid_argument);
  Generator partial(small_config(), 1);
  const Downscaler half{partial, fx.norm};
  CHECK_THROWS_AS(sample_center(half, y), std::invalid_argument);
}

TEST_CASE("realization i depends only on the seed and i") {
  Fixture fx;
  const GridField y = random_lr(2);
  const auto a = sample_posterior(fx.model, y, 20, 5);
  const auto b = sample_posterior(fx.model, y, 3, 5);
  REQUIRE(a.size() == 20);
  CHECK(a == sample_posterior(fx.model, y, 20, 5));
  for (int i = 0; i < 3; ++i) CHECK(a[i] == b[i]);
  double max_diff = 0;
  for (std::size_t k = 0; k < a[0].values.size(); ++k) {
    max_diff = std::max(max_diff, std::abs(a[0].values[k] - a[1].values[k]));
  }
  CHECK(max_diff > 1e-6);
  CHECK_FALSE(sample_posterior(fx.model, y, 1, 6)[0] == a[0]);
  CHECK_THROWS(sample_posterior(fx.model, y, 0, 5));
}

TEST_CASE("ensemble statistics") {
  GridField one = GridField::zeros(1, 2, 2), three = one;
  for (double& v : one.values) v = 1.0;
  for (double& v : three.values) v = 3.0;
  const auto s = ensemble_stats(std::vector<GridField>{one, three});
  for (double v : s.mean_map.values) CHECK(v == 2.0);
  for (double v : s.std_map.values) CHECK(v == 1.0);
  const auto same = ensemble_stats(std::vector<GridField>{one, one, one});
  for (double v : same.std_map.values) CHECK(v == 0.0);
  CHECK_THROWS(ensemble_stats(std::vector<GridField>{one}));

  Fixture fx;
  const GridField y = random_lr(3);
  const auto fields = sample_posterior(fx.model, y, 40, 9);
  const auto exact = ensemble_stats(fields);
  const auto streamed = sample_ensemble_stats(fx.model, y, 40, 9);
  CHECK(streamed.n == 40);
  CHECK(streamed.seed == 9);
  EnsembleAccumulator backwards(sample_center(fx.model, y));
  for (auto it = fields.rbegin(); it != fields.rend(); ++it) backwards.add(*it);
  const auto rev = backwards.finish(9);
  for (std::size_t k = 0; k < exact.mean_map.values.size(); ++k) {
    CHECK(std::abs(streamed.mean_map.values[k] - exact.mean_map.values[k]) <= 1e-10);
    CHECK(std::abs(streamed.std_map.values[k] - exact.std_map.values[k]) <= 1e-10);
    CHECK(std::abs(rev.mean_map.values[k] - streamed.mean_map.values[k]) <= 1e-10);
    CHECK(std::abs(rev.std_map.values[k] - streamed.std_map.values[k]) <= 1e-10);
    CHECK(streamed.std_map.values[k] >= 0.0);
  }
  double grand = 0;
  for (const auto& f : fields)
    for (double v : f.values) grand += v;
  double mean_of_means = 0;
  for (double v : exact.mean_map.values) mean_of_means += v;
  CHECK(mean_of_means / exact.mean_map.values.size() ==
        doctest::Approx(grand / (40.0 * fields[0].values.size())).epsilon(1e-12));
}

TEST_CASE("pseudo p-values") {
  const std::vector<double> d{0.1, 0.2, 0.3, 0.4};
  CHECK(pseudo_p_value(0.0, d) == 1.0);
  CHECK(pseudo_p_value(0.25, d) == 3.0 / 5.0);
  CHECK(pseudo_p_value(0.3, d) == 3.0 / 5.0);
  CHECK(pseudo_p_value(9.0, d) == 1.0 / 5.0);
  double last = 1.0;
  for (double t = 0.0; t < 0.5; t += 0.01) {
    const double p = pseudo_p_value(t, d);
    CHECK(p <= last);
    CHECK(p >= 1.0 / 5.0);
    last = p;
  }
}

TEST_CASE("hypothesis test") {
  Fixture fx;
  const GridField y = random_lr(4);
  const GridField center = sample_center(fx.model, y);
  SwdParams sp;
  sp.directions = 16;
  sp.descriptors = 32;
  const Statistic both[] = {Statistic::ResidualL2, Statistic::Swd};
  const auto at_center = hypothesis_test(fx.model, y, center, 30, 1, both, sp);
  REQUIRE(at_center.size() == 2);
  CHECK(at_center[0].statistic_name == "residual-L2");
  CHECK(at_center[1].statistic_name == "swd");
  CHECK(at_center[0].d_test == 0.0);
  CHECK(at_center[0].pseudo_p == 1.0);
  CHECK(at_center[1].pseudo_p == 1.0);

  // A realization from the same seed stream reproduces its own ensemble entry.
  const auto reals = sample_posterior(fx.model, y, 30, 1);
  const auto replay = hypothesis_test(fx.model, y, reals[7], 30, 1, Statistic::ResidualL2);
  CHECK(replay.d_test == replay.ensemble_d[7]);
  CHECK(replay.ensemble_d == at_center[0].ensemble_d);

  GridField far = center;
  for (double& v : far.values) v += 100.0;
  CHECK(hypothesis_test(fx.model, y, far, 30, 1, Statistic::ResidualL2).pseudo_p == 1.0 / 31.0);
  CHECK_THROWS_AS(hypothesis_test(fx.model, y, GridField::zeros(2, 8, 8), 30, 1, Statistic::Swd),
                  std::invalid_argument);

  CHECK(parse_statistic("residual") == Statistic::ResidualL2);
  CHECK(parse_statistic("swd") == Statistic::Swd);
  CHECK_THROWS(parse_statistic("lpips"));

  const auto path = std::filesystem::temp_directory_path() / "lagds_test_report.tsv";
  write_hypothesis_report(path, at_center);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "statistic\td_test\tn\tpseudo_p");
  CHECK(row == "residual-L2\t0\t30\t1");
  std::filesystem::remove(path);
}
