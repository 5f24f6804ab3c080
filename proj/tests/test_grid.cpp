#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "lagds/grid.hpp"

using namespace lagds;

namespace {

GridField random_field(int c, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  GridField f = GridField::zeros(c, n, n);
  for (double& v : f.values) v = u(rng);
  return f;
}

std::vector<GridField> stamped(const std::vector<std::int64_t>& times) {
  std::vector<GridField> out;
  for (std::size_t i = 0; i < times.size(); ++i) {
    GridField f = GridField::zeros(1, 2, 2);
    f.values.assign(4, static_cast<double>(i));
    f.timestamp = times[i];
    out.push_back(f);
  }
  return out;
}

}  // namespace

TEST_CASE("average_pool examples") {
  GridField ones = GridField::zeros(1, 4, 4);
  ones.values.assign(16, 1.0);
  const GridField p = average_pool(ones, 4);
  CHECK(p.height == 1);
  CHECK(p.values[0] == 1.0);

  GridField f = GridField::zeros(1, 2, 2);
  f.values = {1, 2, 3, 4};
  CHECK(average_pool(f, 2).values[0] == 2.5);
}

TEST_CASE("average_pool reports the offending axis") {
  GridField f = GridField::zeros(1, 8, 6);
  try {
    average_pool(f, 4);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("width") != std::string::npos);
  }
  GridField g = GridField::zeros(1, 6, 8);
  CHECK_THROWS_WITH_AS(average_pool(g, 4), doctest::Contains("height"), std::invalid_argument);
}

TEST_CASE("average_pool composition and linearity") {
  const GridField f = random_field(2, 8, 11);
  const GridField g = random_field(2, 8, 12);
  const GridField twice = average_pool(average_pool(f, 2), 2);
  const GridField once = average_pool(f, 4);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(std::abs(twice.values[i] - once.values[i]) <= 1e-12);

  const double a = 1.7, b = -0.4;
  GridField mix = f;
  for (std::size_t i = 0; i < mix.size(); ++i) mix.values[i] = a * f.values[i] + b * g.values[i];
  const GridField pm = average_pool(mix, 2);
  const GridField pf = average_pool(f, 2);
  const GridField pg = average_pool(g, 2);
  for (std::size_t i = 0; i < pm.size(); ++i) {
    CHECK(std::abs(pm.values[i] - (a * pf.values[i] + b * pg.values[i])) <= 1e-10);
  }
}

TEST_CASE("make_pairs") {
  SUBCASE("512 at scale 64 gives an 8x8 LR") {
    std::vector<GridField> fields{GridField::zeros(1, 512, 512)};
    const auto pairs = make_pairs(fields, 64);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].lr.height == 8);
    CHECK(pairs[0].lr.width == 8);
    CHECK(pairs[0].scale == 64);
  }
  SUBCASE("16 at scale 2") {
    std::vector<GridField> fields{random_field(1, 16, 3)};
    const auto pairs = make_pairs(fields, 2);
    CHECK(pairs[0].lr.height == 8);
    CHECK(pairs[0].hr == fields[0]);
    CHECK(pairs[0].lr == average_pool(fields[0], 2));
  }
  SUBCASE("16 at scale 4 is too small") {
    std::vector<GridField> fields{GridField::zeros(1, 16, 16)};
    CHECK_THROWS_WITH_AS(make_pairs(fields, 4), doctest::Contains("minimum size is 32"),
                         std::invalid_argument);
  }
  SUBCASE("non-square and non-power-of-two fields are rejected") {
    std::vector<GridField> a{GridField::zeros(1, 16, 32)};
    CHECK_THROWS_AS(make_pairs(a, 2), std::invalid_argument);
    std::vector<GridField> b{GridField::zeros(1, 24, 24)};
    CHECK_THROWS_AS(make_pairs(b, 2), std::invalid_argument);
  }
}

TEST_CASE("chronological_split") {
  SUBCASE("yearly fields with a 2014 cut") {
    std::vector<std::int64_t> times;
    for (int y = 2007; y <= 2014; ++y) times.push_back(parse_iso8601(std::to_string(y)));
    const auto s = chronological_split(stamped(times), parse_iso8601("2014"));
    CHECK(s.train.size() == 7);
    CHECK(s.test.size() == 1);
    CHECK(*s.test[0].timestamp == parse_iso8601("2014-01-01T00:00:00Z"));
  }
  SUBCASE("fraction") {
    std::vector<std::int64_t> times;
    for (int i = 0; i < 10; ++i) times.push_back(1000 + i);
    const auto s = chronological_split(stamped(times), 0.8);
    CHECK(s.train.size() == 8);
    CHECK(s.test.size() == 2);
    CHECK(s.train.size() + s.test.size() == 10);
    CHECK(*s.train.back().timestamp <= *s.test.front().timestamp);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(chronological_split(stamped({3, 1, 2}), 0.5), std::invalid_argument);
    CHECK_THROWS_AS(chronological_split(stamped({1, 2, 3}), std::int64_t{0}), std::invalid_argument);
    CHECK_THROWS_AS(chronological_split(stamped({1, 2, 3}), std::int64_t{10}), std::invalid_argument);
    CHECK_THROWS_AS(chronological_split(stamped({1, 2, 3}), 1.0), std::invalid_argument);
  }
}

TEST_CASE("normalization") {
  GridField f = GridField::zeros(1, 1, 2);
  f.values = {0.0, 2.0};
  std::vector<GridField> one{f};
  const auto stats = fit_normalization(one);
  CHECK(stats.mean[0] == 1.0);
  CHECK(stats.stddev[0] == 1.0);
  const GridField n = stats.apply(f);
  CHECK(n.values[0] == -1.0);
  CHECK(n.values[1] == 1.0);

  std::vector<GridField> set{random_field(2, 8, 5), random_field(2, 8, 6), random_field(2, 8, 7)};
  const auto s2 = fit_normalization(set);
  std::vector<GridField> applied;
  for (const auto& g : set) {
    applied.push_back(s2.apply(g));
    const GridField back = s2.invert(applied.back());
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(std::abs(back.values[i] - g.values[i]) <= 1e-10 * std::max(1.0, std::abs(g.values[i])));
    }
  }
  const auto s3 = fit_normalization(applied);
  for (int c = 0; c < 2; ++c) {
    CHECK(std::abs(s3.mean[c]) <= 1e-8);
    CHECK(std::abs(s3.stddev[c] - 1.0) <= 1e-6);
  }

  GridField k = GridField::zeros(2, 2, 2);
  k.channel_names = {"u", "v"};
  k.values = {1, 2, 3, 4, 5, 5, 5, 5};
  std::vector<GridField> constant{k};
  CHECK_THROWS_WITH_AS(fit_normalization(constant), doctest::Contains("'v'"), std::invalid_argument);
}

TEST_CASE("synthetic fields") {
  SyntheticFieldConfig cfg;
  cfg.seed = 7;
  cfg.count = 3;
  cfg.size = 32;
  cfg.channels = 2;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  CHECK(a == b);
  REQUIRE(a.size() == 3);
  CHECK(*a[1].timestamp - *a[0].timestamp == cfg.time_step);
  CHECK(format_iso8601(*a[0].timestamp) == "2007-01-01T00:00:00Z");
  for (const auto& f : a) {
    f.validate();
    for (double v : f.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      CHECK(static_cast<double>(static_cast<float>(v)) == v);
    }
  }
  cfg.seed = 8;
  CHECK(generate_synthetic(cfg) != a);

  SyntheticFieldConfig bad = cfg;
  bad.correlation_length = 0.5;
  CHECK_THROWS_AS(generate_synthetic(bad), std::invalid_argument);
  bad = cfg;
  bad.low = 1.0;
  CHECK_THROWS_AS(generate_synthetic(bad), std::invalid_argument);
}

TEST_CASE("ISO-8601 helpers") {
  CHECK(parse_iso8601("1970-01-01T00:00:00Z") == 0);
  CHECK(parse_iso8601("2007") == 1167609600);
  CHECK(parse_iso8601("2014-03-02") == parse_iso8601("2014-03-02T00:00:00"));
  CHECK(format_iso8601(parse_iso8601("2013-12-31T23:59:59Z")) == "2013-12-31T23:59:59Z");
  CHECK_THROWS_AS(parse_iso8601("yesterday"), std::invalid_argument);
  CHECK_THROWS_AS(parse_iso8601("2014-02-30"), std::invalid_argument);
}
