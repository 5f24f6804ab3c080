#include "lagds/sample.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "lagds/train.hpp"

namespace lagds {

namespace {

constexpr int kChunk = 16;

// Empty statistics mean the model works in physical units directly.
GridField to_model(const NormalizationStats& n, const GridField& f) {
  return n.mean.empty() ? f : n.apply(f);
}
GridField from_model(const NormalizationStats& n, const GridField& f) {
  return n.mean.empty() ? f : n.invert(f);
}

Tensor repeat(const GridField& f, int n) {
  Tensor t(Shape{n, f.channels, f.height, f.width});
  for (int i = 0; i < n; ++i) std::copy(f.values.begin(), f.values.end(), t.sample(i));
  return t;
}

void fill_latent(Tensor& z, int slot, std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0x2a7e47u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  double* p = z.sample(slot);
  for (std::size_t k = 0; k < z.shape().sample_size(); ++k) p[k] = normal(rng);
}

}  // namespace

void Downscaler::check_input(const GridField& y) const {
  const ModelConfig& cfg = generator.config();
  if (generator.stages() != cfg.num_stages()) {
    throw std::invalid_argument("model is only trained up to stage " + std::to_string(generator.stages()) +
                                " of " + std::to_string(cfg.num_stages()));
  }
  if (y.channels != cfg.in_channels || y.height != cfg.lr_size || y.width != cfg.lr_size) {
    throw std::invalid_argument("input must be " + std::to_string(cfg.in_channels) + " x " +
                                std::to_string(cfg.lr_size) + " x " + std::to_string(cfg.lr_size) +
                                ", got " + std::to_string(y.channels) + " x " +
                                std::to_string(y.height) + " x " + std::to_string(y.width));
  }
}

int Downscaler::hr_side() const { return generator.config().side(generator.config().num_stages()); }

GridField sample_center(const Downscaler& model, const GridField& y) {
  model.check_input(y);
  const ModelConfig& cfg = model.generator.config();
  const Tensor yt = repeat(to_model(model.normalization, y), 1);
  const Tensor z(Shape{1, cfg.z_channels, cfg.lr_size, cfg.lr_size});
  const Tensor out = model.generator.forward(yt, z, {cfg.num_stages(), 1.0});
  GridField f = from_model(model.normalization, unstack_field(out, 0, y.channel_names));
  f.timestamp = y.timestamp;
  return f;
}

void for_each_realization(const Downscaler& model, const GridField& y, int n, std::uint64_t seed,
                          const std::function<void(int, const GridField&)>& fn) {
  model.check_input(y);
  if (n < 1) throw std::invalid_argument("realization count must be >= 1");
  const ModelConfig& cfg = model.generator.config();
  const GridField yn = to_model(model.normalization, y);
  for (int start = 0; start < n; start += kChunk) {
    const int m = std::min(kChunk, n - start);
    Tensor z(Shape{m, cfg.z_channels, cfg.lr_size, cfg.lr_size});
    for (int s = 0; s < m; ++s) fill_latent(z, s, seed, start + s);
    const Tensor out = model.generator.forward(repeat(yn, m), z, {cfg.num_stages(), 1.0});
    for (int s = 0; s < m; ++s) {
      GridField f = from_model(model.normalization, unstack_field(out, s, y.channel_names));
      f.timestamp = y.timestamp;
      fn(start + s, f);
    }
  }
}

std::vector<GridField> sample_posterior(const Downscaler& model, const GridField& y, int n,
                                        std::uint64_t seed) {
  std::vector<GridField> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  for_each_realization(model, y, n, seed, [&](int, const GridField& f) { out.push_back(f); });
  return out;
}

EnsembleStats ensemble_stats(std::span<const GridField> realizations) {
  if (realizations.size() < 2) throw std::invalid_argument("ensemble_stats: need at least 2 realizations");
  const GridField& f0 = realizations.front();
  for (const auto& f : realizations) {
    if (!f.same_shape(f0)) throw std::invalid_argument("ensemble_stats: realizations differ in shape");
  }
  const double n = static_cast<double>(realizations.size());
  EnsembleStats s;
  s.n = static_cast<int>(realizations.size());
  s.mean_map = GridField::zeros(f0.channels, f0.height, f0.width);
  s.std_map = s.mean_map;
  s.mean_map.channel_names = s.std_map.channel_names = f0.channel_names;
  for (std::size_t k = 0; k < f0.values.size(); ++k) {
    double m = 0.0;
    for (const auto& f : realizations) m += f.values[k];
    m /= n;
    double var = 0.0;
    for (const auto& f : realizations) var += (f.values[k] - m) * (f.values[k] - m);
    s.mean_map.values[k] = m;
    s.std_map.values[k] = std::sqrt(var / n);
  }
  return s;
}

EnsembleAccumulator::EnsembleAccumulator(GridField reference)
    : ref_(std::move(reference)),
      s1_(ref_.values.size(), 0.0),
      c1_(ref_.values.size(), 0.0),
      s2_(ref_.values.size(), 0.0),
      c2_(ref_.values.size(), 0.0) {}

namespace {
// Neumaier compensated summation step.
void neumaier(double& sum, double& comp, double x) {
  const double t = sum + x;
  comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
  sum = t;
}
}  // namespace

void EnsembleAccumulator::add(const GridField& f) {
  if (!f.same_shape(ref_)) throw std::invalid_argument("ensemble: realization shape differs");
  for (std::size_t k = 0; k < f.values.size(); ++k) {
    const double d = f.values[k] - ref_.values[k];
    neumaier(s1_[k], c1_[k], d);
    neumaier(s2_[k], c2_[k], d * d);
  }
  ++n_;
}

EnsembleStats EnsembleAccumulator::finish(std::uint64_t seed) const {
  if (n_ < 2) throw std::invalid_argument("ensemble_stats: need at least 2 realizations");
  EnsembleStats s;
  s.n = n_;
  s.seed = seed;
  s.mean_map = GridField::zeros(ref_.channels, ref_.height, ref_.width);
  s.std_map = s.mean_map;
  s.mean_map.channel_names = s.std_map.channel_names = ref_.channel_names;
  const double n = n_;
  for (std::size_t k = 0; k < ref_.values.size(); ++k) {
    const double m1 = (s1_[k] + c1_[k]) / n;
    const double m2 = (s2_[k] + c2_[k]) / n;
    s.mean_map.values[k] = ref_.values[k] + m1;
    s.std_map.values[k] = std::sqrt(std::max(m2 - m1 * m1, 0.0));
  }
  return s;
}

EnsembleStats sample_ensemble_stats(const Downscaler& model, const GridField& y, int n,
                                    std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("ensemble_stats: need at least 2 realizations");
  EnsembleAccumulator acc(sample_center(model, y));
  for_each_realization(model, y, n, seed, [&](int, const GridField& f) { acc.add(f); });
  return acc.finish(seed);
}

const char* to_string(Statistic s) { return s == Statistic::ResidualL2 ? "residual-L2" : "swd"; }

Statistic parse_statistic(const std::string& name) {
  if (name == "residual" || name == "residual-L2" || name == "residual-l2") return Statistic::ResidualL2;
  if (name == "swd") return Statistic::Swd;
  throw std::invalid_argument("unknown statistic '" + name + "' (expected residual or swd)");
}

double residual_l2(const GridField& a, const GridField& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("residual_l2: shapes differ");
  double s = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) s += (a.values[k] - b.values[k]) * (a.values[k] - b.values[k]);
  return std::sqrt(s / static_cast<double>(a.values.size()));
}

double discrepancy(Statistic s, const GridField& candidate, const GridField& center,
                   const SwdParams& swd_params) {
  return s == Statistic::ResidualL2 ? residual_l2(candidate, center) : swd(candidate, center, swd_params);
}

double pseudo_p_value(double d_test, std::span<const double> ensemble_d) {
  const auto at_least = std::count_if(ensemble_d.begin(), ensemble_d.end(),
                                      [&](double d) { return d >= d_test; });
  return (1.0 + static_cast<double>(at_least)) / (static_cast<double>(ensemble_d.size()) + 1.0);
}

std::vector<HypothesisTestResult> hypothesis_test(const Downscaler& model, const GridField& y,
                                                  const GridField& x_test, int n,
                                                  std::uint64_t seed,
                                                  std::span<const Statistic> statistics,
                                                  const SwdParams& swd_params) {
  const GridField center = sample_center(model, y);
  if (!x_test.same_shape(center)) {
    throw std::invalid_argument("candidate must be " + std::to_string(center.channels) + " x " +
                                std::to_string(center.height) + " x " + std::to_string(center.width));
  }
  std::vector<HypothesisTestResult> out;
  for (Statistic s : statistics) {
    HypothesisTestResult r;
    r.statistic_name = to_string(s);
    r.d_test = discrepancy(s, x_test, center, swd_params);
    r.ensemble_d.resize(static_cast<std::size_t>(n));
    out.push_back(std::move(r));
  }
  for_each_realization(model, y, n, seed, [&](int i, const GridField& f) {
    for (std::size_t k = 0; k < statistics.size(); ++k) {
      out[k].ensemble_d[static_cast<std::size_t>(i)] = discrepancy(statistics[k], f, center, swd_params);
    }
  });
  for (auto& r : out) r.pseudo_p = pseudo_p_value(r.d_test, r.ensemble_d);
  return out;
}

HypothesisTestResult hypothesis_test(const Downscaler& model, const GridField& y,
                                     const GridField& x_test, int n, std::uint64_t seed,
                                     Statistic statistic, const SwdParams& swd_params) {
  const Statistic one[] = {statistic};
  return hypothesis_test(model, y, x_test, n, seed, one, swd_params).front();
}

void write_hypothesis_report(const std::filesystem::path& path,
                             std::span<const HypothesisTestResult> results) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "statistic\td_test\tn\tpseudo_p\n";
  for (const auto& r : results) {
    out << r.statistic_name << '\t' << r.d_test << '\t' << r.ensemble_d.size() << '\t' << r.pseudo_p << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace lagds
