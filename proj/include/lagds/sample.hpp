#pragma once
// Inference: center prediction G(0, y), posterior realizations, per-pixel
// ensemble statistics and the simulation-based plausibility test.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lagds/grid.hpp"
#include "lagds/metrics.hpp"
#include "lagds/net.hpp"

namespace lagds {

// A trained generator (normally the EMA copy) with the normalization it was
// trained under. Inputs and outputs are in physical units.
struct Downscaler {
  const Generator& generator;
  const NormalizationStats& normalization;

  // Throws std::invalid_argument unless the generator is fully grown and y
  // is C x lr_size x lr_size.
  void check_input(const GridField& y) const;
  int hr_side() const;
};

GridField sample_center(const Downscaler& model, const GridField& y);

// Calls fn(i, field) for i = 0..n-1 in order. Realization i uses latent noise
// seeded by (seed, i) alone.
void for_each_realization(const Downscaler& model, const GridField& y, int n, std::uint64_t seed,
                          const std::function<void(int, const GridField&)>& fn);

std::vector<GridField> sample_posterior(const Downscaler& model, const GridField& y, int n,
                                        std::uint64_t seed);

struct EnsembleStats {
  GridField mean_map;
  GridField std_map;  // population standard deviation
  int n = 0;
  std::uint64_t seed = 0;
};

EnsembleStats ensemble_stats(std::span<const GridField> realizations);

// Streaming reduction with compensated sums of offsets from a reference
// field; the result does not depend on the order of add() calls beyond
// rounding.
class EnsembleAccumulator {
 public:
  explicit EnsembleAccumulator(GridField reference);
  void add(const GridField& f);
  EnsembleStats finish(std::uint64_t seed) const;
  int count() const { return n_; }

 private:
  GridField ref_;
  std::vector<double> s1_, c1_, s2_, c2_;
  int n_ = 0;
};

EnsembleStats sample_ensemble_stats(const Downscaler& model, const GridField& y, int n,
                                    std::uint64_t seed);

enum class Statistic { ResidualL2, Swd };

const char* to_string(Statistic s);
Statistic parse_statistic(const std::string& name);

// Root mean squared pixel difference.
double residual_l2(const GridField& a, const GridField& b);
double discrepancy(Statistic s, const GridField& candidate, const GridField& center,
                   const SwdParams& swd_params = {});

// (1 + #{d_i >= d_test}) / (n + 1)
double pseudo_p_value(double d_test, std::span<const double> ensemble_d);

struct HypothesisTestResult {
  std::string statistic_name;
  double d_test = 0.0;
  std::vector<double> ensemble_d;
  double pseudo_p = 1.0;
};

// One result per requested statistic, all computed on the same realizations.
std::vector<HypothesisTestResult> hypothesis_test(const Downscaler& model, const GridField& y,
                                                  const GridField& x_test, int n,
                                                  std::uint64_t seed,
                                                  std::span<const Statistic> statistics,
                                                  const SwdParams& swd_params = {});
HypothesisTestResult hypothesis_test(const Downscaler& model, const GridField& y,
                                     const GridField& x_test, int n, std::uint64_t seed,
                                     Statistic statistic, const SwdParams& swd_params = {});

// TSV: statistic, d_test, n, pseudo_p
void write_hypothesis_report(const std::filesystem::path& path,
                             std::span<const HypothesisTestResult> results);

}  // namespace lagds
