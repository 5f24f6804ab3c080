#pragma once
// Evaluation statistics: relative MSE, sliced Wasserstein distance on
// Laplacian-pyramid patch descriptors, empirical semivariograms and
// block-mean (mass) preservation.

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "lagds/grid.hpp"

namespace lagds {

// Mean: mean(truth). MeanAbs: mean(|truth|). Auto: Mean unless truth has a
// negative entry, then MeanAbs.
enum class MseDenominator { Mean, MeanAbs, Auto };

double relative_mse(const GridField& pred, const GridField& truth,
                    MseDenominator denominator = MseDenominator::Auto);

// Exact W1 between two equal-size empirical distributions.
double sliced_w1_1d(std::span<const double> a, std::span<const double> b);

struct SwdParams {
  int patch_size = 7;
  int min_resolution = 16;  // coarsest pyramid level side
  int max_levels = 0;       // 0: as many as min_resolution allows
  int descriptors = 128;    // per image per level; all positions when >= the count
  int directions = 512;
  bool standardize_channels = true;
  bool standardize_descriptors = true;
  std::uint64_t seed = 0;
  // When non-empty, replaces the random directions (each patch_size^2 long).
  std::vector<std::vector<double>> fixed_directions;

  void validate() const;
};

double swd(const GridField& a, const GridField& b, const SwdParams& params = {});

struct SemivariogramParams {
  double max_lag = 0.0;  // <= 0: half the larger side
  int n_bins = 16;
  std::int64_t max_pairs = 2'000'000;
  std::uint64_t seed = 0;
};

struct SemivariogramCurve {
  std::vector<double> lags;  // bin centers, ascending
  std::vector<double> gamma;
  std::vector<std::int64_t> counts;
};

SemivariogramCurve semivariogram(const GridField& field, int channel,
                                 const SemivariogramParams& params = {});

struct SemivariogramEnvelope {
  std::vector<double> lags;
  std::vector<double> lower;
  std::vector<double> upper;
};

SemivariogramEnvelope semivariogram_envelope(std::span<const SemivariogramCurve> curves);

// Fraction of envelope bins, among those also populated in curve, where the
// curve lies inside [lower, upper].
double fraction_inside(const SemivariogramCurve& curve, const SemivariogramEnvelope& env);

struct MassReport {
  std::vector<std::pair<double, double>> scatter;  // (lr value, hr block mean)
  double pearson_r = 0.0;
  double max_abs_dev = 0.0;
};

MassReport mass_preservation(const GridField& lr, const GridField& hr, int factor);

double pearson(std::span<const double> xs, std::span<const double> ys);

// CSV: lag,gamma,count[,lower,upper]
void write_semivariogram_csv(const std::filesystem::path& path, const SemivariogramCurve& curve,
                             const SemivariogramEnvelope* envelope = nullptr);
// CSV: lr_value,hr_block_mean
void write_scatter_csv(const std::filesystem::path& path, const MassReport& report);

}  // namespace lagds
