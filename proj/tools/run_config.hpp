#pragma once
// Run configuration: presets, key=value config files and the config echo.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "lagds/grid.hpp"
#include "lagds/metrics.hpp"
#include "lagds/train.hpp"

namespace lagds::cli {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string preset = "smoke";

  std::string dataset;
  std::string output = "lagds_out";
  std::string checkpoint;
  std::string input;      // LR field for sample and test
  std::string candidate;  // HR field for test
  std::uint64_t seed = 0;

  // synth
  int count = 64;
  int size = 64;
  int channels = 2;
  double correlation_length = 4.0;
  double low = 0.0;
  double high = 1.0;
  std::int64_t start_time = 1167609600;
  std::int64_t time_step = 3600;

  // model
  int max_scale = 8;
  std::vector<int> widths{32, 16, 8, 8};  // LR width then one per stage
  int z_channels = 2;
  int proj_channels = 16;
  double leaky_slope = 0.2;

  // objective and optimizer
  double lambda_center = 10.0;
  double lambda_gp = 10.0;
  double learning_rate = 2e-3;
  int batch = 16;
  int n_critic = 5;
  int epochs_per_phase = 2;
  double ema_decay = 0.99;
  std::int64_t max_steps = -1;
  double train_fraction = 0.9;

  // sampling and evaluation
  int n = 1000;
  int sample_index = 0;
  std::string statistic = "residual";
  double significance = 0.05;
  std::string relmse_denominator = "auto";
  int swd_patch = 7;
  int swd_descriptors = 128;
  int swd_directions = 512;
  int swd_min_resolution = 16;
  int variogram_bins = 16;
  double variogram_max_lag = 0.0;
  std::int64_t variogram_max_pairs = 2'000'000;

  // Replaces every field with the named preset's values: smoke, wind or solar.
  static RunConfig from_preset(const std::string& name);

  // Applies one key=value; throws UsageError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  // Applies a config file; blank lines and lines starting with '#' are skipped.
  void load(const std::filesystem::path& path);
  // Every key with its current value, in a stable order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  void write_echo(const std::filesystem::path& path, const std::string& command) const;

  // Throws UsageError on out-of-range values.
  void validate() const;

  // Model for fields of the given side.
  ModelConfig model_config(int in_channels, int hr_side) const;
  TrainConfig train_config(const ModelConfig& model) const;
  SyntheticFieldConfig synthetic_config() const;
  SwdParams swd_params() const;
  SemivariogramParams variogram_params() const;
  MseDenominator denominator() const;
};

std::vector<std::string> preset_names();

}  // namespace lagds::cli
