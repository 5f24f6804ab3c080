#pragma once
// Gridded geospatial fields, LR/HR pairing, dataset splitting, per-channel
// standardization and a deterministic synthetic field generator.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lagds {

// C x H x W field, channel-major then row-major. Values are kept in double
// precision in memory; the on-disk format stores binary32.
struct GridField {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;
  std::vector<std::string> channel_names;
  std::optional<std::int64_t> timestamp;  // seconds since the Unix epoch, UTC

  static GridField zeros(int channels, int height, int width);

  double& at(int c, int i, int j) {
    return values[(static_cast<std::size_t>(c) * height + i) * width + j];
  }
  double at(int c, int i, int j) const {
    return values[(static_cast<std::size_t>(c) * height + i) * width + j];
  }
  std::span<double> channel(int c) {
    return {values.data() + static_cast<std::size_t>(c) * height * width,
            static_cast<std::size_t>(height) * width};
  }
  std::span<const double> channel(int c) const {
    return {values.data() + static_cast<std::size_t>(c) * height * width,
            static_cast<std::size_t>(height) * width};
  }
  std::size_t size() const { return values.size(); }
  bool same_shape(const GridField& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  // Throws std::invalid_argument on inconsistent sizes, missing channel
  // names or non-finite values.
  void validate() const;

  friend bool operator==(const GridField&, const GridField&) = default;
};

struct PairSample {
  GridField lr;
  GridField hr;
  int scale = 1;
};

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  GridField apply(const GridField& f) const;
  GridField invert(const GridField& f) const;
};

struct SyntheticFieldConfig {
  std::uint64_t seed = 0;
  int count = 1;
  int size = 64;
  int channels = 1;
  double correlation_length = 4.0;
  double low = 0.0;
  double high = 1.0;
  std::int64_t start_time = 1167609600;  // 2007-01-01T00:00:00Z
  std::int64_t time_step = 3600;

  void validate() const;
};

struct DatasetSplit {
  std::vector<GridField> train;
  std::vector<GridField> test;
};

bool is_power_of_two(long long v);

// Block means over factor x factor blocks, per channel. Each block is summed
// in double precision in row-major order and divided once.
GridField average_pool(const GridField& hr, int factor);

GridField upsample_nearest(const GridField& lr, int factor);

// Builds (average_pool(hr, scale), hr) pairs. Fields must be square with a
// power-of-two side of at least min_lr_side * scale.
std::vector<PairSample> make_pairs(std::span<const GridField> fields, int scale,
                                   int min_lr_side = 8);

// Fields stamped before `cut` train, the rest test.
DatasetSplit chronological_split(std::vector<GridField> fields, std::int64_t cut);
// First floor(fraction * n) fields train.
DatasetSplit chronological_split(std::vector<GridField> fields, double fraction);

NormalizationStats fit_normalization(std::span<const GridField> train);

std::vector<GridField> generate_synthetic(const SyntheticFieldConfig& config);

std::string format_iso8601(std::int64_t seconds);
// Accepts YYYY, YYYY-MM-DD, YYYY-MM-DDTHH:MM:SS with optional trailing Z.
std::int64_t parse_iso8601(std::string_view text);

}  // namespace lagds
