#include "lagds/grid.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>

namespace lagds {

namespace {

std::string axis_error(const char* op, const char* axis, int size, int factor) {
  return std::string(op) + ": " + axis + " " + std::to_string(size) +
         " is not divisible by factor " + std::to_string(factor);
}

// Rounds to the nearest binary32 value that stays inside [lo, hi].
double to_float_in_range(double v, double lo, double hi) {
  float r = static_cast<float>(v);
  if (r > hi) r = std::nextafter(r, -std::numeric_limits<float>::infinity());
  if (r < lo) r = std::nextafter(r, std::numeric_limits<float>::infinity());
  return r;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += k[i + radius];
  }
  for (double& v : k) v /= total;
  return k;
}

// Periodic separable convolution of an n x n plane.
void smooth_periodic(std::vector<double>& plane, int n, const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(plane.size());
  auto wrap = [n](int i) { return ((i % n) + n) % n; };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int d = -radius; d <= radius; ++d) s += kernel[d + radius] * plane[i * n + wrap(j + d)];
      tmp[i * n + j] = s;
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int d = -radius; d <= radius; ++d) s += kernel[d + radius] * tmp[wrap(i + d) * n + j];
      plane[i * n + j] = s;
    }
  }
}

}  // namespace

GridField GridField::zeros(int channels, int height, int width) {
  GridField f;
  f.channels = channels;
  f.height = height;
  f.width = width;
  f.values.assign(static_cast<std::size_t>(channels) * height * width, 0.0);
  for (int c = 0; c < channels; ++c) f.channel_names.push_back("ch" + std::to_string(c));
  return f;
}

void GridField::validate() const {
  if (channels <= 0 || height <= 0 || width <= 0) {
    throw std::invalid_argument("grid field: dimensions must be positive");
  }
  if (values.size() != static_cast<std::size_t>(channels) * height * width) {
    throw std::invalid_argument("grid field: value count does not match dimensions");
  }
  if (channel_names.size() != static_cast<std::size_t>(channels)) {
    throw std::invalid_argument("grid field: expected " + std::to_string(channels) +
                                " channel names, got " + std::to_string(channel_names.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw std::invalid_argument("grid field: non-finite value at flat index " +
                                  std::to_string(i));
    }
  }
}

bool is_power_of_two(long long v) { return v > 0 && (v & (v - 1)) == 0; }

GridField average_pool(const GridField& hr, int factor) {
  if (factor <= 0) throw std::invalid_argument("average_pool: factor must be positive");
  if (hr.height % factor != 0) throw std::invalid_argument(axis_error("average_pool", "height", hr.height, factor));
  if (hr.width % factor != 0) throw std::invalid_argument(axis_error("average_pool", "width", hr.width, factor));
  GridField out;
  out.channels = hr.channels;
  out.height = hr.height / factor;
  out.width = hr.width / factor;
  out.channel_names = hr.channel_names;
  out.timestamp = hr.timestamp;
  out.values.resize(static_cast<std::size_t>(out.channels) * out.height * out.width);
  const double count = static_cast<double>(factor) * factor;
  for (int c = 0; c < hr.channels; ++c) {
    for (int i = 0; i < out.height; ++i) {
      for (int j = 0; j < out.width; ++j) {
        double s = 0.0;
        for (int bi = 0; bi < factor; ++bi) {
          for (int bj = 0; bj < factor; ++bj) s += hr.at(c, i * factor + bi, j * factor + bj);
        }
        out.at(c, i, j) = s / count;
      }
    }
  }
  return out;
}

GridField upsample_nearest(const GridField& lr, int factor) {
  if (factor <= 0) throw std::invalid_argument("upsample_nearest: factor must be positive");
  GridField out;
  out.channels = lr.channels;
  out.height = lr.height * factor;
  out.width = lr.width * factor;
  out.channel_names = lr.channel_names;
  out.timestamp = lr.timestamp;
  out.values.resize(static_cast<std::size_t>(out.channels) * out.height * out.width);
  for (int c = 0; c < out.channels; ++c) {
    for (int i = 0; i < out.height; ++i) {
      for (int j = 0; j < out.width; ++j) out.at(c, i, j) = lr.at(c, i / factor, j / factor);
    }
  }
  return out;
}

std::vector<PairSample> make_pairs(std::span<const GridField> fields, int scale, int min_lr_side) {
  if (!is_power_of_two(scale)) {
    throw std::invalid_argument("make_pairs: scale " + std::to_string(scale) +
                                " is not a power of two");
  }
  const long long required = static_cast<long long>(scale) * min_lr_side;
  std::vector<PairSample> pairs;
  pairs.reserve(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const GridField& f = fields[i];
    if (f.height != f.width || !is_power_of_two(f.height)) {
      throw std::invalid_argument("make_pairs: field " + std::to_string(i) + " is " +
                                  std::to_string(f.height) + "x" + std::to_string(f.width) +
                                  "; training fields must be square with a power-of-two side");
    }
    if (f.height < required) {
      throw std::invalid_argument("make_pairs: field " + std::to_string(i) + " side " +
                                  std::to_string(f.height) + " is too small for scale " +
                                  std::to_string(scale) + "; minimum size is " +
                                  std::to_string(required));
    }
    pairs.push_back(PairSample{average_pool(f, scale), f, scale});
  }
  return pairs;
}

namespace {

void check_sorted(const std::vector<GridField>& fields) {
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const auto& a = fields[i - 1].timestamp;
    const auto& b = fields[i].timestamp;
    if (a && b && *b < *a) {
      throw std::invalid_argument("chronological_split: fields are not sorted by timestamp (index " +
                                  std::to_string(i) + ")");
    }
  }
}

DatasetSplit split_at(std::vector<GridField> fields, std::size_t n_train) {
  if (n_train == 0 || n_train >= fields.size()) {
    throw std::invalid_argument("chronological_split: split leaves " +
                                std::string(n_train == 0 ? "the training" : "the test") +
                                " side empty");
  }
  DatasetSplit s;
  s.train.assign(std::make_move_iterator(fields.begin()),
                 std::make_move_iterator(fields.begin() + static_cast<std::ptrdiff_t>(n_train)));
  s.test.assign(std::make_move_iterator(fields.begin() + static_cast<std::ptrdiff_t>(n_train)),
                std::make_move_iterator(fields.end()));
  return s;
}

}  // namespace

DatasetSplit chronological_split(std::vector<GridField> fields, std::int64_t cut) {
  check_sorted(fields);
  std::size_t n_train = 0;
  for (const GridField& f : fields) {
    if (!f.timestamp) throw std::invalid_argument("chronological_split: field without timestamp");
    if (*f.timestamp < cut) ++n_train;
  }
  return split_at(std::move(fields), n_train);
}

DatasetSplit chronological_split(std::vector<GridField> fields, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("chronological_split: fraction must lie in (0, 1)");
  }
  check_sorted(fields);
  const auto n_train =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(fields.size()) + 1e-9));
  return split_at(std::move(fields), n_train);
}

GridField NormalizationStats::apply(const GridField& f) const {
  if (static_cast<std::size_t>(f.channels) != mean.size()) {
    throw std::invalid_argument("normalization: channel count mismatch");
  }
  GridField out = f;
  for (int c = 0; c < f.channels; ++c) {
    for (double& v : out.channel(c)) v = (v - mean[c]) / stddev[c];
  }
  return out;
}

GridField NormalizationStats::invert(const GridField& f) const {
  if (static_cast<std::size_t>(f.channels) != mean.size()) {
    throw std::invalid_argument("normalization: channel count mismatch");
  }
  GridField out = f;
  for (int c = 0; c < f.channels; ++c) {
    for (double& v : out.channel(c)) v = v * stddev[c] + mean[c];
  }
  return out;
}

NormalizationStats fit_normalization(std::span<const GridField> train) {
  if (train.empty()) throw std::invalid_argument("fit_normalization: empty training set");
  const int channels = train.front().channels;
  NormalizationStats stats;
  stats.mean.assign(channels, 0.0);
  stats.stddev.assign(channels, 0.0);
  std::vector<double> count(channels, 0.0);
  for (const GridField& f : train) {
    if (f.channels != channels) throw std::invalid_argument("fit_normalization: channel count mismatch");
    for (int c = 0; c < channels; ++c) {
      for (double v : f.channel(c)) stats.mean[c] += v;
      count[c] += static_cast<double>(f.channel(c).size());
    }
  }
  for (int c = 0; c < channels; ++c) stats.mean[c] /= count[c];
  for (const GridField& f : train) {
    for (int c = 0; c < channels; ++c) {
      for (double v : f.channel(c)) stats.stddev[c] += (v - stats.mean[c]) * (v - stats.mean[c]);
    }
  }
  for (int c = 0; c < channels; ++c) {
    stats.stddev[c] = std::sqrt(stats.stddev[c] / count[c]);
    if (!(stats.stddev[c] > 0.0)) {
      const auto& names = train.front().channel_names;
      const std::string name = c < static_cast<int>(names.size()) ? names[c] : std::to_string(c);
      throw std::invalid_argument("fit_normalization: channel '" + name +
                                  "' is constant over the training set");
    }
  }
  return stats;
}

void SyntheticFieldConfig::validate() const {
  if (count <= 0) throw std::invalid_argument("synthetic: count must be positive");
  if (!is_power_of_two(size)) throw std::invalid_argument("synthetic: size must be a power of two");
  if (channels <= 0) throw std::invalid_argument("synthetic: channels must be positive");
  if (!(correlation_length >= 1.0)) {
    throw std::invalid_argument("synthetic: correlation_length must be >= 1");
  }
  if (!(low < high)) throw std::invalid_argument("synthetic: value range requires low < high");
}

std::vector<GridField> generate_synthetic(const SyntheticFieldConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal;
  const auto kernel = gaussian_kernel(config.correlation_length);
  const int n = config.size;
  std::vector<GridField> out;
  out.reserve(config.count);
  std::vector<double> plane(static_cast<std::size_t>(n) * n);
  for (int idx = 0; idx < config.count; ++idx) {
    GridField f = GridField::zeros(config.channels, n, n);
    f.timestamp = config.start_time + static_cast<std::int64_t>(idx) * config.time_step;
    for (int c = 0; c < config.channels; ++c) {
      for (double& v : plane) v = normal(rng);
      smooth_periodic(plane, n, kernel);
      const auto [lo_it, hi_it] = std::minmax_element(plane.begin(), plane.end());
      const double lo = *lo_it;
      const double span = *hi_it - lo;
      auto dst = f.channel(c);
      for (std::size_t i = 0; i < plane.size(); ++i) {
        const double unit = span > 0 ? (plane[i] - lo) / span : 0.5;
        dst[i] = to_float_in_range(config.low + unit * (config.high - config.low), config.low,
                                   config.high);
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::string format_iso8601(std::int64_t seconds) {
  using namespace std::chrono;
  const sys_seconds tp{std::chrono::seconds{seconds}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss hms{tp - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

std::int64_t parse_iso8601(std::string_view text) {
  using namespace std::chrono;
  int y = 0, h = 0, mi = 0, s = 0;
  unsigned mo = 1, d = 1;
  const std::string str(text);
  int consumed = 0;
  if (std::sscanf(str.c_str(), "%d-%u-%uT%d:%d:%d%n", &y, &mo, &d, &h, &mi, &s, &consumed) == 6 ||
      std::sscanf(str.c_str(), "%d-%u-%u%n", &y, &mo, &d, &consumed) == 3 ||
      std::sscanf(str.c_str(), "%d%n", &y, &consumed) == 1) {
    const std::string_view rest = text.substr(static_cast<std::size_t>(consumed));
    if (!(rest.empty() || rest == "Z")) {
      throw std::invalid_argument("unrecognized timestamp '" + str + "'");
    }
    const year_month_day ymd{year{y}, month{mo}, day{d}};
    if (!ymd.ok()) throw std::invalid_argument("invalid calendar date '" + str + "'");
    const auto tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
    return tp.time_since_epoch().count();
  }
  throw std::invalid_argument("unrecognized timestamp '" + str + "'");
}

}  // namespace lagds
