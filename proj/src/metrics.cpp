#include "lagds/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>

#include "lagds/kernels.hpp"

namespace lagds {

double relative_mse(const GridField& pred, const GridField& truth, MseDenominator denominator) {
  if (!pred.same_shape(truth)) throw std::invalid_argument("relative_mse: shapes differ");
  if (truth.values.empty()) throw std::invalid_argument("relative_mse: empty field");
  if (denominator == MseDenominator::Auto) {
    const bool signed_data =
        std::any_of(truth.values.begin(), truth.values.end(), [](double v) { return v < 0.0; });
    denominator = signed_data ? MseDenominator::MeanAbs : MseDenominator::Mean;
  }
  double se = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    const double d = pred.values[i] - truth.values[i];
    se += d * d;
    ref += denominator == MseDenominator::MeanAbs ? std::abs(truth.values[i]) : truth.values[i];
  }
  const double n = static_cast<double>(truth.values.size());
  if (ref == 0.0) throw std::domain_error("relative_mse: ground truth averages to zero");
  return (se / n) / (ref / n);
}

double sliced_w1_1d(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("sliced_w1_1d: lengths differ");
  if (a.empty()) return 0.0;
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double s = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) s += std::abs(sa[i] - sb[i]);
  return s / static_cast<double>(sa.size());
}

// ---- SWD --------------------------------------------------------------------

void SwdParams::validate() const {
  if (patch_size < 1) throw std::invalid_argument("swd: patch_size must be >= 1");
  if (min_resolution < 1) throw std::invalid_argument("swd: min_resolution must be >= 1");
  if (max_levels < 0) throw std::invalid_argument("swd: max_levels must be >= 0");
  if (descriptors < 1) throw std::invalid_argument("swd: descriptors must be >= 1");
  const std::size_t dim = static_cast<std::size_t>(patch_size) * patch_size;
  if (fixed_directions.empty()) {
    if (directions < 1) throw std::invalid_argument("swd: directions must be >= 1");
  }
  for (const auto& d : fixed_directions) {
    if (d.size() != dim) throw std::invalid_argument("swd: fixed direction has the wrong length");
    double n = 0.0;
    for (double v : d) n += v * v;
    if (!(n > 0.0)) throw std::invalid_argument("swd: fixed direction is zero");
  }
}

namespace {

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double& at(int i, int j) { return v[static_cast<std::size_t>(i) * w + j]; }
  double at(int i, int j) const { return v[static_cast<std::size_t>(i) * w + j]; }
};

int mirror(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

constexpr double kTaps[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

Plane blur(const Plane& p, double gain) {
  Plane tmp{p.h, p.w, std::vector<double>(p.v.size())};
  for (int i = 0; i < p.h; ++i)
    for (int j = 0; j < p.w; ++j) {
      double s = 0.0;
      for (int t = -2; t <= 2; ++t) s += kTaps[t + 2] * p.at(i, mirror(j + t, p.w));
      tmp.at(i, j) = s;
    }
  Plane out{p.h, p.w, std::vector<double>(p.v.size())};
  for (int i = 0; i < p.h; ++i)
    for (int j = 0; j < p.w; ++j) {
      double s = 0.0;
      for (int t = -2; t <= 2; ++t) s += kTaps[t + 2] * tmp.at(mirror(i + t, p.h), j);
      out.at(i, j) = gain * s;
    }
  return out;
}

Plane downsample(const Plane& p) {
  const Plane b = blur(p, 1.0);
  Plane out{p.h / 2, p.w / 2, std::vector<double>(static_cast<std::size_t>(p.h / 2) * (p.w / 2))};
  for (int i = 0; i < out.h; ++i)
    for (int j = 0; j < out.w; ++j) out.at(i, j) = b.at(2 * i, 2 * j);
  return out;
}

Plane upsample(const Plane& p) {
  Plane z{p.h * 2, p.w * 2, std::vector<double>(static_cast<std::size_t>(p.h) * p.w * 4, 0.0)};
  for (int i = 0; i < p.h; ++i)
    for (int j = 0; j < p.w; ++j) z.at(2 * i, 2 * j) = p.at(i, j);
  return blur(z, 4.0);
}

std::vector<Plane> laplacian_pyramid(Plane g, int levels) {
  std::vector<Plane> out;
  for (int k = 0; k + 1 < levels; ++k) {
    Plane next = downsample(g);
    const Plane up = upsample(next);
    for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] -= up.v[i];
    out.push_back(std::move(g));
    g = std::move(next);
  }
  out.push_back(std::move(g));
  return out;
}

int pyramid_levels(int h, int w, const SwdParams& p) {
  int levels = 1;
  while ((h % 2 == 0) && (w % 2 == 0) && h / 2 >= p.min_resolution && w / 2 >= p.min_resolution) {
    if (p.max_levels > 0 && levels >= p.max_levels) break;
    h /= 2;
    w /= 2;
    ++levels;
  }
  return levels;
}

std::mt19937_64 level_rng(std::uint64_t seed, int level, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(level), tag};
  return std::mt19937_64(seq);
}

std::vector<std::size_t> patch_positions(int h, int w, int patch, int count, std::uint64_t seed,
                                         int level) {
  const std::size_t total = static_cast<std::size_t>(h - patch + 1) * (w - patch + 1);
  std::vector<std::size_t> pos;
  if (static_cast<std::size_t>(count) >= total) {
    pos.resize(total);
    for (std::size_t i = 0; i < total; ++i) pos[i] = i;
    return pos;
  }
  auto rng = level_rng(seed, level, 0x5eedu);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  pos.resize(count);
  for (auto& p : pos) p = pick(rng);
  return pos;
}

// Row-major descriptors, one patch per row.
std::vector<double> descriptors(const Plane& img, int patch, std::span<const std::size_t> pos,
                                bool standardize) {
  const int cols = img.w - patch + 1;
  const std::size_t dim = static_cast<std::size_t>(patch) * patch;
  std::vector<double> d(pos.size() * dim);
  for (std::size_t r = 0; r < pos.size(); ++r) {
    const int i0 = static_cast<int>(pos[r] / cols), j0 = static_cast<int>(pos[r] % cols);
    double* row = d.data() + r * dim;
    for (int a = 0; a < patch; ++a)
      for (int b = 0; b < patch; ++b) row[a * patch + b] = img.at(i0 + a, j0 + b);
  }
  if (standardize) {
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(d.size());
    double var = 0.0;
    for (double v : d) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(d.size()));
    for (double& v : d) v = sd > 0.0 ? (v - mean) / sd : v - mean;
  }
  return d;
}

std::vector<double> directions(const SwdParams& p, int level) {
  const std::size_t dim = static_cast<std::size_t>(p.patch_size) * p.patch_size;
  std::vector<double> dirs;
  if (!p.fixed_directions.empty()) {
    for (const auto& f : p.fixed_directions) dirs.insert(dirs.end(), f.begin(), f.end());
  } else {
    auto rng = level_rng(p.seed, level, 0xd1ecu);
    std::normal_distribution<double> normal;
    dirs.resize(static_cast<std::size_t>(p.directions) * dim);
    for (double& v : dirs) v = normal(rng);
  }
  for (std::size_t r = 0; r < dirs.size() / dim; ++r) {
    double n = 0.0;
    for (std::size_t k = 0; k < dim; ++k) n += dirs[r * dim + k] * dirs[r * dim + k];
    n = std::sqrt(n);
    for (std::size_t k = 0; k < dim; ++k) dirs[r * dim + k] /= n;
  }
  return dirs;
}

Plane channel_plane(const GridField& f, int c, bool standardize) {
  Plane p{f.height, f.width, std::vector<double>(f.channel(c).begin(), f.channel(c).end())};
  if (standardize) {
    double mean = 0.0;
    for (double v : p.v) mean += v;
    mean /= static_cast<double>(p.v.size());
    double var = 0.0;
    for (double v : p.v) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(p.v.size()));
    for (double& v : p.v) v = sd > 0.0 ? (v - mean) / sd : v - mean;
  }
  return p;
}

}  // namespace

double swd(const GridField& a, const GridField& b, const SwdParams& params) {
  params.validate();
  if (!a.same_shape(b)) throw std::invalid_argument("swd: shapes differ");
  if (a.height < params.patch_size || a.width < params.patch_size) {
    throw std::invalid_argument("swd: image is smaller than the " + std::to_string(params.patch_size) +
                                "-pixel patch");
  }
  const int levels = pyramid_levels(a.height, a.width, params);
  const std::size_t dim = static_cast<std::size_t>(params.patch_size) * params.patch_size;
  const auto& k = kernels::active();

  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    const auto pa = laplacian_pyramid(channel_plane(a, c, params.standardize_channels), levels);
    const auto pb = laplacian_pyramid(channel_plane(b, c, params.standardize_channels), levels);
    double channel_sum = 0.0;
    for (int l = 0; l < levels; ++l) {
      if (pa[l].h < params.patch_size || pa[l].w < params.patch_size) {
        throw std::invalid_argument("swd: pyramid level smaller than the patch");
      }
      const auto pos = patch_positions(pa[l].h, pa[l].w, params.patch_size, params.descriptors,
                                       params.seed, l);
      const auto da = descriptors(pa[l], params.patch_size, pos, params.standardize_descriptors);
      const auto db = descriptors(pb[l], params.patch_size, pos, params.standardize_descriptors);
      const auto dirs = directions(params, l);
      const std::size_t nd = dirs.size() / dim, np = pos.size();
      // Rows of proj are the projections of all descriptors onto one direction.
      std::vector<double> proj_a(nd * np), proj_b(nd * np);
      using kernels::Trans;
      k.gemm(Trans::No, Trans::Yes, nd, np, dim, 1.0, dirs.data(), dim, da.data(), dim, 0.0,
             proj_a.data(), np);
      k.gemm(Trans::No, Trans::Yes, nd, np, dim, 1.0, dirs.data(), dim, db.data(), dim, 0.0,
             proj_b.data(), np);
      double level_sum = 0.0;
      for (std::size_t r = 0; r < nd; ++r) {
        level_sum += sliced_w1_1d({proj_a.data() + r * np, np}, {proj_b.data() + r * np, np});
      }
      channel_sum += level_sum / static_cast<double>(nd);
    }
    total += channel_sum / levels;
  }
  return total / a.channels;
}

// ---- semivariogram ----------------------------------------------------------

SemivariogramCurve semivariogram(const GridField& field, int channel, const SemivariogramParams& p) {
  if (field.values.empty() || field.height < 1 || field.width < 1) {
    throw std::invalid_argument("semivariogram: empty field");
  }
  if (channel < 0 || channel >= field.channels) throw std::invalid_argument("semivariogram: bad channel");
  if (p.n_bins < 1) throw std::invalid_argument("semivariogram: n_bins must be >= 1");
  const double max_lag = p.max_lag > 0.0 ? p.max_lag : std::max(field.height, field.width) / 2.0;
  const double width = max_lag / p.n_bins;
  const int w = field.width;
  const auto v = field.channel(channel);
  const std::int64_t n = static_cast<std::int64_t>(v.size());

  std::vector<double> sums(p.n_bins, 0.0);
  std::vector<std::int64_t> counts(p.n_bins, 0);
  auto add = [&](std::int64_t a, std::int64_t b) {
    const double di = static_cast<double>(a / w - b / w), dj = static_cast<double>(a % w - b % w);
    const double d = std::sqrt(di * di + dj * dj);
    if (!(d > 0.0) || d > max_lag) return;
    int bin = std::clamp(static_cast<int>(std::ceil(d / width)) - 1, 0, p.n_bins - 1);
    while (bin > 0 && d <= bin * width) --bin;
    while (bin + 1 < p.n_bins && d > (bin + 1) * width) ++bin;
    const double diff = v[a] - v[b];
    sums[bin] += diff * diff;
    ++counts[bin];
  };

  const std::int64_t pairs = n * (n - 1) / 2;
  if (pairs <= p.max_pairs) {
    for (std::int64_t a = 0; a < n; ++a)
      for (std::int64_t b = a + 1; b < n; ++b) add(a, b);
  } else {
    std::mt19937_64 rng(p.seed);
    std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
    for (std::int64_t s = 0; s < p.max_pairs; ++s) {
      std::int64_t a = pick(rng), b = pick(rng);
      while (b == a) b = pick(rng);
      add(std::min(a, b), std::max(a, b));
    }
  }

  SemivariogramCurve out;
  for (int k = 0; k < p.n_bins; ++k) {
    if (counts[k] == 0) continue;
    out.lags.push_back((k + 0.5) * width);
    out.gamma.push_back(sums[k] / (2.0 * static_cast<double>(counts[k])));
    out.counts.push_back(counts[k]);
  }
  return out;
}

SemivariogramEnvelope semivariogram_envelope(std::span<const SemivariogramCurve> curves) {
  if (curves.empty()) throw std::invalid_argument("semivariogram_envelope: no curves");
  SemivariogramEnvelope env{curves[0].lags, curves[0].gamma, curves[0].gamma};
  for (const auto& c : curves.subspan(1)) {
    if (c.lags != env.lags) throw std::invalid_argument("semivariogram_envelope: curves use different bins");
    for (std::size_t k = 0; k < c.gamma.size(); ++k) {
      env.lower[k] = std::min(env.lower[k], c.gamma[k]);
      env.upper[k] = std::max(env.upper[k], c.gamma[k]);
    }
  }
  return env;
}

double fraction_inside(const SemivariogramCurve& curve, const SemivariogramEnvelope& env) {
  std::size_t shared = 0, inside = 0;
  for (std::size_t k = 0; k < env.lags.size(); ++k) {
    const auto it = std::find(curve.lags.begin(), curve.lags.end(), env.lags[k]);
    if (it == curve.lags.end()) continue;
    const double g = curve.gamma[static_cast<std::size_t>(it - curve.lags.begin())];
    ++shared;
    if (g >= env.lower[k] && g <= env.upper[k]) ++inside;
  }
  if (shared == 0) throw std::invalid_argument("fraction_inside: no shared lag bins");
  return static_cast<double>(inside) / static_cast<double>(shared);
}

// ---- mass preservation ------------------------------------------------------

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: lengths differ");
  if (xs.size() < 2) throw std::invalid_argument("pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw std::domain_error("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

MassReport mass_preservation(const GridField& lr, const GridField& hr, int factor) {
  if (factor < 1 || hr.channels != lr.channels || hr.height != lr.height * factor ||
      hr.width != lr.width * factor) {
    throw std::invalid_argument("mass_preservation: HR shape " + std::to_string(hr.height) + "x" +
                                std::to_string(hr.width) + " is not " + std::to_string(factor) +
                                "x the LR shape");
  }
  MassReport r;
  std::vector<double> xs(lr.values.begin(), lr.values.end());
  std::vector<double> ys;
  ys.reserve(xs.size());
  const double count = static_cast<double>(factor) * factor;
  for (int c = 0; c < lr.channels; ++c)
    for (int i = 0; i < lr.height; ++i)
      for (int j = 0; j < lr.width; ++j) {
        // Offsets from the first pixel, so a uniform block averages to itself exactly.
        const double first = hr.at(c, i * factor, j * factor);
        double acc = 0.0;
        for (int bi = 0; bi < factor; ++bi)
          for (int bj = 0; bj < factor; ++bj) acc += hr.at(c, i * factor + bi, j * factor + bj) - first;
        ys.push_back(first + acc / count);
      }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    r.scatter.emplace_back(xs[i], ys[i]);
    r.max_abs_dev = std::max(r.max_abs_dev, std::abs(xs[i] - ys[i]));
  }
  r.pearson_r = pearson(xs, ys);
  return r;
}

void write_semivariogram_csv(const std::filesystem::path& path, const SemivariogramCurve& curve,
                             const SemivariogramEnvelope* envelope) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << (envelope ? "lag,gamma,count,lower,upper\n" : "lag,gamma,count\n");
  for (std::size_t k = 0; k < curve.lags.size(); ++k) {
    out << curve.lags[k] << ',' << curve.gamma[k] << ',' << curve.counts[k];
    if (envelope) {
      const auto it = std::find(envelope->lags.begin(), envelope->lags.end(), curve.lags[k]);
      if (it == envelope->lags.end()) {
        out << ",,";
      } else {
        const auto e = static_cast<std::size_t>(it - envelope->lags.begin());
        out << ',' << envelope->lower[e] << ',' << envelope->upper[e];
      }
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_scatter_csv(const std::filesystem::path& path, const MassReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "lr_value,hr_block_mean\n";
  for (const auto& [x, y] : report.scatter) out << x << ',' << y << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace lagds
