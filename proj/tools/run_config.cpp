#include "run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace lagds::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw UsageError("config key '" + key + "': '" + v + "' is not an integer");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(out)) {
    throw UsageError("config key '" + key + "': '" + v + "' is not a finite number");
  }
  return out;
}

// Shortest form that parses back to the same double.
std::string real_text(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string widths_text(const std::vector<int>& w) {
  if (w.empty()) return "auto";
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define LAGDS_INT(name, member, type)                                                         \
  Field {                                                                                     \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_integer<type>(name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                           \
  }
#define LAGDS_REAL(name, member)                                                     \
  Field {                                                                            \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_real(name, v); }, \
        [](const RunConfig& c) { return real_text(c.member); }                       \
  }
#define LAGDS_TEXT(name, member)                                            \
  Field {                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.member = v; },          \
        [](const RunConfig& c) { return c.member; }                         \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      LAGDS_TEXT("preset", preset),
      LAGDS_TEXT("dataset", dataset),
      LAGDS_TEXT("output", output),
      LAGDS_TEXT("checkpoint", checkpoint),
      LAGDS_TEXT("input", input),
      LAGDS_TEXT("candidate", candidate),
      LAGDS_INT("seed", seed, std::uint64_t),
      LAGDS_INT("count", count, int),
      LAGDS_INT("size", size, int),
      LAGDS_INT("channels", channels, int),
      LAGDS_REAL("correlation_length", correlation_length),
      LAGDS_REAL("low", low),
      LAGDS_REAL("high", high),
      LAGDS_INT("start_time", start_time, std::int64_t),
      LAGDS_INT("time_step", time_step, std::int64_t),
      LAGDS_INT("max_scale", max_scale, int),
      Field{"widths",
            [](RunConfig& c, const std::string& v) {
              c.widths.clear();
              if (v == "auto") return;
              std::stringstream ss(v);
              std::string item;
              while (std::getline(ss, item, ',')) c.widths.push_back(parse_integer<int>("widths", trim(item)));
            },
            [](const RunConfig& c) { return widths_text(c.widths); }},
      LAGDS_INT("z_channels", z_channels, int),
      LAGDS_INT("proj_channels", proj_channels, int),
      LAGDS_REAL("leaky_slope", leaky_slope),
      LAGDS_REAL("lambda", lambda_center),
      LAGDS_REAL("lambda_gp", lambda_gp),
      LAGDS_REAL("lr", learning_rate),
      LAGDS_INT("batch", batch, int),
      LAGDS_INT("n_critic", n_critic, int),
      LAGDS_INT("epochs_per_phase", epochs_per_phase, int),
      LAGDS_REAL("ema_decay", ema_decay),
      LAGDS_INT("max_steps", max_steps, std::int64_t),
      LAGDS_REAL("train_fraction", train_fraction),
      LAGDS_INT("n", n, int),
      LAGDS_INT("sample_index", sample_index, int),
      LAGDS_TEXT("statistic", statistic),
      LAGDS_REAL("significance", significance),
      LAGDS_TEXT("relmse_denominator", relmse_denominator),
      LAGDS_INT("swd_patch", swd_patch, int),
      LAGDS_INT("swd_descriptors", swd_descriptors, int),
      LAGDS_INT("swd_directions", swd_directions, int),
      LAGDS_INT("swd_min_resolution", swd_min_resolution, int),
      LAGDS_INT("variogram_bins", variogram_bins, int),
      LAGDS_REAL("variogram_max_lag", variogram_max_lag),
      LAGDS_INT("variogram_max_pairs", variogram_max_pairs, std::int64_t),
  };
  return table;
}

#undef LAGDS_INT
#undef LAGDS_REAL
#undef LAGDS_TEXT

}  // namespace

std::vector<std::string> preset_names() { return {"smoke", "wind", "solar"}; }

RunConfig RunConfig::from_preset(const std::string& name) {
  RunConfig c;
  if (name == "smoke") return c;
  if (name != "wind" && name != "solar") {
    throw UsageError("unknown preset '" + name + "' (expected smoke, wind or solar)");
  }
  c.preset = name;
  c.max_scale = 64;
  c.widths.clear();
  c.ema_decay = 0.999;
  c.size = 512;
  if (name == "wind") {
    c.batch = 16;
    c.learning_rate = 2e-3;
    c.epochs_per_phase = 30;
  } else {
    c.batch = 1;
    c.learning_rate = 4e-3;
    c.epochs_per_phase = 15;
  }
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw UsageError("unknown config key '" + key + "'");
}

void RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Field& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

void RunConfig::write_echo(const std::filesystem::path& path, const std::string& command) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# lagds " << command << "\n";
  for (const auto& [k, v] : entries()) out << k << " = " << v << "\n";
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw UsageError(what);
  };
  need(count >= 1, "count must be >= 1");
  need(size >= 1, "size must be >= 1");
  need(channels >= 1, "channels must be >= 1");
  need(correlation_length > 0, "correlation_length must be > 0");
  need(high > low, "high must exceed low");
  need(is_power_of_two(max_scale) && max_scale >= 4, "max_scale must be a power of two >= 4");
  need(z_channels >= 1 && proj_channels >= 1, "z_channels and proj_channels must be >= 1");
  need(lambda_center >= 0 && lambda_gp >= 0, "lambda and lambda_gp must be >= 0");
  need(learning_rate > 0, "lr must be > 0");
  need(batch >= 1 && n_critic >= 1 && epochs_per_phase >= 1, "batch, n_critic and epochs_per_phase must be >= 1");
  need(ema_decay > 0 && ema_decay < 1, "ema_decay must lie in (0, 1)");
  need(train_fraction > 0 && train_fraction <= 1, "train_fraction must lie in (0, 1]");
  need(n >= 1, "n must be >= 1");
  need(sample_index >= 0, "sample_index must be >= 0");
  need(significance > 0 && significance < 1, "significance must lie in (0, 1)");
  need(statistic == "residual" || statistic == "swd" || statistic == "both",
       "statistic must be residual, swd or both");
  need(relmse_denominator == "auto" || relmse_denominator == "mean" || relmse_denominator == "mean_abs",
       "relmse_denominator must be auto, mean or mean_abs");
  need(variogram_bins >= 1 && variogram_max_pairs >= 1, "variogram_bins and variogram_max_pairs must be >= 1");
  try {
    swd_params().validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

ModelConfig RunConfig::model_config(int in_channels, int hr_side) const {
  if (hr_side % max_scale != 0) {
    throw UsageError("field side " + std::to_string(hr_side) + " is not a multiple of max_scale " +
                     std::to_string(max_scale));
  }
  ModelConfig m;
  m.in_channels = in_channels;
  m.lr_size = hr_side / max_scale;
  m.max_scale = max_scale;
  m.z_channels = z_channels;
  m.proj_channels = proj_channels;
  m.leaky_slope = leaky_slope;
  m.seed = seed;
  if (!widths.empty()) {
    if (static_cast<int>(widths.size()) != m.num_stages() + 1) {
      throw UsageError("widths needs " + std::to_string(m.num_stages() + 1) +
                       " entries (LR width, then one per stage) for max_scale " + std::to_string(max_scale));
    }
    m.base_width = widths.front();
    m.width_schedule.assign(widths.begin() + 1, widths.end());
  }
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return m;
}

TrainConfig RunConfig::train_config(const ModelConfig& model) const {
  TrainConfig t;
  t.model = model;
  t.weights.lambda_center = lambda_center;
  t.weights.lambda_gp = lambda_gp;
  t.optimizer.learning_rate = learning_rate;
  t.optimizer.batch_size = batch;
  t.optimizer.n_critic = n_critic;
  t.optimizer.ema_decay = ema_decay;
  t.epochs_per_phase = epochs_per_phase;
  t.seed = seed;
  t.max_steps = max_steps;
  return t;
}

SyntheticFieldConfig RunConfig::synthetic_config() const {
  SyntheticFieldConfig s;
  s.seed = seed;
  s.count = count;
  s.size = size;
  s.channels = channels;
  s.correlation_length = correlation_length;
  s.low = low;
  s.high = high;
  s.start_time = start_time;
  s.time_step = time_step;
  return s;
}

SwdParams RunConfig::swd_params() const {
  SwdParams p;
  p.patch_size = swd_patch;
  p.descriptors = swd_descriptors;
  p.directions = swd_directions;
  p.min_resolution = swd_min_resolution;
  p.seed = seed;
  return p;
}

SemivariogramParams RunConfig::variogram_params() const {
  SemivariogramParams p;
  p.max_lag = variogram_max_lag;
  p.n_bins = variogram_bins;
  p.max_pairs = variogram_max_pairs;
  p.seed = seed;
  return p;
}

MseDenominator RunConfig::denominator() const {
  if (relmse_denominator == "mean") return MseDenominator::Mean;
  if (relmse_denominator == "mean_abs") return MseDenominator::MeanAbs;
  return MseDenominator::Auto;
}

}  // namespace lagds::cli
