#include "lagds/net.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "lagds/grid.hpp"

namespace lagds {

using ag::Var;

namespace {

enum Role : std::uint32_t { kGenerator = 1, kCritic = 2 };

constexpr double kLeakyGain = 1.4142135623730951;

Tensor seeded_normal(Shape shape, std::uint64_t seed, Role role, int stage, int layer) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(role), static_cast<std::uint32_t>(stage),
                    static_cast<std::uint32_t>(layer)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  Tensor t(shape);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

ConvLayer make_conv(ParamSet& ps, const std::string& name, int in, int out, int k, double gain,
                    std::uint64_t seed, Role role, int stage, int layer, bool bias = true) {
  ConvLayer c;
  c.weight = ps.add(name + ".w", seeded_normal(Shape{out, in, k, k}, seed, role, stage, layer));
  c.has_bias = bias;
  if (bias) c.bias = ps.add(name + ".b", Tensor(Shape{1, out, 1, 1}));
  c.scale = gain / std::sqrt(static_cast<double>(in) * k * k);
  return c;
}

Var apply(const ConvLayer& c, std::span<const Var> p, const Var& x) {
  Var y = ag::conv2d(x, ag::scale(p[c.weight], c.scale));
  return c.has_bias ? ag::add_bias(y, p[c.bias]) : y;
}

void expect_shape(const Shape& got, const Shape& want, const char* what) {
  if (got.c != want.c || got.h != want.h || got.w != want.w) {
    throw std::invalid_argument(std::string(what) + ": expected per-sample shape " + want.str() +
                                ", got " + got.str());
  }
}

void check_position(const ModelConfig& cfg, int built, StagePosition pos) {
  if (pos.stage < 1 || pos.stage > built) {
    throw std::invalid_argument("stage " + std::to_string(pos.stage) + " is not built (have 1.." +
                                std::to_string(built) + ")");
  }
  if (!(pos.alpha >= 0.0 && pos.alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (pos.stage == 1 && pos.alpha < 1.0) {
    throw std::invalid_argument("stage 1 has no fade-in; alpha must be 1");
  }
  (void)cfg;
}

}  // namespace

int ModelConfig::num_stages() const {
  int s = 0;
  for (int v = max_scale; v > 1; v >>= 1) ++s;
  return s;
}

std::vector<int> ModelConfig::widths() const {
  std::vector<int> w{base_width};
  if (!width_schedule.empty()) {
    w.insert(w.end(), width_schedule.begin(), width_schedule.end());
    return w;
  }
  for (int k = 1; k <= num_stages(); ++k) w.push_back(std::max(min_width, base_width >> k));
  return w;
}

void ModelConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("model: in_channels must be >= 1");
  if (lr_size < 1) throw std::invalid_argument("model: lr_size must be >= 1");
  if (!is_power_of_two(max_scale) || max_scale < 4) {
    throw std::invalid_argument("model: max_scale must be a power of two >= 4");
  }
  if (!width_schedule.empty() && static_cast<int>(width_schedule.size()) != num_stages()) {
    throw std::invalid_argument("model: width_schedule needs " + std::to_string(num_stages()) +
                                " entries");
  }
  for (int w : widths()) {
    if (w < 8) throw std::invalid_argument("model: feature widths must be >= 8");
  }
  if (z_channels < 1) throw std::invalid_argument("model: z_channels must be >= 1");
  if (proj_channels < 1) throw std::invalid_argument("model: proj_channels must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw std::invalid_argument("model: kernel_size must be odd");
  }
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) {
    throw std::invalid_argument("model: leaky_slope must lie in [0, 1)");
  }
}

std::size_t ParamSet::add(std::string name, Tensor value) {
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParamSet::numel() const {
  std::size_t n = 0;
  for (const Tensor& t : values_) n += t.size();
  return n;
}

std::vector<Var> ParamSet::bind(bool requires_grad) const {
  std::vector<Var> out;
  out.reserve(values_.size());
  for (const Tensor& t : values_) out.emplace_back(t, requires_grad);
  return out;
}

// ---- generator -------------------------------------------------------------

Generator::Generator(const ModelConfig& config, int stages) : config_(config) {
  config_.validate();
  if (stages < 1 || stages > config_.num_stages()) {
    throw std::invalid_argument("generator: stage count out of range");
  }
  const int w0 = config_.widths()[0];
  head_ = make_conv(params_, "g.head", config_.in_channels + config_.z_channels, w0,
                    config_.kernel_size, kLeakyGain, config_.seed, kGenerator, 0, 0);
  for (int s = 1; s <= stages; ++s) append_stage(s);
}

void Generator::append_stage(int s) {
  const auto w = config_.widths();
  const int in = w[s - 1], out = w[s], k = config_.kernel_size;
  const std::string p = "g.s" + std::to_string(s);
  Block b;
  b.conv1 = make_conv(params_, p + ".conv1", in, out, k, kLeakyGain, config_.seed, kGenerator, s, 0);
  b.conv2 = make_conv(params_, p + ".conv2", out, out, k, kLeakyGain, config_.seed, kGenerator, s, 1);
  b.has_skip = in != out;
  if (b.has_skip) {
    b.skip = make_conv(params_, p + ".skip", in, out, 1, 1.0, config_.seed, kGenerator, s, 2, false);
  }
  b.to_out = make_conv(params_, p + ".out", out, config_.in_channels, 1, 1.0, config_.seed,
                       kGenerator, s, 3);
  blocks_.push_back(b);
}

void Generator::grow(int new_stage) {
  if (new_stage != stages() + 1 || new_stage > config_.num_stages()) {
    throw std::invalid_argument("generator: cannot grow from stage " + std::to_string(stages()) +
                                " to stage " + std::to_string(new_stage));
  }
  append_stage(new_stage);
}

Var Generator::forward(std::span<const Var> p, const Var& y, const Var& z, StagePosition pos) const {
  check_position(config_, stages(), pos);
  const int L = config_.lr_size;
  expect_shape(y.shape(), Shape{1, config_.in_channels, L, L}, "generator input y");
  expect_shape(z.shape(), Shape{1, config_.z_channels, L, L}, "generator latent z");
  if (y.shape().n != z.shape().n) throw std::invalid_argument("generator: batch size of y and z differ");
  const double slope = config_.leaky_slope;

  Var h = ag::leaky_relu(apply(head_, p, ag::concat_channels(y, z)), slope);
  Var prev;
  for (int s = 1; s <= pos.stage; ++s) {
    const Block& b = blocks_[s - 1];
    prev = h;
    const Var up = ag::upsample2(h);
    const Var a = ag::leaky_relu(apply(b.conv1, p, up), slope);
    const Var c = ag::leaky_relu(apply(b.conv2, p, a), slope);
    h = ag::add(b.has_skip ? apply(b.skip, p, up) : up, c);
  }
  Var out = apply(blocks_[pos.stage - 1].to_out, p, h);
  if (pos.alpha < 1.0) {
    const Var old = ag::upsample2(apply(blocks_[pos.stage - 2].to_out, p, prev));
    out = ag::lerp(out, old, pos.alpha);
  }
  return out;
}

Tensor Generator::forward(const Tensor& y, const Tensor& z, StagePosition pos) const {
  ag::NoGrad guard;
  const auto p = params_.bind(false);
  return forward(p, Var(y), Var(z), pos).value();
}

// ---- critic ----------------------------------------------------------------

Critic::Critic(const ModelConfig& config, int stages) : config_(config) {
  config_.validate();
  if (stages < 1 || stages > config_.num_stages()) {
    throw std::invalid_argument("critic: stage count out of range");
  }
  const int w0 = config_.widths()[0], k = config_.kernel_size;
  tail1_ = make_conv(params_, "c.tail1", w0 + config_.in_channels, w0, k, kLeakyGain, config_.seed,
                     kCritic, 0, 0);
  tail2_ = make_conv(params_, "c.tail2", w0, config_.proj_channels, 1, 1.0, config_.seed, kCritic,
                     0, 1);
  for (int s = 1; s <= stages; ++s) append_stage(s);
}

void Critic::append_stage(int s) {
  const auto w = config_.widths();
  const int in = w[s], out = w[s - 1], k = config_.kernel_size;
  const std::string p = "c.s" + std::to_string(s);
  Block b;
  b.from_in = make_conv(params_, p + ".in", config_.in_channels, in, 1, kLeakyGain, config_.seed,
                        kCritic, s, 0);
  b.conv1 = make_conv(params_, p + ".conv1", 4 * in, out, k, kLeakyGain, config_.seed, kCritic, s, 1);
  b.conv2 = make_conv(params_, p + ".conv2", out, out, k, kLeakyGain, config_.seed, kCritic, s, 2);
  b.skip = make_conv(params_, p + ".skip", 4 * in, out, 1, 1.0, config_.seed, kCritic, s, 3, false);
  blocks_.push_back(b);
}

void Critic::grow(int new_stage) {
  if (new_stage != stages() + 1 || new_stage > config_.num_stages()) {
    throw std::invalid_argument("critic: cannot grow from stage " + std::to_string(stages()) +
                                " to stage " + std::to_string(new_stage));
  }
  append_stage(new_stage);
}

Var Critic::project(std::span<const Var> p, const Var& x, const Var& y, StagePosition pos) const {
  check_position(config_, stages(), pos);
  const int L = config_.lr_size;
  expect_shape(x.shape(), Shape{1, config_.in_channels, config_.side(pos.stage), config_.side(pos.stage)},
               "critic input x");
  expect_shape(y.shape(), Shape{1, config_.in_channels, L, L}, "critic condition y");
  if (x.shape().n != y.shape().n) throw std::invalid_argument("critic: batch size of x and y differ");
  const double slope = config_.leaky_slope;

  auto block = [&](int s, const Var& in) {
    const Block& b = blocks_[s - 1];
    const Var d = ag::space_to_depth2(in);
    const Var a = ag::leaky_relu(apply(b.conv1, p, d), slope);
    const Var c = ag::leaky_relu(apply(b.conv2, p, a), slope);
    return ag::add(apply(b.skip, p, d), c);
  };
  auto from_in = [&](int s, const Var& img) {
    return ag::leaky_relu(apply(blocks_[s - 1].from_in, p, img), slope);
  };

  Var h = block(pos.stage, from_in(pos.stage, x));
  if (pos.alpha < 1.0) h = ag::lerp(h, from_in(pos.stage - 1, ag::avg_pool2(x)), pos.alpha);
  for (int s = pos.stage - 1; s >= 1; --s) h = block(s, h);
  h = ag::leaky_relu(apply(tail1_, p, ag::concat_channels(h, y)), slope);
  return apply(tail2_, p, h);
}

Tensor Critic::project(const Tensor& x, const Tensor& y, StagePosition pos) const {
  ag::NoGrad guard;
  const auto p = params_.bind(false);
  return project(p, Var(x), Var(y), pos).value();
}

Generator build_generator(const ModelConfig& config) { return Generator(config, config.num_stages()); }
Critic build_critic(const ModelConfig& config) { return Critic(config, config.num_stages()); }

Var critic_score(const Var& projection) { return ag::mean_per_sample(projection); }

double critic_score(const Tensor& projection) {
  if (projection.empty()) throw std::invalid_argument("critic_score: empty projection");
  double s = 0;
  for (double v : projection.values()) s += v;
  return s / static_cast<double>(projection.size());
}

}  // namespace lagds
