#include "lagds/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lagds/kernels.hpp"

namespace lagds {

using ag::Var;

ProgressiveSchedule make_schedule(int max_scale, int epochs_per_phase) {
  if (!is_power_of_two(max_scale) || max_scale < 4) {
    throw std::invalid_argument("make_schedule: max_scale must be a power of two >= 4");
  }
  if (epochs_per_phase < 1) throw std::invalid_argument("make_schedule: epochs_per_phase must be >= 1");
  int stages = 0;
  for (int v = max_scale; v > 1; v >>= 1) ++stages;
  ProgressiveSchedule s{{1, PhaseKind::Stabilization, epochs_per_phase}};
  for (int k = 2; k <= stages; ++k) {
    s.push_back({k, PhaseKind::Transition, epochs_per_phase});
    s.push_back({k, PhaseKind::Stabilization, epochs_per_phase});
  }
  return s;
}

double alpha_of_progress(const Phase& phase, double fraction_done) {
  if (phase.kind == PhaseKind::Stabilization) return 1.0;
  return std::clamp(fraction_done, 0.0, 1.0);
}

const char* to_string(PhaseKind kind) {
  return kind == PhaseKind::Transition ? "transition" : "stabilization";
}

void OptimizerSettings::validate() const {
  if (!(learning_rate >= 0.0 && std::isfinite(learning_rate))) {
    throw std::invalid_argument("learning rate must be finite and >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be > 0");
  if (n_critic < 1) throw std::invalid_argument("n_critic must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw std::invalid_argument("ema_decay must lie in (0, 1)");
}

void Adam::step(ParamSet& params, const std::vector<Var>& grads, const OptimizerSettings& s) {
  if (grads.size() != params.size()) throw std::invalid_argument("Adam: gradient count mismatch");
  while (m.size() < params.size()) {
    const Shape shape = params[m.size()].shape();
    m.emplace_back(shape);
    v.emplace_back(shape);
    t.push_back(0);
  }
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = grads[i].value();
    if (!(g.shape() == params[i].shape())) throw std::invalid_argument("Adam: gradient shape mismatch");
    const auto ti = ++t[i];
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(ti));
    const double bc2 = std::sqrt(1.0 - std::pow(s.beta2, static_cast<double>(ti)));
    k.adam(params[i].size(), params[i].data(), g.data(), m[i].data(), v[i].data(), s.beta1, s.beta2,
           s.learning_rate * bc2 / bc1, s.epsilon * bc2);
  }
}

void ema_update(ParamSet& ema, const ParamSet& params, double decay) {
  if (ema.size() != params.size()) throw std::invalid_argument("ema_update: parameter trees differ");
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < ema.size(); ++i) {
    k.axpby(ema[i].size(), decay, ema[i].data(), 1.0 - decay, params[i].data(), ema[i].data());
  }
}

TrainState::TrainState(const ModelConfig& config, std::uint64_t seed)
    : model(config),
      generator(config, 1),
      generator_ema(config, 1),
      critic(config, 1),
      rng(seed) {}

void TrainState::grow_to(int stage) {
  while (generator.stages() < stage) {
    const int next = generator.stages() + 1;
    generator.grow(next);
    generator_ema.grow(next);
    critic.grow(next);
  }
}

namespace {

Tensor normal_tensor(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Tensor t(shape);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

std::vector<double> uniform_draws(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) v = u(rng);
  return out;
}


}  // namespace

namespace {

void check_batch(const TrainState& st, const Tensor& x, const Tensor& y, StagePosition pos) {
  const ModelConfig& cfg = st.model;
  if (x.shape().h != cfg.side(pos.stage) || x.shape().w != cfg.side(pos.stage)) {
    throw std::invalid_argument("train step: batch resolution " + x.shape().str() +
                                " does not match stage " + std::to_string(pos.stage));
  }
  if (y.shape().n != x.shape().n) throw std::invalid_argument("train step: x and y batch sizes differ");
}

Shape latent_shape(const ModelConfig& cfg, int n) {
  return Shape{n, cfg.z_channels, cfg.lr_size, cfg.lr_size};
}

}  // namespace

void critic_update(TrainState& st, const Tensor& x, const Tensor& y, StagePosition pos,
                   const LossWeights& weights, const OptimizerSettings& settings, LossTerms& terms) {
  check_batch(st, x, y, pos);
  const int n = x.shape().n;
  const Var yv(y);
  const auto pc = st.critic.params().bind(true);
  const Tensor z = normal_tensor(latent_shape(st.model, n), st.rng);
  const Tensor fake = st.generator.forward(y, z, pos);
  const Var s_real = critic_score(st.critic.project(pc, Var(x), yv, pos));
  const Var s_fake = critic_score(st.critic.project(pc, Var(fake), yv, pos));
  const auto u = uniform_draws(n, st.rng);
  const Var gp = gradient_penalty(st.critic, pc, interpolate_pairs(x, fake, u), yv, pos);
  const Var wc = ag::sub(ag::mean_all(s_real), ag::mean_all(s_fake));
  const Var loss = ag::add(ag::neg(wc), ag::scale(gp, weights.lambda_gp));
  terms.wgan_critic = wc.value().item();
  terms.gradient_penalty = gp.value().item();
  total_losses(terms, weights);
  st.opt_critic.step(st.critic.params(), ag::grad(loss, pc), settings);
}

void generator_update(TrainState& st, const Tensor& x, const Tensor& y, StagePosition pos,
                      const LossWeights& weights, const OptimizerSettings& settings,
                      LossTerms& terms) {
  check_batch(st, x, y, pos);
  const Shape zshape = latent_shape(st.model, x.shape().n);
  const Var yv(y);
  const auto pg = st.generator.params().bind(true);
  const auto pc = st.critic.params().bind(false);
  const Tensor z = normal_tensor(zshape, st.rng);
  const Var fake = st.generator.forward(pg, yv, Var(z), pos);
  const Var wg = ag::neg(ag::mean_all(critic_score(st.critic.project(pc, fake, yv, pos))));
  const Tensor proj_truth = st.critic.project(x, y, pos);
  const Var center_out = st.generator.forward(pg, yv, Var(Tensor(zshape)), pos);
  const Var cl = center_loss(Var(proj_truth), st.critic.project(pc, center_out, yv, pos));
  const Var loss = ag::add(wg, ag::scale(cl, weights.lambda_center));
  terms.wgan_generator = wg.value().item();
  terms.center = cl.value().item();
  total_losses(terms, weights);
  st.opt_generator.step(st.generator.params(), ag::grad(loss, pg), settings);
}

LossBreakdown train_step(TrainState& st, const Tensor& x, const Tensor& y, StagePosition pos,
                         const LossWeights& weights, const OptimizerSettings& settings) {
  LossTerms terms;
  for (int it = 0; it < settings.n_critic; ++it) critic_update(st, x, y, pos, weights, settings, terms);
  generator_update(st, x, y, pos, weights, settings, terms);
  ema_update(st.generator_ema.params(), st.generator.params(), settings.ema_decay);
  ++st.global_step;
  return total_losses(terms, weights);
}

std::int64_t steps_per_epoch(std::int64_t n, int batch_size) { return n / batch_size; }

Tensor stack_fields(std::span<const GridField> fields) {
  if (fields.empty()) throw std::invalid_argument("stack_fields: no fields");
  const GridField& f0 = fields.front();
  Tensor t(Shape{static_cast<int>(fields.size()), f0.channels, f0.height, f0.width});
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (!fields[i].same_shape(f0)) throw std::invalid_argument("stack_fields: fields differ in shape");
    std::copy(fields[i].values.begin(), fields[i].values.end(), t.sample(static_cast<int>(i)));
  }
  return t;
}

GridField unstack_field(const Tensor& t, int n, const std::vector<std::string>& names) {
  const Shape& s = t.shape();
  GridField f = GridField::zeros(s.c, s.h, s.w);
  if (!names.empty()) f.channel_names = names;
  std::copy(t.sample(n), t.sample(n) + s.sample_size(), f.values.begin());
  return f;
}

Tensor pool_batch(const Tensor& t, int factor) {
  if (factor == 1) return t;
  const Shape& s = t.shape();
  if (s.h % factor || s.w % factor) throw std::invalid_argument("pool_batch: size not divisible");
  Tensor out(Shape{s.n, s.c, s.h / factor, s.w / factor});
  const double count = static_cast<double>(factor) * factor;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < s.h / factor; ++i)
        for (int j = 0; j < s.w / factor; ++j) {
          double acc = 0.0;
          for (int bi = 0; bi < factor; ++bi)
            for (int bj = 0; bj < factor; ++bj) acc += t.at(n, c, i * factor + bi, j * factor + bj);
          out.at(n, c, i, j) = acc / count;
        }
  return out;
}

namespace {

std::vector<std::size_t> epoch_order(std::uint64_t seed, int phase, std::int64_t epoch, std::size_t n) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(phase), static_cast<std::uint32_t>(epoch), 0x0badu};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

Tensor gather(const Tensor& src, std::span<const std::size_t> idx) {
  const Shape& s = src.shape();
  Tensor out(Shape{static_cast<int>(idx.size()), s.c, s.h, s.w});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(src.sample(static_cast<int>(idx[i])),
              src.sample(static_cast<int>(idx[i])) + s.sample_size(), out.sample(static_cast<int>(i)));
  }
  return out;
}

}  // namespace

bool run_training(TrainState& st, const Tensor& hr, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks) {
  cfg.weights.validate();
  cfg.optimizer.validate();
  if (!(cfg.model == st.model)) throw std::invalid_argument("run_training: state built for another model");
  const int full = cfg.model.side(cfg.model.num_stages());
  if (hr.shape().h != full || hr.shape().w != full || hr.shape().c != cfg.model.in_channels) {
    throw std::invalid_argument("run_training: training fields must be " + std::to_string(full) +
                                "x" + std::to_string(full) + " with " +
                                std::to_string(cfg.model.in_channels) + " channels");
  }
  const auto schedule = make_schedule(cfg.model.max_scale, cfg.epochs_per_phase);
  const std::int64_t spe = steps_per_epoch(hr.shape().n, cfg.optimizer.batch_size);
  if (spe < 1) throw std::invalid_argument("run_training: fewer training fields than one batch");
  const Tensor y_all = pool_batch(hr, cfg.model.max_scale);

  int cached_stage = -1;
  Tensor targets;
  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> order;

  while (st.phase_index < static_cast<int>(schedule.size())) {
    const Phase& phase = schedule[st.phase_index];
    st.grow_to(phase.stage);
    if (cached_stage != phase.stage) {
      targets = pool_batch(hr, full / cfg.model.side(phase.stage));
      cached_stage = phase.stage;
    }
    cached_epoch = -1;
    const std::int64_t total = spe * phase.epochs;
    while (st.phase_step < total) {
      if (cfg.max_steps >= 0 && st.global_step >= cfg.max_steps) return false;
      const std::int64_t epoch = st.phase_step / spe;
      if (epoch != cached_epoch) {
        order = epoch_order(cfg.seed, st.phase_index, epoch, static_cast<std::size_t>(hr.shape().n));
        cached_epoch = epoch;
      }
      const std::span<const std::size_t> idx(order.data() + (st.phase_step % spe) * cfg.optimizer.batch_size,
                                             static_cast<std::size_t>(cfg.optimizer.batch_size));
      const StagePosition pos{phase.stage,
                              alpha_of_progress(phase, static_cast<double>(st.phase_step) /
                                                           static_cast<double>(total))};
      const LossBreakdown b =
          train_step(st, gather(targets, idx), gather(y_all, idx), pos, cfg.weights, cfg.optimizer);
      ++st.phase_step;
      if (callbacks.on_step) callbacks.on_step(StepInfo{st.global_step, st.phase_index, pos, b});
    }
    ++st.phase_index;
    st.phase_step = 0;
    if (callbacks.on_phase_end) callbacks.on_phase_end(st);
  }
  return true;
}

// ---- checkpoints -------------------------------------------------------------

namespace {

constexpr char kCkptMagic[4] = {'L', 'A', 'G', 'C'};
constexpr std::uint32_t kCkptVersion = 1;

class Writer {
 public:
  template <class T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    buf.append(b, sizeof(T));
  }
  void str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf += s;
  }
  void tensor(const Tensor& t) {
    const Shape& s = t.shape();
    put<std::int32_t>(s.n);
    put<std::int32_t>(s.c);
    put<std::int32_t>(s.h);
    put<std::int32_t>(s.w);
    buf.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  }
  void doubles(const std::vector<double>& v) {
    put<std::uint32_t>(static_cast<std::uint32_t>(v.size()));
    for (double d : v) put(d);
  }
  std::string buf;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    Shape s;
    s.n = get<std::int32_t>();
    s.c = get<std::int32_t>();
    s.h = get<std::int32_t>();
    s.w = get<std::int32_t>();
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw CheckpointError("checkpoint: corrupt tensor header");
    Tensor t(s);
    need(t.size() * sizeof(double));
    std::memcpy(t.data(), data_.data() + pos_, t.size() * sizeof(double));
    pos_ += t.size() * sizeof(double);
    return t;
  }
  std::vector<double> doubles() {
    std::vector<double> v(get<std::uint32_t>());
    for (double& d : v) d = get<double>();
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CheckpointError("checkpoint: file is truncated");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

void put_config(Writer& w, const ModelConfig& c) {
  w.put<std::int32_t>(c.in_channels);
  w.put<std::int32_t>(c.lr_size);
  w.put<std::int32_t>(c.max_scale);
  w.put<std::int32_t>(c.base_width);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.width_schedule.size()));
  for (int v : c.width_schedule) w.put<std::int32_t>(v);
  w.put<std::int32_t>(c.min_width);
  w.put<std::int32_t>(c.z_channels);
  w.put<std::int32_t>(c.proj_channels);
  w.put<double>(c.leaky_slope);
  w.put<std::int32_t>(c.kernel_size);
  w.put<std::uint64_t>(c.seed);
}

ModelConfig get_config(Reader& r) {
  ModelConfig c;
  c.in_channels = r.get<std::int32_t>();
  c.lr_size = r.get<std::int32_t>();
  c.max_scale = r.get<std::int32_t>();
  c.base_width = r.get<std::int32_t>();
  c.width_schedule.resize(r.get<std::uint32_t>());
  for (int& v : c.width_schedule) v = r.get<std::int32_t>();
  c.min_width = r.get<std::int32_t>();
  c.z_channels = r.get<std::int32_t>();
  c.proj_channels = r.get<std::int32_t>();
  c.leaky_slope = r.get<double>();
  c.kernel_size = r.get<std::int32_t>();
  c.seed = r.get<std::uint64_t>();
  return c;
}

std::string config_difference(const ModelConfig& a, const ModelConfig& b) {
  std::ostringstream ss;
  auto field = [&](const char* name, auto x, auto y) {
    if (x != y) ss << ' ' << name << " (" << x << " vs " << y << ')';
  };
  field("in_channels", a.in_channels, b.in_channels);
  field("lr_size", a.lr_size, b.lr_size);
  field("max_scale", a.max_scale, b.max_scale);
  field("base_width", a.base_width, b.base_width);
  if (a.width_schedule != b.width_schedule) ss << " width_schedule";
  field("min_width", a.min_width, b.min_width);
  field("z_channels", a.z_channels, b.z_channels);
  field("proj_channels", a.proj_channels, b.proj_channels);
  field("leaky_slope", a.leaky_slope, b.leaky_slope);
  field("kernel_size", a.kernel_size, b.kernel_size);
  field("seed", a.seed, b.seed);
  return ss.str();
}

void put_params(Writer& w, const ParamSet& p) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    w.str(p.name(i));
    w.tensor(p[i]);
  }
}

void get_params(Reader& r, ParamSet& p, const char* what) {
  const auto n = r.get<std::uint32_t>();
  if (n != p.size()) throw CheckpointError(std::string("checkpoint: ") + what + " parameter count mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = r.str();
    Tensor t = r.tensor();
    if (name != p.name(i) || !(t.shape() == p[i].shape())) {
      throw CheckpointError(std::string("checkpoint: ") + what + " parameter '" + name +
                            "' does not match the model layout");
    }
    p[i] = std::move(t);
  }
}

void put_adam(Writer& w, const Adam& a) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(a.m.size()));
  for (std::size_t i = 0; i < a.m.size(); ++i) {
    w.tensor(a.m[i]);
    w.tensor(a.v[i]);
    w.put<std::int64_t>(a.t[i]);
  }
}

Adam get_adam(Reader& r) {
  Adam a;
  const auto n = r.get<std::uint32_t>();
  for (std::size_t i = 0; i < n; ++i) {
    a.m.push_back(r.tensor());
    a.v.push_back(r.tensor());
    a.t.push_back(r.get<std::int64_t>());
  }
  return a;
}

}  // namespace

void save_checkpoint(const TrainState& st, const std::filesystem::path& path) {
  Writer w;
  w.buf.append(kCkptMagic, 4);
  w.put<std::uint32_t>(kCkptVersion);
  put_config(w, st.model);
  w.put<std::int32_t>(st.stages());
  w.put<std::int64_t>(st.global_step);
  w.put<std::int32_t>(st.phase_index);
  w.put<std::int64_t>(st.phase_step);
  std::ostringstream rng;
  rng << st.rng;
  w.str(rng.str());
  w.doubles(st.normalization.mean);
  w.doubles(st.normalization.stddev);
  put_params(w, st.generator.params());
  put_params(w, st.generator_ema.params());
  put_params(w, st.critic.params());
  put_adam(w, st.opt_generator);
  put_adam(w, st.opt_critic);

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    out.flush();
    if (!out) throw CheckpointError("write failed for checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into place: " + ec.message());
}

TrainState load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str());
  char magic[4];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kCkptMagic, 4) != 0) throw CheckpointError(path.string() + " is not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCkptVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCkptVersion) + ")");
  }
  const ModelConfig model = get_config(r);
  if (expected && !(model == *expected)) {
    throw CheckpointError("checkpoint was built for a different model:" +
                          config_difference(model, *expected));
  }
  TrainState st(model);
  st.grow_to(r.get<std::int32_t>());
  st.global_step = r.get<std::int64_t>();
  st.phase_index = r.get<std::int32_t>();
  st.phase_step = r.get<std::int64_t>();
  std::istringstream rng(r.str());
  rng >> st.rng;
  st.normalization.mean = r.doubles();
  st.normalization.stddev = r.doubles();
  get_params(r, st.generator.params(), "generator");
  get_params(r, st.generator_ema.params(), "generator EMA");
  get_params(r, st.critic.params(), "critic");
  st.opt_generator = get_adam(r);
  st.opt_critic = get_adam(r);
  if (!r.done()) throw CheckpointError("checkpoint has trailing bytes");
  return st;
}

}  // namespace lagds
