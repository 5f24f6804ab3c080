#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lagds/grid_io.hpp"
#include "lagds/kernels.hpp"
#include "lagds/sample.hpp"
#include "lagds/train.hpp"
#include "run_config.hpp"

namespace lagds::cli {

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::vector<std::pair<std::string, std::string>> items;

  void bind(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { items.emplace_back(key, v); }, help);
  }
};

struct Globals {
  std::string config_path;
  std::string preset;
  bool force = false;
  std::vector<std::string> sets;
};

RunConfig resolve(const Globals& g, const Overrides& o) {
  std::string preset = "smoke";
  if (!g.config_path.empty()) {
    RunConfig scratch;
    scratch.load(g.config_path);
    preset = scratch.preset;
  }
  if (!g.preset.empty()) preset = g.preset;
  RunConfig c = RunConfig::from_preset(preset);
  if (!g.config_path.empty()) c.load(g.config_path);
  c.preset = preset;
  for (const std::string& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : o.items) c.set(k, v);
  c.validate();
  return c;
}

std::string join(const std::vector<std::string>& args) {
  std::string s;
  for (const auto& a : args) s += (s.empty() ? "" : " ") + a;
  return s;
}

bool non_empty_dir(const fs::path& p) { return fs::is_directory(p) && !fs::is_empty(p); }

void prepare_output(const fs::path& dir) {
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw UsageError("output path " + dir.string() + " exists and is not a directory");
  }
  fs::create_directories(dir);
}

std::string require(const std::string& value, const char* what) {
  if (value.empty()) throw UsageError(std::string("missing ") + what);
  return value;
}

std::string id_of(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(10);
  o << v;
  return o.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Fields of one dataset must share a square shape.
void check_uniform(const std::vector<GridField>& fields) {
  if (fields.empty()) throw UsageError("dataset is empty");
  for (const GridField& f : fields) {
    if (!f.same_shape(fields.front()) || f.height != f.width) {
      throw UsageError("dataset fields must share one square shape");
    }
  }
}

GridField load_lr_input(const RunConfig& c, bool from_hr, int factor) {
  GridField y = read_grid(require(c.input, "--input"));
  return from_hr ? average_pool(y, factor) : y;
}

struct Loaded {
  std::unique_ptr<TrainState> state;
  std::unique_ptr<Downscaler> model;
};

Loaded load_model(const RunConfig& c) {
  Loaded l;
  l.state = std::make_unique<TrainState>(load_checkpoint(require(c.checkpoint, "--checkpoint")));
  if (l.state->stages() != l.state->model.num_stages()) {
    throw std::runtime_error("checkpoint holds a partially grown model (stage " +
                             std::to_string(l.state->stages()) + " of " +
                             std::to_string(l.state->model.num_stages()) + ")");
  }
  l.model = std::make_unique<Downscaler>(Downscaler{l.state->generator_ema, l.state->normalization});
  return l;
}

// --- synth ---------------------------------------------------------------

int cmd_synth(const RunConfig& c, const Globals& g, const std::string& command, std::ostream& out) {
  const fs::path dir = c.output;
  if (non_empty_dir(dir)) {
    if (!g.force) throw UsageError("output directory " + dir.string() + " is not empty (use --force)");
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (e.is_regular_file() &&
          (e.path().extension() == ".grd1" || name == "manifest.tsv" || name == "config.echo")) {
        fs::remove(e.path());
      }
    }
  }
  prepare_output(dir);
  const auto fields = generate_synthetic(c.synthetic_config());
  write_dataset(fields, dir);
  c.write_echo(dir / "config.echo", command);
  out << "wrote " << fields.size() << " fields of " << c.channels << "x" << c.size << "x" << c.size
      << " to " << dir.string() << "\n";
  return kOk;
}

// --- train ---------------------------------------------------------------

int cmd_train(const RunConfig& c, const Globals& g, const std::string& resume,
              const std::string& command, std::ostream& out) {
  const fs::path dir = c.output;
  if (non_empty_dir(dir) && !g.force && resume.empty()) {
    throw UsageError("output directory " + dir.string() + " is not empty (use --force or --resume)");
  }
  auto fields = read_dataset(require(c.dataset, "--dataset"));
  check_uniform(fields);
  const int channels = fields.front().channels;
  const int side = fields.front().height;
  auto split = chronological_split(std::move(fields), c.train_fraction);
  if (static_cast<int>(split.train.size()) < c.batch) {
    throw UsageError("training split has " + std::to_string(split.train.size()) +
                     " fields, fewer than batch " + std::to_string(c.batch));
  }
  const ModelConfig model = c.model_config(channels, side);
  const TrainConfig tc = c.train_config(model);
  const NormalizationStats norm = fit_normalization(split.train);

  std::unique_ptr<TrainState> state;
  if (!resume.empty()) {
    state = std::make_unique<TrainState>(load_checkpoint(resume, &model));
    if (state->normalization.mean != norm.mean || state->normalization.stddev != norm.stddev) {
      throw UsageError("checkpoint " + resume + " was trained on a different dataset split");
    }
  } else {
    state = std::make_unique<TrainState>(model, tc.seed);
    state->normalization = norm;
  }

  prepare_output(dir);
  c.write_echo(dir / "config.echo", command);
  for (auto& f : split.train) f = norm.apply(f);
  const Tensor hr = stack_fields(split.train);
  split.train.clear();

  // On resume, rows past the checkpoint are dropped so the log replays cleanly.
  const fs::path log_path = dir / "train_log.tsv";
  std::vector<std::string> kept{loss_log_header()};
  if (!resume.empty()) {
    std::ifstream old(log_path);
    std::string line;
    std::getline(old, line);
    while (std::getline(old, line)) {
      if (std::stoll(line.substr(0, line.find('\t'))) > state->global_step) break;
      kept.push_back(line);
    }
  }
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());
  for (const auto& line : kept) log << line << '\n';

  const auto schedule = make_schedule(model.max_scale, c.epochs_per_phase);
  out << "training " << schedule.size() << " phases, "
      << steps_per_epoch(static_cast<std::int64_t>(hr.shape().n), c.batch)
      << " steps per epoch, from step " << state->global_step << "\n";
  TrainCallbacks cb;
  cb.on_step = [&](const StepInfo& s) {
    log << loss_log_row(s.step, s.phase, s.pos.stage, s.pos.alpha, s.losses) << '\n';
    if (s.step % 100 == 0) {
      out << "step " << s.step << " phase " << s.phase << " stage " << s.pos.stage << " alpha "
          << fmt(s.pos.alpha) << " critic " << fmt(s.losses.total_critic) << " generator "
          << fmt(s.losses.total_generator) << "\n";
    }
  };
  cb.on_phase_end = [&](const TrainState& st) {
    log.flush();
    char name[32];
    std::snprintf(name, sizeof name, "phase_%02d.ckpt", st.phase_index);
    save_checkpoint(st, dir / name);
  };
  const bool done = run_training(*state, hr, tc, cb);
  log.flush();
  save_checkpoint(*state, dir / "final.ckpt");
  out << (done ? "finished" : "stopped") << " at step " << state->global_step << " (phase "
      << state->phase_index << " of " << schedule.size() << "); checkpoint "
      << (dir / "final.ckpt").string() << "\n";
  return kOk;
}

// --- sample --------------------------------------------------------------

struct SampleModes {
  bool center_only = false;
  bool ensemble = false;
  bool stats = false;
  bool from_hr = false;
};

int cmd_sample(const RunConfig& c, const SampleModes& m, const std::string& command, std::ostream& out) {
  if (m.center_only && (m.ensemble || m.stats)) {
    throw UsageError("--center-only cannot be combined with --ensemble or --stats");
  }
  const Loaded l = load_model(c);
  const GridField y = load_lr_input(c, m.from_hr, l.state->model.max_scale);
  l.model->check_input(y);
  const fs::path dir = c.output;
  prepare_output(dir);
  c.write_echo(dir / "config.echo", command);

  write_grid(sample_center(*l.model, y), dir / "center.grd1");
  int files = 1;
  const bool ensemble = m.ensemble || (!m.center_only && !m.stats);
  if (ensemble || m.stats) {
    std::optional<EnsembleAccumulator> acc;
    if (m.stats) acc.emplace(sample_center(*l.model, y));
    for_each_realization(*l.model, y, c.n, c.seed, [&](int i, const GridField& f) {
      if (ensemble) {
        char name[40];
        std::snprintf(name, sizeof name, "realization_%04d.grd1", i);
        write_grid(f, dir / name);
        ++files;
      }
      if (acc) acc->add(f);
    });
    if (acc) {
      const EnsembleStats s = acc->finish(c.seed);
      write_grid(s.mean_map, dir / "mean.grd1");
      write_grid(s.std_map, dir / "std.grd1");
      files += 2;
    }
  }
  out << "wrote " << files << " fields to " << dir.string() << "\n";
  return kOk;
}

// --- evaluate ------------------------------------------------------------

struct EvalModes {
  bool identity = false;
  bool all = false;
  bool variogram = false;
};

int cmd_evaluate(const RunConfig& c, const EvalModes& m, const std::string& command, std::ostream& out) {
  const Loaded l = load_model(c);
  const int factor = l.state->model.max_scale;
  auto fields = read_dataset(require(c.dataset, "--dataset"));
  check_uniform(fields);
  if (fields.front().height != l.model->hr_side() ||
      fields.front().channels != l.state->model.in_channels) {
    throw UsageError("dataset fields are " + std::to_string(fields.front().channels) + "x" +
                     std::to_string(fields.front().height) + "x" + std::to_string(fields.front().width) +
                     " but the model expects " + std::to_string(l.state->model.in_channels) + "x" +
                     std::to_string(l.model->hr_side()) + "x" + std::to_string(l.model->hr_side()));
  }
  // Without --all only the fields after the training split are scored.
  const std::size_t first =
      m.all ? 0 : static_cast<std::size_t>(c.train_fraction * static_cast<double>(fields.size()));
  if (first >= fields.size()) throw UsageError("no held-out fields; lower train_fraction or pass --all");

  const fs::path dir = c.output;
  prepare_output(dir);
  c.write_echo(dir / "config.echo", command);

  const SwdParams sp = c.swd_params();
  std::vector<double> rel, sw;
  std::ofstream rep(dir / "report.tsv");
  rep << "image_id\trel_mse\tswd\n";
  for (std::size_t i = first; i < fields.size(); ++i) {
    const GridField& truth = fields[i];
    const GridField pred = m.identity ? truth : sample_center(*l.model, average_pool(truth, factor));
    rel.push_back(relative_mse(pred, truth, c.denominator()));
    sw.push_back(swd(pred, truth, sp));
    rep << id_of(i) << '\t' << fmt(rel.back()) << '\t' << fmt(sw.back()) << '\n';
  }
  rep << "median\t" << fmt(median(rel)) << '\t' << fmt(median(sw)) << '\n';
  if (!rep) throw std::runtime_error("write failed for " + (dir / "report.tsv").string());
  out << "images " << rel.size() << "  median rel_mse " << fmt(median(rel)) << "  median swd "
      << fmt(median(sw)) << "\n";

  if (m.variogram) {
    const std::size_t k = first + static_cast<std::size_t>(c.sample_index);
    if (k >= fields.size()) {
      throw UsageError("sample-index " + std::to_string(c.sample_index) + " is out of range (" +
                       std::to_string(fields.size() - first) + " evaluated fields)");
    }
    const GridField& truth = fields[k];
    const GridField y = average_pool(truth, factor);
    const GridField center = sample_center(*l.model, y);
    const SemivariogramParams vp = c.variogram_params();
    const int channels = truth.channels;
    std::vector<std::vector<SemivariogramCurve>> curves(channels);
    for_each_realization(*l.model, y, c.n, c.seed, [&](int, const GridField& f) {
      for (int ch = 0; ch < channels; ++ch) curves[ch].push_back(semivariogram(f, ch, vp));
    });
    for (int ch = 0; ch < channels; ++ch) {
      const SemivariogramEnvelope env = semivariogram_envelope(curves[ch]);
      const SemivariogramCurve cc = semivariogram(center, ch, vp);
      const SemivariogramCurve tc = semivariogram(truth, ch, vp);
      const std::string tag = "_c" + std::to_string(ch) + ".csv";
      write_semivariogram_csv(dir / ("variogram_center" + tag), cc, &env);
      write_semivariogram_csv(dir / ("variogram_truth" + tag), tc, &env);
      out << "channel " << ch << " (" << truth.channel_names[ch] << "): center inside envelope at "
          << fmt(fraction_inside(cc, env)) << " of bins, truth at " << fmt(fraction_inside(tc, env))
          << "\n";
    }
    const MassReport mass = mass_preservation(y, center, factor);
    write_scatter_csv(dir / "mass_scatter.csv", mass);
    out << "mass preservation of " << id_of(k) << ": pearson " << fmt(mass.pearson_r)
        << "  max deviation " << fmt(mass.max_abs_dev) << "\n";
  }
  return kOk;
}

// --- test ----------------------------------------------------------------

int cmd_test(const RunConfig& c, bool from_hr, const std::string& command, std::ostream& out) {
  const Loaded l = load_model(c);
  const GridField y = load_lr_input(c, from_hr, l.state->model.max_scale);
  const GridField candidate = read_grid(require(c.candidate, "--candidate"));
  l.model->check_input(y);
  const int side = l.model->hr_side();
  if (candidate.channels != y.channels || candidate.height != side || candidate.width != side) {
    throw UsageError("candidate must be " + std::to_string(y.channels) + "x" + std::to_string(side) +
                     "x" + std::to_string(side));
  }
  std::vector<Statistic> stats;
  if (c.statistic == "both") {
    stats = {Statistic::ResidualL2, Statistic::Swd};
  } else {
    stats = {parse_statistic(c.statistic)};
  }
  const auto results = hypothesis_test(*l.model, y, candidate, c.n, c.seed, stats, c.swd_params());

  const fs::path dir = c.output;
  prepare_output(dir);
  c.write_echo(dir / "config.echo", command);
  write_hypothesis_report(dir / "report.tsv", results);
  out << "statistic\td_test\tn\tpseudo_p\n";
  for (const auto& r : results) {
    out << r.statistic_name << '\t' << fmt(r.d_test) << '\t' << r.ensemble_d.size() << '\t'
        << fmt(r.pseudo_p) << (r.pseudo_p <= c.significance ? "\timplausible" : "\tplausible")
        << " at " << fmt(c.significance) << '\n';
  }
  return kOk;
}

// --- info ----------------------------------------------------------------

int cmd_info(const RunConfig& c, std::ostream& out) {
  using nlohmann::ordered_json;
  ordered_json j;
  ordered_json kernels;
  kernels["active"] = std::string(kernels::active().name);
  ordered_json avail = ordered_json::array({"scalar"});
  if (kernels::avx2_table()) avail.push_back("avx2");
  if (kernels::avx512_table()) avail.push_back("avx512");
  kernels["available"] = avail;
  j["kernels"] = kernels;
  j["presets"] = preset_names();
  ordered_json cfg;
  for (const auto& [k, v] : c.entries()) cfg[k] = v;
  j["config"] = cfg;

  if (!c.checkpoint.empty()) {
    const TrainState st = load_checkpoint(c.checkpoint);
    const ModelConfig& m = st.model;
    ordered_json ck;
    ck["path"] = c.checkpoint;
    ck["in_channels"] = m.in_channels;
    ck["lr_size"] = m.lr_size;
    ck["max_scale"] = m.max_scale;
    ck["hr_side"] = m.side(m.num_stages());
    ck["widths"] = m.widths();
    ck["stages_built"] = st.stages();
    ck["stages_total"] = m.num_stages();
    ck["global_step"] = st.global_step;
    ck["phase_index"] = st.phase_index;
    ck["phase_step"] = st.phase_step;
    ck["normalization"] = {{"mean", st.normalization.mean}, {"stddev", st.normalization.stddev}};
    j["checkpoint"] = ck;
  }
  if (!c.dataset.empty()) {
    const auto fields = read_dataset(c.dataset);
    ordered_json ds;
    ds["path"] = c.dataset;
    ds["count"] = fields.size();
    if (!fields.empty()) {
      const GridField& f = fields.front();
      ds["shape"] = {f.channels, f.height, f.width};
      ds["channel_names"] = f.channel_names;
      if (f.timestamp) ds["first_time"] = format_iso8601(*f.timestamp);
      if (fields.back().timestamp) ds["last_time"] = format_iso8601(*fields.back().timestamp);
    }
    j["dataset"] = ds;
  }
  out << j.dump(2) << '\n';
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stochastic super-resolution of gridded fields with a latent-adversarial generator",
               "lagds"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "key = value run-config file");
  app.add_option("--preset", g.preset, "smoke, wind or solar (default smoke)");
  app.add_flag("--force", g.force, "overwrite a non-empty output directory");
  app.add_option("--set", g.sets, "override any config key, KEY=VALUE")->take_all();
  Overrides o;
  o.bind(&app, "--seed", "seed", "master seed");
  o.bind(&app, "--out", "output", "output directory");

  auto* synth = app.add_subcommand("synth", "write a synthetic GRD1 dataset");
  for (const char* k : {"count", "size", "channels"}) o.bind(synth, std::string("--") + k, k, k);
  o.bind(synth, "--correlation-length", "correlation_length", "Gaussian smoothing length in pixels");
  o.bind(synth, "--low", "low", "lower value bound");
  o.bind(synth, "--high", "high", "upper value bound");

  auto* train = app.add_subcommand("train", "train with progressive growing");
  std::string resume;
  o.bind(train, "--dataset", "dataset", "dataset directory");
  train->add_option("--resume", resume, "continue from a checkpoint");
  o.bind(train, "--max-scale", "max_scale", "upscaling factor");
  o.bind(train, "--widths", "widths", "LR width then one per stage, or auto");
  o.bind(train, "--batch", "batch", "batch size");
  o.bind(train, "--lr", "lr", "Adam learning rate");
  o.bind(train, "--n-critic", "n_critic", "critic steps per generator step");
  o.bind(train, "--epochs-per-phase", "epochs_per_phase", "epochs per phase");
  o.bind(train, "--lambda", "lambda", "center loss weight");
  o.bind(train, "--lambda-gp", "lambda_gp", "gradient penalty weight");
  o.bind(train, "--ema-decay", "ema_decay", "generator EMA decay");
  o.bind(train, "--max-steps", "max_steps", "stop after this many generator steps");
  o.bind(train, "--train-fraction", "train_fraction", "chronological training share");

  SampleModes sm;
  auto* sample = app.add_subcommand("sample", "center prediction, realizations and ensemble maps");
  o.bind(sample, "--checkpoint", "checkpoint", "trained checkpoint");
  o.bind(sample, "--input", "input", "LR input GRD1 field");
  o.bind(sample, "--n", "n", "number of realizations");
  sample->add_flag("--from-hr", sm.from_hr, "input is an HR field; average-pool it first");
  sample->add_flag("--center-only", sm.center_only, "write only the center prediction");
  sample->add_flag("--ensemble", sm.ensemble, "write every realization");
  sample->add_flag("--stats", sm.stats, "write per-pixel mean and std maps");

  EvalModes em;
  auto* evaluate = app.add_subcommand("evaluate", "relative MSE and SWD on held-out fields");
  o.bind(evaluate, "--checkpoint", "checkpoint", "trained checkpoint");
  o.bind(evaluate, "--dataset", "dataset", "dataset directory");
  o.bind(evaluate, "--n", "n", "realizations for the variogram envelope");
  o.bind(evaluate, "--sample-index", "sample_index", "held-out field for --variogram");
  o.bind(evaluate, "--train-fraction", "train_fraction", "fields before this share are skipped");
  o.bind(evaluate, "--denominator", "relmse_denominator", "auto, mean or mean_abs");
  evaluate->add_flag("--all", em.all, "score every field, not only the held-out split");
  evaluate->add_flag("--identity", em.identity, "debug: score truth against itself");
  evaluate->add_flag("--variogram", em.variogram, "semivariogram envelope and mass scatter CSVs");

  bool test_from_hr = false;
  auto* test = app.add_subcommand("test", "simulation-based plausibility test of an HR candidate");
  o.bind(test, "--checkpoint", "checkpoint", "trained checkpoint");
  o.bind(test, "--input", "input", "LR input GRD1 field");
  o.bind(test, "--candidate", "candidate", "HR candidate GRD1 field");
  o.bind(test, "--n", "n", "number of realizations");
  o.bind(test, "--statistic", "statistic", "residual, swd or both");
  o.bind(test, "--significance", "significance", "level for the printed verdict");
  test->add_flag("--from-hr", test_from_hr, "input is an HR field; average-pool it first");

  auto* info = app.add_subcommand("info", "JSON summary of kernels, config, checkpoint and dataset");
  o.bind(info, "--checkpoint", "checkpoint", "checkpoint to describe");
  o.bind(info, "--dataset", "dataset", "dataset to describe");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  const std::string command = join(args);
  try {
    const RunConfig c = resolve(g, o);
    if (synth->parsed()) return cmd_synth(c, g, command, out);
    if (train->parsed()) return cmd_train(c, g, resume, command, out);
    if (sample->parsed()) return cmd_sample(c, sm, command, out);
    if (evaluate->parsed()) return cmd_evaluate(c, em, command, out);
    if (test->parsed()) return cmd_test(c, test_from_hr, command, out);
    if (info->parsed()) return cmd_info(c, out);
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << " (term " << e.term() << ")\n";
    return kDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace lagds::cli
