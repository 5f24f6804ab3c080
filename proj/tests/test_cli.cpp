#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "doctest.h"
#include "json.hpp"
#include "lagds/grid_io.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace lagds;
using lagds::cli::run_cli;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> v;
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("lagds_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

// 4x upscaling of 16x16 fields: a model small enough to train in seconds.
const std::vector<std::string> kTiny = {"--set", "max_scale=4", "--set", "widths=8,8,8",
                                        "--set", "proj_channels=4"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Synthesizes a 10-field 16x16 dataset and trains the tiny model on it.
struct Trained {
  TempDir dir{"trained"};
  std::string data = dir / "data";
  std::string run = dir / "run";
  Trained() {
    REQUIRE(run_cli({"synth", "--out", data, "--count", "10", "--size", "16", "--seed", "4"}, null(), null()) == 0);
    REQUIRE(run_cli(with({"train", "--dataset", data, "--out", run, "--batch", "4", "--n-critic", "2",
                          "--epochs-per-phase", "1", "--train-fraction", "0.8"},
                         kTiny),
                    null(), null()) == 0);
  }
  static std::ostream& null() {
    static std::ostringstream sink;
    sink.str("");
    return sink;
  }
  std::string ckpt() const { return run + "/final.ckpt"; }
};

}  // namespace

TEST_CASE("presets and precedence") {
  const auto wind = cli::RunConfig::from_preset("wind");
  CHECK(wind.batch == 16);
  CHECK(wind.learning_rate == 2e-3);
  CHECK(wind.epochs_per_phase == 30);
  CHECK(wind.max_scale == 64);
  const auto solar = cli::RunConfig::from_preset("solar");
  CHECK(solar.batch == 1);
  CHECK(solar.learning_rate == 4e-3);
  CHECK(solar.epochs_per_phase == 15);
  CHECK_THROWS_AS(cli::RunConfig::from_preset("ocean"), cli::UsageError);

  TempDir t("precedence");
  std::ofstream(t / "run.cfg") << "# comment\npreset = wind\nlr = 0.01\nbatch = 3\n";
  const Result r = run({"info", "--config", t / "run.cfg", "--set", "batch=5"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["config"]["preset"] == "wind");
  CHECK(j["config"]["max_scale"] == "64");
  CHECK(j["config"]["lr"] == "0.01");
  CHECK(j["config"]["batch"] == "5");
  CHECK(j["config"]["epochs_per_phase"] == "30");

  // Every echoed entry reads back to the same value.
  cli::RunConfig c = cli::RunConfig::from_preset("solar");
  cli::RunConfig back;
  for (const auto& [k, v] : c.entries()) back.set(k, v);
  CHECK(back.entries() == c.entries());
}

TEST_CASE("usage errors exit 1") {
  TempDir t("usage");
  CHECK(run({"synth", "--out", t / "a", "--count", "0"}).code == 1);
  CHECK(run({"synth", "--bogus"}).code == 1);
  CHECK(run({}).code == 1);
  CHECK(run({"info", "--set", "nokey=1"}).code == 1);
  CHECK(run({"info", "--set", "batch"}).code == 1);
  CHECK(run({"info", "--set", "batch=two"}).code == 1);
  CHECK(run({"info", "--preset", "ocean"}).code == 1);
  std::ofstream(t / "bad.cfg") << "learning_rate = 0.1\n";
  const Result r = run({"info", "--config", t / "bad.cfg"});
  CHECK(r.code == 1);
  CHECK(r.err.find("learning_rate") != std::string::npos);
  CHECK(run({"info", "--config", t / "missing.cfg"}).code == 1);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("synth writes a deterministic dataset") {
  TempDir t("synth");
  const Result r = run({"synth", "--seed", "7", "--count", "64", "--size", "128", "--channels", "2", "--out", t / "a"});
  REQUIRE(r.code == 0);
  int grids = 0;
  for (const auto& e : fs::directory_iterator(t.path / "a")) grids += e.path().extension() == ".grd1";
  CHECK(grids == 64);
  CHECK(lines(t.path / "a" / "manifest.tsv").size() == 65);
  const auto fields = read_dataset(t.path / "a");
  REQUIRE(fields.size() == 64);
  CHECK(fields[0].channels == 2);
  CHECK(fields[0].height == 128);

  const std::string first = slurp(t.path / "a" / "000017.grd1");
  CHECK(run({"synth", "--seed", "7", "--count", "64", "--size", "128", "--channels", "2", "--out", t / "a"}).code == 1);
  CHECK(run({"synth", "--seed", "7", "--count", "64", "--size", "128", "--channels", "2", "--out", t / "a", "--force"}).code == 0);
  CHECK(slurp(t.path / "a" / "000017.grd1") == first);

  // The echo alone reproduces the run.
  REQUIRE(run({"synth", "--config", t / "a/config.echo", "--out", t / "b"}).code == 0);
  for (const char* f : {"000000.grd1", "000063.grd1", "manifest.tsv"}) {
    CHECK(slurp(t.path / "a" / f) == slurp(t.path / "b" / f));
  }
}

TEST_CASE("train, resume and divergence") {
  TempDir t("train");
  const std::string data = t / "data";
  REQUIRE(run({"synth", "--out", data, "--count", "10", "--size", "16", "--seed", "4"}).code == 0);
  const auto base = with({"train", "--dataset", data, "--batch", "4", "--n-critic", "2", "--epochs-per-phase",
                          "1", "--train-fraction", "0.8"},
                         kTiny);
  REQUIRE(run(with(base, {"--out", t / "full"})).code == 0);
  for (const char* f : {"final.ckpt", "config.echo", "phase_01.ckpt", "phase_03.ckpt"}) {
    CHECK(fs::exists(t.path / "full" / f));
  }
  // 8 training fields, batch 4: 2 steps per epoch over 3 phases.
  const auto log = lines(t.path / "full" / "train_log.tsv");
  CHECK(log.size() == 7);
  CHECK(run(with(base, {"--out", t / "full"})).code == 1);

  REQUIRE(run(with(base, {"--out", t / "part", "--max-steps", "5"})).code == 0);
  REQUIRE(run(with(base, {"--out", t / "part", "--resume", t / "part/phase_01.ckpt"})).code == 0);
  CHECK(lines(t.path / "part" / "train_log.tsv") == log);
  CHECK(slurp(t.path / "part" / "final.ckpt") == slurp(t.path / "full" / "final.ckpt"));

  // A checkpoint for a different model is refused.
  CHECK(run(with(base, {"--out", t / "other", "--set", "z_channels=3", "--resume", t / "full/final.ckpt"})).code == 2);

  const Result d = run(with(base, {"--out", t / "diverge", "--lr", "1e300"}));
  CHECK(d.code == 3);
  CHECK(d.err.find("term") != std::string::npos);
}

TEST_CASE("sample, evaluate, test and info on a trained model") {
  Trained m;
  TempDir t("outputs");
  const std::string hr = m.data + "/000009.grd1";

  Result r = run({"sample", "--checkpoint", m.ckpt(), "--input", hr, "--from-hr", "--center-only", "--out", t / "c"});
  REQUIRE(r.code == 0);
  int n = 0;
  for (const auto& e : fs::directory_iterator(t.path / "c")) n += e.path().extension() == ".grd1";
  CHECK(n == 1);
  CHECK(read_grid(t.path / "c" / "center.grd1").height == 16);

  for (const char* d : {"e1", "e2"}) {
    REQUIRE(run({"sample", "--checkpoint", m.ckpt(), "--input", hr, "--from-hr", "--ensemble", "--n", "3",
                 "--seed", "9", "--out", t / d})
                .code == 0);
  }
  CHECK(slurp(t.path / "e1" / "realization_0002.grd1") == slurp(t.path / "e2" / "realization_0002.grd1"));
  CHECK_FALSE(fs::exists(t.path / "e1" / "realization_0003.grd1"));

  REQUIRE(run({"sample", "--checkpoint", m.ckpt(), "--input", hr, "--from-hr", "--stats", "--n", "20", "--out", t / "s"}).code == 0);
  const GridField sd = read_grid(t.path / "s" / "std.grd1");
  double total = 0;
  for (double v : sd.values) total += v;
  CHECK(total > 0);
  CHECK(fs::exists(t.path / "s" / "mean.grd1"));

  r = run({"sample", "--checkpoint", m.ckpt(), "--input", hr, "--out", t / "bad"});
  CHECK(r.code == 1);
  CHECK(r.err.find("2 x 4 x 4") != std::string::npos);
  CHECK(run({"sample", "--checkpoint", m.ckpt(), "--input", hr, "--center-only", "--stats", "--out", t / "bad"}).code == 1);
  CHECK(run({"sample", "--checkpoint", t / "nothing.ckpt", "--input", hr, "--out", t / "bad"}).code == 2);

  REQUIRE(run({"evaluate", "--checkpoint", m.ckpt(), "--dataset", m.data, "--train-fraction", "0.8", "--identity", "--out", t / "id"}).code == 0);
  const auto rep = lines(t.path / "id" / "report.tsv");
  REQUIRE(rep.size() == 4);
  CHECK(rep[0] == "image_id\trel_mse\tswd");
  CHECK(rep[1].rfind("000008\t", 0) == 0);
  CHECK(rep[3] == "median\t0\t0");

  REQUIRE(run({"evaluate", "--checkpoint", m.ckpt(), "--dataset", m.data, "--train-fraction", "0.8", "--variogram", "--sample-index", "1",
               "--n", "10", "--out", t / "vg"})
              .code == 0);
  const auto vg = lines(t.path / "vg" / "variogram_center_c0.csv");
  CHECK(vg.at(0) == "lag,gamma,count,lower,upper");
  CHECK(vg.size() > 2);
  CHECK(fs::exists(t.path / "vg" / "mass_scatter.csv"));
  CHECK(run({"evaluate", "--checkpoint", m.ckpt(), "--dataset", m.data, "--train-fraction", "0.8", "--variogram", "--sample-index", "2",
             "--out", t / "vg"})
            .code == 1);

  const std::string center = t / "c/center.grd1";
  r = run({"test", "--checkpoint", m.ckpt(), "--input", hr, "--from-hr", "--candidate", center, "--n", "19",
           "--statistic", "both", "--out", t / "t"});
  REQUIRE(r.code == 0);
  const auto tr = lines(t.path / "t" / "report.tsv");
  REQUIRE(tr.size() == 3);
  CHECK(tr[1].rfind("residual-L2\t", 0) == 0);
  CHECK(tr[1].substr(tr[1].rfind('\t')) == "\t1");
  CHECK(tr[2].rfind("swd\t", 0) == 0);
  CHECK(r.out.find("pseudo_p") != std::string::npos);
  CHECK(run({"test", "--checkpoint", m.ckpt(), "--input", hr, "--from-hr", "--candidate", m.data + "/manifest.tsv",
             "--out", t / "t"})
            .code == 2);
  const std::string lr = t / "lr.grd1";
  write_grid(average_pool(read_grid(hr), 4), lr);
  CHECK(run({"test", "--checkpoint", m.ckpt(), "--input", lr, "--candidate", lr, "--out", t / "t"}).code == 1);

  r = run({"info", "--checkpoint", m.ckpt(), "--dataset", m.data});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["checkpoint"]["global_step"] == 6);
  CHECK(j["checkpoint"]["hr_side"] == 16);
  CHECK(j["dataset"]["count"] == 10);
}
