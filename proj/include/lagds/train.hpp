#pragma once
// Progressive WGAN-GP training: phase schedule, Adam, EMA, checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lagds/grid.hpp"
#include "lagds/loss.hpp"
#include "lagds/net.hpp"

namespace lagds {

enum class PhaseKind { Transition, Stabilization };

struct Phase {
  int stage = 1;
  PhaseKind kind = PhaseKind::Stabilization;
  int epochs = 1;
  friend bool operator==(const Phase&, const Phase&) = default;
};

using ProgressiveSchedule = std::vector<Phase>;

ProgressiveSchedule make_schedule(int max_scale, int epochs_per_phase);
double alpha_of_progress(const Phase& phase, double fraction_done);
const char* to_string(PhaseKind kind);

struct OptimizerSettings {
  double learning_rate = 2e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  int n_critic = 5;
  int batch_size = 16;
  double ema_decay = 0.999;
  void validate() const;
};

// Adam with a step counter per tensor, so tensors added by growth start
// with their own bias correction.
struct Adam {
  std::vector<Tensor> m, v;
  std::vector<std::int64_t> t;

  void step(ParamSet& params, const std::vector<ag::Var>& grads, const OptimizerSettings& s);
  friend bool operator==(const Adam&, const Adam&) = default;
};

// ema <- decay * ema + (1 - decay) * params
void ema_update(ParamSet& ema, const ParamSet& params, double decay);

struct TrainState {
  explicit TrainState(const ModelConfig& config, std::uint64_t seed = 0);

  ModelConfig model;
  Generator generator;
  Generator generator_ema;
  Critic critic;
  Adam opt_generator;
  Adam opt_critic;
  NormalizationStats normalization;
  std::int64_t global_step = 0;
  int phase_index = 0;
  std::int64_t phase_step = 0;  // generator steps completed in the current phase
  std::mt19937_64 rng;

  int stages() const { return generator.stages(); }
  void grow_to(int stage);
};

// Single optimizer updates; each refreshes its own entries of terms.
void critic_update(TrainState& state, const Tensor& x, const Tensor& y, StagePosition pos,
                   const LossWeights& weights, const OptimizerSettings& settings, LossTerms& terms);
void generator_update(TrainState& state, const Tensor& x, const Tensor& y, StagePosition pos,
                      const LossWeights& weights, const OptimizerSettings& settings,
                      LossTerms& terms);

// One generator step preceded by n_critic critic steps. x holds targets at
// the stage resolution, y the LR inputs; both normalized.
LossBreakdown train_step(TrainState& state, const Tensor& x, const Tensor& y, StagePosition pos,
                         const LossWeights& weights, const OptimizerSettings& settings);

struct TrainConfig {
  ModelConfig model;
  LossWeights weights;
  OptimizerSettings optimizer;
  int epochs_per_phase = 1;
  std::uint64_t seed = 0;
  std::int64_t max_steps = -1;  // stop early once global_step reaches this (< 0: no limit)
};

struct StepInfo {
  std::int64_t step = 0;
  int phase = 0;
  StagePosition pos;
  LossBreakdown losses;
};

struct TrainCallbacks {
  std::function<void(const StepInfo&)> on_step;
  std::function<void(const TrainState&)> on_phase_end;
};

// Number of generator steps per epoch for n training fields (drop-last).
std::int64_t steps_per_epoch(std::int64_t n, int batch_size);

// hr: N x C x H x W normalized fields at full resolution. Continues from the
// position stored in state. Returns true once the whole schedule is done.
bool run_training(TrainState& state, const Tensor& hr, const TrainConfig& config,
                  const TrainCallbacks& callbacks = {});

// N x C x H x W tensor from equally shaped fields.
Tensor stack_fields(std::span<const GridField> fields);
GridField unstack_field(const Tensor& t, int n, const std::vector<std::string>& names);
// Average-pools every sample of a batch by a power-of-two factor.
Tensor pool_batch(const Tensor& t, int factor);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
// When expected is given, refuses checkpoints built for a different model.
TrainState load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace lagds
