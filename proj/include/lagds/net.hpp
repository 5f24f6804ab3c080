#pragma once
// Progressive conditional generator and critic.
//
// Generator: [y, z] at LR -> head conv -> stage blocks (2x nearest upsample,
// two 3x3 conv + leaky ReLU, residual skip) -> per-stage 1x1 output heads.
// Critic: per-stage 1x1 input heads -> stage blocks (2x space-to-depth, two
// convs, residual skip) -> concat y at LR -> tail convs -> projection P.
// Convolution weights use equalized learning rate: stored N(0,1), scaled at
// run time by gain / sqrt(fan_in).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lagds/autograd.hpp"
#include "lagds/tensor.hpp"

namespace lagds {

struct ModelConfig {
  int in_channels = 1;
  int lr_size = 8;
  int max_scale = 4;
  int base_width = 256;
  std::vector<int> width_schedule;  // per stage 1..S; derived from base/min when empty
  int min_width = 32;
  int z_channels = 2;
  int proj_channels = 16;
  double leaky_slope = 0.2;
  int kernel_size = 3;
  std::uint64_t seed = 0;

  int num_stages() const;
  // Width at stage k for k = 0..S; index 0 is the LR width.
  std::vector<int> widths() const;
  int side(int stage) const { return lr_size << stage; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct StagePosition {
  int stage = 1;
  double alpha = 1.0;
};

// Named parameter tensors in creation order.
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor value);
  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& operator[](std::size_t i) { return values_[i]; }
  const Tensor& operator[](std::size_t i) const { return values_[i]; }
  std::vector<Tensor>& values() { return values_; }
  const std::vector<Tensor>& values() const { return values_; }
  std::size_t numel() const;

  std::vector<ag::Var> bind(bool requires_grad) const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

struct ConvLayer {
  std::size_t weight = 0;
  std::size_t bias = 0;
  double scale = 1.0;
  bool has_bias = true;
};

class Generator {
 public:
  // Builds the head and stages 1..stages.
  Generator(const ModelConfig& config, int stages);

  const ModelConfig& config() const { return config_; }
  int stages() const { return static_cast<int>(blocks_.size()); }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  void grow(int new_stage);

  // y: N x C x L x L, z: N x Z x L x L; returns N x C x side(stage)^2.
  ag::Var forward(std::span<const ag::Var> p, const ag::Var& y, const ag::Var& z,
                  StagePosition pos) const;
  Tensor forward(const Tensor& y, const Tensor& z, StagePosition pos) const;

 private:
  struct Block {
    ConvLayer conv1, conv2, skip, to_out;
    bool has_skip = false;
  };
  void append_stage(int stage);

  ModelConfig config_;
  ParamSet params_;
  ConvLayer head_;
  std::vector<Block> blocks_;
};

class Critic {
 public:
  Critic(const ModelConfig& config, int stages);

  const ModelConfig& config() const { return config_; }
  int stages() const { return static_cast<int>(blocks_.size()); }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  void grow(int new_stage);

  // x: N x C x side(stage)^2, y: N x C x L x L; returns P: N x proj x L x L.
  ag::Var project(std::span<const ag::Var> p, const ag::Var& x, const ag::Var& y,
                  StagePosition pos) const;
  Tensor project(const Tensor& x, const Tensor& y, StagePosition pos) const;

 private:
  struct Block {
    ConvLayer from_in, conv1, conv2, skip;
  };
  void append_stage(int stage);

  ModelConfig config_;
  ParamSet params_;
  ConvLayer tail1_, tail2_;
  std::vector<Block> blocks_;
};

Generator build_generator(const ModelConfig& config);
Critic build_critic(const ModelConfig& config);

// Per-sample mean of a projection: N x 1 x 1 x 1.
ag::Var critic_score(const ag::Var& projection);
double critic_score(const Tensor& projection);

}  // namespace lagds
