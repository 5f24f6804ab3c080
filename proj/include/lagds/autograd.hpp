#pragma once
// Reverse-mode automatic differentiation over NCHW tensors.
//
// Backward rules are themselves written with differentiable ops, so a
// gradient computed with create_graph=true is an ordinary Var that can be
// differentiated again. The critic's gradient penalty relies on this.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "lagds/tensor.hpp"

namespace lagds::ag {

class Var;

// Receives the upstream gradient and, per input, whether its gradient is
// wanted. Returns one entry per input; entries not wanted may be left empty.
using BackwardFn = std::function<std::vector<Var>(const Var& grad_out,
                                                  const std::vector<bool>& needs)>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  std::vector<Var> inputs;
  BackwardFn backward;
  const char* op = "leaf";
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Node* node() const { return node_.get(); }
  const char* op() const { return node_->op; }

  // Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  static Var from_node(std::shared_ptr<Node> node) {
    Var v;
    v.node_ = std::move(node);
    return v;
  }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Scoped override of graph recording for the current thread.
class GradMode {
 public:
  explicit GradMode(bool enabled);
  ~GradMode();
  GradMode(const GradMode&) = delete;
  GradMode& operator=(const GradMode&) = delete;

 private:
  bool previous_;
};

struct NoGrad : GradMode {
  NoGrad() : GradMode(false) {}
};

// d(output)/d(inputs), seeded with ones (or `seed` when given). Inputs that
// do not influence the output receive zero tensors. With create_graph the
// returned gradients are differentiable.
std::vector<Var> grad(const Var& output, std::span<const Var> inputs, bool create_graph = false,
                      const Var* seed = nullptr);

// ---- differentiable operations -------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var mul(const Var& a, const Var& b);
Var mul_const(const Var& a, std::shared_ptr<const Tensor> factor);
Var square(const Var& a);
Var sqrt(const Var& a);
Var reciprocal(const Var& a);
Var leaky_relu(const Var& x, double slope);

// Stride-1 "same" convolution with a square odd kernel, no bias.
// x: N x C x H x W, w: O x C x k x k.
Var conv2d(const Var& x, const Var& w);
// Adjoint of conv2d with respect to its input.
Var conv2d_input_grad(const Var& g, const Var& w);
// Adjoint of conv2d with respect to its kernel, summed over the batch.
Var conv2d_weight_grad(const Var& x, const Var& g, int kernel);

Var add_bias(const Var& x, const Var& bias);  // bias shape 1 x C x 1 x 1
Var channel_sum(const Var& x);
Var broadcast_channels(const Var& b, const Shape& shape);

Var upsample2(const Var& x);  // nearest neighbour, factor 2
Var sum_pool2(const Var& x);  // 2x2 block sums
Var avg_pool2(const Var& x);

Var space_to_depth2(const Var& x);  // 2x2 block -> 4 channels, row-major within block
Var depth_to_space2(const Var& x);

Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& x, int start, int count);
Var embed_channels(const Var& x, int start, int total);

Var sum_per_sample(const Var& x);  // -> N x 1 x 1 x 1
Var broadcast_per_sample(const Var& s, const Shape& shape);
Var sum_all(const Var& x);  // -> 1 x 1 x 1 x 1
Var broadcast_scalar(const Var& s, const Shape& shape);
Var mean_all(const Var& x);
Var mean_per_sample(const Var& x);

// Linear blend alpha * a + (1 - alpha) * b.
Var lerp(const Var& a, const Var& b, double alpha);

}  // namespace lagds::ag
