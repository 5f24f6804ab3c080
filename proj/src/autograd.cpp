#include "lagds/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "lagds/kernels.hpp"

namespace lagds::ag {

namespace {

thread_local bool t_grad_enabled = true;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.str() + " and " +
                              b.str());
}

Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn fn, const char* op) {
  const bool track = t_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                                   [](const Var& v) { return v.requires_grad(); });
  if (!track) return Var(std::move(value), false);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->inputs = std::move(inputs);
  node->backward = std::move(fn);
  node->op = op;
  return Var::from_node(std::move(node));
}

const kernels::KernelTable& K() { return kernels::active(); }

// ---- raw tensor kernels ----------------------------------------------------

void im2col(const double* x, int channels, int h, int w, int k, double* cols) {
  const int pad = k / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    const double* src_plane = x + static_cast<std::size_t>(c) * plane;
    for (int di = 0; di < k; ++di) {
      for (int dj = 0; dj < k; ++dj) {
        double* row = cols + (static_cast<std::size_t>(c) * k * k + di * k + dj) * plane;
        const int shift = dj - pad;
        const int j_lo = std::max(0, -shift);
        const int j_hi = std::min(w, w - shift);
        for (int i = 0; i < h; ++i) {
          double* dst = row + static_cast<std::size_t>(i) * w;
          const int si = i + di - pad;
          if (si < 0 || si >= h || j_lo >= j_hi) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const double* src = src_plane + static_cast<std::size_t>(si) * w;
          std::fill(dst, dst + j_lo, 0.0);
          std::copy(src + j_lo + shift, src + j_hi + shift, dst + j_lo);
          std::fill(dst + j_hi, dst + w, 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* cols, int channels, int h, int w, int k, double* x) {
  const int pad = k / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    double* dst_plane = x + static_cast<std::size_t>(c) * plane;
    for (int di = 0; di < k; ++di) {
      for (int dj = 0; dj < k; ++dj) {
        const double* row = cols + (static_cast<std::size_t>(c) * k * k + di * k + dj) * plane;
        const int shift = dj - pad;
        const int j_lo = std::max(0, -shift);
        const int j_hi = std::min(w, w - shift);
        if (j_lo >= j_hi) continue;
        for (int i = 0; i < h; ++i) {
          const int si = i + di - pad;
          if (si < 0 || si >= h) continue;
          const double* src = row + static_cast<std::size_t>(i) * w;
          double* dst = dst_plane + static_cast<std::size_t>(si) * w + shift;
          for (int j = j_lo; j < j_hi; ++j) dst[j] += src[j];
        }
      }
    }
  }
}

std::vector<double>& scratch() {
  thread_local std::vector<double> buf;
  return buf;
}

void check_kernel(const Shape& w) {
  if (w.h != w.w || w.h % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel must be square and odd, got " + w.str());
  }
}

Tensor conv_forward(const Tensor& x, const Tensor& w) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  check_kernel(ws);
  if (xs.c != ws.c) shape_error("conv2d", xs, ws);
  const int k = ws.h;
  const std::size_t hw = xs.plane();
  const std::size_t ckk = static_cast<std::size_t>(ws.c) * k * k;
  Tensor y = Tensor::uninitialized(Shape{xs.n, ws.n, xs.h, xs.w});
  auto& cols = scratch();
  if (k > 1) cols.resize(ckk * hw);
  for (int n = 0; n < xs.n; ++n) {
    const double* b = x.sample(n);
    if (k > 1) {
      im2col(x.sample(n), xs.c, xs.h, xs.w, k, cols.data());
      b = cols.data();
    }
    K().gemm(kernels::Trans::No, kernels::Trans::No, ws.n, hw, ckk, 1.0, w.data(), ckk, b, hw, 0.0,
             y.sample(n), hw);
  }
  return y;
}

Tensor conv_input_grad(const Tensor& g, const Tensor& w) {
  const Shape& gs = g.shape();
  const Shape& ws = w.shape();
  check_kernel(ws);
  if (gs.c != ws.n) shape_error("conv2d_input_grad", gs, ws);
  const int k = ws.h;
  const std::size_t hw = gs.plane();
  const std::size_t ckk = static_cast<std::size_t>(ws.c) * k * k;
  Tensor dx(Shape{gs.n, ws.c, gs.h, gs.w});
  auto& cols = scratch();
  if (k > 1) cols.resize(ckk * hw);
  for (int n = 0; n < gs.n; ++n) {
    double* out = k > 1 ? cols.data() : dx.sample(n);
    K().gemm(kernels::Trans::Yes, kernels::Trans::No, ckk, hw, ws.n, 1.0, w.data(), ckk,
             g.sample(n), hw, 0.0, out, hw);
    if (k > 1) col2im_add(cols.data(), ws.c, gs.h, gs.w, k, dx.sample(n));
  }
  return dx;
}

Tensor conv_weight_grad(const Tensor& x, const Tensor& g, int k) {
  const Shape& xs = x.shape();
  const Shape& gs = g.shape();
  if (xs.n != gs.n || xs.h != gs.h || xs.w != gs.w) shape_error("conv2d_weight_grad", xs, gs);
  const std::size_t hw = xs.plane();
  const std::size_t ckk = static_cast<std::size_t>(xs.c) * k * k;
  Tensor dw(Shape{gs.c, xs.c, k, k});
  auto& cols = scratch();
  if (k > 1) cols.resize(ckk * hw);
  for (int n = 0; n < xs.n; ++n) {
    const double* b = x.sample(n);
    if (k > 1) {
      im2col(x.sample(n), xs.c, xs.h, xs.w, k, cols.data());
      b = cols.data();
    }
    K().gemm(kernels::Trans::No, kernels::Trans::Yes, gs.c, ckk, hw, 1.0, g.sample(n), hw, b, hw,
             1.0, dw.data(), ckk);
  }
  return dw;
}

Tensor binary(const Tensor& a, const Tensor& b, double ca, double cb) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  Tensor out = Tensor::uninitialized(a.shape());
  K().axpby(a.size(), ca, a.data(), cb, b.data(), out.data());
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  Tensor out = Tensor::uninitialized(a.shape());
  K().mul(a.size(), a.data(), b.data(), out.data());
  return out;
}

Tensor scaled(const Tensor& a, double s) {
  Tensor out = Tensor::uninitialized(a.shape());
  const double* src = a.data();
  double* dst = out.data();
  for (std::size_t i = 0; i < a.size(); ++i) dst[i] = s * src[i];
  return out;
}

}  // namespace

// ---- Var / grad mode --------------------------------------------------------

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

bool grad_enabled() { return t_grad_enabled; }

GradMode::GradMode(bool enabled) : previous_(t_grad_enabled) { t_grad_enabled = enabled; }
GradMode::~GradMode() { t_grad_enabled = previous_; }

std::vector<Var> grad(const Var& output, std::span<const Var> inputs, bool create_graph,
                      const Var* seed) {
  std::unordered_set<Node*> targets;
  for (const Var& v : inputs) targets.insert(v.node());

  // Post-order over the recorded graph: inputs of a node precede it.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  if (output.requires_grad()) {
    std::vector<std::pair<Node*, std::size_t>> stack{{output.node(), 0}};
    visited.insert(output.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        Node* child = node->inputs[next++].node();
        if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::unordered_set<Node*> relevant;
  for (Node* node : order) {
    bool r = targets.count(node) > 0;
    for (const Var& in : node->inputs) r = r || relevant.count(in.node()) > 0;
    if (r) relevant.insert(node);
  }

  GradMode mode(create_graph);
  std::unordered_map<Node*, Var> grads;
  if (relevant.count(output.node())) {
    if (seed != nullptr) {
      if (seed->shape() != output.shape()) shape_error("grad seed", seed->shape(), output.shape());
      grads[output.node()] = *seed;
    } else {
      grads[output.node()] = Var(Tensor(output.shape(), 1.0));
    }
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward) continue;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    std::vector<bool> needs(node->inputs.size());
    bool any = false;
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const Var& in = node->inputs[i];
      needs[i] = in.requires_grad() && relevant.count(in.node()) > 0;
      any = any || needs[i];
    }
    if (!any) continue;
    const Var upstream = found->second;
    if (!targets.count(node)) grads.erase(found);
    std::vector<Var> parts = node->backward(upstream, needs);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (!needs[i] || !parts[i].defined()) continue;
      Node* in = node->inputs[i].node();
      auto slot = grads.find(in);
      if (slot == grads.end()) {
        grads.emplace(in, std::move(parts[i]));
      } else {
        slot->second = add(slot->second, parts[i]);
      }
    }
  }

  std::vector<Var> result;
  result.reserve(inputs.size());
  for (const Var& v : inputs) {
    auto found = grads.find(v.node());
    result.push_back(found != grads.end() ? found->second : Var(Tensor(v.shape(), 0.0)));
  }
  return result;
}

// ---- elementwise -------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  return make_result(binary(a.value(), b.value(), 1.0, 1.0), {a, b},
                     [](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {g, g};
                     },
                     "add");
}

Var sub(const Var& a, const Var& b) {
  return make_result(binary(a.value(), b.value(), 1.0, -1.0), {a, b},
                     [](const Var& g, const std::vector<bool>& needs) -> std::vector<Var> {
                       return {g, needs[1] ? neg(g) : Var()};
                     },
                     "sub");
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
  return make_result(scaled(a.value(), s), {a},
                     [s](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {scale(g, s)};
                     },
                     "scale");
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v += s;
  return make_result(std::move(out), {a},
                     [](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {g};
                     },
                     "add_scalar");
}

Var mul(const Var& a, const Var& b) {
  return make_result(hadamard(a.value(), b.value()), {a, b},
                     [a, b](const Var& g, const std::vector<bool>& needs) -> std::vector<Var> {
                       return {needs[0] ? mul(g, b) : Var(), needs[1] ? mul(g, a) : Var()};
                     },
                     "mul");
}

Var mul_const(const Var& a, std::shared_ptr<const Tensor> factor) {
  Tensor out = hadamard(a.value(), *factor);
  return make_result(std::move(out), {a},
                     [factor](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {mul_const(g, factor)};
                     },
                     "mul_const");
}

Var square(const Var& a) { return mul(a, a); }

Var sqrt(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::sqrt(v);
  return make_result(std::move(out), {a},
                     [a](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {mul(g, scale(reciprocal(sqrt(a)), 0.5))};
                     },
                     "sqrt");
}

Var reciprocal(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = 1.0 / v;
  return make_result(std::move(out), {a},
                     [a](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {neg(mul(g, square(reciprocal(a))))};
                     },
                     "reciprocal");
}

Var leaky_relu(const Var& x, double slope) {
  auto mask = std::make_shared<Tensor>(x.shape());
  K().leaky_mask(x.value().size(), x.value().data(), slope, mask->data());
  return mul_const(x, std::move(mask));
}

Var lerp(const Var& a, const Var& b, double alpha) {
  if (alpha == 1.0) return a;
  if (alpha == 0.0) return b;
  return make_result(binary(a.value(), b.value(), alpha, 1.0 - alpha), {a, b},
                     [alpha](const Var& g, const std::vector<bool>& needs) -> std::vector<Var> {
                       return {needs[0] ? scale(g, alpha) : Var(),
                               needs[1] ? scale(g, 1.0 - alpha) : Var()};
                     },
                     "lerp");
}

// ---- convolution ---------------------------------------------------------------

Var conv2d(const Var& x, const Var& w) {
  return make_result(conv_forward(x.value(), w.value()), {x, w},
                     [x, w](const Var& g, const std::vector<bool>& needs) -> std::vector<Var> {
                       return {needs[0] ? conv2d_input_grad(g, w) : Var(),
                               needs[1] ? conv2d_weight_grad(x, g, w.shape().h) : Var()};
                     },
                     "conv2d");
}

Var conv2d_input_grad(const Var& g, const Var& w) {
  return make_result(conv_input_grad(g.value(), w.value()), {g, w},
                     [g, w](const Var& h, const std::vector<bool>& needs) -> std::vector<Var> {
                       return {needs[0] ? conv2d(h, w) : Var(),
                               needs[1] ? conv2d_weight_grad(h, g, w.shape().h) : Var()};
                     },
                     "conv2d_input_grad");
}

Var conv2d_weight_grad(const Var& x, const Var& g, int kernel) {
  return make_result(conv_weight_grad(x.value(), g.value(), kernel), {x, g},
                     [x, g](const Var& k, const std::vector<bool>& needs) -> std::vector<Var> {
                       return {needs[0] ? conv2d_input_grad(g, k) : Var(),
                               needs[1] ? conv2d(x, k) : Var()};
                     },
                     "conv2d_weight_grad");
}

// ---- bias / channel reductions -----------------------------------------------------

Var add_bias(const Var& x, const Var& bias) {
  const Shape& s = x.shape();
  if (bias.shape() != Shape{1, s.c, 1, 1}) shape_error("add_bias", s, bias.shape());
  Tensor out = x.value();
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      double* p = out.sample(n) + c * plane;
      const double b = bias.value()[c];
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
  }
  return make_result(std::move(out), {x, bias},
                     [](const Var& g, const std::vector<bool>& needs) -> std::vector<Var> {
                       return {g, needs[1] ? channel_sum(g) : Var()};
                     },
                     "add_bias");
}

Var channel_sum(const Var& x) {
  const Shape s = x.shape();
  Tensor out(Shape{1, s.c, 1, 1});
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) out[c] += K().sum(plane, x.value().sample(n) + c * plane);
  }
  return make_result(std::move(out), {x},
                     [s](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {broadcast_channels(g, s)};
                     },
                     "channel_sum");
}

Var broadcast_channels(const Var& b, const Shape& shape) {
  if (b.shape() != Shape{1, shape.c, 1, 1}) shape_error("broadcast_channels", b.shape(), shape);
  Tensor out = Tensor::uninitialized(shape);
  const std::size_t plane = shape.plane();
  for (int n = 0; n < shape.n; ++n) {
    for (int c = 0; c < shape.c; ++c) {
      double* p = out.sample(n) + c * plane;
      std::fill(p, p + plane, b.value()[c]);
    }
  }
  return make_result(std::move(out), {b},
                     [](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {channel_sum(g)};
                     },
                     "broadcast_channels");
}

// ---- resampling ------------------------------------------------------------------

Var upsample2(const Var& x) {
  const Shape& s = x.shape();
  Tensor out = Tensor::uninitialized(Shape{s.n, s.c, s.h * 2, s.w * 2});
  const int ow = s.w * 2;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int i = 0; i < s.h; ++i) {
        const double* src = x.value().ptr(n, c, i, 0);
        double* r0 = out.ptr(n, c, 2 * i, 0);
        double* r1 = r0 + ow;
        for (int j = 0; j < s.w; ++j) {
          r0[2 * j] = r0[2 * j + 1] = r1[2 * j] = r1[2 * j + 1] = src[j];
        }
      }
    }
  }
  return make_result(std::move(out), {x},
                     [](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {sum_pool2(g)};
                     },
                     "upsample2");
}

Var sum_pool2(const Var& x) {
  const Shape& s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw std::invalid_argument("sum_pool2: spatial size must be even, got " + s.str());
  }
  Tensor out = Tensor::uninitialized(Shape{s.n, s.c, s.h / 2, s.w / 2});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int i = 0; i < s.h / 2; ++i) {
        const double* r0 = x.value().ptr(n, c, 2 * i, 0);
        const double* r1 = r0 + s.w;
        double* dst = out.ptr(n, c, i, 0);
        for (int j = 0; j < s.w / 2; ++j) {
          dst[j] = (r0[2 * j] + r0[2 * j + 1]) + (r1[2 * j] + r1[2 * j + 1]);
        }
      }
    }
  }
  return make_result(std::move(out), {x},
                     [](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {upsample2(g)};
                     },
                     "sum_pool2");
}

Var avg_pool2(const Var& x) { return scale(sum_pool2(x), 0.25); }

Var space_to_depth2(const Var& x) {
  const Shape& s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw std::invalid_argument("space_to_depth2: spatial size must be even, got " + s.str());
  }
  const int oh = s.h / 2, ow = s.w / 2;
  Tensor out = Tensor::uninitialized(Shape{s.n, s.c * 4, oh, ow});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int bi = 0; bi < 2; ++bi) {
        for (int bj = 0; bj < 2; ++bj) {
          const int oc = c * 4 + bi * 2 + bj;
          for (int i = 0; i < oh; ++i) {
            const double* src = x.value().ptr(n, c, 2 * i + bi, 0);
            double* dst = out.ptr(n, oc, i, 0);
            for (int j = 0; j < ow; ++j) dst[j] = src[2 * j + bj];
          }
        }
      }
    }
  }
  return make_result(std::move(out), {x},
                     [](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {depth_to_space2(g)};
                     },
                     "space_to_depth2");
}

Var depth_to_space2(const Var& x) {
  const Shape& s = x.shape();
  if (s.c % 4 != 0) {
    throw std::invalid_argument("depth_to_space2: channels must be a multiple of 4, got " +
                                s.str());
  }
  const int oc_count = s.c / 4;
  Tensor out = Tensor::uninitialized(Shape{s.n, oc_count, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < oc_count; ++c) {
      for (int bi = 0; bi < 2; ++bi) {
        for (int bj = 0; bj < 2; ++bj) {
          const int ic = c * 4 + bi * 2 + bj;
          for (int i = 0; i < s.h; ++i) {
            const double* src = x.value().ptr(n, ic, i, 0);
            double* dst = out.ptr(n, c, 2 * i + bi, 0);
            for (int j = 0; j < s.w; ++j) dst[2 * j + bj] = src[j];
          }
        }
      }
    }
  }
  return make_result(std::move(out), {x},
                     [](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {space_to_depth2(g)};
                     },
                     "depth_to_space2");
}

// ---- channel slicing ---------------------------------------------------------

Var concat_channels(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) shape_error("concat_channels", sa, sb);
  Tensor out = Tensor::uninitialized(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().sample(n), sa.sample_size(), out.sample(n));
    std::copy_n(b.value().sample(n), sb.sample_size(), out.sample(n) + sa.sample_size());
  }
  const int ca = sa.c, cb = sb.c;
  return make_result(std::move(out), {a, b},
                     [ca, cb](const Var& g, const std::vector<bool>& needs) -> std::vector<Var> {
                       return {needs[0] ? slice_channels(g, 0, ca) : Var(),
                               needs[1] ? slice_channels(g, ca, cb) : Var()};
                     },
                     "concat_channels");
}

Var slice_channels(const Var& x, int start, int count) {
  const Shape& s = x.shape();
  if (start < 0 || count <= 0 || start + count > s.c) {
    throw std::invalid_argument("slice_channels: range out of bounds for " + s.str());
  }
  Tensor out = Tensor::uninitialized(Shape{s.n, count, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(x.value().sample(n) + start * s.plane(), out.shape().sample_size(), out.sample(n));
  }
  const int total = s.c;
  return make_result(std::move(out), {x},
                     [start, total](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {embed_channels(g, start, total)};
                     },
                     "slice_channels");
}

Var embed_channels(const Var& x, int start, int total) {
  const Shape& s = x.shape();
  if (start < 0 || start + s.c > total) {
    throw std::invalid_argument("embed_channels: range out of bounds for " + s.str());
  }
  Tensor out(Shape{s.n, total, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(x.value().sample(n), s.sample_size(), out.sample(n) + start * s.plane());
  }
  const int count = s.c;
  return make_result(std::move(out), {x},
                     [start, count](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {slice_channels(g, start, count)};
                     },
                     "embed_channels");
}

// ---- reductions ------------------------------------------------------------------

Var sum_per_sample(const Var& x) {
  const Shape s = x.shape();
  Tensor out(Shape{s.n, 1, 1, 1});
  for (int n = 0; n < s.n; ++n) out[n] = K().sum(s.sample_size(), x.value().sample(n));
  return make_result(std::move(out), {x},
                     [s](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {broadcast_per_sample(g, s)};
                     },
                     "sum_per_sample");
}

Var broadcast_per_sample(const Var& v, const Shape& shape) {
  if (v.shape() != Shape{shape.n, 1, 1, 1}) shape_error("broadcast_per_sample", v.shape(), shape);
  Tensor out = Tensor::uninitialized(shape);
  for (int n = 0; n < shape.n; ++n) {
    std::fill_n(out.sample(n), shape.sample_size(), v.value()[n]);
  }
  return make_result(std::move(out), {v},
                     [](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {sum_per_sample(g)};
                     },
                     "broadcast_per_sample");
}

Var sum_all(const Var& x) {
  const Shape s = x.shape();
  Tensor out = Tensor::scalar(K().sum(x.value().size(), x.value().data()));
  return make_result(std::move(out), {x},
                     [s](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {broadcast_scalar(g, s)};
                     },
                     "sum_all");
}

Var broadcast_scalar(const Var& v, const Shape& shape) {
  if (v.shape() != Shape{}) shape_error("broadcast_scalar", v.shape(), shape);
  Tensor out(shape, v.value()[0]);
  return make_result(std::move(out), {v},
                     [](const Var& g, const std::vector<bool>&) -> std::vector<Var> {
                       return {sum_all(g)};
                     },
                     "broadcast_scalar");
}

Var mean_all(const Var& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size()));
}

Var mean_per_sample(const Var& x) {
  return scale(sum_per_sample(x), 1.0 / static_cast<double>(x.shape().sample_size()));
}

}  // namespace lagds::ag
