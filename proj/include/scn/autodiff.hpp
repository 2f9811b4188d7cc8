#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "scn/tensor.hpp"

namespace scn {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
};

/// Records operations in execution order; backward() replays their rules in
/// reverse. A tape has a single writer.
class Tape {
 public:
  using BackwardRule = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Leaf bound to a parameter tensor. When parameter tracking is off the
  // leaf is a constant and no gradient is recorded for it.
  Var param(Tensor& parameter);

  // Records an op output. The rule is dropped when no input needs a gradient.
  Var record(Tensor value, std::vector<Var> inputs, BackwardRule rule);

  void set_track_params(bool on) { track_params_ = on; }
  bool track_params() const { return track_params_; }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  // Gradient accumulator of a node, allocated (zeroed) on first access.
  std::span<double> grad(std::size_t id);
  std::span<double> grad(Var v) { return grad(v.id); }
  // Empty span if nothing has flowed into the node.
  std::span<const double> grad_if_any(Var v) const { return nodes_[v.id].grad; }

  // Seeds d(root)/d(root) = 1; root must hold a single value.
  void backward(Var root);
  void backward(Var root, std::span<const double> upstream);

  // Adds leaf gradients into the gradient buffers of bound parameters.
  void flush_param_grads();

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Buffer grad;
    std::vector<std::size_t> inputs;
    bool requires_grad = false;
    BackwardRule rule;
    Tensor* bound = nullptr;
  };
  Var push(Node node);
  void run_backward(std::size_t root);

  std::deque<Node> nodes_;  // stable addresses: values stay valid as the tape grows
  bool track_params_ = true;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

enum class Reduction { mean, max, median };

inline constexpr double kLeakySlope = 0.01;

// Differentiable operations. Convolutions accept a single image [C,H,W] or a
// batch [N,C,H,W] and return the same rank.
Var conv2d(Var input, Var kernel, std::optional<Var> bias, std::size_t stride = 1,
           std::size_t padding = 0);
// Temporal 3x1x1 convolution over [n,C,H,W] with kernel [C,C,3,1,1] and zero
// padding of one frame at each end of every segment of segment_len frames
// (0 means the whole sequence is one segment).
Var conv3d_t3(Var input, Var kernel, std::size_t segment_len = 0);
// For each start j of the cyclically extended sequence, the temporal
// convolution of frames j..j+window-1 (zero padded at the window borders).
// Output [n, window, C, H, W].
Var cyclic_window_conv(Var input, Var kernel, std::size_t window);
Var reduce(Var input, std::size_t axis, Reduction mode);
Var abs(Var input);
Var leaky_relu(Var input, double slope = kLeakySlope);
// a + b where b either matches a or is broadcast along a's leading axis
// (b shaped a.shape[1:] or [1, a.shape[1:]...]).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var input, double factor);
// w * input for a trainable one-element w.
Var mul_scalar(Var input, Var w);
Var max_pool2x2(Var input);
Var slice(Var input, std::size_t start, std::size_t count);  // along axis 0
Var concat(Var a, Var b, std::size_t axis);
Var stack(std::span<const Var> parts);  // new leading axis
Var reshape(Var input, Shape shape);
// sum_i weights[i] * input[i], a one-element result.
Var weighted_sum(Var input, const Tensor& weights);

// Scalar loop implementations of the convolutions; test oracles.
Tensor conv2d_reference(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                        std::size_t stride, std::size_t padding);
Tensor conv3d_t3_reference(const Tensor& input, const Tensor& kernel,
                           std::size_t segment_len = 0);

}  // namespace scn
