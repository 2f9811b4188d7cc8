#include <cmath>

#include "scn/autodiff.hpp"

namespace scn {

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(Tensor& parameter) {
  Node n;
  n.value = Tensor(parameter.shape(), std::vector<double>(parameter.values().begin(),
                                                          parameter.values().end()));
  n.requires_grad = track_params_;
  if (track_params_) n.bound = &parameter;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardRule rule) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const auto& v : inputs) {
    if (v.tape != this) throw Error("operation mixes variables from different tapes");
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  if (n.requires_grad) n.rule = std::move(rule);
  return push(std::move(n));
}

std::span<double> Tape::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.value().size() != 1)
    throw DimensionError("backward() without upstream needs a one-element root, got " +
                         shape_str(root.shape()));
  grad(root.id)[0] += 1.0;
  run_backward(root.id);
}

void Tape::backward(Var root, std::span<const double> upstream) {
  auto g = grad(root.id);
  if (upstream.size() != g.size())
    throw DimensionError("upstream gradient has " + std::to_string(upstream.size()) +
                         " values, root has " + std::to_string(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += upstream[i];
  run_backward(root.id);
}

void Tape::run_backward(std::size_t root) {
  for (std::size_t i = root + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || !n.rule || n.grad.empty()) continue;
    n.rule(*this, i);
  }
}

void Tape::flush_param_grads() {
  for (auto& n : nodes_) {
    if (!n.bound || n.grad.empty()) continue;
    auto g = n.bound->grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  }
}

}  // namespace scn
