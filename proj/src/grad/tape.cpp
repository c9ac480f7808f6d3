#include "autorobust/grad/tape.hpp"

#include "autorobust/core/errors.hpp"

namespace autorobust::grad {

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::input(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Tensor& tensor) {
  Node n;
  n.external = &tensor;
  if (track_parameters_ && tensor.requires_grad()) {
    n.needs_grad = true;
    n.sink = &tensor;
  }
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (std::size_t p : parents) {
    if (p >= nodes_.size()) throw StateError("tape: parent node does not exist");
    n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  }
  if (n.needs_grad) {
    n.parents = std::move(parents);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  std::vector<std::size_t> ids;
  ids.reserve(parents.size());
  for (const Var& p : parents) {
    if (p.tape != this) throw StateError("tape: operand recorded on a different tape");
    ids.push_back(p.id);
  }
  return record(std::move(value), std::move(ids), std::move(backward));
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.value;
}

Tape::Node& Tape::check(Var v) {
  if (nodes_.empty()) throw StateError("backward called on an empty tape");
  if (v.tape != this || v.id >= nodes_.size()) throw StateError("backward: output was not produced by this tape");
  return nodes_[v.id];
}

void Tape::backward(Var output, const Tensor& seed) {
  Node& out = check(output);
  if (seed.shape() != value(output.id).shape()) {
    throw DimensionError("backward: seed shape " + shape_string(seed.shape()) + " != output shape " +
                         shape_string(value(output.id).shape()));
  }
  for (Node& n : nodes_) n.grad.clear();
  backward_visits_ = 0;
  if (!out.needs_grad) return;
  out.grad.assign(seed.data().begin(), seed.data().end());

  std::vector<double*> pgrad;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    ++backward_visits_;
    if (n.backward) {
      pgrad.assign(n.parents.size(), nullptr);
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        Node& p = nodes_[n.parents[k]];
        if (!p.needs_grad) continue;
        if (p.grad.empty()) p.grad.assign(value(n.parents[k]).numel(), 0.0);
        pgrad[k] = p.grad.data();
      }
      n.backward(*this, n.grad, pgrad);
    }
    if (n.sink) {
      auto& g = n.sink->ensure_grad();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    }
  }
}

void Tape::backward(Var scalar_output) {
  check(scalar_output);
  const Tensor& v = value(scalar_output.id);
  if (v.numel() != 1) throw DimensionError("backward: implicit seed requires a single-element output");
  backward(scalar_output, Tensor(v.shape(), 1.0));
}

std::vector<double> Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.empty()) return std::vector<double>(value(v.id).numel(), 0.0);
  return n.grad;
}

Tensor Tape::grad_tensor(Var v) const { return Tensor(value(v.id).shape(), grad(v)); }

}  // namespace autorobust::grad
