#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "autorobust/grad/tensor.hpp"

namespace autorobust::grad {

class Tape;

// Handle to a value recorded on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  bool valid() const { return tape != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Append-only record of primitive operations. Nodes are stored in creation order,
// which is a topological order because a node can only reference existing nodes.
class Tape {
 public:
  // gout: gradient w.r.t. this node's value. pgrad[i]: accumulation buffer for parent i,
  // or nullptr when that parent does not need a gradient.
  using BackwardFn = std::function<void(const Tape&, std::span<const double> gout, std::span<double* const> pgrad)>;

  explicit Tape(bool track_parameters = true) : track_parameters_(track_parameters) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Owned leaf; its gradient is read back through grad().
  Var input(Tensor value, bool requires_grad);
  // Leaf referencing an external tensor. When the tape tracks parameters and the tensor
  // requires a gradient, backward accumulates into tensor.grad(). The tensor must outlive the tape
  // and must not change while the tape is in use.
  Var parameter(Tensor& tensor);

  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);

  const Tensor& value(std::size_t id) const;
  const Tensor& value(Var v) const { return value(v.id); }
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }

  // Seeds d(output)/d(output) with `seed` and propagates to every node that needs a gradient.
  // Node gradients from a previous call are discarded first; parameter gradients accumulate.
  void backward(Var output, const Tensor& seed);
  void backward(Var scalar_output);

  // Gradient of the last backward w.r.t. v (zeros if v was unreachable).
  std::vector<double> grad(Var v) const;
  Tensor grad_tensor(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  bool tracks_parameters() const { return track_parameters_; }
  std::size_t backward_visits() const { return backward_visits_; }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor* sink = nullptr;
    std::vector<std::size_t> parents;
    bool needs_grad = false;
    BackwardFn backward;
    std::vector<double> grad;
  };

  Node& check(Var v);

  std::vector<Node> nodes_;
  bool track_parameters_;
  std::size_t backward_visits_ = 0;
};

inline const Tensor& Var::value() const { return tape->value(id); }

}  // namespace autorobust::grad
