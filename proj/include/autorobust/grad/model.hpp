#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "autorobust/grad/tape.hpp"

namespace autorobust::grad {

// A differentiable classifier: maps a batch [N, input_shape...] to logits [N, K].
class Model {
 public:
  virtual ~Model() = default;

  virtual Var forward(Tape& tape, Var x) = 0;
  // Trainable tensors, in a stable order.
  virtual std::vector<Tensor*> parameters() = 0;
  // Non-trainable state that still affects the output (batch-norm running statistics).
  virtual std::vector<std::vector<double>*> buffers() { return {}; }
  virtual std::unique_ptr<Model> clone() const = 0;
  // Structural description; two models with equal descriptions and state compute the same function.
  virtual std::string describe() const = 0;

  const Shape& input_shape() const { return input_shape_; }
  std::size_t num_classes() const { return num_classes_; }
  bool training() const { return training_; }
  void set_training(bool on) { training_ = on; }

 protected:
  Model(Shape input_shape, std::size_t num_classes)
      : input_shape_(std::move(input_shape)), num_classes_(num_classes) {}
  Model(const Model&) = default;
  Model& operator=(const Model&) = default;

 private:
  Shape input_shape_;
  std::size_t num_classes_;
  bool training_ = false;
};

// Checks the batch against the model's declared input shape and evaluates it without
// tracking parameter gradients. Throws ArgumentError on an empty batch and
// DimensionError on a shape mismatch.
Tensor forward(Model& model, const Tensor& batch);
void check_input(const Model& model, const Tensor& batch);
// Argmax labels, always evaluated in eval mode.
// Argmax labels, always computed in eval mode.
std::vector<std::size_t> predict(Model& model, const Tensor& batch, std::size_t batch_size = 64);

std::size_t parameter_count(Model& model);
std::uint64_t fingerprint(Model& model);
void zero_grads(Model& model);

// Scoped switch between training and evaluation behaviour.
class ModeGuard {
 public:
  ModeGuard(Model& model, bool training) : model_(model), saved_(model.training()) { model.set_training(training); }
  ~ModeGuard() { model_.set_training(saved_); }
  ModeGuard(const ModeGuard&) = delete;
  ModeGuard& operator=(const ModeGuard&) = delete;

 private:
  Model& model_;
  bool saved_;
};

}  // namespace autorobust::grad
