#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "autorobust/attack/attacks.hpp"
#include "autorobust/data/dataset.hpp"
#include "autorobust/grad/model.hpp"

namespace autorobust::nets {

enum class OptimizerKind { sgd_momentum, adam };

struct AdversarialConfig {
  std::size_t steps = 7;
  double eps = 8.0 / 255.0;
  double step_size = 2.0 / 255.0;
  attack::Norm norm = attack::Norm::Linf;
};

struct TrainSchedule {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double weight_decay = 0.0;
  OptimizerKind optimizer = OptimizerKind::sgd_momentum;
  bool cosine_anneal = false;
  std::optional<AdversarialConfig> adversarial;
};

// ArgumentError when epochs, batch size, or eps are out of range.
void validate(const TrainSchedule& s);

// First-order optimizers over an explicit tensor list. Gradients are read from tensor.grad().
class Optimizer {
 public:
  Optimizer(std::vector<grad::Tensor*> params, OptimizerKind kind, double lr, double weight_decay,
            double momentum = 0.9, double beta1 = 0.9, double beta2 = 0.999);
  void step();
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  const std::vector<grad::Tensor*>& params() const { return params_; }

 private:
  std::vector<grad::Tensor*> params_;
  OptimizerKind kind_;
  double lr_, wd_, momentum_, beta1_, beta2_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Learning rate at `epoch` (0-based) under the schedule.
double scheduled_lr(const TrainSchedule& s, std::size_t epoch);

// Mean cross entropy of model(x) on labels as a tape variable.
grad::Var cross_entropy(grad::Var logits, std::span<const std::size_t> labels);

struct TrainResult {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;
};

// Mini-batch training with cross entropy. With an adversarial config each batch is replaced
// by its PGD perturbation (evaluated in eval mode) before the weight step. Throws NumericError
// carrying the epoch when the loss turns non-finite.
TrainResult train(grad::Model& model, const data::Dataset& d, const TrainSchedule& schedule, std::uint64_t seed);

double accuracy(grad::Model& model, const data::Dataset& d);

}  // namespace autorobust::nets
