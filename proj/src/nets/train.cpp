#include "autorobust/nets/train.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "autorobust/core/errors.hpp"
#include "autorobust/core/rng.hpp"
#include "autorobust/grad/ops.hpp"

namespace autorobust::nets {

void validate(const TrainSchedule& s) {
  if (s.epochs < 1) throw ArgumentError("train schedule: epochs must be at least 1");
  if (s.batch_size < 1) throw ArgumentError("train schedule: batch_size must be at least 1");
  if (s.learning_rate < 0.0) throw ArgumentError("train schedule: negative learning rate");
  if (s.adversarial && s.adversarial->eps < 0.0) throw ArgumentError("train schedule: negative adversarial eps");
}

Optimizer::Optimizer(std::vector<grad::Tensor*> params, OptimizerKind kind, double lr, double weight_decay,
                     double momentum, double beta1, double beta2)
    : params_(std::move(params)), kind_(kind), lr_(lr), wd_(weight_decay), momentum_(momentum), beta1_(beta1),
      beta2_(beta2) {
  for (grad::Tensor* p : params_) {
    m_.emplace_back(p->numel(), 0.0);
    if (kind_ == OptimizerKind::adam) v_.emplace_back(p->numel(), 0.0);
  }
}

void Optimizer::zero_grad() {
  for (grad::Tensor* p : params_) p->clear_grad();
}

void Optimizer::step() {
  ++t_;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    grad::Tensor& p = *params_[k];
    if (!p.grad()) continue;
    const std::vector<double>& g = *p.grad();
    std::vector<double>& m = m_[k];
    if (kind_ == OptimizerKind::sgd_momentum) {
      for (std::size_t i = 0; i < p.numel(); ++i) {
        const double gi = g[i] + wd_ * p[i];
        m[i] = momentum_ * m[i] + gi;
        p[i] -= lr_ * m[i];
      }
    } else {
      std::vector<double>& v = v_[k];
      const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
      for (std::size_t i = 0; i < p.numel(); ++i) {
        const double gi = g[i] + wd_ * p[i];
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
        p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
      }
    }
  }
}

double scheduled_lr(const TrainSchedule& s, std::size_t epoch) {
  if (!s.cosine_anneal || s.epochs <= 1) return s.learning_rate;
  return 0.5 * s.learning_rate * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(s.epochs)));
}

grad::Var cross_entropy(grad::Var logits, std::span<const std::size_t> labels) {
  return grad::mean(grad::neg(grad::gather(grad::log_softmax(logits), labels)));
}

double accuracy(grad::Model& model, const data::Dataset& d) {
  if (d.empty()) return 0.0;
  const auto pred = grad::predict(model, d.inputs);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < d.size(); ++i) ok += pred[i] == d.labels[i];
  return static_cast<double>(ok) / static_cast<double>(d.size());
}

TrainResult train(grad::Model& model, const data::Dataset& d, const TrainSchedule& schedule, std::uint64_t seed) {
  validate(schedule);
  if (d.empty()) throw ArgumentError("train: empty dataset");
  grad::check_input(model, d.inputs);
  Rng order_rng(derive_seed(seed, 0x0de7));
  const std::uint64_t attack_seed = derive_seed(seed, 0xadd);
  Optimizer opt(model.parameters(), schedule.optimizer, schedule.learning_rate, schedule.weight_decay);
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;
  std::size_t batch_counter = 0;
  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    opt.set_lr(scheduled_lr(schedule, epoch));
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < order.size(); b += schedule.batch_size) {
      const std::span<const std::size_t> rows(order.data() + b, std::min(schedule.batch_size, order.size() - b));
      grad::Tensor x = d.inputs.gather_rows(rows);
      std::vector<std::size_t> y;
      for (std::size_t r : rows) y.push_back(d.labels[r]);
      if (schedule.adversarial) {
        const auto& a = *schedule.adversarial;
        attack::CellParams pgd{attack::AttackOp::PGD, attack::LossId::CE_P, a.eps, a.steps, a.step_size, false, 0.0};
        x = attack::perturb(model, x, y, pgd, attack::NormFamily{a.norm, std::max(a.eps, 1e-300)},
                            derive_seed(attack_seed, batch_counter));
      }
      ++batch_counter;
      model.set_training(true);
      opt.zero_grad();
      grad::Tape tape;
      grad::Var logits = model.forward(tape, tape.constant(x));
      grad::Var loss = cross_entropy(logits, y);
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) {
        model.set_training(false);
        throw NumericError("training loss is not finite", epoch);
      }
      tape.backward(loss);
      opt.step();
      model.set_training(false);
      loss_sum += lv * static_cast<double>(rows.size());
      const grad::Tensor& z = logits.value();
      const std::size_t k = z.dim(1);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto row = z.data().subspan(i * k, k);
        correct += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == y[i];
      }
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(d.size()));
    result.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(d.size()));
  }
  return result;
}

}  // namespace autorobust::nets
